//! CSV schemas and the output sink.
//!
//! Two schemas are emitted. `analyze` rows describe one policy / success
//! rate evaluation:
//!
//! ```text
//! sleep_thr,force_thr,base_prob,pi1,rho,aaoi,horizon,tail_mass
//! ```
//!
//! `simulate` and `sweep` rows share the sweep schema; the trailing `error`
//! column is empty on success:
//!
//! ```text
//! variable,value,protocol,policy,source,aaoi,ci95,rho,activation,slots,seed,error
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub const SWEEP_HEADER: &str =
    "variable,value,protocol,policy,source,aaoi,ci95,rho,activation,slots,seed,error";

pub const ANALYZE_HEADER: &str = "sleep_thr,force_thr,base_prob,pi1,rho,aaoi,horizon,tail_mass";

/// One row of the sweep schema.
#[derive(Debug, Clone, Default)]
pub struct SweepRow {
    pub variable: String,
    pub value: String,
    pub protocol: String,
    pub policy: String,
    pub source: String,
    pub aaoi: Option<f64>,
    pub ci95: Option<f64>,
    pub rho: Option<f64>,
    pub activation: Option<f64>,
    pub slots: Option<u64>,
    pub seed: Option<u64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn to_line(&self) -> String {
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.variable,
            self.value,
            self.protocol,
            self.policy,
            self.source,
            fmt_f64(self.aaoi),
            fmt_f64(self.ci95),
            fmt_f64(self.rho),
            fmt_f64(self.activation),
            fmt_u64(self.slots),
            fmt_u64(self.seed),
            sanitize(self.error.as_deref().unwrap_or(""))
        );
        line
    }
}

/// One row of the analyze schema.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeRow {
    pub sleep_thr: Option<u32>,
    pub force_thr: Option<u32>,
    pub base_prob: Option<f64>,
    pub pi1: Option<f64>,
    pub rho: Option<f64>,
    pub aaoi: Option<f64>,
    pub horizon: Option<u64>,
    pub tail_mass: Option<f64>,
}

impl AnalyzeRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.sleep_thr.map(|v| v.to_string()).unwrap_or_default(),
            self.force_thr.map(|v| v.to_string()).unwrap_or_default(),
            fmt_f64(self.base_prob),
            fmt_f64(self.pi1),
            fmt_f64(self.rho),
            fmt_f64(self.aaoi),
            fmt_u64(self.horizon),
            fmt_f64(self.tail_mass),
        )
    }
}

fn fmt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Error messages must not break the row structure.
fn sanitize(message: &str) -> String {
    message.replace([',', '\n', '\r'], ";")
}

/// CSV sink: a file when `--out` is given, stdout otherwise.
pub struct CsvOut {
    inner: Box<dyn Write>,
}

impl CsvOut {
    pub fn create(out: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match out {
            Some(path) => Box::new(BufWriter::new(
                File::create(path)
                    .with_context(|| format!("creating output file {}", path.display()))?,
            )),
            None => Box::new(BufWriter::new(std::io::stdout())),
        };
        Ok(CsvOut { inner })
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        writeln!(self.inner, "{line}").context("writing CSV row")
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().context("flushing CSV output")
    }
}
