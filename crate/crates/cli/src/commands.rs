//! Command implementations.

use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use aoisim_core::access::grant_based_rho;
use aoisim_core::amp::grant_free_round_traced;
use aoisim_core::analysis::{
    joint_chain_aaoi, baseline_aaoi, effective_activation, solve_base_prob, solve_threshold_pairs,
    ThresholdPair,
};
use aoisim_core::channel::sample_activity;
use aoisim_core::rng::{slot_rng, StreamLane};
use aoisim_core::scheduling::{policy_step, IntervalState, ThresholdPolicy};
use aoisim_core::sim::{
    default_burn_in, run_simulation, run_simulation_traced, Activation, Protocol, SimSpec,
};
use aoisim_core::SystemConfig;
use rayon::prelude::*;

use crate::output::{AnalyzeRow, CsvOut, SweepRow, ANALYZE_HEADER, SWEEP_HEADER};
use crate::settings::{ProtocolChoice, Settings};
use crate::{AnalyzeCommand, Cli, Command, SimulateArgs, SweepArgs, VariableArg};

/// Dispatch one parsed invocation. Returns whether the run was clean
/// (`false` when a sweep recorded error rows).
pub fn run(cli: Cli) -> Result<bool> {
    let settings = Settings::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Analyze { what } => cmd_analyze(settings, what, cli.out.as_deref()),
        Command::Simulate(args) => cmd_simulate(
            settings,
            args,
            cli.verbose,
            cli.trace.as_deref(),
            cli.out.as_deref(),
        ),
        Command::Sweep(args) => cmd_sweep(settings, args, cli.out.as_deref()),
    }
}

fn cmd_analyze(settings: Settings, what: AnalyzeCommand, out: Option<&Path>) -> Result<bool> {
    let mut csv = CsvOut::create(out)?;
    csv.line(ANALYZE_HEADER)?;
    match what {
        AnalyzeCommand::Baseline { eps, rho } => {
            let eps = eps.unwrap_or(settings.cfg.activity_prob);
            let aaoi = baseline_aaoi(eps, rho)?;
            csv.line(
                &AnalyzeRow {
                    base_prob: Some(eps),
                    pi1: Some(eps),
                    rho: Some(rho),
                    aaoi: Some(aaoi),
                    ..Default::default()
                }
                .to_line(),
            )?;
        }
        AnalyzeCommand::Thresholds {
            target_eps,
            theta_max,
            tol,
            rho,
            tail_tol,
        } => {
            for pair in solve_threshold_pairs(target_eps, theta_max, tol)? {
                let mut row = AnalyzeRow {
                    sleep_thr: Some(pair.sleep_thr),
                    force_thr: Some(pair.force_thr),
                    base_prob: Some(pair.base_prob),
                    pi1: Some(pair.achieved),
                    ..Default::default()
                };
                if let Some(rho) = rho {
                    let result = joint_chain_aaoi(&pair.policy()?, rho, tail_tol)?;
                    row.rho = Some(rho);
                    row.aaoi = Some(result.aaoi);
                    row.horizon = Some(result.table.horizon() as u64);
                    row.tail_mass = Some(result.table.tail_mass());
                }
                csv.line(&row.to_line())?;
            }
        }
        AnalyzeCommand::Alg1 {
            sleep,
            force,
            eps,
            rho,
            tail_tol,
        } => {
            let base = eps.unwrap_or(settings.cfg.activity_prob);
            let policy = ThresholdPolicy::new(sleep, force, base)?;
            let result = joint_chain_aaoi(&policy, rho, tail_tol)?;
            csv.line(
                &AnalyzeRow {
                    sleep_thr: Some(sleep),
                    force_thr: Some(force),
                    base_prob: Some(base),
                    pi1: Some(effective_activation(&policy)),
                    rho: Some(rho),
                    aaoi: Some(result.aaoi),
                    horizon: Some(result.table.horizon() as u64),
                    tail_mass: Some(result.table.tail_mass()),
                }
                .to_line(),
            )?;
        }
    }
    csv.finish()?;
    Ok(true)
}

fn cmd_simulate(
    mut settings: Settings,
    args: SimulateArgs,
    verbose: bool,
    trace_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<bool> {
    settings.apply_base(&args.base);
    settings.cfg.validate()?;
    let choice = settings.protocol_from_arg(args.protocol)?;
    let protocol = settings.build_protocol(choice)?;
    let activation = settings.build_activation()?;
    let slots = settings
        .slots
        .context("pass --slots (or config key slots)")?;
    let burn_in = resolve_burn_in(&settings, protocol, activation, slots)?;
    let spec = SimSpec {
        protocol,
        activation,
        slots,
        burn_in,
    };

    if verbose && matches!(protocol, Protocol::GrantFree) {
        amp_diagnostics(&settings.cfg, &spec)?;
    }
    let report = if let Some(path) = trace_path {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating trace file {}", path.display()))?;
        run_with_trace(&settings, &spec, std::io::BufWriter::new(file))?
    } else if verbose {
        let stderr = std::io::stderr();
        run_with_trace(&settings, &spec, std::io::BufWriter::new(stderr.lock()))?
    } else {
        run_simulation(&settings.cfg, &spec)?
    };

    let mut csv = CsvOut::create(out)?;
    csv.line(SWEEP_HEADER)?;
    csv.line(
        &SweepRow {
            variable: "none".into(),
            value: String::new(),
            protocol: choice.label().into(),
            policy: policy_label(&activation),
            source: "simulation".into(),
            aaoi: Some(report.aaoi_estimate),
            ci95: Some(report.ci95),
            rho: Some(report.empirical_rho),
            activation: Some(report.empirical_activation),
            slots: Some(report.slots),
            seed: Some(report.seed),
            error: None,
        }
        .to_line(),
    )?;
    csv.finish()?;
    Ok(true)
}

fn run_with_trace(
    settings: &Settings,
    spec: &SimSpec,
    mut sink: impl std::io::Write,
) -> Result<aoisim_core::SimReport> {
    writeln!(sink, "slot,active_count,success_count,mean_aoi")?;
    let report = run_simulation_traced(&settings.cfg, spec, |t| {
        let _ = writeln!(
            sink,
            "{},{},{},{}",
            t.slot, t.active_count, t.success_count, t.mean_aoi
        );
    })?;
    sink.flush()?;
    Ok(report)
}

/// Per-iteration AMP diagnostics on stderr for the first recorded slots,
/// using exactly the activation stream of the main run.
fn amp_diagnostics(cfg: &SystemConfig, spec: &SimSpec) -> Result<()> {
    const DIAG_SLOTS: u64 = 8;
    let stderr = std::io::stderr();
    let mut out = std::io::BufWriter::new(stderr.lock());
    writeln!(out, "slot,iteration,tau_sq,estimate_change_ms")?;
    let mut interval_state = match spec.activation {
        Activation::Bernoulli => None,
        Activation::Threshold { policy, cold_start } => Some(if cold_start {
            IntervalState::cold_start(cfg.n_users)
        } else {
            let dist = aoisim_core::analysis::threshold_steady_state(&policy);
            IntervalState::sample_from(
                cfg.n_users,
                &dist.probs,
                &mut slot_rng(cfg.seed, 0, StreamLane::Setup),
            )
        }),
    };
    for slot in 0..DIAG_SLOTS.min(spec.slots) {
        let mut policy_rng = slot_rng(cfg.seed, slot, StreamLane::Policy);
        let act = match (&spec.activation, &mut interval_state) {
            (Activation::Bernoulli, _) => sample_activity(cfg, &mut policy_rng),
            (Activation::Threshold { policy, .. }, Some(state)) => {
                let (next, act) = policy_step(state, policy, &mut policy_rng);
                *state = next;
                act
            }
            _ => unreachable!(),
        };
        let mut protocol_rng = slot_rng(cfg.seed, slot, StreamLane::Protocol);
        grant_free_round_traced(cfg, &act, &mut protocol_rng, |t| {
            let _ = writeln!(
                out,
                "{slot},{},{},{}",
                t.iteration, t.tau_sq, t.estimate_change_ms
            );
        })?;
    }
    out.flush()?;
    Ok(())
}

/// One swept value: CSV label, concrete configuration, and the resolved
/// activation (or the reason it could not be built).
type ValuePoint = (String, SystemConfig, std::result::Result<Activation, String>);

/// One evaluation of the sweep grid: a concrete configuration, activation
/// policy, and protocol, plus the CSV labels identifying it.
struct SweepPoint {
    value_label: String,
    cfg: SystemConfig,
    protocol: ProtocolChoice,
    /// Resolved activation, or the reason it could not be built.
    activation: std::result::Result<Activation, String>,
}

fn cmd_sweep(mut settings: Settings, args: SweepArgs, out: Option<&Path>) -> Result<bool> {
    settings.apply_base(&args.base);
    settings.cfg.validate()?;

    let protocols: Vec<ProtocolChoice> = args
        .protocols
        .split(',')
        .map(|p| match p.trim() {
            "grant-based" | "grant_based" => Ok(ProtocolChoice::GrantBased),
            "grant-free" | "grant_free" => Ok(ProtocolChoice::GrantFree),
            "fixed-rho" | "fixed_rho" => Ok(ProtocolChoice::FixedRho),
            other => bail!("unknown protocol {other:?}"),
        })
        .collect::<Result<_>>()?;
    if protocols.is_empty() {
        bail!("--protocols must name at least one protocol");
    }
    if protocols.contains(&ProtocolChoice::FixedRho) && settings.rho.is_none() {
        bail!("sweeping the fixed-rho protocol needs --rho");
    }

    let variable = match args.variable {
        VariableArg::PilotLen => "pilot_len",
        VariableArg::ActivityProb => "activity_prob",
        VariableArg::NUsers => "n_users",
        VariableArg::ThresholdPair => "threshold_pair",
    };

    // One (label, cfg, activation) per swept value.
    let mut value_points: Vec<ValuePoint> = Vec::new();
    match args.variable {
        VariableArg::PilotLen | VariableArg::NUsers => {
            for v in parse_integer_values(&args.values)? {
                let mut cfg = settings.cfg.clone();
                match args.variable {
                    VariableArg::PilotLen => cfg.pilot_len = v as usize,
                    VariableArg::NUsers => cfg.n_users = v as usize,
                    _ => unreachable!(),
                }
                let activation = base_activation(&settings);
                value_points.push((v.to_string(), cfg, activation));
            }
        }
        VariableArg::ActivityProb => {
            for v in parse_float_values(&args.values)? {
                let mut cfg = settings.cfg.clone();
                cfg.activity_prob = v;
                let with_eps = Settings {
                    cfg: cfg.clone(),
                    ..settings.clone()
                };
                let activation = base_activation(&with_eps);
                value_points.push((v.to_string(), cfg, activation));
            }
        }
        VariableArg::ThresholdPair => {
            let target = settings.cfg.activity_prob;
            let pairs: Vec<(String, std::result::Result<ThresholdPair, String>)> =
                if args.values.trim() == "auto" {
                    solve_threshold_pairs(target, args.theta_max, args.pair_tol)?
                        .into_iter()
                        .map(|p| (format!("{}/{}", p.sleep_thr, p.force_thr), Ok(p)))
                        .collect()
                } else {
                    parse_pair_values(&args.values)?
                        .into_iter()
                        .map(|(sleep, force)| {
                            let label = format!("{sleep}/{force}");
                            let solved = solve_base_prob(sleep, force, target, args.pair_tol)
                                .ok_or_else(|| {
                                    format!(
                                        "pair {sleep}/{force} cannot hold the activation \
                                         probability at {target}"
                                    )
                                });
                            (label, solved)
                        })
                        .collect()
                };
            for (label, pair) in pairs {
                let activation = pair.and_then(|p| {
                    p.policy()
                        .map(|policy| Activation::Threshold {
                            policy,
                            cold_start: settings.cold_start,
                        })
                        .map_err(|e| e.to_string())
                });
                value_points.push((label, settings.cfg.clone(), activation));
            }
        }
    }
    if value_points.is_empty() {
        bail!("--values produced an empty sweep");
    }

    let points: Vec<SweepPoint> = value_points
        .into_iter()
        .flat_map(|(label, cfg, activation)| {
            protocols.iter().map(move |&protocol| SweepPoint {
                value_label: label.clone(),
                cfg: cfg.clone(),
                protocol,
                activation: activation.clone(),
            })
        })
        .collect();

    // Evaluate on the worker pool; rows come back in grid order.
    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|point| evaluate_point(&settings, &args, variable, point))
        .collect();

    let mut csv = CsvOut::create(out)?;
    csv.line(SWEEP_HEADER)?;
    let mut clean = true;
    for row in rows.iter().flatten() {
        clean &= row.error.is_none();
        csv.line(&row.to_line())?;
    }
    csv.finish()?;
    Ok(clean)
}

fn evaluate_point(
    settings: &Settings,
    args: &SweepArgs,
    variable: &str,
    point: &SweepPoint,
) -> Vec<SweepRow> {
    let template = SweepRow {
        variable: variable.into(),
        value: point.value_label.clone(),
        protocol: point.protocol.label().into(),
        policy: point
            .activation
            .as_ref()
            .map(policy_label)
            .unwrap_or_else(|_| "threshold".into()),
        ..Default::default()
    };

    let mut rows = Vec::new();

    // Simulation row.
    let mut sim_row = SweepRow {
        source: "simulation".into(),
        ..template.clone()
    };
    match simulate_point(settings, point) {
        Ok(report) => {
            sim_row.aaoi = Some(report.aaoi_estimate);
            sim_row.ci95 = Some(report.ci95);
            sim_row.rho = Some(report.empirical_rho);
            sim_row.activation = Some(report.empirical_activation);
            sim_row.slots = Some(report.slots);
            sim_row.seed = Some(report.seed);
        }
        Err(err) => sim_row.error = Some(err),
    }
    rows.push(sim_row);

    // Analytic overlay: closed forms exist for every protocol except
    // grant-free, whose success rate has no closed form here.
    if args.analysis_overlay && point.protocol != ProtocolChoice::GrantFree {
        let mut row = SweepRow {
            source: "analysis".into(),
            ..template
        };
        match analyze_point(settings, point) {
            Ok((rho, aaoi, activation)) => {
                row.aaoi = Some(aaoi);
                row.rho = Some(rho);
                row.activation = Some(activation);
            }
            Err(err) => row.error = Some(err),
        }
        rows.push(row);
    }
    rows
}

fn simulate_point(
    settings: &Settings,
    point: &SweepPoint,
) -> std::result::Result<aoisim_core::SimReport, String> {
    let activation = point.activation.clone()?;
    let point_settings = Settings {
        cfg: point.cfg.clone(),
        ..settings.clone()
    };
    let protocol = point_settings
        .build_protocol(point.protocol)
        .map_err(|e| e.to_string())?;
    let slots = point_settings
        .slots
        .ok_or_else(|| "pass --slots (or config key slots)".to_string())?;
    let burn_in = resolve_burn_in(&point_settings, protocol, activation, slots)
        .map_err(|e| e.to_string())?;
    let spec = SimSpec {
        protocol,
        activation,
        slots,
        burn_in,
    };
    run_simulation(&point.cfg, &spec).map_err(|e| e.to_string())
}

fn analyze_point(
    settings: &Settings,
    point: &SweepPoint,
) -> std::result::Result<(f64, f64, f64), String> {
    let cfg = &point.cfg;
    let rho = match point.protocol {
        ProtocolChoice::GrantBased => {
            grant_based_rho(cfg.n_users, cfg.pilot_len, cfg.activity_prob)
                .map_err(|e| e.to_string())?
        }
        ProtocolChoice::FixedRho => settings
            .rho
            .ok_or_else(|| "the fixed-rho protocol needs --rho".to_string())?,
        ProtocolChoice::GrantFree => unreachable!("no closed form for grant-free"),
    };
    match point.activation.clone()? {
        Activation::Bernoulli => {
            let aaoi = baseline_aaoi(cfg.activity_prob, rho).map_err(|e| e.to_string())?;
            Ok((rho, aaoi, cfg.activity_prob))
        }
        Activation::Threshold { policy, .. } => {
            let result = joint_chain_aaoi(&policy, rho, 1e-10).map_err(|e| e.to_string())?;
            Ok((rho, result.aaoi, effective_activation(&policy)))
        }
    }
}

fn base_activation(settings: &Settings) -> std::result::Result<Activation, String> {
    settings.build_activation().map_err(|e| e.to_string())
}

fn resolve_burn_in(
    settings: &Settings,
    protocol: Protocol,
    activation: Activation,
    slots: u64,
) -> Result<u64> {
    let burn_in = match settings.burn_in {
        Some(b) => b,
        None => default_burn_in(&settings.cfg, protocol, activation)?.min(slots / 2),
    };
    if burn_in >= slots {
        bail!("burn-in {burn_in} must be below slots {slots}");
    }
    Ok(burn_in)
}

fn policy_label(activation: &Activation) -> String {
    match activation {
        Activation::Bernoulli => "bernoulli".into(),
        Activation::Threshold { policy, .. } => {
            format!("threshold({}/{})", policy.sleep_thr(), policy.force_thr())
        }
    }
}

fn parse_integer_values(spec: &str) -> Result<Vec<u64>> {
    let values = if let Some((start, rest)) = split_range(spec) {
        let (end, step) = rest;
        let (start, end, step): (u64, u64, u64) = (parse(start)?, parse(end)?, parse(step)?);
        if step == 0 {
            bail!("range step must be positive");
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .map(|v| parse(v.trim()))
            .collect::<Result<Vec<u64>>>()?
    };
    ensure_strictly_ascending(&values)?;
    Ok(values)
}

fn parse_float_values(spec: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = if let Some((start, (end, step))) = split_range(spec) {
        let (start, end, step): (f64, f64, f64) = (parse(start)?, parse(end)?, parse(step)?);
        if step <= 0.0 || step.is_nan() {
            bail!("range step must be positive");
        }
        let mut out = Vec::new();
        let mut idx = 0;
        loop {
            let v = start + idx as f64 * step;
            if v > end + step * 1e-9 {
                break;
            }
            // Snap accumulated range values to 12 significant digits so the
            // CSV labels read 0.12, not 0.12000000000000001.
            out.push(format!("{v:.11e}").parse().unwrap());
            idx += 1;
        }
        out
    } else {
        spec.split(',')
            .map(|v| parse(v.trim()))
            .collect::<Result<Vec<f64>>>()?
    };
    ensure_strictly_ascending(&values)?;
    Ok(values)
}

fn parse_pair_values(spec: &str) -> Result<Vec<(u32, u32)>> {
    spec.split(',')
        .map(|entry| {
            let (sleep, force) = entry
                .trim()
                .split_once('/')
                .with_context(|| format!("pair {entry:?} must look like sleep/force"))?;
            Ok((parse(sleep)?, parse(force)?))
        })
        .collect()
}

fn split_range(spec: &str) -> Option<(&str, (&str, &str))> {
    let mut parts = spec.split(':');
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), Some(c), None) => Some((a, (b, c))),
        _ => None,
    }
}

fn ensure_strictly_ascending<T: PartialOrd>(values: &[T]) -> Result<()> {
    if values.is_empty() {
        bail!("--values produced an empty sweep");
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        bail!("--values must be strictly ascending");
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| anyhow::anyhow!("cannot parse {text:?}"))
}
