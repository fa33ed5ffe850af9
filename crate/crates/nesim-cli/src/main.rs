//! Command-line front end: run simulations, check gain conditions, solve for
//! the Nash equilibrium, and summarize event logs.
//!
//! Exit codes: 0 success, 1 configuration/input error, 2 numerical failure,
//! 3 condition-check failure.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nesim_core::conditions::{
    check_corollary1, check_theorem1, check_theorem2, check_theorem3, ConditionReport,
};
use nesim_core::engine::{run, EngineError};
use nesim_core::game::{best_response_ne, solve_ne, GameError, RegularityConstants};
use nesim_core::scheduler::CommScheme;

use config::{ConstantsSource, Resolved, SchemeChoice};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONDITIONS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "nesim",
    about = "Distributed Nash-equilibrium seeking for double-integrator agents",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured run and write trajectory/events/report files.
    Run {
        /// Config file path or preset name (e.g. cournot5).
        target: Option<String>,
        /// Use a named preset instead of a config file.
        #[arg(long)]
        preset: Option<String>,
        /// Override the communication scheme.
        #[arg(long, value_enum)]
        scheme: Option<SchemeChoice>,
        /// Directory for output files not explicitly configured.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Evaluate the gain conditions of every applicable theorem.
    Check {
        target: Option<String>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeChoice>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Solve for the Nash equilibrium with both oracles and compare them.
    SolveNe {
        target: Option<String>,
        #[arg(long)]
        preset: Option<String>,
        /// Fixed-point iteration step size.
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Residual tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Iteration budget for the fixed-point oracle.
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Summarize an events CSV as a per-agent interval table.
    Stats {
        /// Path to an events CSV written by `run`.
        events: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            target,
            preset,
            scheme,
            out_dir,
        } => cmd_run(target, preset, scheme, &out_dir),
        Command::Check {
            target,
            preset,
            scheme,
            out_dir,
        } => cmd_check(target, preset, scheme, &out_dir),
        Command::SolveNe {
            target,
            preset,
            step,
            tol,
            max_iter,
            out_dir,
        } => cmd_solve_ne(target, preset, step, tol, max_iter, &out_dir),
        Command::Stats { events } => cmd_stats(&events),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> Result<(), u8> {
    eprintln!("error: {message}");
    Err(code)
}

fn load_target(
    target: Option<String>,
    preset: Option<String>,
    scheme: Option<SchemeChoice>,
    out_dir: &std::path::Path,
) -> Result<Resolved, String> {
    let name = match (target, preset) {
        (Some(t), None) => t,
        (None, Some(p)) => p,
        (Some(_), Some(_)) => {
            return Err("give either a positional config/preset or --preset, not both".into())
        }
        (None, None) => return Err("missing config file or --preset".into()),
    };
    config::load(&name, scheme, out_dir).map_err(|e| e.to_string())
}

/// Regularity constants plus a human-readable provenance label.
fn regularity(resolved: &Resolved) -> Result<Option<(RegularityConstants, String)>, String> {
    match &resolved.constants {
        ConstantsSource::Supplied(r) => Ok(Some((*r, "user-supplied".to_string()))),
        ConstantsSource::Estimate {
            sample_box,
            samples,
            seed,
        } => {
            let r = resolved
                .game
                .estimate_constants(sample_box, *samples, *seed)
                .map_err(|e| format!("constant estimation failed: {e}"))?;
            Ok(Some((
                r,
                format!(
                    "sampled estimate ({samples} pairs, seed {seed}): lower bound for theta, \
                     upper bound for w"
                ),
            )))
        }
        ConstantsSource::Unavailable => Ok(None),
    }
}

/// All applicable reports plus the index of the one governing the scheme.
fn condition_reports(
    resolved: &Resolved,
    reg: &RegularityConstants,
) -> Result<(Vec<ConditionReport>, usize), String> {
    let constants = resolved
        .graph
        .constants(resolved.game.dim())
        .map_err(|e| e.to_string())?;
    let params = resolved.sim.params;
    let continuous_report = if resolved.graph.directed() {
        check_corollary1(&params, &constants, reg)
    } else {
        check_theorem1(&params, &constants, reg)
    };
    let reports = vec![
        continuous_report,
        check_theorem2(&params, &constants, reg),
        check_theorem3(&params, &constants, reg),
    ];
    let governing = match resolved.sim.scheme {
        CommScheme::Continuous => 0,
        CommScheme::Periodic { .. } => 1,
        CommScheme::EventTriggered { .. } => 2,
    };
    Ok((reports, governing))
}

/// True when the governing theorem blesses the configured scheme, including
/// the period-below-tau requirement for periodic runs.
fn governing_passes(resolved: &Resolved, reports: &[ConditionReport], governing: usize) -> bool {
    let report = &reports[governing];
    if !report.satisfied {
        return false;
    }
    match (&resolved.sim.scheme, report.derived.tau) {
        (CommScheme::Periodic { delta }, Some(tau)) => *delta < tau,
        (CommScheme::Periodic { .. }, None) => false,
        _ => true,
    }
}

fn condition_text(
    resolved: &Resolved,
    reg: Option<&(RegularityConstants, String)>,
) -> Result<(String, Option<bool>), String> {
    match reg {
        None => Ok((
            "condition checks skipped: no regularity constants configured\n".to_string(),
            None,
        )),
        Some((r, label)) => {
            let (reports, governing) = condition_reports(resolved, r)?;
            let mut text = format!(
                "condition checks with theta = {:.4}, w = {:.4} ({label}):\n",
                r.theta, r.w
            );
            for report in &reports {
                text.push_str(&output::render_condition_report(report));
            }
            if let (CommScheme::Periodic { delta }, Some(tau)) =
                (&resolved.sim.scheme, reports[1].derived.tau)
            {
                text.push_str(&format!(
                    "periodic period check: delta = {delta} vs tau = {tau:.6}\n"
                ));
            }
            let passes = governing_passes(resolved, &reports, governing);
            text.push_str(&format!(
                "governing theorem for the configured scheme: {} -> {}\n",
                reports[governing].theorem,
                if passes { "satisfied" } else { "NOT satisfied" }
            ));
            Ok((text, Some(passes)))
        }
    }
}

fn cmd_run(
    target: Option<String>,
    preset: Option<String>,
    scheme: Option<SchemeChoice>,
    out_dir: &std::path::Path,
) -> Result<(), u8> {
    let resolved = match load_target(target, preset, scheme, out_dir) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let reg = match regularity(&resolved) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let (condition_summary, governing_ok) = match condition_text(&resolved, reg.as_ref()) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if governing_ok == Some(false) {
        eprintln!(
            "warning: the governing theorem's gain conditions do not hold; \
             running anyway (convergence is not guaranteed)"
        );
    }

    // Oracle equilibrium for the error metrics; a failure downgrades the
    // metrics rather than the run.
    let x_star = match solve_ne(&resolved.game, &resolved.init.x0, 0.5, 1e-9, 200_000) {
        Ok(x) => Some(x),
        Err(e) => {
            eprintln!("warning: equilibrium oracle failed ({e}); metrics omit ||x - x*||");
            None
        }
    };

    let traj = match run(
        &resolved.sim,
        &resolved.game,
        &resolved.graph,
        &resolved.init,
        x_star.as_ref(),
    ) {
        Ok(t) => t,
        Err(EngineError::NumericalBlowup { time, .. }) => {
            return fail(
                EXIT_NUMERICAL,
                format!("numerical blowup at t = {time} (check gains and step size)"),
            );
        }
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    let final_err = traj.metrics.err_ne.last().copied();
    let final_consensus = nesim_core::engine::consensus_error(&traj.final_state);
    let x_star_slice: Option<Vec<f64>> = x_star.as_ref().map(|x| x.iter().copied().collect());
    let x_final: Vec<f64> = traj.final_state.x.iter().copied().collect();
    let report = output::render_run_report(&output::RunSummary {
        scheme_label: &resolved.scheme_label,
        dt: resolved.sim.dt,
        t_end: resolved.sim.t_end,
        final_err_ne: final_err,
        final_consensus,
        x_final: &x_final,
        x_star: x_star_slice.as_deref(),
        events: &traj.events,
        n_agents: resolved.game.n_agents(),
        condition_summary: &condition_summary,
    });

    for path in [
        &resolved.trajectory_path,
        &resolved.events_path,
        &resolved.report_path,
    ] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                if let Err(e) = std::fs::create_dir_all(parent) {
                    return fail(EXIT_CONFIG, format!("cannot create output directory: {e}"));
                }
            }
        }
    }
    if let Err(e) = output::write_trajectory_csv(&resolved.trajectory_path, &traj) {
        return fail(EXIT_CONFIG, format!("writing trajectory: {e}"));
    }
    if let Err(e) = output::write_events_csv(&resolved.events_path, &traj.events) {
        return fail(EXIT_CONFIG, format!("writing events: {e}"));
    }
    if let Err(e) = std::fs::write(&resolved.report_path, &report) {
        return fail(EXIT_CONFIG, format!("writing report: {e}"));
    }

    println!("{report}");
    println!(
        "wrote {}, {}, {}",
        resolved.trajectory_path.display(),
        resolved.events_path.display(),
        resolved.report_path.display()
    );
    Ok(())
}

fn cmd_check(
    target: Option<String>,
    preset: Option<String>,
    scheme: Option<SchemeChoice>,
    out_dir: &std::path::Path,
) -> Result<(), u8> {
    let resolved = match load_target(target, preset, scheme, out_dir) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let reg = match regularity(&resolved) {
        Ok(Some(r)) => r,
        Ok(None) => {
            return fail(
                EXIT_CONFIG,
                "condition checks need regularity constants: add a 'constants' section \
                 with {theta, w} or an estimation box",
            )
        }
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let (text, passes) = match condition_text(&resolved, Some(&reg)) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    print!("{text}");
    match passes {
        Some(true) => Ok(()),
        _ => Err(EXIT_CONDITIONS),
    }
}

fn cmd_solve_ne(
    target: Option<String>,
    preset: Option<String>,
    step: f64,
    tol: f64,
    max_iter: usize,
    out_dir: &std::path::Path,
) -> Result<(), u8> {
    let resolved = match load_target(target, preset, None, out_dir) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let game = &resolved.game;
    let x0 = &resolved.init.x0;
    let fixed_point = match solve_ne(game, x0, step, tol, max_iter) {
        Ok(x) => x,
        Err(e @ GameError::NoConvergence { .. }) => {
            return fail(EXIT_NUMERICAL, format!("fixed-point oracle: {e}"))
        }
        Err(e) => return fail(EXIT_CONFIG, format!("fixed-point oracle: {e}")),
    };
    let best_response = match best_response_ne(game, x0, tol.min(1e-10), 10_000) {
        Ok(x) => x,
        Err(e @ GameError::NoConvergence { .. }) => {
            return fail(EXIT_NUMERICAL, format!("best-response oracle: {e}"))
        }
        Err(e) => return fail(EXIT_CONFIG, format!("best-response oracle: {e}")),
    };
    let gap = (&fixed_point - &best_response).norm();
    let check = match game.verify_ne(&fixed_point, tol.max(1e-9)) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let x: Vec<f64> = fixed_point.iter().copied().collect();
    let xb: Vec<f64> = best_response.iter().copied().collect();
    let residuals: Vec<f64> = check.residuals.iter().copied().collect();
    println!("fixed-point oracle x*  : {x:?}");
    println!("best-response oracle x*: {xb:?}");
    println!("per-agent NE residuals : {residuals:?}");
    println!("oracle agreement gap   : {gap:.3e}");
    if gap <= 1e-5 {
        Ok(())
    } else {
        fail(EXIT_NUMERICAL, format!("oracles disagree by {gap:.3e} (> 1e-5)"))
    }
}

fn cmd_stats(events: &std::path::Path) -> Result<(), u8> {
    let log = match output::read_events_csv(events) {
        Ok(log) => log,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let n_agents = log.iter().map(|e| e.agent + 1).max().unwrap_or(0);
    let horizon = log.iter().map(|e| e.time).fold(0.0f64, f64::max);
    if n_agents == 0 {
        println!("no events");
        return Ok(());
    }
    print!("{}", output::stats_block(&log, horizon, n_agents));
    Ok(())
}
