//! CSV artifacts and text reports.
//!
//! Floats in CSV files use Rust's shortest round-trip formatting, so a parsed
//! file reproduces the original values bit for bit; the event-statistics
//! table is rendered by one function shared between `run` reports and the
//! `stats` subcommand, which keeps the two byte-identical.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nesim_core::conditions::ConditionReport;
use nesim_core::engine::Trajectory;
use nesim_core::scheduler::{event_stats, Event, EventStats};

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let nn = traj.final_state.x.len();
    let mut header = String::from("t");
    for i in 1..=nn {
        write!(header, ",x_{i}").unwrap();
    }
    for i in 1..=nn {
        write!(header, ",v_{i}").unwrap();
    }
    header.push_str(",err_ne,err_consensus,V");
    writeln!(out, "{header}")?;
    for (idx, state) in traj.states.iter().enumerate() {
        let mut line = String::new();
        write!(line, "{}", traj.times[idx]).unwrap();
        for v in state.x.iter() {
            write!(line, ",{v}").unwrap();
        }
        for v in state.v.iter() {
            write!(line, ",{v}").unwrap();
        }
        let err_ne = traj.metrics.err_ne.get(idx).copied().unwrap_or(f64::NAN);
        let lyap = traj.metrics.lyapunov.get(idx).copied().unwrap_or(f64::NAN);
        write!(line, ",{err_ne},{},{lyap}", traj.metrics.err_consensus[idx]).unwrap();
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn write_events_csv(path: &Path, events: &[Event]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "agent_id,time")?;
    for e in events {
        writeln!(out, "{},{}", e.agent, e.time)?;
    }
    out.flush()
}

pub fn read_events_csv(path: &Path) -> Result<Vec<Event>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {path:?}: {e}"))?;
    let mut events = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 0 && trimmed == "agent_id,time" {
            continue;
        }
        let mut parts = trimmed.split(',');
        let (agent, time) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(t), None) => (a.trim(), t.trim()),
            _ => return Err(format!("line {}: expected 'agent_id,time'", line_no + 1)),
        };
        let agent: usize = agent
            .parse()
            .map_err(|e| format!("line {}: bad agent id: {e}", line_no + 1))?;
        let time: f64 = time
            .parse()
            .map_err(|e| format!("line {}: bad time: {e}", line_no + 1))?;
        events.push(Event { agent, time });
    }
    Ok(events)
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

/// Per-agent event table in the row layout of the benchmark write-up: one
/// column per agent (1-based), rows for counts and interval statistics.
pub fn render_stats_table(stats: &[EventStats]) -> String {
    let mut rows = vec![
        ("Agent".to_string(), Vec::new()),
        ("Event times".to_string(), Vec::new()),
        ("Min interval".to_string(), Vec::new()),
        ("Mean interval".to_string(), Vec::new()),
        ("Max interval".to_string(), Vec::new()),
    ];
    for s in stats {
        rows[0].1.push(format!("{}", s.agent + 1));
        rows[1].1.push(format!("{}", s.count));
        rows[2].1.push(opt(s.min_interval, 2));
        rows[3].1.push(opt(s.mean_interval, 4));
        rows[4].1.push(opt(s.max_interval, 2));
    }
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0) + 2;
    let cell_width = rows
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(|c| c.len()))
        .max()
        .unwrap_or(1)
        + 2;
    let mut out = String::new();
    for (label, cells) in rows {
        write!(out, "{label:<label_width$}").unwrap();
        for cell in cells {
            write!(out, "{cell:<cell_width$}").unwrap();
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

/// Stats table computed from an event log over `[0, horizon]`.
pub fn stats_block(events: &[Event], horizon: f64, n_agents: usize) -> String {
    render_stats_table(&event_stats(events, horizon, n_agents))
}

pub fn render_condition_report(report: &ConditionReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{}: {}",
        report.theorem,
        if report.satisfied { "satisfied" } else { "NOT satisfied" }
    )
    .unwrap();
    for clause in &report.clauses {
        writeln!(
            out,
            "  [{}] {}: lhs = {:.6}, rhs = {:.6}",
            if clause.passed { "pass" } else { "fail" },
            clause.description,
            clause.lhs,
            clause.rhs
        )
        .unwrap();
    }
    let d = &report.derived;
    if let (Some(tau), Some(xi), Some(a), Some(b_tau)) = (d.tau, d.xi, d.a, d.b_tau) {
        writeln!(
            out,
            "  derived: tau = {tau:.6}, xi = {xi:.6}, a = {a:.6}, b_tau = {b_tau:.6}"
        )
        .unwrap();
    }
    if let (Some(beta1), Some(beta2)) = (d.beta1, d.beta2) {
        writeln!(out, "  derived: beta1 = {beta1:.6}, beta2 = {beta2:.6}").unwrap();
    }
    out
}

pub struct RunSummary<'a> {
    pub scheme_label: &'a str,
    pub dt: f64,
    pub t_end: f64,
    pub final_err_ne: Option<f64>,
    pub final_consensus: f64,
    pub x_final: &'a [f64],
    pub x_star: Option<&'a [f64]>,
    pub events: &'a [Event],
    pub n_agents: usize,
    pub condition_summary: &'a str,
}

pub fn render_run_report(s: &RunSummary) -> String {
    let mut out = String::new();
    writeln!(out, "nesim run report").unwrap();
    writeln!(out, "================").unwrap();
    writeln!(out, "scheme: {}", s.scheme_label).unwrap();
    writeln!(out, "dt = {}, horizon = {}", s.dt, s.t_end).unwrap();
    writeln!(out).unwrap();
    match s.final_err_ne {
        Some(e) => writeln!(out, "final ||x - x*||      : {e:.6e}").unwrap(),
        None => writeln!(out, "final ||x - x*||      : (no reference equilibrium)").unwrap(),
    }
    writeln!(out, "final consensus error : {:.6e}", s.final_consensus).unwrap();
    writeln!(out, "final strategies      : {:?}", s.x_final).unwrap();
    if let Some(xs) = s.x_star {
        writeln!(out, "oracle equilibrium    : {xs:?}").unwrap();
    }
    writeln!(out).unwrap();
    if s.events.is_empty() {
        writeln!(out, "no communication events logged").unwrap();
    } else {
        writeln!(out, "event statistics over [0, {}]:", s.t_end).unwrap();
        out.push_str(&stats_block(s.events, s.t_end, s.n_agents));
    }
    writeln!(out).unwrap();
    out.push_str(s.condition_summary);
    out
}
