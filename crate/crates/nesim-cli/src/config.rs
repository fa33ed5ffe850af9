//! Run-configuration schema and resolution into core types.
//!
//! Configurations are JSON objects with the sections `game`, `graph`,
//! `params`, `scheme`, `sim`, `init`, `constants` and `outputs`; unknown keys
//! are rejected. The `game` section is either a preset name (`"cournot5"`)
//! or an inline cost-term list, in which case `graph`, `params` and `init`
//! must be given too. Presets fill every omitted section with their own
//! defaults.

use std::path::{Path, PathBuf};

use nesim_core::nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use nesim_core::cournot::{CournotPreset, PRESET_NAME};
use nesim_core::engine::{EstimateInit, InitialState, Integrator, SimConfig, DEFAULT_ETA0};
use nesim_core::game::{CostFunction, CostTerm, GameSpec, RegularityConstants, SampleBox};
use nesim_core::graph::Graph;
use nesim_core::scheduler::CommScheme;
use nesim_core::RuleParams;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub game: GameSection,
    #[serde(default)]
    pub graph: Option<GraphSection>,
    #[serde(default)]
    pub params: Option<ParamsSection>,
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub init: Option<InitSection>,
    #[serde(default)]
    pub constants: Option<ConstantsSection>,
    #[serde(default)]
    pub outputs: Option<OutputsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GameSection {
    Preset(String),
    Inline {
        n_agents: usize,
        dim: usize,
        costs: Vec<Vec<TermSection>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TermSection {
    Constant { value: f64 },
    Linear { coeffs: Vec<f64> },
    Quadratic { coeff: f64 },
    Abs { weight: f64, center: Vec<f64> },
    PriceCoupling {
        p: f64,
        a: f64,
        #[serde(default)]
        linear_aggregate: bool,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GraphSection {
    Preset {
        preset: String,
        n: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Matrix {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        directed: bool,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub k: f64,
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchemeSection {
    Continuous,
    Periodic { delta: f64 },
    Event {
        b: f64,
        rho: f64,
        #[serde(default)]
        eta0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub integrator: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
    #[serde(default)]
    pub estimates: Option<EstimatesSection>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum EstimatesSection {
    Mode(String),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub w: Option<f64>,
    #[serde(default)]
    pub box_lo: Option<f64>,
    #[serde(default)]
    pub box_hi: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default)]
    pub trajectory_path: Option<PathBuf>,
    #[serde(default)]
    pub events_path: Option<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
}

/// Where the regularity constants for condition checks come from.
#[derive(Debug, Clone)]
pub enum ConstantsSource {
    Supplied(RegularityConstants),
    Estimate {
        sample_box: SampleBox,
        samples: usize,
        seed: u64,
    },
    /// Inline game without a `constants` section: checks are skipped.
    Unavailable,
}

/// A fully resolved run: everything the commands need.
pub struct Resolved {
    pub game: GameSpec,
    pub graph: Graph,
    pub sim: SimConfig,
    pub init: InitialState,
    pub constants: ConstantsSource,
    pub seed: u64,
    pub trajectory_path: PathBuf,
    pub events_path: PathBuf,
    pub report_path: PathBuf,
    pub scheme_label: String,
}

/// Scheme override from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeChoice {
    Continuous,
    Periodic,
    Event,
}

/// Load a config from a path, or synthesize one from a preset name.
pub fn load(
    target: &str,
    scheme_override: Option<SchemeChoice>,
    out_dir: &Path,
) -> Result<Resolved, ConfigError> {
    if Path::new(target).is_file() {
        let text = std::fs::read_to_string(target)
            .map_err(|e| ConfigError(format!("cannot read {target}: {e}")))?;
        let file: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("invalid config {target}: {e}")))?;
        resolve(file, scheme_override, out_dir)
    } else if target == PRESET_NAME {
        let file = RunConfigFile {
            game: GameSection::Preset(target.to_string()),
            graph: None,
            params: None,
            scheme: None,
            sim: None,
            init: None,
            constants: None,
            outputs: None,
        };
        resolve(file, scheme_override, out_dir)
    } else {
        err(format!(
            "'{target}' is neither an existing config file nor a known preset \
             (presets: {PRESET_NAME})"
        ))
    }
}

pub fn resolve(
    file: RunConfigFile,
    scheme_override: Option<SchemeChoice>,
    out_dir: &Path,
) -> Result<Resolved, ConfigError> {
    let preset = match &file.game {
        GameSection::Preset(name) if name == PRESET_NAME => Some(CournotPreset::default()),
        GameSection::Preset(name) => {
            return err(format!("unknown game preset '{name}' (presets: {PRESET_NAME})"))
        }
        GameSection::Inline { .. } => None,
    };

    let game = match &file.game {
        GameSection::Preset(_) => preset
            .as_ref()
            .unwrap()
            .game()
            .map_err(|e| ConfigError(format!("preset game: {e}")))?,
        GameSection::Inline { n_agents, dim, costs } => build_game(*n_agents, *dim, costs)?,
    };

    let graph = match (&file.graph, &preset) {
        (Some(section), _) => build_graph(section)?,
        (None, Some(p)) => p.graph().map_err(|e| ConfigError(format!("preset graph: {e}")))?,
        (None, None) => return err("inline games require a 'graph' section"),
    };
    if graph.n_agents() != game.n_agents() {
        return err(format!(
            "graph has {} nodes but game has {} agents",
            graph.n_agents(),
            game.n_agents()
        ));
    }

    let params = match (&file.params, &preset) {
        (Some(p), _) => RuleParams { k: p.k, alpha: p.alpha },
        (None, Some(p)) => p.params(),
        (None, None) => return err("inline games require a 'params' section"),
    };

    let x0 = match (&file.init, &preset) {
        (Some(init), _) => DVector::from_vec(init.x0.clone()),
        (None, Some(p)) => p.initial_strategies(),
        (None, None) => return err("inline games require an 'init' section"),
    };
    if x0.len() != game.profile_dim() {
        return err(format!(
            "init.x0 has {} entries, expected {}",
            x0.len(),
            game.profile_dim()
        ));
    }
    let v0 = match file.init.as_ref().and_then(|i| i.v0.as_ref()) {
        Some(v) => {
            if v.len() != game.profile_dim() {
                return err(format!(
                    "init.v0 has {} entries, expected {}",
                    v.len(),
                    game.profile_dim()
                ));
            }
            DVector::from_vec(v.clone())
        }
        None => DVector::zeros(game.profile_dim()),
    };
    let estimates = match file.init.as_ref().and_then(|i| i.estimates.as_ref()) {
        None => EstimateInit::BroadcastOwn,
        Some(EstimatesSection::Mode(mode)) if mode == "broadcast-own" => EstimateInit::BroadcastOwn,
        Some(EstimatesSection::Mode(other)) => {
            return err(format!(
                "init.estimates mode '{other}' not recognized (use \"broadcast-own\" or an explicit matrix)"
            ))
        }
        Some(EstimatesSection::Explicit(rows)) => {
            let n = game.n_agents();
            let nn = game.profile_dim();
            if rows.len() != n || rows.iter().any(|r| r.len() != nn) {
                return err(format!("init.estimates must be an {n} x {nn} matrix"));
            }
            let mut m = DMatrix::zeros(n, nn);
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            EstimateInit::Explicit(m)
        }
    };

    // Scheme: section, then preset default, overridden by the CLI flag.
    let default_eta0 = DVector::from_element(game.n_agents(), DEFAULT_ETA0);
    let mut scheme = match (&file.scheme, &preset) {
        (Some(SchemeSection::Continuous), _) => CommScheme::Continuous,
        (Some(SchemeSection::Periodic { delta }), _) => CommScheme::Periodic { delta: *delta },
        (Some(SchemeSection::Event { b, rho, eta0 }), _) => CommScheme::EventTriggered {
            b: *b,
            rho: *rho,
            eta0: match eta0 {
                Some(v) => DVector::from_vec(v.clone()),
                None => default_eta0.clone(),
            },
        },
        (None, Some(p)) => p.continuous_scheme(),
        (None, None) => CommScheme::Continuous,
    };
    if let Some(choice) = scheme_override {
        scheme = match (choice, &preset) {
            (SchemeChoice::Continuous, _) => CommScheme::Continuous,
            (SchemeChoice::Periodic, Some(p)) => p.periodic_scheme(),
            (SchemeChoice::Event, Some(p)) => p.event_scheme(),
            (SchemeChoice::Periodic, None) => match &file.scheme {
                Some(SchemeSection::Periodic { delta }) => CommScheme::Periodic { delta: *delta },
                _ => return err("--scheme periodic needs a periodic scheme section (for delta)"),
            },
            (SchemeChoice::Event, None) => match &file.scheme {
                Some(SchemeSection::Event { b, rho, eta0 }) => CommScheme::EventTriggered {
                    b: *b,
                    rho: *rho,
                    eta0: match eta0 {
                        Some(v) => DVector::from_vec(v.clone()),
                        None => default_eta0.clone(),
                    },
                },
                _ => return err("--scheme event needs an event scheme section (for b, rho)"),
            },
        };
    }
    let scheme_label = match &scheme {
        CommScheme::Continuous => "continuous".to_string(),
        CommScheme::Periodic { delta } => format!("periodic (delta = {delta})"),
        CommScheme::EventTriggered { b, rho, .. } => {
            format!("event-triggered (b = {b}, rho = {rho})")
        }
    };

    let sim_section = file.sim.as_ref();
    let integrator = match sim_section.and_then(|s| s.integrator.as_deref()) {
        None | Some("rk4") => Integrator::Rk4,
        Some("euler") => Integrator::Euler,
        Some(other) => return err(format!("unknown integrator '{other}' (rk4 or euler)")),
    };
    let sim = SimConfig {
        dt: sim_section.and_then(|s| s.dt).unwrap_or(0.01),
        t_end: sim_section.and_then(|s| s.t_end).unwrap_or(15.0),
        params,
        scheme,
        integrator,
        record_stride: sim_section.and_then(|s| s.record_stride).unwrap_or(1),
    };
    sim.validate(game.n_agents())
        .map_err(|e| ConfigError(format!("invalid simulation settings: {e}")))?;

    let seed = sim_section.and_then(|s| s.seed).unwrap_or(42);
    let constants = resolve_constants(&file.constants, &preset, &game, seed)?;

    let outputs = file.outputs.as_ref();
    let join = |name: &str, explicit: Option<&PathBuf>| match explicit {
        Some(p) => p.clone(),
        None => out_dir.join(name),
    };

    Ok(Resolved {
        init: InitialState { x0, v0, estimates },
        trajectory_path: join("trajectory.csv", outputs.and_then(|o| o.trajectory_path.as_ref())),
        events_path: join("events.csv", outputs.and_then(|o| o.events_path.as_ref())),
        report_path: join("report.txt", outputs.and_then(|o| o.report_path.as_ref())),
        game,
        graph,
        sim,
        constants,
        seed,
        scheme_label,
    })
}

fn resolve_constants(
    section: &Option<ConstantsSection>,
    preset: &Option<CournotPreset>,
    game: &GameSpec,
    seed: u64,
) -> Result<ConstantsSource, ConfigError> {
    match section {
        Some(c) => match (c.theta, c.w) {
            (Some(theta), Some(w)) => {
                if c.box_lo.is_some() || c.box_hi.is_some() || c.samples.is_some() {
                    return err("constants: give either {theta, w} or {box_lo, box_hi, samples}, not both");
                }
                match RegularityConstants::new(theta, w) {
                    Some(r) => Ok(ConstantsSource::Supplied(r)),
                    None => err("constants: need theta > 0, w > 0 and w <= theta"),
                }
            }
            (None, None) => {
                let (lo, hi) = match (c.box_lo, c.box_hi) {
                    (Some(lo), Some(hi)) if lo < hi => (lo, hi),
                    _ => return err("constants: estimation needs box_lo < box_hi"),
                };
                Ok(ConstantsSource::Estimate {
                    sample_box: SampleBox::uniform(game.profile_dim(), lo, hi),
                    samples: c.samples.unwrap_or(10_000),
                    seed,
                })
            }
            _ => err("constants: theta and w must be given together"),
        },
        None => match preset {
            Some(_) => Ok(ConstantsSource::Estimate {
                sample_box: SampleBox::uniform(game.profile_dim(), 0.0, 50.0),
                samples: 10_000,
                seed,
            }),
            None => Ok(ConstantsSource::Unavailable),
        },
    }
}

fn build_game(n_agents: usize, dim: usize, costs: &[Vec<TermSection>]) -> Result<GameSpec, ConfigError> {
    let cost_fns: Vec<CostFunction> = costs
        .iter()
        .map(|terms| {
            let parsed: Result<Vec<CostTerm>, ConfigError> =
                terms.iter().map(|t| build_term(t, dim)).collect();
            Ok(CostFunction::Terms(parsed?))
        })
        .collect::<Result<_, ConfigError>>()?;
    GameSpec::new(n_agents, dim, cost_fns).map_err(|e| ConfigError(format!("invalid game: {e}")))
}

fn build_term(section: &TermSection, dim: usize) -> Result<CostTerm, ConfigError> {
    Ok(match section {
        TermSection::Constant { value } => CostTerm::Constant(*value),
        TermSection::Linear { coeffs } => {
            if coeffs.len() != dim {
                return err(format!("linear term has {} coeffs, expected {dim}", coeffs.len()));
            }
            CostTerm::Linear(DVector::from_vec(coeffs.clone()))
        }
        TermSection::Quadratic { coeff } => CostTerm::Quadratic(*coeff),
        TermSection::Abs { weight, center } => {
            if center.len() != dim {
                return err(format!("abs term center has {} entries, expected {dim}", center.len()));
            }
            CostTerm::AbsKink {
                weight: *weight,
                center: DVector::from_vec(center.clone()),
            }
        }
        TermSection::PriceCoupling { p, a, linear_aggregate } => CostTerm::PriceCoupling {
            p: *p,
            a: *a,
            linear_aggregate: *linear_aggregate,
        },
    })
}

fn build_graph(section: &GraphSection) -> Result<Graph, ConfigError> {
    let graph = match section {
        GraphSection::Preset { preset, n, weight } => match preset.as_str() {
            "cycle" => Graph::cycle(*n, *weight),
            "path" => Graph::path(*n, *weight),
            "complete" => Graph::complete(*n, *weight),
            "directed-cycle" => Graph::directed_cycle(*n, *weight),
            other => {
                return err(format!(
                    "unknown graph preset '{other}' (cycle, path, complete, directed-cycle)"
                ))
            }
        },
        GraphSection::Matrix { matrix, directed } => {
            let n = matrix.len();
            if matrix.iter().any(|row| row.len() != n) {
                return err("graph matrix must be square");
            }
            let mut m = DMatrix::zeros(n, n);
            for (i, row) in matrix.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            Graph::new(m, *directed)
        }
    };
    graph.map_err(|e| ConfigError(format!("invalid graph: {e}")))
}
