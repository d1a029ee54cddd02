//! Scenario files, episode metrics and benchmark reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::consensus::{ConsensusConfig, NavigationObjective, Residuals, TeamProblem};
use crate::cost::{ConstraintConfig, Obstacle, QuadraticCost, DEFAULT_AGENT_RADIUS, DEFAULT_PENALTY};
use crate::dynamics::{DynamicsModel, QuadcopterParams};
use crate::mpc::{self, MpcError, Planner, PlannerConfig, PlannerMode, TrajectoryLog};
use crate::sampler::{LogisticRate, SamplerConfig, ShapeFunction, Workers};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Errors caused by the scenario or the request rather than by a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            BenchError::UnknownScenario(_) | BenchError::UnknownSuite(_) | BenchError::Parse(_) | BenchError::Invalid(_)
        ) || matches!(self, BenchError::Mpc(MpcError::InvalidConfig(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unicycle,
    Dubins,
    Quadcopter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub init: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizons {
    /// Episode length in steps.
    #[serde(rename = "T")]
    pub steps: usize,
    /// Look-ahead horizon in steps.
    #[serde(rename = "T_mpc")]
    pub t_mpc: usize,
    pub dt: f64,
}

/// Diagonals of the tracking weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "Qf")]
    pub qf: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ShapeSpec {
    pub fn default_for(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            params: BTreeMap::new(),
        }
    }

    /// Canonical optimizer name: `mppi`, `tsallis` or `cem`.
    pub fn optimizer(&self) -> Result<&'static str, BenchError> {
        match self.kind.as_str() {
            "mppi" | "exponential" => Ok("mppi"),
            "tsallis" | "q_exponential" => Ok("tsallis"),
            "cem" | "logistic" => Ok("cem"),
            other => Err(BenchError::Invalid(format!("unknown shape kind `{other}`"))),
        }
    }

    pub fn to_shape(&self) -> Result<ShapeFunction, BenchError> {
        let get = |key: &str| self.params.get(key).copied();
        let allowed: &[&str] = match self.optimizer()? {
            "mppi" => &["eta"],
            "tsallis" => &["q", "elite_fraction"],
            _ => &["k", "k_iqr", "elite_fraction"],
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(BenchError::Invalid(format!("unknown parameter `{k}` for shape `{}`", self.kind)));
        }
        let shape = match (self.optimizer()?, ShapeFunction::mppi(), ShapeFunction::tsallis(), ShapeFunction::cem()) {
            ("mppi", ShapeFunction::Exponential { eta }, _, _) => ShapeFunction::Exponential {
                eta: get("eta").unwrap_or(eta),
            },
            ("tsallis", _, ShapeFunction::QExponential { q, elite_fraction }, _) => ShapeFunction::QExponential {
                q: get("q").unwrap_or(q),
                elite_fraction: get("elite_fraction").unwrap_or(elite_fraction),
            },
            (_, _, _, ShapeFunction::Logistic { rate, elite_fraction }) => {
                let rate = match (get("k"), get("k_iqr")) {
                    (Some(_), Some(_)) => {
                        return Err(BenchError::Invalid("give either `k` or `k_iqr`, not both".into()));
                    }
                    (Some(k), None) => LogisticRate::Fixed(k),
                    (None, Some(c)) => LogisticRate::IqrScaled(c),
                    (None, None) => rate,
                };
                ShapeFunction::Logistic {
                    rate,
                    elite_fraction: get("elite_fraction").unwrap_or(elite_fraction),
                }
            }
            _ => unreachable!("default shapes have fixed variants"),
        };
        shape.validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
        Ok(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    /// Sampling standard deviation per control coordinate.
    pub sigma: Vec<f64>,
    pub m_sample: usize,
    pub n_ss_iters: usize,
    pub shape: ShapeSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mppi_control_coupling: bool,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSpec {
    pub delta: f64,
    pub rho: f64,
    /// Defaults to `rho`.
    #[serde(default)]
    pub mu: Option<f64>,
    pub admm_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Centralized,
    Distributed,
}

fn default_completion_tol() -> f64 {
    0.1
}

fn default_agent_radius() -> f64 {
    DEFAULT_AGENT_RADIUS
}

fn default_penalty() -> f64 {
    DEFAULT_PENALTY
}

/// A navigation task with its planner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_params: Option<QuadcopterParams>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_agent_radius")]
    pub agent_radius: f64,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    pub horizons: Horizons,
    pub cost: CostSpec,
    pub sampler: SamplerSpec,
    pub consensus: ConsensusSpec,
    pub mode: ModeKind,
    pub seed: u64,
    #[serde(default = "default_completion_tol")]
    pub completion_tol: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn dynamics(&self) -> DynamicsModel {
        match self.model {
            ModelKind::Unicycle => DynamicsModel::Unicycle,
            ModelKind::Dubins => DynamicsModel::Dubins,
            ModelKind::Quadcopter => DynamicsModel::Quadcopter(self.model_params.unwrap_or_default()),
        }
    }

    pub fn constraints(&self) -> ConstraintConfig {
        ConstraintConfig {
            agent_radius: self.agent_radius,
            obstacles: self.obstacles.clone(),
            penalty_weight: self.penalty,
        }
    }

    /// Tracking cost of agent `i`.
    pub fn agent_cost(&self, i: usize) -> Result<QuadraticCost, BenchError> {
        QuadraticCost::new(self.cost.q.clone(), self.cost.qf.clone(), self.cost.r.clone(), self.agents[i].target.clone())
            .map_err(|e| BenchError::Invalid(e.to_string()))
    }

    pub fn planner_mode(&self) -> PlannerMode {
        match self.mode {
            ModeKind::Centralized => PlannerMode::Centralized,
            ModeKind::Distributed => PlannerMode::Distributed {
                admm_iters: self.consensus.admm_iters,
            },
        }
    }

    pub fn optimizer(&self) -> Result<&'static str, BenchError> {
        self.sampler.shape.optimizer()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |msg: String| Err(BenchError::Invalid(msg));
        let model = self.dynamics();
        model.validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
        if self.model_params.is_some() && self.model != ModelKind::Quadcopter {
            return invalid("model_params only apply to the quadcopter".into());
        }
        if self.agents.is_empty() {
            return invalid("at least one agent is required".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.init.len() != model.state_dim() || a.target.len() != model.state_dim() {
                return invalid(format!(
                    "agent {i}: init and target need {} entries, got {} and {}",
                    model.state_dim(),
                    a.init.len(),
                    a.target.len()
                ));
            }
            if a.init.iter().chain(&a.target).any(|v| !v.is_finite()) {
                return invalid(format!("agent {i}: non-finite state"));
            }
        }
        let h = &self.horizons;
        if h.steps == 0 || h.t_mpc == 0 || !(h.dt > 0.0 && h.dt.is_finite()) {
            return invalid("horizons T, T_mpc and dt must be positive".into());
        }
        for i in 0..self.agents.len() {
            self.agent_cost(i)?;
        }
        self.constraints().validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
        if self.sampler.sigma.len() != model.control_dim() || self.sampler.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid(format!("sigma needs {} positive entries", model.control_dim()));
        }
        self.sampler.shape.to_shape()?;
        self.planner_config().validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
        if !(self.completion_tol > 0.0) {
            return invalid("completion_tol must be positive".into());
        }
        Ok(())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            mode: self.planner_mode(),
            shape: self.sampler.shape.to_shape().unwrap_or(ShapeFunction::mppi()),
            sampler: SamplerConfig {
                samples: self.sampler.m_sample,
                alpha: self.sampler.alpha,
                iterations: self.sampler.n_ss_iters,
                seed: self.seed,
                mppi_control_coupling: self.sampler.mppi_control_coupling,
            },
            consensus: ConsensusConfig {
                rho: self.consensus.rho,
                mu: self.consensus.mu.unwrap_or(self.consensus.rho),
                delta: self.consensus.delta,
            },
        }
    }

    pub fn team(&self) -> Result<TeamProblem<NavigationObjective>, BenchError> {
        let n = self.agents.len();
        Ok(TeamProblem {
            models: vec![self.dynamics(); n],
            sigma: vec![self.sampler.sigma.clone(); n],
            horizon: self.horizons.t_mpc,
            dt: self.horizons.dt,
            objective: NavigationObjective {
                costs: (0..n).map(|i| self.agent_cost(i)).collect::<Result<_, _>>()?,
                constraints: self.constraints(),
            },
        })
    }

    /// Replaces the shape, keeping its parameters when the kind is unchanged.
    pub fn set_optimizer(&mut self, name: &str) -> Result<(), BenchError> {
        let wanted = ShapeSpec::default_for(name).optimizer()?;
        if self.optimizer()? != wanted {
            self.sampler.shape = ShapeSpec::default_for(wanted);
        }
        Ok(())
    }

    pub fn set_mode(&mut self, name: &str) -> Result<(), BenchError> {
        self.mode = match name {
            "centralized" => ModeKind::Centralized,
            "distributed" => ModeKind::Distributed,
            other => return Err(BenchError::Invalid(format!("unknown mode `{other}`"))),
        };
        Ok(())
    }

    pub fn initial_states(&self) -> Vec<Vec<f64>> {
        self.agents.iter().map(|a| a.init.clone()).collect()
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("unicycle-swap-4", include_str!("../scenarios/unicycle-swap-4.json")),
    ("dubins-formation-8", include_str!("../scenarios/dubins-formation-8.json")),
    ("quadcopter-formation-4", include_str!("../scenarios/quadcopter-formation-4.json")),
    ("dubins-obstacle-1", include_str!("../scenarios/dubins-obstacle-1.json")),
    ("unicycle-swap-2-smoke", include_str!("../scenarios/unicycle-swap-2-smoke.json")),
    ("unicycle-swap-30", include_str!("../scenarios/unicycle-swap-30.json")),
    ("unicycle-formation-48", include_str!("../scenarios/unicycle-formation-48.json")),
    ("dubins-formation-64", include_str!("../scenarios/dubins-formation-64.json")),
    ("quadcopter-formation-24", include_str!("../scenarios/quadcopter-formation-24.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Every builtin scenario, by name.
pub fn builtin_scenarios() -> Result<BTreeMap<String, Scenario>, BenchError> {
    BUILTIN.iter().map(|(n, _)| Ok((n.to_string(), builtin(n)?))).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, BenchError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| BenchError::UnknownScenario(name.to_string()))?;
    let mut s = Scenario::from_json(text)?;
    if s.name.is_empty() {
        s.name = name.to_string();
    }
    Ok(s)
}

/// Builtin name or path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, BenchError> {
    if BUILTIN.iter().any(|(n, _)| *n == name_or_path) {
        return builtin(name_or_path);
    }
    let path = std::path::Path::new(name_or_path);
    if !path.exists() {
        return Err(BenchError::UnknownScenario(name_or_path.to_string()));
    }
    let mut s = Scenario::from_json(&std::fs::read_to_string(path)?)?;
    if s.name.is_empty() {
        s.name = path.file_stem().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    }
    Ok(s)
}

/// Table-style outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completion_rate: f64,
    pub inter_agent_collisions: usize,
    pub obstacle_collisions: usize,
    pub trajectory_cost: f64,
    /// Seconds spent planning.
    pub wall_time: f64,
}

/// Collision events on executed states: `(timestep, unordered pair)` and
/// `(timestep, agent, obstacle)`.
pub fn count_collisions(log: &TrajectoryLog, scenario: &Scenario) -> (usize, usize) {
    let cfg = scenario.constraints();
    let model = scenario.dynamics();
    let pos = |i: usize, t: usize| position(&model, &log.states[i][t]);
    let n = log.agents();
    let len = log.states.iter().map(Vec::len).min().unwrap_or(0);
    let (mut inter, mut obstacle) = (0, 0);
    for t in 0..len {
        for i in 0..n {
            let p = pos(i, t);
            obstacle += cfg.obstacles.iter().filter(|o| cfg.hits_obstacle(&p, o)).count();
            for j in i + 1..n {
                if cfg.agents_collide(&p, &pos(j, t)) {
                    inter += 1;
                }
            }
        }
    }
    (inter, obstacle)
}

fn position(model: &DynamicsModel, x: &[f64]) -> [f64; 3] {
    let mut p = [0.0; 3];
    let k = model.position_dims();
    p[..k].copy_from_slice(&x[..k]);
    p
}

/// Agents whose final position lies within the completion tolerance.
pub fn completed_agents(log: &TrajectoryLog, scenario: &Scenario) -> usize {
    let model = scenario.dynamics();
    let k = model.position_dims();
    log.states
        .iter()
        .zip(&scenario.agents)
        .filter(|(states, a)| {
            let last = states.last().expect("log holds the initial state");
            let d2: f64 = (0..k).map(|d| (last[d] - a.target[d]).powi(2)).sum();
            d2.sqrt() <= scenario.completion_tol
        })
        .count()
}

/// Sum over agents of the tracking cost of the executed episode.
pub fn trajectory_cost(log: &TrajectoryLog, scenario: &Scenario) -> Result<f64, BenchError> {
    let model = scenario.dynamics();
    let mut total = 0.0;
    for i in 0..log.agents() {
        let traj = log.trajectory(model, i).map_err(|e| BenchError::Invalid(e.to_string()))?;
        let cost = scenario.agent_cost(i)?;
        total += crate::cost::tracking_cost(&cost, &traj, &log.flat_controls(i)).map_err(|e| BenchError::Invalid(e.to_string()))?;
    }
    Ok(total)
}

pub fn compute_metrics(log: &TrajectoryLog, scenario: &Scenario, wall_time: Duration) -> Result<RunMetrics, BenchError> {
    let (inter, obstacle) = count_collisions(log, scenario);
    Ok(RunMetrics {
        completion_rate: completed_agents(log, scenario) as f64 / scenario.agents.len() as f64,
        inter_agent_collisions: inter,
        obstacle_collisions: obstacle,
        trajectory_cost: trajectory_cost(log, scenario)?,
        wall_time: wall_time.as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
    pub final_residuals: Vec<Residuals>,
}

/// Runs one episode of `scenario` and scores it.
pub fn run_scenario(scenario: &Scenario, workers: &Workers) -> Result<RunResult, BenchError> {
    scenario.validate()?;
    let mut planner = Planner::new(scenario.team()?, scenario.planner_config(), workers.clone())?;
    let outcome = mpc::run_episode(&mut planner, &scenario.initial_states(), scenario.horizons.steps)?;
    let metrics = compute_metrics(&outcome.log, scenario, outcome.planning_time)?;
    Ok(RunResult {
        log: outcome.log,
        metrics,
        final_residuals: outcome.final_residuals,
    })
}

/// Writes one JSON line per `(step, agent)` and a closing summary line. The
/// output contains no timing, so reruns are byte-identical.
pub fn write_trajectory_log<W: Write>(mut w: W, log: &TrajectoryLog, scenario: &Scenario, metrics: &RunMetrics) -> Result<(), BenchError> {
    let steps = log.states.first().map_or(0, |s| s.len());
    for k in 0..steps {
        for i in 0..log.agents() {
            let control = log.controls[i].get(k).map_or(Value::Null, |u| json!(u));
            let record = json!({
                "step": k,
                "agent": i,
                "t_seconds": k as f64 * log.dt,
                "state": log.states[i][k],
                "control": control,
            });
            writeln!(w, "{record}")?;
        }
    }
    let summary = json!({
        "summary": true,
        "scenario": scenario.name,
        "model": scenario.model,
        "agents": log.agents(),
        "steps": log.steps(),
        "dt": log.dt,
        "aborted": log.aborted,
        "completion_rate": metrics.completion_rate,
        "inter_agent_collisions": metrics.inter_agent_collisions,
        "obstacle_collisions": metrics.obstacle_collisions,
        "trajectory_cost": metrics.trajectory_cost,
    });
    writeln!(w, "{summary}")?;
    Ok(())
}

/// One row of a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub mode: String,
    pub optimizer: String,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

/// Fixed-width table and JSON lines, both ordered by
/// `(scenario, mode, optimizer)`.
pub fn report(records: &[RunRecord]) -> (String, String) {
    let mut rows: Vec<&RunRecord> = records.iter().collect();
    rows.sort_by(|a, b| (&a.scenario, &a.mode, &a.optimizer).cmp(&(&b.scenario, &b.mode, &b.optimizer)));
    let mut table = format!(
        "{:<26} {:<12} {:<9} {:>11} {:>11} {:>10} {:>16} {:>10}\n",
        "scenario", "mode", "optimizer", "completion", "inter-agent", "obstacle", "trajectory cost", "time [s]"
    );
    let mut jsonl = String::new();
    for r in rows {
        let m = &r.metrics;
        table.push_str(&format!(
            "{:<26} {:<12} {:<9} {:>10.1}% {:>11} {:>10} {:>16.4e} {:>10.2}\n",
            r.scenario,
            r.mode,
            r.optimizer,
            100.0 * m.completion_rate,
            m.inter_agent_collisions,
            m.obstacle_collisions,
            m.trajectory_cost,
            m.wall_time
        ));
        jsonl.push_str(&serde_json::to_string(r).expect("record serialises"));
        jsonl.push('\n');
    }
    (table, jsonl)
}

pub const OPTIMIZERS: [&str; 3] = ["mppi", "cem", "tsallis"];
pub const MODES: [&str; 2] = ["centralized", "distributed"];

/// Scenario names of a suite; each runs with every optimizer and mode.
pub fn suite(name: &str) -> Result<Vec<&'static str>, BenchError> {
    match name {
        "desk" => Ok(vec!["unicycle-swap-4", "dubins-formation-8", "quadcopter-formation-4"]),
        "full" => Ok(vec![
            "unicycle-swap-30",
            "unicycle-formation-48",
            "dubins-formation-64",
            "quadcopter-formation-24",
        ]),
        "smoke" => Ok(vec!["unicycle-swap-2-smoke"]),
        other => Err(BenchError::UnknownSuite(other.to_string())),
    }
}

/// Expands a suite into concrete runs.
pub fn suite_runs(name: &str) -> Result<Vec<Scenario>, BenchError> {
    let mut runs = Vec::new();
    for scenario in suite(name)? {
        let base = builtin(scenario)?;
        for mode in MODES {
            for opt in OPTIMIZERS {
                let mut s = base.clone();
                s.set_mode(mode)?;
                s.set_optimizer(opt)?;
                runs.push(s);
            }
        }
    }
    Ok(runs)
}

impl RunRecord {
    pub fn new(scenario: &Scenario, metrics: RunMetrics) -> Self {
        Self {
            scenario: scenario.name.clone(),
            mode: scenario.planner_mode().name().to_string(),
            optimizer: scenario.optimizer().unwrap_or("unknown").to_string(),
            metrics,
        }
    }
}
