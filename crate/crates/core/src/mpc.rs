//! Receding-horizon planning for a team, centralised or distributed.
//!
//! At each step the planner optimises a `horizon`-step control sequence per
//! agent, the first control of each is executed, and the remaining means are
//! shifted by one step to warm-start the next plan.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{self, ConsensusConfig, ConsensusError, ConsensusState, Neighborhood, Residuals, TeamObjective, TeamProblem};
use crate::dynamics::{self, DynamicsError, DynamicsModel, Trajectory};
use crate::sampler::{self, ControlDistribution, SamplerConfig, SamplerError, SamplerRng, ShapeFunction, Workers};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PlannerMode {
    /// One stochastic search over the stacked controls of every agent.
    Centralized,
    /// Per-agent searches reconciled by ADMM.
    Distributed { admm_iters: usize },
}

impl PlannerMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerMode::Centralized => "centralized",
            PlannerMode::Distributed { .. } => "distributed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    pub shape: ShapeFunction,
    pub sampler: SamplerConfig,
    pub consensus: ConsensusConfig,
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if let PlannerMode::Distributed { admm_iters: 0 } = self.mode {
            return Err(MpcError::InvalidConfig("at least one ADMM iteration is required".into()));
        }
        self.shape.validate()?;
        self.sampler.validate()?;
        self.consensus.validate()?;
        Ok(())
    }
}

/// `[a, b, c] → [b, c, c]` over elements of `dim` values.
pub fn shift_warm_start(mean: &[f64], dim: usize) -> Vec<f64> {
    consensus::shift_sequence(mean, dim)
}

/// Control that keeps the model at rest: hover thrust for the quadcopter,
/// zero otherwise.
pub fn nominal_control(model: &DynamicsModel) -> Vec<f64> {
    let mut u = vec![0.0; model.control_dim()];
    if let DynamicsModel::Quadcopter(p) = model {
        u[0] = p.hover_thrust();
    }
    u
}

/// Result of one planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    /// Per-agent mean control sequences, flat `horizon × du`.
    pub means: Vec<Vec<f64>>,
    /// Primal residual of each ADMM round (distributed mode only).
    pub residuals: Vec<Residuals>,
}

impl StepPlan {
    /// The control each agent executes now: element 0 of its mean.
    pub fn first_control(&self, agent: usize, du: usize) -> &[f64] {
        &self.means[agent][..du]
    }
}

/// Stateful receding-horizon planner: owns per-agent noise streams, warm
/// starts and the consensus duals carried between steps.
#[derive(Debug)]
pub struct Planner<O> {
    team: TeamProblem<O>,
    cfg: PlannerConfig,
    rngs: Vec<SamplerRng>,
    warm: Vec<Vec<f64>>,
    carried: Option<consensus::ConsensusBuffers>,
    workers: Workers,
}

impl<O: TeamObjective> Planner<O> {
    /// Agent `i` draws from stream `i` of `cfg.sampler.seed`.
    pub fn new(team: TeamProblem<O>, cfg: PlannerConfig, workers: Workers) -> Result<Self, MpcError> {
        team.validate()?;
        cfg.validate()?;
        if cfg.mode == PlannerMode::Centralized {
            let du = team.models[0].control_dim();
            if team.models.iter().any(|m| m.control_dim() != du) {
                return Err(MpcError::InvalidConfig(
                    "centralized planning needs equal control dimensions for all agents".into(),
                ));
            }
        }
        let rngs = (0..team.agents()).map(|i| sampler::stream_rng(cfg.sampler.seed, i as u64)).collect();
        let warm = team
            .models
            .iter()
            .map(|m| nominal_control(m).repeat(team.horizon))
            .collect();
        Ok(Self {
            team,
            cfg,
            rngs,
            warm,
            carried: None,
            workers,
        })
    }

    pub fn team(&self) -> &TeamProblem<O> {
        &self.team
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn warm_starts(&self) -> &[Vec<f64>] {
        &self.warm
    }

    /// Duals carried into the next distributed step.
    pub fn carried_buffers(&self) -> Option<&consensus::ConsensusBuffers> {
        self.carried.as_ref()
    }

    /// Plans from `states` and advances the warm starts.
    pub fn plan_step(&mut self, states: &[Vec<f64>]) -> Result<StepPlan, MpcError> {
        if states.len() != self.team.agents() {
            return Err(MpcError::InvalidConfig(format!(
                "expected {} agent states, got {}",
                self.team.agents(),
                states.len()
            )));
        }
        let plan = match self.cfg.mode {
            PlannerMode::Centralized => self.plan_step_centralized(states)?,
            PlannerMode::Distributed { admm_iters } => self.plan_step_distributed(states, admm_iters)?,
        };
        self.warm = plan
            .means
            .iter()
            .zip(&self.team.models)
            .map(|(m, model)| shift_warm_start(m, model.control_dim()))
            .collect();
        Ok(plan)
    }

    /// Joint search over controls stacked as `[t][agent][du]`, scored by the
    /// team's joint cost.
    pub fn plan_step_centralized(&mut self, states: &[Vec<f64>]) -> Result<StepPlan, MpcError> {
        let team = &self.team;
        let n = team.agents();
        let h = team.horizon;
        let du = team.models[0].control_dim();
        let width = n * du;
        let mut mean = vec![0.0; h * width];
        for (i, w) in self.warm.iter().enumerate() {
            for t in 0..h {
                mean[t * width + i * du..t * width + (i + 1) * du].copy_from_slice(&w[t * du..(t + 1) * du]);
            }
        }
        let std: Vec<f64> = team.sigma.iter().flatten().copied().collect();
        let dist = ControlDistribution::new(mean, std)?;
        let objective = |u: &[f64]| -> f64 {
            let mut trajs = Vec::with_capacity(n);
            for i in 0..n {
                let at = |t: usize| &u[t * width + i * du..t * width + (i + 1) * du];
                match dynamics::rollout_with(&team.models[i], &states[i], h, team.dt, at) {
                    Ok(tr) => trajs.push(tr),
                    Err(_) => return f64::INFINITY,
                }
            }
            let controls = unstack(u, n, du, h);
            team.objective.joint_cost(&trajs, &controls)
        };
        let (dist, _) = sampler::optimize(&dist, &self.cfg.shape, &self.cfg.sampler, &mut self.rngs, &self.workers, objective)?;
        Ok(StepPlan {
            means: unstack(dist.mean(), n, du, h),
            residuals: Vec::new(),
        })
    }

    /// Freezes neighbourhoods at the current positions and runs `admm_iters`
    /// consensus rounds.
    pub fn plan_step_distributed(&mut self, states: &[Vec<f64>], admm_iters: usize) -> Result<StepPlan, MpcError> {
        let team = &self.team;
        let positions: Vec<Vec<f64>> = states
            .iter()
            .zip(&team.models)
            .map(|(x, m)| x[..m.position_dims()].to_vec())
            .collect();
        let neighborhood = Neighborhood::compute(&positions, self.cfg.consensus.delta)?;
        let mut state = ConsensusState::initialize(team, neighborhood, states, &self.warm, &self.cfg.consensus, self.carried.as_ref())?;
        let mut residuals = Vec::with_capacity(admm_iters);
        for _ in 0..admm_iters {
            residuals.push(consensus::admm_round(
                team,
                states,
                &mut state,
                &self.cfg.shape,
                &self.cfg.sampler,
                &mut self.rngs,
                &self.workers,
            )?);
        }
        let means = state.decisions.iter().map(|d| d.own_mean().to_vec()).collect();
        self.carried = Some(state.buffers);
        Ok(StepPlan { means, residuals })
    }
}

fn unstack(u: &[f64], n: usize, du: usize, h: usize) -> Vec<Vec<f64>> {
    let width = n * du;
    (0..n)
        .map(|i| (0..h).flat_map(|t| u[t * width + i * du..t * width + (i + 1) * du].iter().copied()).collect())
        .collect()
}

/// Executed states and controls of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    /// `states[i]` holds `steps + 1` states of agent `i`.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `controls[i]` holds `steps` controls of agent `i`.
    pub controls: Vec<Vec<Vec<f64>>>,
    /// Set when the episode stopped early, with the reason.
    pub aborted: Option<String>,
}

impl TrajectoryLog {
    pub fn agents(&self) -> usize {
        self.states.len()
    }

    /// Number of executed steps.
    pub fn steps(&self) -> usize {
        self.controls.first().map_or(0, Vec::len)
    }

    /// Executed trajectory of agent `i`.
    pub fn trajectory(&self, model: DynamicsModel, i: usize) -> Result<Trajectory, DynamicsError> {
        Trajectory::from_states(model, self.dt, self.states[i].clone())
    }

    /// Executed controls of agent `i`, flat.
    pub fn flat_controls(&self, i: usize) -> Vec<f64> {
        self.controls[i].iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: TrajectoryLog,
    /// Time spent inside the planner, excluding simulation and logging.
    pub planning_time: Duration,
    /// Final ADMM residual of every step (distributed mode only).
    pub final_residuals: Vec<Residuals>,
}

/// Runs `steps` receding-horizon steps from `initial`.
///
/// A non-finite executed state stops the episode; the partial log is returned
/// with `aborted` set.
pub fn run_episode<O: TeamObjective>(planner: &mut Planner<O>, initial: &[Vec<f64>], steps: usize) -> Result<EpisodeOutcome, MpcError> {
    let n = planner.team().agents();
    if initial.len() != n {
        return Err(MpcError::InvalidConfig(format!("expected {n} initial states, got {}", initial.len())));
    }
    for (x, m) in initial.iter().zip(&planner.team().models) {
        if x.len() != m.state_dim() {
            return Err(MpcError::Dynamics(DynamicsError::DimensionMismatch {
                what: "initial state",
                expected: m.state_dim(),
                got: x.len(),
            }));
        }
    }
    let models = planner.team().models.clone();
    let dt = planner.team().dt;
    let mut current: Vec<Vec<f64>> = initial.to_vec();
    let mut log = TrajectoryLog {
        dt,
        states: current.iter().map(|x| vec![x.clone()]).collect(),
        controls: vec![Vec::with_capacity(steps); n],
        aborted: None,
    };
    let mut planning_time = Duration::ZERO;
    let mut final_residuals = Vec::new();
    'episode: for k in 0..steps {
        let started = Instant::now();
        let plan = planner.plan_step(&current)?;
        planning_time += started.elapsed();
        if let Some(r) = plan.residuals.last() {
            final_residuals.push(*r);
        }
        let mut next = Vec::with_capacity(n);
        for (i, model) in models.iter().enumerate() {
            let du = model.control_dim();
            let u = plan.first_control(i, du).to_vec();
            assert_eq!(u.as_slice(), &plan.means[i][..du], "executed control must be the first planned control");
            let x = model.step(&current[i], &u, dt)?;
            if x.iter().any(|v| !v.is_finite()) {
                log.aborted = Some(format!("agent {i} diverged at step {}", k + 1));
                break 'episode;
            }
            log.controls[i].push(u);
            next.push(x);
        }
        for (i, x) in next.iter().enumerate() {
            log.states[i].push(x.clone());
        }
        current = next;
    }
    if log.aborted.is_some() {
        // Keep every agent's log the same length.
        let steps_done = log.states[0].len() - 1;
        for c in &mut log.controls {
            c.truncate(steps_done);
        }
    }
    Ok(EpisodeOutcome {
        log,
        planning_time,
        final_residuals,
    })
}
