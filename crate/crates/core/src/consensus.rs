//! ADMM consensus between agents that plan with copies of their neighbours.
//!
//! Agent `i` optimises an augmented plan: its own controls plus a copy of the
//! controls of every out-neighbour `j ∈ E_i`, always laid out as
//! `[i, E_i ascending]`. Each ADMM round runs
//!
//! 1. a local stochastic search on the augmented Lagrangian of every agent,
//! 2. a global averaging step producing `y_j`, `z_j` from every copy of `j`,
//! 3. a dual ascent step on `λ`, `ξ`.
//!
//! Local solves run in parallel; the global and dual steps read other agents'
//! buffers only after all local solves have finished, always in agent order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, ConstraintConfig, QuadraticCost};
use crate::dynamics::{self, DynamicsModel, Trajectory};
use crate::sampler::{self, ControlDistribution, SamplerConfig, SamplerError, SamplerRng, ShapeFunction, SolveReport, Workers};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("invalid consensus configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} has size {got}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("synchronization error: {0}")]
    Synchronization(String),
    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: SamplerError,
    },
}

/// Distance-threshold neighbourhoods `E_i = { j ≠ i : d(i, j) ≤ δ }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    delta: f64,
    out: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl Neighborhood {
    /// Neighbourhoods from Euclidean distances between `positions`.
    pub fn compute(positions: &[Vec<f64>], delta: f64) -> Result<Self, ConsensusError> {
        if !(delta > 0.0) {
            return Err(ConsensusError::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        let n = positions.len();
        let mut out = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && distance(&positions[i], &positions[j]) <= delta {
                    out[i].push(j);
                }
            }
        }
        Ok(Self::from_out_neighbors(delta, out))
    }

    /// Builds the reverse map for an explicit out-neighbour list.
    pub fn from_out_neighbors(delta: f64, mut out: Vec<Vec<usize>>) -> Self {
        let n = out.len();
        let mut incoming = vec![Vec::new(); n];
        for (i, list) in out.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            list.retain(|&j| j != i && j < n);
            for &j in list.iter() {
                incoming[j].push(i);
            }
        }
        Self { delta, out, incoming }
    }

    /// No edges at all.
    pub fn isolated(agents: usize) -> Self {
        Self::from_out_neighbors(0.0, vec![Vec::new(); agents])
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn agents(&self) -> usize {
        self.out.len()
    }

    /// `E_i`, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// Agents holding a copy of `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.incoming[i]
    }

    /// Augmented slot layout of agent `i`: itself, then `E_i`.
    pub fn slots(&self, i: usize) -> Vec<usize> {
        std::iter::once(i).chain(self.out[i].iter().copied()).collect()
    }

    /// No copies in either direction: consensus on `i` is trivially satisfied.
    pub fn is_isolated(&self, i: usize) -> bool {
        self.out[i].is_empty() && self.incoming[i].is_empty()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-agent cost of a local plan, without consensus terms.
///
/// `copies` are the agent's rolled-out copies of its out-neighbours, in slot
/// order, with `copy_ids[k]` the agent that `copies[k]` stands for.
pub trait TeamObjective: Sync + Send {
    fn local_cost(&self, agent: usize, own: &Trajectory, own_controls: &[f64], copies: &[&Trajectory], copy_ids: &[usize]) -> f64;

    /// Joint cost of a centralised plan: every agent's local cost with all
    /// other agents as neighbours.
    fn joint_cost(&self, trajectories: &[Trajectory], controls: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (i, own) in trajectories.iter().enumerate() {
            let (others, ids): (Vec<&Trajectory>, Vec<usize>) = trajectories
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, t)| (t, j))
                .unzip();
            total += self.local_cost(i, own, &controls[i], &others, &ids);
        }
        total
    }
}

/// Quadratic tracking plus obstacle and inter-agent penalties.
#[derive(Debug, Clone)]
pub struct NavigationObjective {
    pub costs: Vec<QuadraticCost>,
    pub constraints: ConstraintConfig,
}

impl TeamObjective for NavigationObjective {
    fn local_cost(&self, agent: usize, own: &Trajectory, own_controls: &[f64], copies: &[&Trajectory], _copy_ids: &[usize]) -> f64 {
        let du = own.model().control_dim();
        self.costs[agent].evaluate_with(own, |t| &own_controls[t * du..(t + 1) * du])
            + cost::planning_penalty(&self.constraints, own, copies)
    }
}

/// Everything needed to plan for a team over one look-ahead horizon.
#[derive(Debug, Clone)]
pub struct TeamProblem<O> {
    pub models: Vec<DynamicsModel>,
    /// Per-agent sampling standard deviations.
    pub sigma: Vec<Vec<f64>>,
    pub horizon: usize,
    pub dt: f64,
    pub objective: O,
}

impl<O> TeamProblem<O> {
    pub fn agents(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        if self.models.is_empty() {
            return Err(ConsensusError::InvalidConfig("team has no agents".into()));
        }
        if self.sigma.len() != self.models.len() {
            return Err(ConsensusError::ShapeMismatch {
                what: "sigma list",
                expected: self.models.len(),
                got: self.sigma.len(),
            });
        }
        for (m, s) in self.models.iter().zip(&self.sigma) {
            m.validate().map_err(|e| ConsensusError::InvalidConfig(e.to_string()))?;
            if s.len() != m.control_dim() {
                return Err(ConsensusError::ShapeMismatch {
                    what: "sigma",
                    expected: m.control_dim(),
                    got: s.len(),
                });
            }
        }
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(ConsensusError::InvalidConfig("horizon and dt must be positive".into()));
        }
        Ok(())
    }

    fn state_dim(&self, agent: usize) -> usize {
        self.models[agent].state_dim()
    }

    fn control_dim(&self, agent: usize) -> usize {
        self.models[agent].control_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// State penalty `ρ`.
    pub rho: f64,
    /// Control penalty `μ`.
    pub mu: f64,
    /// Neighbourhood radius `δ` in metres.
    pub delta: f64,
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        if !(self.rho > 0.0 && self.mu > 0.0 && self.rho.is_finite() && self.mu.is_finite()) {
            return Err(ConsensusError::InvalidConfig(format!(
                "penalties must be positive, got rho={} mu={}",
                self.rho, self.mu
            )));
        }
        if !(self.delta > 0.0) {
            return Err(ConsensusError::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Global variables `y`, `z` per agent and duals `λ`, `ξ` per augmented slot.
/// All sequences are flat and timestep-major: states span `horizon + 1`
/// steps, controls `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusBuffers {
    pub horizon: usize,
    pub rho: f64,
    pub mu: f64,
    pub slots: Vec<Vec<usize>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<Vec<f64>>>,
    pub xi: Vec<Vec<Vec<f64>>>,
}

impl ConsensusBuffers {
    /// Zero globals and duals for `neighborhood`'s slot layout.
    pub fn zeros<O>(team: &TeamProblem<O>, neighborhood: &Neighborhood, rho: f64, mu: f64) -> Self {
        let n = team.agents();
        let h = team.horizon;
        let slots: Vec<Vec<usize>> = (0..n).map(|i| neighborhood.slots(i)).collect();
        let y = (0..n).map(|i| vec![0.0; (h + 1) * team.state_dim(i)]).collect();
        let z = (0..n).map(|i| vec![0.0; h * team.control_dim(i)]).collect();
        let lambda = slots
            .iter()
            .map(|s| s.iter().map(|&j| vec![0.0; (h + 1) * team.state_dim(j)]).collect())
            .collect();
        let xi = slots
            .iter()
            .map(|s| s.iter().map(|&j| vec![0.0; h * team.control_dim(j)]).collect())
            .collect();
        Self {
            horizon: h,
            rho,
            mu,
            slots,
            y,
            z,
            lambda,
            xi,
        }
    }

    /// Duals of slots that persist from `previous` are carried over, shifted
    /// one step in time; new slots start at zero and dropped slots vanish.
    pub fn carry_duals_from(&mut self, previous: &ConsensusBuffers) {
        for (i, slots) in self.slots.iter().enumerate() {
            let Some(prev_slots) = previous.slots.get(i) else { continue };
            for (s, j) in slots.iter().enumerate() {
                if let Some(ps) = prev_slots.iter().position(|pj| pj == j) {
                    let dx = self.lambda[i][s].len() / (self.horizon + 1);
                    let du = self.xi[i][s].len() / self.horizon;
                    let prev_l = &previous.lambda[i][ps];
                    let prev_x = &previous.xi[i][ps];
                    if prev_l.len() == self.lambda[i][s].len() && prev_x.len() == self.xi[i][s].len() {
                        self.lambda[i][s] = shift_sequence(prev_l, dx);
                        self.xi[i][s] = shift_sequence(prev_x, du);
                    }
                }
            }
        }
    }

    /// Slot index of agent `j` within agent `i`'s layout.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        self.slots[i].iter().position(|&k| k == j)
    }
}

/// Drops the first element of a flat sequence and repeats the last.
pub fn shift_sequence(seq: &[f64], dim: usize) -> Vec<f64> {
    assert!(dim > 0 && !seq.is_empty() && seq.len() % dim == 0, "sequence must hold whole elements");
    let mut out = Vec::with_capacity(seq.len());
    out.extend_from_slice(&seq[dim..]);
    out.extend_from_slice(&seq[seq.len() - dim..]);
    out
}

/// One agent's augmented plan: mean controls and induced rollouts per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDecision {
    pub agent: usize,
    pub slots: Vec<usize>,
    /// Per-slot mean controls, flat `horizon × du`.
    pub means: Vec<Vec<f64>>,
    /// Rollout of each slot mean from that agent's current state.
    pub states: Vec<Trajectory>,
}

impl AugmentedDecision {
    pub fn own_mean(&self) -> &[f64] {
        &self.means[0]
    }

    /// Augmented mean, interleaved as `[t][slot][du]`.
    fn interleaved(&self, dims: &[usize], horizon: usize) -> Vec<f64> {
        let total: usize = dims.iter().sum();
        let mut out = Vec::with_capacity(horizon * total);
        for t in 0..horizon {
            for (mean, &du) in self.means.iter().zip(dims) {
                out.extend_from_slice(&mean[t * du..(t + 1) * du]);
            }
        }
        out
    }
}

/// Column offsets of each slot inside one augmented control vector.
struct SlotLayout {
    agents: Vec<usize>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    width: usize,
}

impl SlotLayout {
    fn new<O>(team: &TeamProblem<O>, slots: &[usize]) -> Self {
        let dims: Vec<usize> = slots.iter().map(|&j| team.control_dim(j)).collect();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut width = 0;
        for d in &dims {
            offsets.push(width);
            width += d;
        }
        Self {
            agents: slots.to_vec(),
            dims,
            offsets,
            width,
        }
    }

    #[inline]
    fn control<'a>(&self, u: &'a [f64], slot: usize, t: usize) -> &'a [f64] {
        let start = t * self.width + self.offsets[slot];
        &u[start..start + self.dims[slot]]
    }

    fn slot_controls(&self, u: &[f64], slot: usize, horizon: usize) -> Vec<f64> {
        (0..horizon).flat_map(|t| self.control(u, slot, t).iter().copied()).collect()
    }

    fn rollouts<O>(&self, team: &TeamProblem<O>, states: &[Vec<f64>], u: &[f64]) -> Option<Vec<Trajectory>> {
        (0..self.agents.len())
            .map(|s| {
                let j = self.agents[s];
                dynamics::rollout_with(&team.models[j], &states[j], team.horizon, team.dt, |t| self.control(u, s, t)).ok()
            })
            .collect()
    }
}

/// Consensus part of agent `i`'s augmented Lagrangian:
///
/// ```text
/// Σ_slots Σ_{t=0..H} λᵀ(x̃ − ỹ) + ρ/2 ‖x̃ − ỹ‖²  +  Σ_slots Σ_{t<H} ξᵀ(ũ − z̃) + μ/2 ‖ũ − z̃‖²
/// ```
///
/// `trajectories[s]` and `controls[s]` belong to slot `s` of agent `i`.
pub fn local_cost_terms(
    agent: usize,
    trajectories: &[&Trajectory],
    controls: &[&[f64]],
    buffers: &ConsensusBuffers,
) -> Result<f64, ConsensusError> {
    let slots = &buffers.slots[agent];
    let check = |what, got: usize, expected: usize| {
        if got == expected {
            Ok(())
        } else {
            Err(ConsensusError::ShapeMismatch { what, expected, got })
        }
    };
    check("trajectory list", trajectories.len(), slots.len())?;
    check("control list", controls.len(), slots.len())?;
    let mut total = 0.0;
    for (s, &j) in slots.iter().enumerate() {
        check("slot trajectory", trajectories[s].as_flat().len(), buffers.y[j].len())?;
        check("slot controls", controls[s].len(), buffers.z[j].len())?;
        total += penalty_term(trajectories[s].as_flat(), &buffers.y[j], &buffers.lambda[agent][s], buffers.rho);
        total += penalty_term(controls[s], &buffers.z[j], &buffers.xi[agent][s], buffers.mu);
    }
    Ok(total)
}

#[inline]
fn penalty_term(local: &[f64], global: &[f64], dual: &[f64], weight: f64) -> f64 {
    let mut linear = 0.0;
    let mut square = 0.0;
    for ((x, y), l) in local.iter().zip(global).zip(dual) {
        let r = x - y;
        linear += l * r;
        square += r * r;
    }
    linear + 0.5 * weight * square
}

/// Initial augmented decisions for one planning step: every slot starts from
/// that agent's warm-start mean and is rolled out from its current state.
pub fn initial_decisions<O>(
    team: &TeamProblem<O>,
    neighborhood: &Neighborhood,
    states: &[Vec<f64>],
    warm_starts: &[Vec<f64>],
) -> Result<Vec<AugmentedDecision>, ConsensusError> {
    (0..team.agents())
        .map(|i| {
            let slots = neighborhood.slots(i);
            let means: Vec<Vec<f64>> = slots.iter().map(|&j| warm_starts[j].clone()).collect();
            let trajs = slots
                .iter()
                .zip(&means)
                .map(|(&j, m)| {
                    dynamics::rollout(&team.models[j], &states[j], m, team.dt)
                        .map_err(|e| ConsensusError::InvalidConfig(format!("warm start of agent {j}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AugmentedDecision {
                agent: i,
                slots,
                means,
                states: trajs,
            })
        })
        .collect()
}

/// Buffers for a fresh planning step: globals at each agent's own warm start,
/// duals carried from `carried` where the slot persists.
pub fn initial_buffers<O>(
    team: &TeamProblem<O>,
    neighborhood: &Neighborhood,
    decisions: &[AugmentedDecision],
    cfg: &ConsensusConfig,
    carried: Option<&ConsensusBuffers>,
) -> ConsensusBuffers {
    let mut buffers = ConsensusBuffers::zeros(team, neighborhood, cfg.rho, cfg.mu);
    for (i, d) in decisions.iter().enumerate() {
        buffers.y[i] = d.states[0].as_flat().to_vec();
        buffers.z[i] = d.means[0].clone();
    }
    if let Some(prev) = carried {
        buffers.carry_duals_from(prev);
    }
    buffers
}

/// Local stochastic-search update of agent `agent`, warm-started from
/// `previous`. Isolated agents are scored without consensus terms, which
/// makes them identical to a single-agent solve.
#[allow(clippy::too_many_arguments)]
pub fn local_solve<O: TeamObjective>(
    agent: usize,
    team: &TeamProblem<O>,
    states: &[Vec<f64>],
    neighborhood: &Neighborhood,
    buffers: &ConsensusBuffers,
    previous: &AugmentedDecision,
    shape: &ShapeFunction,
    cfg: &SamplerConfig,
    rng: &mut SamplerRng,
    workers: &Workers,
) -> Result<(AugmentedDecision, SolveReport), ConsensusError> {
    let slots = &buffers.slots[agent];
    if previous.slots != *slots {
        return Err(ConsensusError::Synchronization(format!(
            "agent {agent} decision slots {:?} do not match buffer slots {slots:?}",
            previous.slots
        )));
    }
    let layout = SlotLayout::new(team, slots);
    let h = team.horizon;
    let std: Vec<f64> = slots.iter().flat_map(|&j| team.sigma[j].iter().copied()).collect();
    let dist = ControlDistribution::new(previous.interleaved(&layout.dims, h), std).map_err(|source| ConsensusError::Agent { agent, source })?;
    let with_consensus = !neighborhood.is_isolated(agent);

    let objective = |u: &[f64]| -> f64 {
        let Some(trajs) = layout.rollouts(team, states, u) else {
            return f64::INFINITY;
        };
        let own_controls = layout.slot_controls(u, 0, h);
        let copies: Vec<&Trajectory> = trajs[1..].iter().collect();
        let mut total = team.objective.local_cost(agent, &trajs[0], &own_controls, &copies, &slots[1..]);
        if with_consensus {
            for (s, &j) in slots.iter().enumerate() {
                total += penalty_term(trajs[s].as_flat(), &buffers.y[j], &buffers.lambda[agent][s], buffers.rho);
                let du = layout.dims[s];
                for t in 0..h {
                    let range = t * du..(t + 1) * du;
                    total += penalty_term(
                        layout.control(u, s, t),
                        &buffers.z[j][range.clone()],
                        &buffers.xi[agent][s][range],
                        buffers.mu,
                    );
                }
            }
        }
        total
    };
    let (dist, report) = sampler::optimize(&dist, shape, cfg, std::slice::from_mut(rng), workers, objective)
        .map_err(|source| ConsensusError::Agent { agent, source })?;

    let means: Vec<Vec<f64>> = (0..slots.len()).map(|s| layout.slot_controls(dist.mean(), s, h)).collect();
    let trajs = slots
        .iter()
        .zip(&means)
        .map(|(&j, m)| dynamics::rollout(&team.models[j], &states[j], m, team.dt))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConsensusError::Agent {
            agent,
            source: SamplerError::InvalidConfig(format!("mean rollout failed: {e}")),
        })?;
    Ok((
        AugmentedDecision {
            agent,
            slots: slots.clone(),
            means,
            states: trajs,
        },
        report,
    ))
}

fn check_decisions(buffers: &ConsensusBuffers, decisions: &[AugmentedDecision]) -> Result<(), ConsensusError> {
    if decisions.len() != buffers.slots.len() {
        return Err(ConsensusError::Synchronization(format!(
            "expected decisions from {} agents, got {}",
            buffers.slots.len(),
            decisions.len()
        )));
    }
    for (i, d) in decisions.iter().enumerate() {
        if d.agent != i || d.slots != buffers.slots[i] {
            return Err(ConsensusError::Synchronization(format!(
                "decision {i} belongs to agent {} with slots {:?}, expected slots {:?}",
                d.agent, d.slots, buffers.slots[i]
            )));
        }
    }
    Ok(())
}

/// Averages every holder's copy of each agent plus that holder's scaled dual:
/// `y_i = 1/(|holders|) Σ_h (x_i^h + λ_i^h / ρ)`, likewise `z_i` with `ξ/μ`.
/// Holders are agent `i` itself and every in-neighbour, visited in index order.
pub fn global_update(buffers: &mut ConsensusBuffers, decisions: &[AugmentedDecision], neighborhood: &Neighborhood) -> Result<(), ConsensusError> {
    check_decisions(buffers, decisions)?;
    for i in 0..buffers.slots.len() {
        let mut holders: Vec<usize> = neighborhood.in_neighbors(i).to_vec();
        holders.push(i);
        holders.sort_unstable();
        let mut y = vec![0.0; buffers.y[i].len()];
        let mut z = vec![0.0; buffers.z[i].len()];
        for &h in &holders {
            let s = buffers.slot_of(h, i).ok_or_else(|| {
                ConsensusError::Synchronization(format!("agent {h} holds no copy of agent {i}"))
            })?;
            let x = decisions[h].states[s].as_flat();
            let u = &decisions[h].means[s];
            if x.len() != y.len() || u.len() != z.len() {
                return Err(ConsensusError::ShapeMismatch {
                    what: "copy",
                    expected: y.len(),
                    got: x.len(),
                });
            }
            for ((acc, xv), l) in y.iter_mut().zip(x).zip(&buffers.lambda[h][s]) {
                *acc += xv + l / buffers.rho;
            }
            for ((acc, uv), l) in z.iter_mut().zip(u).zip(&buffers.xi[h][s]) {
                *acc += uv + l / buffers.mu;
            }
        }
        let count = holders.len() as f64;
        y.iter_mut().for_each(|v| *v /= count);
        z.iter_mut().for_each(|v| *v /= count);
        buffers.y[i] = y;
        buffers.z[i] = z;
    }
    Ok(())
}

/// `λ ← λ + ρ (x̃ − ỹ)`, `ξ ← ξ + μ (ũ − z̃)` for every slot.
pub fn dual_update(buffers: &mut ConsensusBuffers, decisions: &[AugmentedDecision]) -> Result<(), ConsensusError> {
    check_decisions(buffers, decisions)?;
    for (i, d) in decisions.iter().enumerate() {
        for (s, &j) in buffers.slots[i].iter().enumerate() {
            let x = d.states[s].as_flat();
            for ((l, xv), yv) in buffers.lambda[i][s].iter_mut().zip(x).zip(&buffers.y[j]) {
                *l += buffers.rho * (xv - yv);
            }
            for ((l, uv), zv) in buffers.xi[i][s].iter_mut().zip(&d.means[s]).zip(&buffers.z[j]) {
                *l += buffers.mu * (uv - zv);
            }
        }
    }
    Ok(())
}

/// Largest consensus violations, `max ‖x̃ − ỹ‖∞` and `max ‖ũ − z̃‖∞`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub state: f64,
    pub control: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.state.max(self.control)
    }
}

pub fn primal_residuals(buffers: &ConsensusBuffers, decisions: &[AugmentedDecision]) -> Residuals {
    let mut r = Residuals::default();
    for (i, d) in decisions.iter().enumerate() {
        for (s, &j) in buffers.slots[i].iter().enumerate() {
            for (x, y) in d.states[s].as_flat().iter().zip(&buffers.y[j]) {
                r.state = r.state.max((x - y).abs());
            }
            for (u, z) in d.means[s].iter().zip(&buffers.z[j]) {
                r.control = r.control.max((u - z).abs());
            }
        }
    }
    r
}

/// Mutable consensus state of one planning step.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    pub neighborhood: Neighborhood,
    pub buffers: ConsensusBuffers,
    pub decisions: Vec<AugmentedDecision>,
    /// Isolated agents are solved once per planning step.
    solved: Vec<bool>,
}

impl ConsensusState {
    pub fn new(neighborhood: Neighborhood, buffers: ConsensusBuffers, decisions: Vec<AugmentedDecision>) -> Self {
        let solved = vec![false; decisions.len()];
        Self {
            neighborhood,
            buffers,
            decisions,
            solved,
        }
    }

    /// Fresh state for a planning step from current states and warm starts.
    pub fn initialize<O>(
        team: &TeamProblem<O>,
        neighborhood: Neighborhood,
        states: &[Vec<f64>],
        warm_starts: &[Vec<f64>],
        cfg: &ConsensusConfig,
        carried: Option<&ConsensusBuffers>,
    ) -> Result<Self, ConsensusError> {
        let decisions = initial_decisions(team, &neighborhood, states, warm_starts)?;
        let buffers = initial_buffers(team, &neighborhood, &decisions, cfg, carried);
        Ok(Self::new(neighborhood, buffers, decisions))
    }
}

/// One full ADMM round: parallel local solves, then global and dual updates.
/// Returns the primal residuals after the global update.
pub fn admm_round<O: TeamObjective>(
    team: &TeamProblem<O>,
    states: &[Vec<f64>],
    state: &mut ConsensusState,
    shape: &ShapeFunction,
    cfg: &SamplerConfig,
    rngs: &mut [SamplerRng],
    workers: &Workers,
) -> Result<Residuals, ConsensusError> {
    let n = team.agents();
    if rngs.len() != n || states.len() != n || state.decisions.len() != n {
        return Err(ConsensusError::Synchronization(format!(
            "round needs {n} agents' streams, states and decisions; got {}, {}, {}",
            rngs.len(),
            states.len(),
            state.decisions.len()
        )));
    }
    let ConsensusState {
        neighborhood,
        buffers,
        decisions,
        solved,
    } = state;
    let results: Vec<Result<Option<AugmentedDecision>, ConsensusError>> = workers.install(|| {
        rngs.par_iter_mut()
            .zip(decisions.par_iter())
            .zip(solved.par_iter())
            .enumerate()
            .map(|(i, ((rng, prev), &done))| {
                if done && neighborhood.is_isolated(i) {
                    return Ok(None);
                }
                local_solve(i, team, states, neighborhood, buffers, prev, shape, cfg, rng, workers).map(|(d, _)| Some(d))
            })
            .collect()
    });
    for (i, r) in results.into_iter().enumerate() {
        if let Some(d) = r? {
            decisions[i] = d;
        }
        solved[i] = true;
    }
    global_update(buffers, decisions, neighborhood)?;
    let residuals = primal_residuals(buffers, decisions);
    dual_update(buffers, decisions)?;
    Ok(residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::stream_rng;

    fn integrator_team(agents: usize, horizon: usize) -> TeamProblem<NavigationObjective> {
        let model = DynamicsModel::Integrator { dim: 1 };
        TeamProblem {
            models: vec![model; agents],
            sigma: vec![vec![1.0]; agents],
            horizon,
            dt: 0.1,
            objective: NavigationObjective {
                costs: (0..agents)
                    .map(|_| QuadraticCost::new(vec![1.0], vec![1.0], vec![0.1], vec![1.0]).unwrap())
                    .collect(),
                constraints: ConstraintConfig::default(),
            },
        }
    }

    fn decision(agent: usize, slots: Vec<usize>, states: Vec<Vec<f64>>, controls: Vec<Vec<f64>>) -> AugmentedDecision {
        let model = DynamicsModel::Integrator { dim: 1 };
        AugmentedDecision {
            agent,
            slots,
            means: controls,
            states: states
                .into_iter()
                .map(|s| Trajectory::from_states(model, 0.1, s.into_iter().map(|v| vec![v]).collect()).unwrap())
                .collect(),
        }
    }

    #[test]
    fn neighborhood_threshold() {
        let pos = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]];
        let nb = Neighborhood::compute(&pos, 2.0).unwrap();
        assert_eq!(nb.out_neighbors(0), &[1]);
        assert_eq!(nb.out_neighbors(2), &[1]);
        assert_eq!(nb.in_neighbors(1), &[0, 2]);
        assert_eq!(nb.slots(1), vec![1, 0, 2]);
        let full = Neighborhood::compute(&pos, 100.0).unwrap();
        for i in 0..3 {
            assert_eq!(full.out_neighbors(i).len(), 2);
            assert!(!full.out_neighbors(i).contains(&i));
        }
        assert!(Neighborhood::compute(&pos, 0.0).is_err());
    }

    #[test]
    fn lagrangian_terms_hand_values() {
        let team = integrator_team(1, 1);
        let nb = Neighborhood::isolated(1);
        let mut buf = ConsensusBuffers::zeros(&team, &nb, 4.0, 1.0);
        let traj = Trajectory::from_states(team.models[0], 0.1, vec![vec![0.0], vec![1.0]]).unwrap();
        let u = [0.0];
        assert_eq!(local_cost_terms(0, &[&traj], &[&u], &buf).unwrap(), 0.0 + 0.5 * 4.0);
        buf.y[0] = vec![0.0, 1.0];
        assert_eq!(local_cost_terms(0, &[&traj], &[&u], &buf).unwrap(), 0.0);
        buf.y[0] = vec![0.0, 0.0];
        buf.lambda[0][0] = vec![0.0, 2.0];
        assert_eq!(local_cost_terms(0, &[&traj], &[&u], &buf).unwrap(), 4.0);
        buf.rho = 8.0;
        assert_eq!(local_cost_terms(0, &[&traj], &[&u], &buf).unwrap(), 6.0);
        assert!(local_cost_terms(0, &[], &[&u], &buf).is_err());
    }

    #[test]
    fn global_update_single_holder_and_average() {
        let team = integrator_team(2, 1);
        let nb = Neighborhood::isolated(2);
        let mut buf = ConsensusBuffers::zeros(&team, &nb, 0.2, 0.2);
        buf.lambda[0][0] = vec![0.2, 0.2];
        let ds = vec![
            decision(0, vec![0], vec![vec![1.0, 1.0]], vec![vec![0.0]]),
            decision(1, vec![1], vec![vec![1.0, 1.0]], vec![vec![0.0]]),
        ];
        global_update(&mut buf, &ds, &nb).unwrap();
        assert!((buf.y[0][1] - 2.0).abs() < 1e-15);
        assert_eq!(buf.y[1], vec![1.0, 1.0]);

        let nb = Neighborhood::from_out_neighbors(1.0, vec![vec![1], vec![]]);
        let mut buf = ConsensusBuffers::zeros(&team, &nb, 0.2, 0.2);
        let ds = vec![
            decision(0, vec![0, 1], vec![vec![0.0, 0.0], vec![3.0, 3.0]], vec![vec![0.0], vec![0.0]]),
            decision(1, vec![1], vec![vec![1.0, 1.0]], vec![vec![0.0]]),
        ];
        global_update(&mut buf, &ds, &nb).unwrap();
        assert_eq!(buf.y[1], vec![2.0, 2.0]);
    }

    #[test]
    fn missing_decision_is_a_synchronization_error() {
        let team = integrator_team(2, 1);
        let nb = Neighborhood::isolated(2);
        let mut buf = ConsensusBuffers::zeros(&team, &nb, 1.0, 1.0);
        let ds = vec![decision(0, vec![0], vec![vec![1.0, 1.0]], vec![vec![0.0]])];
        assert!(matches!(global_update(&mut buf, &ds, &nb), Err(ConsensusError::Synchronization(_))));
        assert!(matches!(dual_update(&mut buf, &ds), Err(ConsensusError::Synchronization(_))));
    }

    #[test]
    fn dual_update_hand_value() {
        let team = integrator_team(1, 1);
        let nb = Neighborhood::isolated(1);
        let mut buf = ConsensusBuffers::zeros(&team, &nb, 2.0, 1.0);
        let ds = vec![decision(0, vec![0], vec![vec![0.0, 0.5]], vec![vec![0.0]])];
        dual_update(&mut buf, &ds).unwrap();
        assert_eq!(buf.lambda[0][0], vec![0.0, 1.0]);
        dual_update(&mut buf, &ds).unwrap();
        assert_eq!(buf.lambda[0][0], vec![0.0, 2.0]);
        buf.y[0] = vec![0.0, 0.5];
        dual_update(&mut buf, &ds).unwrap();
        assert_eq!(buf.lambda[0][0], vec![0.0, 2.0]);
    }

    #[test]
    fn shift_sequence_drops_first() {
        assert_eq!(shift_sequence(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2), vec![3.0, 4.0, 5.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn carried_duals_follow_slots() {
        let team = integrator_team(3, 2);
        let before = Neighborhood::from_out_neighbors(1.0, vec![vec![1, 2], vec![], vec![]]);
        let mut prev = ConsensusBuffers::zeros(&team, &before, 1.0, 1.0);
        prev.lambda[0][2] = vec![1.0, 2.0, 3.0];
        prev.xi[0][2] = vec![4.0, 5.0];
        prev.lambda[0][1] = vec![9.0; 3];
        let after = Neighborhood::from_out_neighbors(1.0, vec![vec![2], vec![0], vec![]]);
        let mut next = ConsensusBuffers::zeros(&team, &after, 1.0, 1.0);
        next.carry_duals_from(&prev);
        assert_eq!(next.lambda[0][1], vec![2.0, 3.0, 3.0]);
        assert_eq!(next.xi[0][1], vec![5.0, 5.0]);
        assert_eq!(next.lambda[1][1], vec![0.0; 3]);
    }

    #[test]
    fn isolated_local_solve_matches_single_agent_solve() {
        let team = integrator_team(1, 5);
        let nb = Neighborhood::isolated(1);
        let states = vec![vec![0.0]];
        let warm = vec![vec![0.0; 5]];
        let cfg = ConsensusConfig { rho: 1.0, mu: 1.0, delta: 1.0 };
        let st = ConsensusState::initialize(&team, nb.clone(), &states, &warm, &cfg, None).unwrap();
        let scfg = SamplerConfig {
            samples: 64,
            iterations: 3,
            ..SamplerConfig::default()
        };
        let shape = ShapeFunction::tsallis();
        let workers = Workers::default();
        let mut rng = stream_rng(11, 0);
        let (d, _) = local_solve(0, &team, &states, &nb, &st.buffers, &st.decisions[0], &shape, &scfg, &mut rng, &workers).unwrap();

        let problem = sampler::SingleAgentProblem {
            model: team.models[0],
            cost: team.objective.costs[0].clone(),
            constraints: ConstraintConfig::default(),
            x0: vec![0.0],
            dt: team.dt,
        };
        let dist0 = ControlDistribution::zeros(5, vec![1.0]).unwrap();
        let mut rng = stream_rng(11, 0);
        let (dist, _) = sampler::solve(&problem, &dist0, &shape, &scfg, &mut rng, &workers, |_, _| 0.0).unwrap();
        assert_eq!(d.own_mean(), dist.mean());
    }

    #[test]
    fn single_agent_round_has_zero_residual() {
        let team = integrator_team(1, 4);
        let nb = Neighborhood::isolated(1);
        let states = vec![vec![0.0]];
        let cfg = ConsensusConfig { rho: 1.0, mu: 1.0, delta: 1.0 };
        let mut st = ConsensusState::initialize(&team, nb, &states, &[vec![0.0; 4]], &cfg, None).unwrap();
        let scfg = SamplerConfig {
            samples: 32,
            ..SamplerConfig::default()
        };
        let mut rngs = vec![stream_rng(3, 0)];
        let r = admm_round(&team, &states, &mut st, &ShapeFunction::mppi(), &scfg, &mut rngs, &Workers::default()).unwrap();
        assert_eq!(r.max(), 0.0);
        assert_eq!(st.buffers.y[0], st.decisions[0].states[0].as_flat());
        assert!(st.buffers.lambda[0][0].iter().all(|&l| l == 0.0));
    }
}
