//! Quadratic tracking cost and indicator-style collision penalties.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsModel, Trajectory};

/// Default cost charged per violated constraint per timestep.
pub const DEFAULT_PENALTY: f64 = 1e10;
/// Default robot radius in metres.
pub const DEFAULT_AGENT_RADIUS: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} entries must be finite and non-negative")]
    NegativeWeight { what: &'static str },
    #[error("invalid constraint configuration: {0}")]
    InvalidConstraint(String),
}

/// `(x_T - x_ref)ᵀ Qf (x_T - x_ref) + Σ_t (x_t - x_ref)ᵀ Q (x_t - x_ref) + u_tᵀ R u_t`
/// with diagonal weights. The sum runs over the running stages `t < T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub q: Vec<f64>,
    pub qf: Vec<f64>,
    pub r: Vec<f64>,
    pub x_ref: Vec<f64>,
}

impl QuadraticCost {
    pub fn new(q: Vec<f64>, qf: Vec<f64>, r: Vec<f64>, x_ref: Vec<f64>) -> Result<Self, CostError> {
        let cost = Self { q, qf, r, x_ref };
        for (what, w) in [("Q", &cost.q), ("Qf", &cost.qf), ("R", &cost.r)] {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CostError::NegativeWeight { what });
            }
        }
        let check = |what, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(CostError::DimensionMismatch { what, expected, got })
            }
        };
        check("Qf", cost.qf.len(), cost.q.len())?;
        check("x_ref", cost.x_ref.len(), cost.q.len())?;
        Ok(cost)
    }

    /// All-zero weights around `x_ref`.
    pub fn zero(model: &DynamicsModel, x_ref: Vec<f64>) -> Self {
        Self {
            q: vec![0.0; model.state_dim()],
            qf: vec![0.0; model.state_dim()],
            r: vec![0.0; model.control_dim()],
            x_ref,
        }
    }

    pub fn check_model(&self, model: &DynamicsModel) -> Result<(), CostError> {
        let (dx, du) = (model.state_dim(), model.control_dim());
        for (what, got, expected) in [
            ("Q", self.q.len(), dx),
            ("Qf", self.qf.len(), dx),
            ("x_ref", self.x_ref.len(), dx),
            ("R", self.r.len(), du),
        ] {
            if got != expected {
                return Err(CostError::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }

    /// Multiply every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |w: &Vec<f64>| w.iter().map(|v| v * factor).collect();
        Self {
            q: s(&self.q),
            qf: s(&self.qf),
            r: s(&self.r),
            x_ref: self.x_ref.clone(),
        }
    }

    #[inline]
    fn state_term(weights: &[f64], x: &[f64], x_ref: &[f64]) -> f64 {
        weights
            .iter()
            .zip(x.iter().zip(x_ref))
            .map(|(w, (xi, ri))| {
                let e = xi - ri;
                w * e * e
            })
            .sum()
    }

    #[inline]
    fn control_term(&self, u: &[f64]) -> f64 {
        self.r.iter().zip(u).map(|(w, ui)| w * ui * ui).sum()
    }

    /// Unchecked evaluation where the control for stage `t` comes from `control_at`.
    pub(crate) fn evaluate_with<'a, F>(&self, traj: &Trajectory, control_at: F) -> f64
    where
        F: Fn(usize) -> &'a [f64],
    {
        let stages = traj.len() - 1;
        let mut total = Self::state_term(&self.qf, traj.state(stages), &self.x_ref);
        for t in 0..stages {
            total += Self::state_term(&self.q, traj.state(t), &self.x_ref) + self.control_term(control_at(t));
        }
        total
    }
}

/// Tracking cost of a trajectory and the controls that produced it.
pub fn tracking_cost(cost: &QuadraticCost, traj: &Trajectory, controls: &[f64]) -> Result<f64, CostError> {
    let model = traj.model();
    cost.check_model(model)?;
    let du = model.control_dim();
    let stages = traj.len() - 1;
    if controls.len() != stages * du {
        return Err(CostError::DimensionMismatch {
            what: "control sequence",
            expected: stages * du,
            got: controls.len(),
        });
    }
    Ok(cost.evaluate_with(traj, |t| &controls[t * du..(t + 1) * du]))
}

/// Circular obstacle in the plane; for the quadcopter it is an infinite
/// vertical column through `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub agent_radius: f64,
    pub obstacles: Vec<Obstacle>,
    pub penalty_weight: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            agent_radius: DEFAULT_AGENT_RADIUS,
            obstacles: Vec::new(),
            penalty_weight: DEFAULT_PENALTY,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.agent_radius.is_finite() && self.agent_radius > 0.0) {
            return Err(CostError::InvalidConstraint(format!(
                "agent radius must be positive, got {}",
                self.agent_radius
            )));
        }
        if !(self.penalty_weight.is_finite() && self.penalty_weight > 0.0) {
            return Err(CostError::InvalidConstraint(format!(
                "penalty weight must be positive, got {}",
                self.penalty_weight
            )));
        }
        if let Some(o) = self.obstacles.iter().find(|o| !(o.radius.is_finite() && o.radius > 0.0)) {
            return Err(CostError::InvalidConstraint(format!(
                "obstacle radius must be positive, got {}",
                o.radius
            )));
        }
        Ok(())
    }

    /// Strictly inside the inflated obstacle; touching is feasible.
    #[inline]
    pub fn hits_obstacle(&self, position: &[f64; 3], obstacle: &Obstacle) -> bool {
        let dx = position[0] - obstacle.center[0];
        let dy = position[1] - obstacle.center[1];
        let clearance = obstacle.radius + self.agent_radius;
        dx * dx + dy * dy < clearance * clearance
    }

    /// Strictly closer than two radii.
    #[inline]
    pub fn agents_collide(&self, a: &[f64; 3], b: &[f64; 3]) -> bool {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let min = 2.0 * self.agent_radius;
        d2 < min * min
    }
}

/// Per-constraint, per-timestep violation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ViolationCount {
    pub obstacle: usize,
    pub inter_agent: usize,
}

impl ViolationCount {
    pub fn total(&self) -> usize {
        self.obstacle + self.inter_agent
    }
}

/// Counts violations at states `from..` of `own` against the obstacles and
/// every neighbour trajectory (compared timestep by timestep).
pub fn count_violations(cfg: &ConstraintConfig, own: &Trajectory, neighbors: &[&Trajectory], from: usize) -> ViolationCount {
    let mut count = ViolationCount::default();
    for t in from..own.len() {
        let p = own.position(t);
        count.obstacle += cfg.obstacles.iter().filter(|o| cfg.hits_obstacle(&p, o)).count();
        count.inter_agent += neighbors
            .iter()
            .filter(|n| cfg.agents_collide(&p, &n.position(t)))
            .count();
    }
    count
}

/// `penalty_weight` times the number of violated (timestep, constraint)
/// pairs over every state of `own`. The dynamics constraint never
/// contributes since trajectories come from rollouts.
pub fn constraint_penalty(cfg: &ConstraintConfig, own: &Trajectory, neighbors: &[&Trajectory]) -> f64 {
    debug_assert!(neighbors.iter().all(|n| n.len() == own.len()));
    cfg.penalty_weight * count_violations(cfg, own, neighbors, 0).total() as f64
}

/// Cost used to score one sampled plan: tracking cost, penalties on the
/// states the plan controls (`t ≥ 1`, terminal included), plus `extra`.
pub fn effective_cost(
    cost: &QuadraticCost,
    cfg: &ConstraintConfig,
    traj: &Trajectory,
    controls: &[f64],
    neighbors: &[&Trajectory],
    extra: f64,
) -> Result<f64, CostError> {
    Ok(tracking_cost(cost, traj, controls)? + planning_penalty(cfg, traj, neighbors) + extra)
}

#[inline]
pub(crate) fn planning_penalty(cfg: &ConstraintConfig, own: &Trajectory, neighbors: &[&Trajectory]) -> f64 {
    cfg.penalty_weight * count_violations(cfg, own, neighbors, 1).total() as f64
}
