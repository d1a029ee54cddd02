//! Agent dynamics models and deterministic rollout.
//!
//! Every model is integrated with explicit Euler, `x' = x + dt * f(x, u)`.
//! States and controls are plain `f64` slices whose length is fixed by the
//! model; control sequences are stored flat, timestep-major.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{what} has dimension {got}, model expects {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("control sequence is empty")]
    EmptyControls,
    #[error("rollout diverged at timestep {timestep}")]
    Diverged { timestep: usize },
}

/// Physical constants of the quadcopter model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadcopterParams {
    /// kg
    pub mass: f64,
    /// m/s², acting along -z
    pub gravity: f64,
    /// Principal moments of inertia, kg·m².
    pub inertia: [f64; 3],
}

impl Default for QuadcopterParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.81,
            inertia: [1.0, 1.0, 1.0],
        }
    }
}

impl QuadcopterParams {
    /// Thrust that exactly cancels gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Continuous-time agent dynamics.
///
/// | kind        | state                                   | control                    |
/// |-------------|-----------------------------------------|----------------------------|
/// | unicycle    | x, y, θ                                 | v, ω                       |
/// | Dubins      | x, y, θ, v                              | ω, a                       |
/// | quadcopter  | pos ×3, vel ×3, φ θ ψ, φ̇ θ̇ ψ̇            | thrust, a_φ, a_θ, a_ψ      |
/// | integrator  | x ∈ Rⁿ                                  | ẋ ∈ Rⁿ                     |
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsModel {
    Unicycle,
    Dubins,
    Quadcopter(QuadcopterParams),
    /// Single integrator `ẋ = u`; used for linear toy problems.
    Integrator { dim: usize },
}

impl DynamicsModel {
    pub fn quadcopter() -> Self {
        Self::Quadcopter(QuadcopterParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Unicycle => "unicycle",
            Self::Dubins => "dubins",
            Self::Quadcopter(_) => "quadcopter",
            Self::Integrator { .. } => "integrator",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Unicycle => 3,
            Self::Dubins => 4,
            Self::Quadcopter(_) => 12,
            Self::Integrator { dim } => *dim,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Self::Unicycle | Self::Dubins => 2,
            Self::Quadcopter(_) => 4,
            Self::Integrator { dim } => *dim,
        }
    }

    /// Number of leading state entries that form the agent's position.
    pub fn position_dims(&self) -> usize {
        match self {
            Self::Unicycle | Self::Dubins => 2,
            Self::Quadcopter(_) => 3,
            Self::Integrator { dim } => (*dim).min(3),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Self::Quadcopter(p) => {
                let positive = |v: f64| v.is_finite() && v > 0.0;
                if !positive(p.mass) {
                    return Err(DynamicsError::InvalidParameter(format!(
                        "quadcopter mass must be positive, got {}",
                        p.mass
                    )));
                }
                if !positive(p.gravity) {
                    return Err(DynamicsError::InvalidParameter(format!(
                        "quadcopter gravity must be positive, got {}",
                        p.gravity
                    )));
                }
                if !p.inertia.iter().copied().all(positive) {
                    return Err(DynamicsError::InvalidParameter(format!(
                        "quadcopter inertia entries must be positive, got {:?}",
                        p.inertia
                    )));
                }
                Ok(())
            }
            Self::Integrator { dim: 0 } => Err(DynamicsError::InvalidParameter(
                "integrator dimension must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<(), DynamicsError> {
        if x.len() != self.state_dim() {
            return Err(DynamicsError::DimensionMismatch {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        if u.len() != self.control_dim() {
            return Err(DynamicsError::DimensionMismatch {
                what: "control",
                expected: self.control_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Time derivative `dx/dt` at `(x, u)`.
    pub fn derivative(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        self.check_dims(x, u)?;
        let mut out = vec![0.0; x.len()];
        self.derivative_into(x, u, &mut out);
        Ok(out)
    }

    /// Unchecked derivative; slices must already have the model's dimensions.
    pub(crate) fn derivative_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim());
        debug_assert_eq!(u.len(), self.control_dim());
        match self {
            Self::Unicycle => {
                let (v, omega) = (u[0], u[1]);
                out[0] = v * x[2].cos();
                out[1] = v * x[2].sin();
                out[2] = omega;
            }
            Self::Dubins => {
                let (omega, accel) = (u[0], u[1]);
                let v = x[3];
                out[0] = v * x[2].cos();
                out[1] = v * x[2].sin();
                out[2] = omega;
                out[3] = accel;
            }
            Self::Quadcopter(p) => quadcopter_derivative(p, x, u, out),
            Self::Integrator { .. } => out.copy_from_slice(u),
        }
    }

    /// One explicit-Euler step.
    pub fn step(&self, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError> {
        self.check_dims(x, u)?;
        check_dt(dt)?;
        let mut deriv = vec![0.0; x.len()];
        let mut next = vec![0.0; x.len()];
        self.step_into(x, u, dt, &mut deriv, &mut next);
        Ok(next)
    }

    #[inline]
    pub(crate) fn step_into(&self, x: &[f64], u: &[f64], dt: f64, deriv: &mut [f64], next: &mut [f64]) {
        self.derivative_into(x, u, deriv);
        for ((n, &xi), &di) in next.iter_mut().zip(x).zip(deriv.iter()) {
            *n = xi + dt * di;
        }
    }
}

/// Euler-angle rigid body, ZYX convention. Thrust acts along the body z axis;
/// the remaining controls are Euler-angle accelerations, with gyroscopic
/// coupling that vanishes for equal principal inertias.
fn quadcopter_derivative(p: &QuadcopterParams, x: &[f64], u: &[f64], out: &mut [f64]) {
    let (phi, theta, psi) = (x[6], x[7], x[8]);
    let (phi_dot, theta_dot, psi_dot) = (x[9], x[10], x[11]);
    let [ix, iy, iz] = p.inertia;
    let (sphi, cphi) = phi.sin_cos();
    let (stheta, ctheta) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    let thrust_acc = u[0] / p.mass;

    out[0] = x[3];
    out[1] = x[4];
    out[2] = x[5];
    out[3] = thrust_acc * (cphi * stheta * cpsi + sphi * spsi);
    out[4] = thrust_acc * (cphi * stheta * spsi - sphi * cpsi);
    out[5] = thrust_acc * (cphi * ctheta) - p.gravity;
    out[6] = phi_dot;
    out[7] = theta_dot;
    out[8] = psi_dot;
    out[9] = (iy - iz) / ix * theta_dot * psi_dot + u[1];
    out[10] = (iz - ix) / iy * phi_dot * psi_dot + u[2];
    out[11] = (ix - iy) / iz * phi_dot * theta_dot + u[3];
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidTimeStep(dt))
    }
}

/// A rolled-out state sequence `x_0 .. x_H`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model: DynamicsModel,
    dt: f64,
    states: Vec<f64>,
}

impl Trajectory {
    /// Wraps externally produced states (e.g. a logged episode). The states
    /// are not re-checked against the dynamics.
    pub fn from_states(model: DynamicsModel, dt: f64, states: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        if states.is_empty() {
            return Err(DynamicsError::EmptyControls);
        }
        let dim = model.state_dim();
        let mut flat = Vec::with_capacity(states.len() * dim);
        for s in &states {
            if s.len() != dim {
                return Err(DynamicsError::DimensionMismatch {
                    what: "state",
                    expected: dim,
                    got: s.len(),
                });
            }
            flat.extend_from_slice(s);
        }
        Ok(Self { model, dt, states: flat })
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of states (horizon + 1).
    pub fn len(&self) -> usize {
        self.states.len() / self.model.state_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        let d = self.model.state_dim();
        &self.states[t * d..(t + 1) * d]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.model.state_dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.states
    }

    /// Position of state `t`, zero-padded to three coordinates.
    pub fn position(&self, t: usize) -> [f64; 3] {
        let s = self.state(t);
        let mut p = [0.0; 3];
        let n = self.model.position_dims();
        p[..n].copy_from_slice(&s[..n]);
        p
    }
}

/// Rolls `controls` (flat, `H × control_dim`) forward from `x0`.
pub fn rollout(model: &DynamicsModel, x0: &[f64], controls: &[f64], dt: f64) -> Result<Trajectory, DynamicsError> {
    let du = model.control_dim();
    if controls.is_empty() {
        return Err(DynamicsError::EmptyControls);
    }
    if controls.len() % du != 0 {
        return Err(DynamicsError::DimensionMismatch {
            what: "control sequence",
            expected: du,
            got: controls.len() % du,
        });
    }
    model.check_dims(x0, &controls[..du])?;
    check_dt(dt)?;
    rollout_with(model, x0, controls.len() / du, dt, |t| &controls[t * du..(t + 1) * du])
}

/// Rollout where the control for step `t` is produced by `control_at`.
/// Dimensions are trusted; only divergence is reported.
pub(crate) fn rollout_with<'a, F>(
    model: &DynamicsModel,
    x0: &[f64],
    horizon: usize,
    dt: f64,
    control_at: F,
) -> Result<Trajectory, DynamicsError>
where
    F: Fn(usize) -> &'a [f64],
{
    let dx = model.state_dim();
    let mut states = vec![0.0; (horizon + 1) * dx];
    states[..dx].copy_from_slice(x0);
    let mut deriv = vec![0.0; dx];
    for t in 0..horizon {
        let (done, rest) = states.split_at_mut((t + 1) * dx);
        let x = &done[t * dx..];
        let next = &mut rest[..dx];
        model.step_into(x, control_at(t), dt, &mut deriv, next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Diverged { timestep: t + 1 });
        }
    }
    Ok(Trajectory {
        model: *model,
        dt,
        states,
    })
}
