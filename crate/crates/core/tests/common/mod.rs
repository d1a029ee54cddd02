//! Shared fixtures for integration tests: a convex two-agent consensus toy
//! with an exact least-squares solution, and small random-instance helpers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use swarm_mpc::consensus::{self, AugmentedDecision, ConsensusBuffers, ConsensusConfig, ConsensusState, Neighborhood, Residuals, TeamObjective, TeamProblem};
use swarm_mpc::cost::{tracking_cost, QuadraticCost};
use swarm_mpc::dynamics::{DynamicsModel, Trajectory};
use swarm_mpc::sampler::{stream_rng, SamplerConfig, ShapeFunction, Workers};

/// Scalar integrators with quadratic tracking plus a coupling term
/// `c Σ_t (x_1,t − x_2,t)²`, split evenly between the two agents' local costs.
#[derive(Debug, Clone)]
pub struct CoupledToy {
    pub costs: Vec<QuadraticCost>,
    pub coupling: f64,
}

impl TeamObjective for CoupledToy {
    fn local_cost(&self, agent: usize, own: &Trajectory, own_controls: &[f64], copies: &[&Trajectory], _ids: &[usize]) -> f64 {
        let mut total = tracking_cost(&self.costs[agent], own, own_controls).unwrap();
        for copy in copies {
            for t in 0..own.len() {
                let d = own.state(t)[0] - copy.state(t)[0];
                total += 0.5 * self.coupling * d * d;
            }
        }
        total
    }
}

pub struct ToySetup {
    pub team: TeamProblem<CoupledToy>,
    pub x0: Vec<Vec<f64>>,
    pub q: f64,
    pub qf: f64,
    pub r: f64,
    pub targets: [f64; 2],
}

pub fn toy(horizon: usize, sigma: f64) -> ToySetup {
    let (q, qf, r) = (1.0, 2.0, 0.5);
    let targets = [1.0, -1.0];
    let costs = targets
        .iter()
        .map(|&t| QuadraticCost::new(vec![q], vec![qf], vec![r], vec![t]).unwrap())
        .collect();
    ToySetup {
        team: TeamProblem {
            models: vec![DynamicsModel::Integrator { dim: 1 }; 2],
            sigma: vec![vec![sigma]; 2],
            horizon,
            dt: 1.0,
            objective: CoupledToy { costs, coupling: 1.0 },
        },
        x0: vec![vec![0.0], vec![0.5]],
        q,
        qf,
        r,
        targets,
    }
}

/// Exact minimiser of the joint toy objective, per agent controls.
pub fn toy_oracle(s: &ToySetup) -> Vec<Vec<f64>> {
    let h = s.team.horizon;
    let n = 2 * h;
    // x_{i,t} = x0_i + Σ_{k<t} u_{i,k}; variable index i*h + k.
    let state_row = |i: usize, t: usize| {
        let mut row = DVector::zeros(n);
        for k in 0..t {
            row[i * h + k] = 1.0;
        }
        row
    };
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut grad = DVector::<f64>::zeros(n);
    let c = s.team.objective.coupling;
    for i in 0..2 {
        for t in 0..=h {
            let w = if t == h { s.qf } else { s.q };
            let a = state_row(i, t);
            let offset = s.x0[i][0] - s.targets[i];
            hess += 2.0 * w * &a * a.transpose();
            grad += 2.0 * w * offset * &a;
        }
        for k in 0..h {
            hess[(i * h + k, i * h + k)] += 2.0 * s.r;
        }
    }
    for t in 0..=h {
        let a = state_row(0, t) - state_row(1, t);
        let offset = s.x0[0][0] - s.x0[1][0];
        hess += 2.0 * c * &a * a.transpose();
        grad += 2.0 * c * offset * &a;
    }
    let u = hess.lu().solve(&(-grad)).expect("toy Hessian is positive definite");
    (0..2).map(|i| u.rows(i * h, h).iter().copied().collect()).collect()
}

pub struct ToyRun {
    pub controls: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub residuals: Vec<Residuals>,
}

pub fn toy_sampler(samples: usize, iterations: usize, alpha: f64, seed: u64) -> SamplerConfig {
    SamplerConfig {
        samples,
        alpha,
        iterations,
        seed,
        mppi_control_coupling: false,
    }
}

/// Runs `rounds` ADMM rounds on the toy from zero warm starts.
pub fn run_toy_admm(s: &ToySetup, rounds: usize, shape: &ShapeFunction, cfg: &SamplerConfig, rho: f64, workers: &Workers) -> ToyRun {
    let h = s.team.horizon;
    let nb = Neighborhood::from_out_neighbors(10.0, vec![vec![1], vec![0]]);
    let consensus_cfg = ConsensusConfig { rho, mu: rho, delta: 10.0 };
    let mut state = ConsensusState::initialize(&s.team, nb, &s.x0, &[vec![0.0; h], vec![0.0; h]], &consensus_cfg, None).unwrap();
    let mut rngs = vec![stream_rng(cfg.seed, 0), stream_rng(cfg.seed, 1)];
    let mut residuals = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        residuals.push(consensus::admm_round(&s.team, &s.x0, &mut state, shape, cfg, &mut rngs, workers).unwrap());
    }
    ToyRun {
        controls: state.decisions.iter().map(|d| d.own_mean().to_vec()).collect(),
        states: state.decisions.iter().map(|d| d.states[0].as_flat().to_vec()).collect(),
        residuals,
    }
}

pub fn rollout_scalar(x0: f64, u: &[f64]) -> Vec<f64> {
    let mut x = vec![x0];
    for v in u {
        x.push(x.last().unwrap() + v);
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random neighbourhood, decisions, globals and duals on 1-D integrators
/// with mixed state and control sizes.
pub struct AlgebraInstance {
    pub nb: Neighborhood,
    pub buffers: ConsensusBuffers,
    pub decisions: Vec<AugmentedDecision>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> AlgebraInstance {
    let n = rng.random_range(1..6);
    let horizon = rng.random_range(1..5);
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..4)).collect();
    let models: Vec<DynamicsModel> = dims.iter().map(|&d| DynamicsModel::Integrator { dim: d }).collect();
    let out: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && rng.random_bool(0.5)).collect())
        .collect();
    let nb = Neighborhood::from_out_neighbors(1.0, out);
    let team = TeamProblem {
        models: models.clone(),
        sigma: dims.iter().map(|&d| vec![1.0; d]).collect(),
        horizon,
        dt: 0.1,
        objective: (),
    };
    let rho = rng.random_range(0.1..5.0);
    let mu = rng.random_range(0.1..5.0);
    let mut buffers = ConsensusBuffers::zeros(&team, &nb, rho, mu);
    let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.random_range(-3.0..3.0));
    buffers.y.iter_mut().for_each(&mut fill);
    buffers.z.iter_mut().for_each(&mut fill);
    buffers.lambda.iter_mut().flatten().for_each(&mut fill);
    buffers.xi.iter_mut().flatten().for_each(&mut fill);
    let decisions = (0..n)
        .map(|i| {
            let slots = nb.slots(i);
            let means = slots.iter().map(|&j| (0..horizon * dims[j]).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let states = slots
                .iter()
                .map(|&j| {
                    let s = (0..=horizon).map(|_| (0..dims[j]).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
                    Trajectory::from_states(models[j], 0.1, s).unwrap()
                })
                .collect();
            AugmentedDecision {
                agent: i,
                slots,
                means,
                states,
            }
        })
        .collect();
    AlgebraInstance { nb, buffers, decisions }
}
