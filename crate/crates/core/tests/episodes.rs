//! End-to-end episodes on small scenarios: log contracts, determinism and
//! metric recomputation.

use swarm_mpc::bench::{self, Scenario};
use swarm_mpc::cost;
use swarm_mpc::dynamics::{DynamicsModel, Trajectory};
use swarm_mpc::sampler::Workers;

fn smoke() -> Scenario {
    bench::builtin("unicycle-swap-2-smoke").unwrap()
}

#[test]
fn log_holds_every_state_and_control() {
    let s = smoke();
    let run = bench::run_scenario(&s, &Workers::new(2).unwrap()).unwrap();
    assert_eq!(run.log.agents(), s.agents.len());
    for i in 0..s.agents.len() {
        assert_eq!(run.log.states[i].len(), s.horizons.steps + 1);
        assert_eq!(run.log.controls[i].len(), s.horizons.steps);
        assert_eq!(run.log.states[i][0], s.agents[i].init);
    }
}

#[test]
fn logged_states_follow_the_logged_controls() {
    let s = smoke();
    let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    let model = s.dynamics();
    for i in 0..s.agents.len() {
        for t in 0..s.horizons.steps {
            let next = model.step(&run.log.states[i][t], &run.log.controls[i][t], s.horizons.dt).unwrap();
            assert_eq!(next, run.log.states[i][t + 1]);
        }
    }
}

#[test]
fn reruns_are_identical_and_seeds_matter() {
    let mut s = smoke();
    let a = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    let b = bench::run_scenario(&s, &Workers::new(3).unwrap()).unwrap();
    assert_eq!(a.log, b.log);
    s.seed += 1;
    let c = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn collision_metrics_agree_with_the_planning_penalty_counts() {
    let mut s = smoke();
    s.agent_radius = 0.3;
    s.obstacles.push(swarm_mpc::cost::Obstacle { center: [0.0, 0.0], radius: 0.2 });
    let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    let model = s.dynamics();
    let trajs: Vec<Trajectory> = (0..s.agents.len()).map(|i| run.log.trajectory(model, i).unwrap()).collect();
    let cfg = s.constraints();
    let (mut inter_views, mut obstacle) = (0, 0);
    for (i, own) in trajs.iter().enumerate() {
        let others: Vec<&Trajectory> = trajs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t).collect();
        let v = cost::count_violations(&cfg, own, &others, 0);
        inter_views += v.inter_agent;
        obstacle += v.obstacle;
    }
    let (inter, obst) = bench::count_collisions(&run.log, &s);
    assert_eq!(inter_views, 2 * inter);
    assert_eq!(obstacle, obst);
    assert_eq!((run.metrics.inter_agent_collisions, run.metrics.obstacle_collisions), (inter, obst));
}

#[test]
fn trajectory_cost_matches_an_explicit_sum() {
    let s = smoke();
    let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    let mut expect = 0.0;
    for (i, agent) in s.agents.iter().enumerate() {
        let states = &run.log.states[i];
        let weighted = |w: &[f64], x: &[f64]| -> f64 { (0..w.len()).map(|k| w[k] * (x[k] - agent.target[k]).powi(2)).sum() };
        for t in 0..s.horizons.steps {
            expect += weighted(&s.cost.q, &states[t]);
            expect += (0..s.cost.r.len()).map(|k| s.cost.r[k] * run.log.controls[i][t][k].powi(2)).sum::<f64>();
        }
        expect += weighted(&s.cost.qf, &states[s.horizons.steps]);
    }
    assert!((run.metrics.trajectory_cost - expect).abs() <= 1e-9 * expect.max(1.0));
}

#[test]
fn agent_starting_on_its_target_completes() {
    let mut s = smoke();
    s.agents.truncate(1);
    s.agents[0].target = s.agents[0].init.clone();
    s.horizons.steps = 180;
    s.sampler.m_sample = 256;
    let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    assert_eq!(run.metrics.completion_rate, 1.0);
    assert_eq!((run.metrics.inter_agent_collisions, run.metrics.obstacle_collisions), (0, 0));
}

#[test]
fn trajectory_log_lines_round_trip() {
    let s = smoke();
    let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
    let mut out = Vec::new();
    bench::write_trajectory_log(&mut out, &run.log, &s, &run.metrics).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let n = s.agents.len();
    assert_eq!(lines.len(), n * (s.horizons.steps + 1) + 1);
    for rec in &lines[..lines.len() - 1] {
        let (k, i) = (rec["step"].as_u64().unwrap() as usize, rec["agent"].as_u64().unwrap() as usize);
        let state: Vec<f64> = serde_json::from_value(rec["state"].clone()).unwrap();
        assert_eq!(state, run.log.states[i][k]);
        if k < s.horizons.steps {
            let u: Vec<f64> = serde_json::from_value(rec["control"].clone()).unwrap();
            assert_eq!(u, run.log.controls[i][k]);
        } else {
            assert!(rec["control"].is_null());
        }
    }
    let summary = lines.last().unwrap();
    assert_eq!(summary["summary"], true);
    assert_eq!(summary["completion_rate"].as_f64().unwrap(), run.metrics.completion_rate);
}

#[test]
fn every_builtin_is_a_valid_runnable_configuration() {
    for (name, s) in bench::builtin_scenarios().unwrap() {
        s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        let team = s.team().unwrap();
        assert_eq!(team.agents(), s.agents.len());
        assert!(s.notes.is_some(), "{name} has no notes");
        assert!(s.agent_radius > 0.0 && s.obstacles.iter().all(|o| o.radius > 0.0));
        let parsed = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(parsed, s);
        if s.dynamics() == DynamicsModel::quadcopter() {
            assert!(s.cost.q.iter().zip(&s.cost.qf).all(|(q, qf)| *qf == 100.0 * q));
        }
    }
}

#[test]
fn every_optimizer_and_mode_runs_the_smoke_scenario() {
    for opt in bench::OPTIMIZERS {
        for mode in bench::MODES {
            let mut s = smoke();
            s.horizons.steps = 5;
            s.set_optimizer(opt).unwrap();
            s.set_mode(mode).unwrap();
            let run = bench::run_scenario(&s, &Workers::new(1).unwrap()).unwrap();
            assert!(run.log.aborted.is_none(), "{opt} {mode}");
            assert!(run.metrics.trajectory_cost.is_finite());
        }
    }
}
