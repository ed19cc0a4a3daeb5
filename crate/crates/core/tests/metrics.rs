#[path = "support/oracles.rs"]
mod oracles;
#[path = "support/cases.rs"]
mod cases;

use cases::metric_instance as instance;
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajmask::metrics::*;
use trajmask::model::Forecast;
use trajmask::scene::{RigidTransform, SceneTensor};

fn future_views(f: &Forecast, truth: &SceneTensor, agent: usize) -> (Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>, Vec<bool>) {
    let fut = truth.t_obs..truth.t_total;
    let traj = (0..f.k).map(|m| fut.clone().map(|t| f.at(m, agent, t)).collect()).collect();
    let xy = fut.clone().map(|t| [truth.get(agent, t).x, truth.get(agent, t).y]).collect();
    let valid = fut.map(|t| truth.get(agent, t).valid).collect();
    (traj, xy, valid)
}

#[test]
fn min_ade_and_fde_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..300 {
        let (f, truth) = instance(&mut rng);
        let (traj, xy, valid) = future_views(&f, &truth, 0);
        for k in 1..=f.k {
            let ade = min_ade(&f, &truth, 0, k).unwrap();
            let fde = min_fde(&f, &truth, 0, k).unwrap();
            assert!((ade - brute_min_ade(&traj, &f.mode_probs, &xy, &valid, k)).abs() < 1e-9);
            assert!((fde - brute_min_fde(&traj, &f.mode_probs, &xy, &valid, k)).abs() < 1e-9);
        }
    }
}

#[test]
fn metrics_do_not_increase_with_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let (f, truth) = instance(&mut rng);
        for k in 1..f.k {
            assert!(min_ade(&f, &truth, 0, k + 1).unwrap() <= min_ade(&f, &truth, 0, k).unwrap());
            assert!(min_fde(&f, &truth, 0, k + 1).unwrap() <= min_fde(&f, &truth, 0, k).unwrap());
        }
    }
}

#[test]
fn rigid_motion_leaves_metrics_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (f, truth) = instance(&mut rng);
        let tf = RigidTransform {
            tx: rng.gen_range(-100.0..100.0),
            ty: rng.gen_range(-100.0..100.0),
            rotation: rng.gen_range(-3.0..3.0),
        };
        let g = Forecast {
            trajectories: f.trajectories.iter().map(|p| tf.apply_point(*p)).collect(),
            ..f.clone()
        };
        let moved = tf.apply_scene(&truth);
        for k in 1..=f.k {
            assert!((min_ade(&f, &truth, 0, k).unwrap() - min_ade(&g, &moved, 0, k).unwrap()).abs() < 1e-9);
            assert!((min_fde(&f, &truth, 0, k).unwrap() - min_fde(&g, &moved, 0, k).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn miss_rate_is_a_strict_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v: Vec<f64> = (0..1000)
        .map(|i| if i % 97 == 0 { 2.0 } else { rng.gen_range(0.0..4.0) })
        .collect();
    let expected = v.iter().filter(|x| **x > 2.0).count() as f64 / 1000.0;
    assert_eq!(miss_rate(&v, 2.0).unwrap(), expected);
    assert_eq!(miss_rate(&v, f64::INFINITY).unwrap(), 0.0);
    assert_eq!(miss_rate(&[0.5, 3.0], 0.0).unwrap(), 1.0);
    assert_eq!(miss_rate(&[0.0, 3.0], 0.0).unwrap(), 0.5);
    assert!(miss_rate(&[], 2.0).is_err());
}

#[test]
fn report_is_recomputed_from_per_agent_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let ks = [1, 3, 6];
    let mut rows = Vec::new();
    for s in 0..7 {
        for a in 0..rng.gen_range(1..5) {
            let mut ade: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..5.0)).collect();
            let mut fde: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..8.0)).collect();
            ade.sort_by(|x, y| y.partial_cmp(x).unwrap());
            fde.sort_by(|x, y| y.partial_cmp(x).unwrap());
            rows.push(AgentMetrics {
                scenario: s,
                scenario_id: format!("s{s}"),
                agent: a,
                min_ade: ade,
                min_fde: fde,
            });
        }
    }
    let report = aggregate(&rows, &ks, 2.0, Subset::All).unwrap();
    for (i, k) in ks.iter().enumerate() {
        let mut per_scenario = Vec::new();
        for s in 0..7 {
            let g: Vec<&AgentMetrics> = rows.iter().filter(|r| r.scenario == s).collect();
            per_scenario.push(g.iter().map(|r| r.min_ade[i]).sum::<f64>() / g.len() as f64);
        }
        let expected = per_scenario.iter().sum::<f64>() / 7.0;
        assert!((report.min_ade[k] - expected).abs() < 1e-12);
        let misses = rows.iter().filter(|r| r.min_fde[i] > 2.0).count() as f64 / rows.len() as f64;
        assert_eq!(report.miss_rate[i].value, misses);
    }
    assert_eq!(report.n_evaluated, rows.len());
    assert_eq!(report.n_scenarios, 7);
}
