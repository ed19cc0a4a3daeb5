//! Random inputs for integration and acceptance tests, plus the central
//! finite-difference gradient check.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trajmask::masking::MaskGrid;
use trajmask::model::{forward_backward, Forecast, DecoderHead, ModelConfig, ModelParams};
use trajmask::scene::{AgentKind, AgentState, LaneKind, MapPolyline, Scenario, FeaturePresence, SceneTensor};

pub fn random_state(rng: &mut ChaCha8Rng) -> AgentState {
    AgentState {
        x: rng.gen_range(-50.0..50.0),
        y: rng.gen_range(-50.0..50.0),
        heading: std::f64::consts::PI - rng.gen_range(0.0..2.0 * std::f64::consts::PI),
        vx: rng.gen_range(-15.0..15.0),
        vy: rng.gen_range(-15.0..15.0),
        length: rng.gen_range(0.0..6.0),
        width: rng.gen_range(0.0..3.0),
        kind: AgentKind::ALL[rng.gen_range(0..4)],
        valid: true,
    }
}

/// Scene with each cell valid with probability `p_valid`; the anchor cell
/// (ego at `t_obs - 1`) is always valid.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, t: usize, t_obs: usize, p_valid: f64) -> SceneTensor {
    let ego = rng.gen_range(0..n);
    let mut s = SceneTensor::new(format!("case-{}", rng.gen::<u32>()), n, t, t_obs, ego, 0.1);
    for a in 0..n {
        for c in 0..t {
            if (a == ego && c == t_obs - 1) || rng.gen_bool(p_valid) {
                *s.get_mut(a, c) = random_state(rng);
            }
        }
    }
    s
}

pub fn random_map(rng: &mut ChaCha8Rng, polylines: usize, pad: usize) -> Vec<MapPolyline> {
    let kinds = [LaneKind::LaneCenter, LaneKind::Boundary, LaneKind::Crosswalk, LaneKind::Other];
    (0..polylines)
        .map(|_| {
            let real: Vec<[f64; 2]> = (0..rng.gen_range(1..=pad))
                .map(|_| [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)])
                .collect();
            MapPolyline::padded(kinds[rng.gen_range(0..4)], &real, pad)
        })
        .collect()
}

pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize, t: usize, t_obs: usize, p_valid: f64) -> Scenario {
    let scene = random_scene(rng, n, t, t_obs, p_valid);
    let polylines = rng.gen_range(0..3);
    Scenario {
        scene,
        map: random_map(rng, polylines, 4),
        presence: FeaturePresence::default(),
    }
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, t: usize, p: f64) -> MaskGrid {
    MaskGrid {
        n,
        t,
        hidden: (0..n * t).map(|_| rng.gen_bool(p)).collect(),
    }
}

/// Random small config whose parameter count stays at or below `limit`.
pub fn random_small_config(rng: &mut ChaCha8Rng, limit: usize) -> ModelConfig {
    loop {
        let n_heads = [1, 2][rng.gen_range(0..2)];
        let c = ModelConfig {
            d_model: n_heads * rng.gen_range(2..=5),
            n_blocks: rng.gen_range(1..=2),
            n_heads,
            k_modes: rng.gen_range(1..=3),
            t_total: rng.gen_range(3..=6),
            dropout: 0.0,
        };
        let p = trajmask::model::init_model(&c, 0).unwrap();
        if p.count() <= limit {
            return c;
        }
    }
}

/// Adds uniform noise to every entry so that zero-initialised biases and
/// unit gains are exercised too.
pub fn jitter(params: &mut ModelParams, rng: &mut ChaCha8Rng, scale: f64) {
    for m in params.arrays.values_mut() {
        for v in m.data.iter_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

pub struct FdCase<'a> {
    pub params: &'a ModelParams,
    pub head: DecoderHead,
    pub input: &'a SceneTensor,
    pub mask: &'a MaskGrid,
    pub map: &'a [MapPolyline],
    pub target: &'a SceneTensor,
    pub target_mask: &'a MaskGrid,
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over every parameter entry,
/// where `n` is the central difference with step `eps`.
pub fn max_fd_error(case: &FdCase, eps: f64, floor: f64) -> (f64, String) {
    let loss = |p: &ModelParams| {
        forward_backward(p, case.head, case.input, case.mask, case.map, case.target, case.target_mask)
            .unwrap()
            .0
    };
    let (_, grads) =
        forward_backward(case.params, case.head, case.input, case.mask, case.map, case.target, case.target_mask).unwrap();
    let mut worst = (0.0, String::new());
    let mut probe = case.params.clone();
    let names: Vec<String> = case.params.arrays.keys().cloned().collect();
    for name in names {
        for i in 0..case.params.arrays[&name].data.len() {
            let orig = case.params.arrays[&name].data[i];
            probe.arrays[&name].data[i] = orig + eps;
            let up = loss(&probe);
            probe.arrays[&name].data[i] = orig - eps;
            let down = loss(&probe);
            probe.arrays[&name].data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads[&name].data[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Random forecast and truth with at least one valid future cell for
/// `agent` 0. Probabilities are drawn from a small set so ties occur.
pub fn metric_instance(rng: &mut ChaCha8Rng) -> (Forecast, SceneTensor) {
    let k = rng.gen_range(1..=6);
    let n = rng.gen_range(1..=3);
    let t = rng.gen_range(3..=12);
    let t_obs = rng.gen_range(2..t);
    let mut truth = random_scene(rng, n, t, t_obs, 0.7);
    let c = rng.gen_range(t_obs..t);
    if !truth.get(0, c).valid {
        *truth.get_mut(0, c) = random_state(rng);
    }
    let raw: Vec<f64> = (0..k).map(|_| [1.0, 2.0, 3.0][rng.gen_range(0..3)]).collect();
    let total: f64 = raw.iter().sum();
    let f = Forecast {
        k,
        n,
        t,
        trajectories: (0..k * n * t).map(|_| [rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)]).collect(),
        mode_probs: raw.iter().map(|r| r / total).collect(),
    };
    (f, truth)
}

