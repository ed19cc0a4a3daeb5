//! Deterministic synthetic scenarios.
//!
//! Agents start on a lane of the map and move under one of four behaviors,
//! evaluated in closed form at `tau = t * dt`:
//!
//! * constant velocity: `p = p0 + s * tau * (cos h0, sin h0)`
//! * constant turn with yaw rate `w`: `h = h0 + w * tau`,
//!   `p = p0 + (s / w) * (sin h - sin h0, cos h0 - cos h)`, a circle of
//!   radius `s / |w|`
//! * lane following: arc length `s * tau` along the lane polyline,
//!   continuing straight past its end
//! * stop and go: speed `s/2 * (1 + cos(2 pi tau / P))` along the start
//!   heading, travelled distance `s/2 * (tau + P/(2 pi) * sin(2 pi tau / P))`
//!
//! Headings follow the velocity while the speed exceeds 0.1 m/s and hold
//! their last value otherwise. Gaussian position noise is added after
//! integration. Agent 0 is the ego and is valid over the whole window; other
//! agents may get one contiguous validity window covering part of the
//! history and part of the future.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_seed;
use crate::scene::{
    save_scenarios, wrap_angle, AgentKind, AgentState, FeaturePresence, LaneKind, MapPolyline, SceneError,
    SceneTensor, Scenario,
};

const MOVING_SPEED: f64 = 0.1;
const LANE_WIDTH: f64 = 3.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStyle {
    Straight,
    Curve,
    Intersection,
}

impl std::str::FromStr for MapStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "straight" => Ok(MapStyle::Straight),
            "curve" => Ok(MapStyle::Curve),
            "intersection" => Ok(MapStyle::Intersection),
            other => Err(format!("unknown map style `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    ConstantVelocity,
    ConstantTurn,
    LaneFollow,
    StopAndGo,
}

/// Fractions of agents per behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMix {
    pub constant_velocity: f64,
    pub constant_turn: f64,
    pub lane_follow: f64,
    pub stop_and_go: f64,
}

impl BehaviorMix {
    pub fn only(b: Behavior) -> Self {
        let mut m = BehaviorMix {
            constant_velocity: 0.0,
            constant_turn: 0.0,
            lane_follow: 0.0,
            stop_and_go: 0.0,
        };
        match b {
            Behavior::ConstantVelocity => m.constant_velocity = 1.0,
            Behavior::ConstantTurn => m.constant_turn = 1.0,
            Behavior::LaneFollow => m.lane_follow = 1.0,
            Behavior::StopAndGo => m.stop_and_go = 1.0,
        }
        m
    }

    fn entries(&self) -> [(Behavior, f64); 4] {
        [
            (Behavior::ConstantVelocity, self.constant_velocity),
            (Behavior::ConstantTurn, self.constant_turn),
            (Behavior::LaneFollow, self.lane_follow),
            (Behavior::StopAndGo, self.stop_and_go),
        ]
    }

    fn pick(&self, u: f64) -> Behavior {
        let mut acc = 0.0;
        let mut last = Behavior::ConstantVelocity;
        for (b, f) in self.entries() {
            if f <= 0.0 {
                continue;
            }
            acc += f;
            last = b;
            if u < acc {
                return b;
            }
        }
        last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_agents_range: (usize, usize),
    pub t_total: usize,
    pub t_obs: usize,
    pub dt: f64,
    pub behavior_mix: BehaviorMix,
    pub speed_range: (f64, f64),
    pub map_style: MapStyle,
    pub noise_std: f64,
    /// Magnitude range of constant-turn yaw rates, rad/s; the sign is random.
    #[serde(default = "default_yaw_rate_range")]
    pub yaw_rate_range: (f64, f64),
    /// Period of the stop-and-go speed cycle, seconds.
    #[serde(default = "default_stop_period")]
    pub stop_period: f64,
    /// Probability that a non-ego agent enters late or leaves early.
    #[serde(default)]
    pub window_prob: f64,
}

fn default_yaw_rate_range() -> (f64, f64) {
    (0.05, 0.3)
}

fn default_stop_period() -> f64 {
    3.0
}

impl SynthSpec {
    /// 10 Hz, 2 s of history and 3 s of future.
    pub fn argoverse_like() -> Self {
        Self {
            n_agents_range: (3, 6),
            t_total: 50,
            t_obs: 20,
            dt: 0.1,
            behavior_mix: BehaviorMix {
                constant_velocity: 0.3,
                constant_turn: 0.2,
                lane_follow: 0.3,
                stop_and_go: 0.2,
            },
            speed_range: (2.0, 12.0),
            map_style: MapStyle::Curve,
            noise_std: 0.05,
            yaw_rate_range: default_yaw_rate_range(),
            stop_period: default_stop_period(),
            window_prob: 0.2,
        }
    }

    /// 2 Hz, 2 s of history and 6 s of future.
    pub fn nuscenes_like() -> Self {
        Self {
            n_agents_range: (3, 8),
            t_total: 16,
            t_obs: 4,
            dt: 0.5,
            behavior_mix: BehaviorMix {
                constant_velocity: 0.3,
                constant_turn: 0.2,
                lane_follow: 0.3,
                stop_and_go: 0.2,
            },
            speed_range: (1.0, 10.0),
            map_style: MapStyle::Straight,
            noise_std: 0.05,
            yaw_rate_range: default_yaw_rate_range(),
            stop_period: 4.0,
            window_prob: 0.2,
        }
    }

    /// Crossing traffic at a four-way intersection.
    pub fn intersection() -> Self {
        Self {
            n_agents_range: (6, 8),
            t_total: 16,
            t_obs: 6,
            dt: 0.25,
            behavior_mix: BehaviorMix {
                constant_velocity: 0.1,
                constant_turn: 0.0,
                lane_follow: 0.7,
                stop_and_go: 0.2,
            },
            speed_range: (3.0, 9.0),
            map_style: MapStyle::Intersection,
            noise_std: 0.02,
            yaw_rate_range: default_yaw_rate_range(),
            stop_period: 3.0,
            window_prob: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "argoverse-like" | "argoverse_like" => Some(Self::argoverse_like()),
            "nuscenes-like" | "nuscenes_like" => Some(Self::nuscenes_like()),
            "intersection" => Some(Self::intersection()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let (lo, hi) = self.n_agents_range;
        if lo < 1 || lo > hi {
            return bad(format!("n_agents_range must satisfy 1 <= min <= max, got {lo}..{hi}"));
        }
        if self.t_obs < 2 || self.t_obs >= self.t_total {
            return bad(format!(
                "need 2 <= t_obs < t_total, got t_obs={} t_total={}",
                self.t_obs, self.t_total
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let fr = self.behavior_mix.entries();
        if fr.iter().any(|(_, f)| !(*f >= 0.0)) {
            return bad("behavior fractions must be non-negative".into());
        }
        let sum: f64 = fr.iter().map(|(_, f)| f).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("behavior fractions sum to {sum}, expected 1"));
        }
        let (s0, s1) = self.speed_range;
        if !(s0 >= 0.0 && s0 <= s1 && s1.is_finite()) {
            return bad(format!("speed_range must satisfy 0 <= min <= max, got {s0}..{s1}"));
        }
        let (w0, w1) = self.yaw_rate_range;
        if !(w0 > 0.0 && w0 <= w1 && w1.is_finite()) {
            return bad(format!("yaw_rate_range must satisfy 0 < min <= max, got {w0}..{w1}"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.stop_period > 0.0 && self.stop_period.is_finite()) {
            return bad("stop_period must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.window_prob) {
            return bad("window_prob must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn line(from: [f64; 2], to: [f64; 2], step: f64) -> Vec<[f64; 2]> {
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let n = (len / step).round().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let u = i as f64 / n as f64;
            [from[0] + u * (to[0] - from[0]), from[1] + u * (to[1] - from[1])]
        })
        .collect()
}

fn arc(center: [f64; 2], radius: f64, a0: f64, a1: f64, n: usize) -> Vec<[f64; 2]> {
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Drivable lanes (in travel direction) and decorative polylines.
fn build_map(style: MapStyle) -> (Vec<Vec<[f64; 2]>>, Vec<(LaneKind, Vec<[f64; 2]>)>) {
    let mut lanes = Vec::new();
    let mut extra = Vec::new();
    match style {
        MapStyle::Straight => {
            lanes.push(line([-60.0, -LANE_WIDTH], [60.0, -LANE_WIDTH], 2.0));
            lanes.push(line([-60.0, 0.0], [60.0, 0.0], 2.0));
            lanes.push(line([60.0, LANE_WIDTH], [-60.0, LANE_WIDTH], 2.0));
            for y in [-1.5 * LANE_WIDTH, 1.5 * LANE_WIDTH] {
                extra.push((LaneKind::Boundary, line([-60.0, y], [60.0, y], 4.0)));
            }
        }
        MapStyle::Curve => {
            let c = [0.0, 60.0];
            let (a0, a1) = (-PI / 2.0 - 0.9, -PI / 2.0 + 0.9);
            lanes.push(arc(c, 60.0 + LANE_WIDTH, a0, a1, 50));
            lanes.push(arc(c, 60.0, a0, a1, 50));
            lanes.push(arc(c, 60.0 - LANE_WIDTH, a1, a0, 50));
            for r in [60.0 + 1.5 * LANE_WIDTH, 60.0 - 1.5 * LANE_WIDTH] {
                extra.push((LaneKind::Boundary, arc(c, r, a0, a1, 25)));
            }
        }
        MapStyle::Intersection => {
            let h = LANE_WIDTH / 2.0;
            lanes.push(line([-50.0, -h], [50.0, -h], 2.0));
            lanes.push(line([-h, -50.0], [-h, 50.0], 2.0));
            lanes.push(line([50.0, h], [-50.0, h], 2.0));
            lanes.push(line([h, 50.0], [h, -50.0], 2.0));
            let w = LANE_WIDTH;
            for s in [-1.0, 1.0] {
                extra.push((LaneKind::Crosswalk, line([-w, s * 2.5 * w], [w, s * 2.5 * w], 1.0)));
                extra.push((LaneKind::Crosswalk, line([s * 2.5 * w, -w], [s * 2.5 * w, w], 1.0)));
            }
        }
    }
    (lanes, extra)
}

/// Arc-length parametrized polyline.
struct Path2 {
    points: Vec<[f64; 2]>,
    cum: Vec<f64>,
}

impl Path2 {
    fn new(points: Vec<[f64; 2]>) -> Self {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cum.push(cum.last().unwrap() + l);
        }
        Self { points, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit tangent at arc length `s`, extrapolating past
    /// either end along the end segments.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let seg = match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(self.points.len() - 2),
        };
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let l = self.cum[seg + 1] - self.cum[seg];
        let dir = [(b[0] - a[0]) / l, (b[1] - a[1]) / l];
        let u = s - self.cum[seg];
        ([a[0] + u * dir[0], a[1] + u * dir[1]], dir)
    }
}

struct Motion {
    behavior: Behavior,
    p0: [f64; 2],
    h0: f64,
    speed: f64,
    yaw_rate: f64,
    period: f64,
    lane: usize,
    s0: f64,
}

impl Motion {
    /// Noise-free position and velocity at time `tau`.
    fn eval(&self, tau: f64, lanes: &[Path2]) -> ([f64; 2], [f64; 2]) {
        let (c0, s0) = (self.h0.cos(), self.h0.sin());
        match self.behavior {
            Behavior::ConstantVelocity => {
                let d = self.speed * tau;
                ([self.p0[0] + d * c0, self.p0[1] + d * s0], [self.speed * c0, self.speed * s0])
            }
            Behavior::ConstantTurn => {
                let w = self.yaw_rate;
                let h = self.h0 + w * tau;
                let r = self.speed / w;
                (
                    [self.p0[0] + r * (h.sin() - s0), self.p0[1] + r * (c0 - h.cos())],
                    [self.speed * h.cos(), self.speed * h.sin()],
                )
            }
            Behavior::LaneFollow => {
                let (p, dir) = lanes[self.lane].at(self.s0 + self.speed * tau);
                (p, [self.speed * dir[0], self.speed * dir[1]])
            }
            Behavior::StopAndGo => {
                let ph = 2.0 * PI * tau / self.period;
                let d = self.speed / 2.0 * (tau + self.period / (2.0 * PI) * ph.sin());
                let v = self.speed / 2.0 * (1.0 + ph.cos());
                ([self.p0[0] + d * c0, self.p0[1] + d * s0], [v * c0, v * s0])
            }
        }
    }
}

fn sample_kind(rng: &mut ChaCha8Rng, ego: bool) -> (AgentKind, f64, f64) {
    let u: f64 = if ego { 0.0 } else { rng.gen() };
    if u < 0.85 {
        (AgentKind::Vehicle, rng.gen_range(4.2..4.9), rng.gen_range(1.8..2.1))
    } else if u < 0.95 {
        (AgentKind::Cyclist, rng.gen_range(1.6..1.9), rng.gen_range(0.5..0.7))
    } else {
        (AgentKind::Pedestrian, rng.gen_range(0.4..0.7), rng.gen_range(0.4..0.7))
    }
}

pub fn generate_scene(spec: &SynthSpec, seed: u64) -> Result<Scenario, SynthError> {
    generate_scene_with_id(spec, seed, &format!("synth-{seed:016x}"))
}

fn generate_scene_with_id(spec: &SynthSpec, seed: u64, id: &str) -> Result<Scenario, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lane_pts, extra) = build_map(spec.map_style);
    let lanes: Vec<Path2> = lane_pts.iter().cloned().map(Path2::new).collect();
    let (lo, hi) = spec.n_agents_range;
    let n = rng.gen_range(lo..=hi);
    let t = spec.t_total;
    let noise = Normal::new(0.0, spec.noise_std).expect("noise_std validated");
    let lane_offset = rng.gen_range(0..lanes.len());
    let mut scene = SceneTensor::new(id, n, t, spec.t_obs, 0, spec.dt);

    for a in 0..n {
        let behavior = spec.behavior_mix.pick(rng.gen());
        let lane = (lane_offset + a) % lanes.len();
        let len = lanes[lane].length();
        let s0 = rng.gen_range(0.25 * len..0.6 * len);
        let (p, dir) = lanes[lane].at(s0);
        let lateral = if behavior == Behavior::LaneFollow {
            0.0
        } else {
            rng.gen_range(-0.5..0.5)
        };
        let p0 = [p[0] - dir[1] * lateral, p[1] + dir[0] * lateral];
        let (s_lo, s_hi) = spec.speed_range;
        let speed = if s_hi > s_lo { rng.gen_range(s_lo..=s_hi) } else { s_lo };
        let (w_lo, w_hi) = spec.yaw_rate_range;
        let mag = if w_hi > w_lo { rng.gen_range(w_lo..=w_hi) } else { w_lo };
        let yaw_rate = if rng.gen::<bool>() { mag } else { -mag };
        let motion = Motion {
            behavior,
            p0,
            h0: dir[1].atan2(dir[0]),
            speed,
            yaw_rate,
            period: spec.stop_period,
            lane,
            s0,
        };
        let (kind, length, width) = sample_kind(&mut rng, a == 0);
        let (first, last) = if a > 0 && rng.gen_bool(spec.window_prob) {
            (rng.gen_range(0..spec.t_obs), rng.gen_range(spec.t_obs + 1..=t))
        } else {
            (0, t)
        };
        let mut heading = motion.h0;
        for c in 0..t {
            let (pos, vel) = motion.eval(c as f64 * spec.dt, &lanes);
            if vel[0].hypot(vel[1]) > MOVING_SPEED {
                heading = vel[1].atan2(vel[0]);
            }
            let (nx, ny) = if spec.noise_std > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            if c < first || c >= last {
                continue;
            }
            *scene.get_mut(a, c) = AgentState {
                x: pos[0] + nx,
                y: pos[1] + ny,
                heading: wrap_angle(heading),
                vx: vel[0],
                vy: vel[1],
                length,
                width,
                kind,
                valid: true,
            };
        }
    }

    let mut polys: Vec<(LaneKind, Vec<[f64; 2]>)> = lane_pts.into_iter().map(|p| (LaneKind::LaneCenter, p)).collect();
    polys.extend(extra);
    let pad = polys.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let map = polys
        .iter()
        .map(|(k, p)| MapPolyline::padded(*k, p, pad))
        .collect();
    Ok(Scenario {
        scene,
        map,
        presence: FeaturePresence::default(),
    })
}

/// `count` scenarios, scenario `i` seeded with `derive_seed(seed, i)`.
pub fn generate_scenarios(spec: &SynthSpec, count: usize, seed: u64) -> Result<Vec<Scenario>, SynthError> {
    spec.validate()?;
    if count < 1 {
        return Err(SynthError::InvalidSpec("count must be at least 1".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| generate_scene_with_id(spec, derive_seed(seed, i as u64), &format!("synth-{seed}-{i:05}")))
        .collect()
}

pub fn generate_dataset(spec: &SynthSpec, count: usize, seed: u64, path: impl AsRef<Path>) -> Result<(), SynthError> {
    let scenarios = generate_scenarios(spec, count, seed)?;
    save_scenarios(&scenarios, path)?;
    Ok(())
}
