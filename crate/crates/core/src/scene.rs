//! Scenario data model: agents over time, map polylines, JSON Lines I/O and
//! rigid frame normalization.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),
    #[error("line {line}: schema violation: {detail}")]
    Schema { line: usize, detail: String },
    #[error("line {line}: invariant violation: {detail}")]
    Invariant { line: usize, detail: String },
    #[error("anchor agent {agent} is not valid at timestep {time}")]
    InvalidAnchor { agent: usize, time: usize },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Vehicle,
        AgentKind::Pedestrian,
        AgentKind::Cyclist,
        AgentKind::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One agent at one timestep. Invalid cells carry all-zero numeric fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
    pub kind: AgentKind,
    pub valid: bool,
}

impl AgentState {
    /// The zero-filled invalid cell.
    pub const EMPTY: AgentState = AgentState {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        vx: 0.0,
        vy: 0.0,
        length: 0.0,
        width: 0.0,
        kind: AgentKind::Vehicle,
        valid: false,
    };

    fn numeric(&self) -> [f64; 7] {
        [self.x, self.y, self.heading, self.vx, self.vy, self.length, self.width]
    }

    pub fn is_zero_filled(&self) -> bool {
        self.numeric().iter().all(|v| *v == 0.0)
    }
}

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned
/// unchanged so that normalization is exact on normalized input.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Dense `[agents][timesteps]` grid of agent states.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTensor {
    pub scenario_id: String,
    pub n_agents: usize,
    pub t_total: usize,
    pub t_obs: usize,
    pub ego_index: usize,
    pub dt: f64,
    pub states: Vec<AgentState>,
}

impl SceneTensor {
    pub fn new(
        scenario_id: impl Into<String>,
        n_agents: usize,
        t_total: usize,
        t_obs: usize,
        ego_index: usize,
        dt: f64,
    ) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            n_agents,
            t_total,
            t_obs,
            ego_index,
            dt,
            states: vec![AgentState::EMPTY; n_agents * t_total],
        }
    }

    #[inline]
    pub fn idx(&self, agent: usize, t: usize) -> usize {
        agent * self.t_total + t
    }

    #[inline]
    pub fn get(&self, agent: usize, t: usize) -> &AgentState {
        &self.states[agent * self.t_total + t]
    }

    #[inline]
    pub fn get_mut(&mut self, agent: usize, t: usize) -> &mut AgentState {
        let i = self.idx(agent, t);
        &mut self.states[i]
    }

    pub fn t_fut(&self) -> usize {
        self.t_total - self.t_obs
    }

    /// Row-major `[agents][timesteps]` validity flags.
    pub fn validity(&self) -> Vec<bool> {
        self.states.iter().map(|s| s.valid).collect()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.n_agents < 1 {
            return Err("scene needs at least one agent".into());
        }
        if self.t_obs < 2 || self.t_obs >= self.t_total {
            return Err(format!(
                "need 2 <= t_obs < t_total, got t_obs={} t_total={}",
                self.t_obs, self.t_total
            ));
        }
        if self.ego_index >= self.n_agents {
            return Err(format!(
                "ego_index {} out of range for {} agents",
                self.ego_index, self.n_agents
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if self.states.len() != self.n_agents * self.t_total {
            return Err("state grid size does not match dimensions".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            let (agent, t) = (i / self.t_total, i % self.t_total);
            if s.numeric().iter().any(|v| !v.is_finite()) {
                return Err(format!("agent {agent} t {t}: non-finite field"));
            }
            if !s.valid && !s.is_zero_filled() {
                return Err(format!("agent {agent} t {t}: invalid cell is not zero-filled"));
            }
            if s.length < 0.0 || s.width < 0.0 {
                return Err(format!("agent {agent} t {t}: negative footprint"));
            }
            if !(s.heading > -PI && s.heading <= PI) && s.valid {
                return Err(format!("agent {agent} t {t}: heading outside (-pi, pi]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    #[default]
    LaneCenter,
    Boundary,
    Crosswalk,
    Other,
}

impl LaneKind {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Map polyline padded to a fixed point count; points past `valid_count`
/// are exactly `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPolyline {
    pub lane_kind: LaneKind,
    pub points: Vec<[f64; 2]>,
    pub valid_count: usize,
}

impl MapPolyline {
    /// Builds a polyline from real points, padding with zeros to `pad_to`.
    pub fn padded(lane_kind: LaneKind, real: &[[f64; 2]], pad_to: usize) -> Self {
        let mut points = real.to_vec();
        points.truncate(pad_to);
        let valid_count = points.len();
        points.resize(pad_to, [0.0, 0.0]);
        Self {
            lane_kind,
            points,
            valid_count,
        }
    }

    pub fn valid_points(&self) -> &[[f64; 2]] {
        &self.points[..self.valid_count]
    }
}

/// Which optional agent features the source dataset actually provides.
/// Missing ones are carried as zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePresence {
    pub heading: bool,
    pub velocity: bool,
    pub size: bool,
}

impl Default for FeaturePresence {
    fn default() -> Self {
        Self {
            heading: true,
            velocity: true,
            size: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scene: SceneTensor,
    pub map: Vec<MapPolyline>,
    pub presence: FeaturePresence,
}

impl Scenario {
    pub fn check_invariants(&self) -> Result<(), String> {
        self.scene.check_invariants()?;
        let p = self.map.first().map(|m| m.points.len());
        for (s, poly) in self.map.iter().enumerate() {
            if Some(poly.points.len()) != p {
                return Err(format!("polyline {s}: not padded to the common length"));
            }
            if poly.valid_count > poly.points.len() {
                return Err(format!("polyline {s}: valid_count exceeds point count"));
            }
            if poly.points[poly.valid_count..]
                .iter()
                .any(|pt| pt[0] != 0.0 || pt[1] != 0.0)
            {
                return Err(format!("polyline {s}: padded points must be (0, 0)"));
            }
            if poly.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("polyline {s}: non-finite point"));
            }
        }
        Ok(())
    }
}

// On-disk record; conversion to `Scenario` validates and normalizes headings.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    scenario_id: String,
    dt: f64,
    t_obs: usize,
    ego_index: usize,
    agents: Vec<Vec<AgentState>>,
    map: Vec<MapPolyline>,
    #[serde(default)]
    present: FeaturePresence,
}

impl From<&Scenario> for ScenarioRecord {
    fn from(s: &Scenario) -> Self {
        let sc = &s.scene;
        Self {
            scenario_id: sc.scenario_id.clone(),
            dt: sc.dt,
            t_obs: sc.t_obs,
            ego_index: sc.ego_index,
            agents: sc
                .states
                .chunks(sc.t_total.max(1))
                .map(|row| row.to_vec())
                .collect(),
            map: s.map.clone(),
            present: s.presence,
        }
    }
}

fn record_to_scenario(rec: ScenarioRecord, line: usize) -> Result<Scenario, SceneError> {
    let invariant = |detail: String| SceneError::Invariant { line, detail };
    let n = rec.agents.len();
    if n == 0 {
        return Err(invariant("agents must be non-empty".into()));
    }
    let t_total = rec.agents[0].len();
    if let Some(bad) = rec.agents.iter().position(|row| row.len() != t_total) {
        return Err(invariant(format!(
            "agent {bad} has {} timesteps, expected {t_total}",
            rec.agents[bad].len()
        )));
    }
    let mut states = Vec::with_capacity(n * t_total);
    for row in rec.agents {
        for mut s in row {
            if s.valid {
                s.heading = wrap_angle(s.heading);
            }
            states.push(s);
        }
    }
    let scenario = Scenario {
        scene: SceneTensor {
            scenario_id: rec.scenario_id,
            n_agents: n,
            t_total,
            t_obs: rec.t_obs,
            ego_index: rec.ego_index,
            dt: rec.dt,
            states,
        },
        map: rec.map,
        presence: rec.present,
    };
    scenario.check_invariants().map_err(invariant)?;
    Ok(scenario)
}

/// Parses one JSON Lines record; `line` is 1-based and only used in errors.
pub fn parse_scenario_line(text: &str, line: usize) -> Result<Scenario, SceneError> {
    let rec: ScenarioRecord = serde_json::from_str(text).map_err(|e| SceneError::Schema {
        line,
        detail: e.to_string(),
    })?;
    record_to_scenario(rec, line)
}

pub fn scenario_to_line(s: &Scenario) -> String {
    serde_json::to_string(&ScenarioRecord::from(s)).expect("scenario records always serialize")
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, SceneError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::FileMissing(path.to_path_buf()),
        _ => SceneError::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_scenario_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn save_scenarios(scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<(), SceneError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in scenarios {
        w.write_all(scenario_to_line(s).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Planar rigid motion `p' = R(rotation) p + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub tx: f64,
    pub ty: f64,
    pub rotation: f64,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        tx: 0.0,
        ty: 0.0,
        rotation: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.rotation == 0.0
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = self.rotate(p);
        [x + self.tx, y + self.ty]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        if self.rotation == 0.0 {
            return v;
        }
        let (s, c) = self.rotation.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn inverse(&self) -> RigidTransform {
        let back = RigidTransform {
            tx: 0.0,
            ty: 0.0,
            rotation: -self.rotation,
        };
        let [tx, ty] = back.rotate([-self.tx, -self.ty]);
        RigidTransform {
            tx,
            ty,
            rotation: -self.rotation,
        }
    }

    pub fn apply_state(&self, s: &AgentState) -> AgentState {
        if !s.valid {
            return *s;
        }
        let [x, y] = self.apply_point([s.x, s.y]);
        let [vx, vy] = self.rotate([s.vx, s.vy]);
        AgentState {
            x,
            y,
            vx,
            vy,
            heading: wrap_angle(s.heading + self.rotation),
            ..*s
        }
    }

    pub fn apply_scene(&self, scene: &SceneTensor) -> SceneTensor {
        SceneTensor {
            states: scene.states.iter().map(|s| self.apply_state(s)).collect(),
            ..scene.clone()
        }
    }

    pub fn apply_polyline(&self, poly: &MapPolyline) -> MapPolyline {
        let mut out = poly.clone();
        for p in out.points.iter_mut().take(poly.valid_count) {
            *p = self.apply_point(*p);
        }
        out
    }

    pub fn apply_scenario(&self, s: &Scenario) -> Scenario {
        Scenario {
            scene: self.apply_scene(&s.scene),
            map: s.map.iter().map(|p| self.apply_polyline(p)).collect(),
            presence: s.presence,
        }
    }
}

/// Re-expresses the scenario in the frame of `anchor_agent` at
/// `anchor_time`: that cell lands at the origin with heading 0.
pub fn normalize_scene(
    scenario: &Scenario,
    anchor_agent: usize,
    anchor_time: usize,
) -> Result<(Scenario, RigidTransform), SceneError> {
    let scene = &scenario.scene;
    if anchor_agent >= scene.n_agents
        || anchor_time >= scene.t_total
        || !scene.get(anchor_agent, anchor_time).valid
    {
        return Err(SceneError::InvalidAnchor {
            agent: anchor_agent,
            time: anchor_time,
        });
    }
    let a = scene.get(anchor_agent, anchor_time);
    let rotation = if a.heading == 0.0 { 0.0 } else { -a.heading };
    let partial = RigidTransform {
        tx: 0.0,
        ty: 0.0,
        rotation,
    };
    let [rx, ry] = partial.rotate([a.x, a.y]);
    let tf = RigidTransform {
        tx: if rx == 0.0 { 0.0 } else { -rx },
        ty: if ry == 0.0 { 0.0 } else { -ry },
        rotation,
    };
    let mut out = tf.apply_scenario(scenario);
    // Pin the anchor exactly; rounding would otherwise leave ~1e-16 residue.
    let anchor = out.scene.get_mut(anchor_agent, anchor_time);
    anchor.x = 0.0;
    anchor.y = 0.0;
    anchor.heading = 0.0;
    Ok((out, tf))
}

/// The cell used as the modelling frame: the ego at the last observed
/// timestep, falling back to the first agent valid there.
pub fn default_anchor(scene: &SceneTensor) -> Option<(usize, usize)> {
    let t = scene.t_obs - 1;
    if scene.get(scene.ego_index, t).valid {
        return Some((scene.ego_index, t));
    }
    (0..scene.n_agents)
        .find(|&i| scene.get(i, t).valid)
        .map(|i| (i, t))
        .or_else(|| {
            scene
                .states
                .iter()
                .position(|s| s.valid)
                .map(|k| (k / scene.t_total, k % scene.t_total))
        })
}

/// Normalizes around [`default_anchor`], or returns the input unchanged when
/// the scene has no valid cell at all.
pub fn normalize_default(scenario: &Scenario) -> (Scenario, RigidTransform) {
    match default_anchor(&scenario.scene) {
        Some((a, t)) => normalize_scene(scenario, a, t).expect("anchor chosen among valid cells"),
        None => (scenario.clone(), RigidTransform::IDENTITY),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agent_scenario() -> Scenario {
        let mut scene = SceneTensor::new("s0", 2, 4, 2, 0, 0.1);
        for t in 0..4 {
            *scene.get_mut(0, t) = AgentState {
                x: 3.0 + t as f64,
                y: 4.0,
                heading: PI / 2.0,
                vx: 0.0,
                vy: 10.0,
                length: 4.5,
                width: 2.0,
                kind: AgentKind::Vehicle,
                valid: true,
            };
        }
        *scene.get_mut(1, 1) = AgentState {
            x: -2.0,
            y: 7.5,
            heading: -1.0,
            vx: 1.0,
            vy: -0.5,
            length: 0.5,
            width: 0.5,
            kind: AgentKind::Pedestrian,
            valid: true,
        };
        Scenario {
            scene,
            map: vec![MapPolyline::padded(
                LaneKind::LaneCenter,
                &[[0.0, 0.0], [10.0, 1.0]],
                4,
            )],
            presence: FeaturePresence::default(),
        }
    }

    #[test]
    fn wrap_angle_maps_into_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.3), 0.3);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn t_obs_equal_t_total_is_rejected_with_line_number() {
        let s = two_agent_scenario();
        let good = scenario_to_line(&s);
        let mut bad = s.clone();
        bad.scene.t_obs = 4;
        let text = format!("{good}\n{good}\n{}\n", scenario_to_line(&bad));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, text).unwrap();
        match load_scenarios(&path) {
            Err(SceneError::Invariant { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let err = parse_scenario_line(r#"{"scenario_id":"a","t_obs":2}"#, 7).unwrap_err();
        match err {
            SceneError::Schema { line, detail } => {
                assert_eq!(line, 7);
                assert!(detail.contains("dt") || detail.contains("missing"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_scenarios("/definitely/not/here.jsonl"),
            Err(SceneError::FileMissing(_))
        ));
    }

    #[test]
    fn invalid_cell_must_be_zero_filled() {
        let mut s = two_agent_scenario();
        s.scene.get_mut(1, 0).x = 1.0;
        assert!(s.check_invariants().is_err());
    }

    #[test]
    fn empty_save_is_empty_file_and_single_is_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        save_scenarios(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
        save_scenarios(&[two_agent_scenario()], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 1);
        assert_eq!(load_scenarios(&p).unwrap(), vec![two_agent_scenario()]);
    }

    #[test]
    fn anchor_at_origin_gives_identity() {
        let mut s = two_agent_scenario();
        let a = s.scene.get_mut(0, 1);
        a.x = 0.0;
        a.y = 0.0;
        a.heading = 0.0;
        let (_, tf) = normalize_scene(&s, 0, 1).unwrap();
        assert!(tf.is_identity());
    }

    #[test]
    fn anchor_maps_to_origin_heading_zero() {
        let mut s = two_agent_scenario();
        {
            let a = s.scene.get_mut(0, 0);
            a.x = 3.0;
            a.y = 4.0;
            a.heading = PI / 2.0;
        }
        let (out, tf) = normalize_scene(&s, 0, 0).unwrap();
        let a = out.scene.get(0, 0);
        assert_eq!((a.x, a.y, a.heading), (0.0, 0.0, 0.0));
        let mapped = tf.apply_point([3.0, 4.0]);
        assert!(mapped[0].abs() < 1e-12 && mapped[1].abs() < 1e-12);
        // velocity (0, 10) along the heading becomes (10, 0)
        assert!((a.vx - 10.0).abs() < 1e-12 && a.vy.abs() < 1e-12);
        assert!(!out.scene.get(1, 0).valid && out.scene.get(1, 0).is_zero_filled());
        assert_eq!(out.map[0].points[3], [0.0, 0.0]);
    }

    #[test]
    fn invalid_anchor_is_rejected() {
        let s = two_agent_scenario();
        assert!(matches!(
            normalize_scene(&s, 1, 0),
            Err(SceneError::InvalidAnchor { agent: 1, time: 0 })
        ));
    }

    #[test]
    fn normalizing_twice_is_identity() {
        let s = two_agent_scenario();
        let (once, _) = normalize_scene(&s, 0, 2).unwrap();
        let (_, tf) = normalize_scene(&once, 0, 2).unwrap();
        assert!(tf.is_identity());
    }
}
