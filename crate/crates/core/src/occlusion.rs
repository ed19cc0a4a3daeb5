//! Occlusion auto-labeling from an ego viewpoint.
//!
//! Non-ego agents are rasterized as oriented rectangles into an ego-centred,
//! world-axis-aligned occupancy grid. Visibility of a cell is decided by
//! walking the grid cells crossed by the segment from the ego position to
//! the cell centre; the cell is occluded iff some cell strictly between the
//! two is occupied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;
use crate::scene::{AgentState, SceneTensor};

#[derive(Debug, Error, PartialEq)]
pub enum OcclusionError {
    #[error("no agent is valid over the whole history")]
    NoEligibleAgent,
    #[error("ego agent {ego} is not valid at timestep {t}")]
    InvalidEgo { ego: usize, t: usize },
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Meters per cell.
    pub resolution: f64,
    /// The grid spans the ego position +- this many meters on both axes.
    pub half_extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 0.5,
            half_extent: 60.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), OcclusionError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(OcclusionError::InvalidGrid("resolution must be positive".into()));
        }
        if !(self.half_extent >= self.resolution && self.half_extent.is_finite()) {
            return Err(OcclusionError::InvalidGrid(
                "half_extent must be at least one cell".into(),
            ));
        }
        Ok(())
    }

    /// Cells per axis, `ceil(2 * half_extent / resolution)`.
    pub fn cells(&self) -> usize {
        (2.0 * self.half_extent / self.resolution - 1e-9).ceil() as usize
    }

    /// Continuous grid coordinates (in cells) of a world point.
    fn to_grid(&self, origin: [f64; 2], p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - origin[0] + self.half_extent) / self.resolution,
            (p[1] - origin[1] + self.half_extent) / self.resolution,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    /// World position of the ego, which sits at the grid centre.
    pub origin: [f64; 2],
    pub width: usize,
    /// Row-major `[row = y][col = x]`.
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(spec: GridSpec, origin: [f64; 2]) -> Self {
        let width = spec.cells();
        Self {
            spec,
            origin,
            width,
            occupied: vec![false; width * width],
        }
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.occupied[row * self.width + col]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    /// Grid cell holding a world point, if inside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        cell_of(&self.spec, self.width, self.origin, p)
    }

    /// World coordinates of a cell centre.
    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        let r = self.spec.resolution;
        [
            self.origin[0] - self.spec.half_extent + (col as f64 + 0.5) * r,
            self.origin[1] - self.spec.half_extent + (row as f64 + 0.5) * r,
        ]
    }
}

fn cell_of(spec: &GridSpec, width: usize, origin: [f64; 2], p: [f64; 2]) -> Option<(usize, usize)> {
    let [gx, gy] = spec.to_grid(origin, p);
    if gx < 0.0 || gy < 0.0 {
        return None;
    }
    let (c, r) = (gx.floor() as usize, gy.floor() as usize);
    (c < width && r < width).then_some((c, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVisibility {
    Visible,
    Occluded,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGrid {
    pub width: usize,
    pub state: Vec<CellVisibility>,
}

impl VisibilityGrid {
    pub fn get(&self, col: usize, row: usize) -> CellVisibility {
        self.state[row * self.width + col]
    }
}

/// Per agent, per timestep occlusion flags from one ego viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionLabels {
    pub scenario_id: String,
    pub ego_index: usize,
    pub n: usize,
    pub t: usize,
    /// Row-major `[n][t]`.
    pub occluded: Vec<bool>,
}

impl OcclusionLabels {
    pub fn is_occluded(&self, agent: usize, t: usize) -> bool {
        self.occluded[agent * self.t + t]
    }

    /// Flags restricted to the first `t_obs` timesteps, row-major `[n][t_obs]`.
    pub fn history(&self, t_obs: usize) -> Vec<bool> {
        (0..self.n)
            .flat_map(|a| (0..t_obs).map(move |c| (a, c)))
            .map(|(a, c)| self.is_occluded(a, c))
            .collect()
    }

    /// Agents with at least one occluded and one visible valid history cell.
    pub fn partially_occluded(&self, scene: &SceneTensor) -> Vec<usize> {
        (0..self.n)
            .filter(|&a| a != self.ego_index)
            .filter(|&a| {
                let hist = 0..scene.t_obs;
                let any_occ = hist.clone().any(|c| self.is_occluded(a, c));
                let any_vis = hist
                    .clone()
                    .any(|c| scene.get(a, c).valid && !self.is_occluded(a, c));
                any_occ && any_vis
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    scenario_id: String,
    ego_index: usize,
    occluded: Vec<Vec<bool>>,
}

impl Serialize for OcclusionLabels {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LabelRecord {
            scenario_id: self.scenario_id.clone(),
            ego_index: self.ego_index,
            occluded: self.occluded.chunks(self.t.max(1)).map(|r| r.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OcclusionLabels {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = LabelRecord::deserialize(d)?;
        let n = rec.occluded.len();
        let t = rec.occluded.first().map_or(0, |r| r.len());
        if rec.occluded.iter().any(|r| r.len() != t) {
            return Err(serde::de::Error::custom("ragged occlusion rows"));
        }
        if rec.ego_index >= n.max(1) {
            return Err(serde::de::Error::custom("ego_index out of range"));
        }
        Ok(OcclusionLabels {
            scenario_id: rec.scenario_id,
            ego_index: rec.ego_index,
            n,
            t,
            occluded: rec.occluded.into_iter().flatten().collect(),
        })
    }
}

/// Seeded uniform choice among agents valid at every history timestep.
pub fn select_ego(scene: &SceneTensor, seed: u64) -> Result<usize, OcclusionError> {
    let eligible: Vec<usize> = (0..scene.n_agents)
        .filter(|&a| (0..scene.t_obs).all(|t| scene.get(a, t).valid))
        .collect();
    if eligible.is_empty() {
        return Err(OcclusionError::NoEligibleAgent);
    }
    let pick = CounterRng::new(seed).below(eligible.len() as u64) as usize;
    Ok(eligible[pick])
}

/// Corners of an agent footprint in world coordinates.
pub fn footprint_corners(s: &AgentState) -> [[f64; 2]; 4] {
    let (sin, cos) = s.heading.sin_cos();
    let (hl, hw) = (s.length / 2.0, s.width / 2.0);
    let u = [cos * hl, sin * hl];
    let v = [-sin * hw, cos * hw];
    [
        [s.x + u[0] + v[0], s.y + u[1] + v[1]],
        [s.x - u[0] + v[0], s.y - u[1] + v[1]],
        [s.x - u[0] - v[0], s.y - u[1] - v[1]],
        [s.x + u[0] - v[0], s.y + u[1] - v[1]],
    ]
}

fn project(points: &[[f64; 2]], axis: [f64; 2]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p[0] * axis[0] + p[1] * axis[1];
        (lo.min(d), hi.max(d))
    })
}

/// True when the convex quads share interior area (touching does not count).
fn quads_overlap(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4], axes: &[[f64; 2]]) -> bool {
    axes.iter().all(|&axis| {
        let (a0, a1) = project(a, axis);
        let (b0, b1) = project(b, axis);
        a1 > b0 && b1 > a0
    })
}

/// Grid cells overlapped by one agent's footprint.
fn footprint_cells(s: &AgentState, spec: &GridSpec, width: usize, origin: [f64; 2]) -> Vec<usize> {
    if s.length <= 0.0 && s.width <= 0.0 {
        return cell_of(spec, width, origin, [s.x, s.y])
            .map(|(c, r)| vec![r * width + c])
            .into_iter()
            .flatten()
            .collect();
    }
    let corners = footprint_corners(s);
    let r = spec.resolution;
    let (sin, cos) = s.heading.sin_cos();
    let axes = [[1.0, 0.0], [0.0, 1.0], [cos, sin], [-sin, cos]];
    let gx: Vec<f64> = corners.iter().map(|p| spec.to_grid(origin, *p)[0]).collect();
    let gy: Vec<f64> = corners.iter().map(|p| spec.to_grid(origin, *p)[1]).collect();
    let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min).floor().max(0.0);
    let hi = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor();
    let (c0, c1) = (lo(&gx), hi(&gx).min(width as f64 - 1.0));
    let (r0, r1) = (lo(&gy), hi(&gy).min(width as f64 - 1.0));
    if c1 < c0 || r1 < r0 {
        return Vec::new();
    }
    let x_min = origin[0] - spec.half_extent;
    let y_min = origin[1] - spec.half_extent;
    let mut out = Vec::new();
    for row in r0 as usize..=r1 as usize {
        for col in c0 as usize..=c1 as usize {
            let (x0, y0) = (x_min + col as f64 * r, y_min + row as f64 * r);
            let cell = [[x0, y0], [x0 + r, y0], [x0 + r, y0 + r], [x0, y0 + r]];
            if quads_overlap(&corners, &cell, &axes) {
                out.push(row * width + col);
            }
        }
    }
    out
}

/// Occupancy at timestep `t` from the ego's position, leaving out the ego
/// and any agent listed in `exclude`.
pub fn rasterize_agents_excluding(
    scene: &SceneTensor,
    t: usize,
    ego_index: usize,
    exclude: &[usize],
    spec: &GridSpec,
) -> OccupancyGrid {
    let ego = scene.get(ego_index, t);
    let mut grid = OccupancyGrid::empty(*spec, [ego.x, ego.y]);
    for a in 0..scene.n_agents {
        let s = scene.get(a, t);
        if a == ego_index || !s.valid || exclude.contains(&a) {
            continue;
        }
        for c in footprint_cells(s, spec, grid.width, grid.origin) {
            grid.occupied[c] = true;
        }
    }
    grid
}

pub fn rasterize_agents(scene: &SceneTensor, t: usize, ego_index: usize, spec: &GridSpec) -> OccupancyGrid {
    rasterize_agents_excluding(scene, t, ego_index, &[], spec)
}

/// Walks the cells crossed by the segment `p0 -> p1` (grid coordinates, in
/// cells) in order, calling `visit(col, row)`; stops early when `visit`
/// returns false. When the segment passes exactly through a grid vertex
/// both axes advance together, so neither corner-adjacent cell is visited.
pub fn walk_ray(p0: [f64; 2], p1: [f64; 2], mut visit: impl FnMut(i64, i64) -> bool) {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let start = |x: f64, dx: f64| -> (i64, f64) {
        if dx > 0.0 {
            let i = x.floor();
            (i as i64, i + 1.0 - x)
        } else if dx < 0.0 {
            let i = x.ceil() - 1.0;
            (i as i64, x - i)
        } else {
            (x.floor() as i64, f64::INFINITY)
        }
    };
    let (mut ix, mut nx) = start(p0[0], d[0]);
    let (mut iy, mut ny) = start(p0[1], d[1]);
    let (ax, ay) = (d[0].abs(), d[1].abs());
    let sx = if d[0] > 0.0 { 1 } else { -1 };
    let sy = if d[1] > 0.0 { 1 } else { -1 };
    // Crossing parameters are nx/ax and ny/ay; compared by cross-multiplying.
    let max_steps = (ax.ceil() + ay.ceil()) as usize + 4;
    for _ in 0..max_steps {
        if !visit(ix, iy) {
            return;
        }
        let x_done = ax == 0.0 || nx >= ax;
        let y_done = ay == 0.0 || ny >= ay;
        if x_done && y_done {
            return;
        }
        let step_x = !x_done && (y_done || nx * ay <= ny * ax);
        let step_y = !y_done && (x_done || ny * ax <= nx * ay);
        if step_x {
            ix += sx;
            nx += 1.0;
        }
        if step_y {
            iy += sy;
            ny += 1.0;
        }
    }
}

/// Whether some cell strictly between the start and end cells of the
/// segment is occupied according to `occupied(col, row)`.
fn ray_blocked(p0: [f64; 2], p1: [f64; 2], width: usize, occupied: impl Fn(usize) -> bool) -> bool {
    let mut cells = Vec::new();
    walk_ray(p0, p1, |c, r| {
        cells.push((c, r));
        true
    });
    if cells.len() <= 2 {
        return false;
    }
    cells[1..cells.len() - 1].iter().any(|&(c, r)| {
        c >= 0 && r >= 0 && (c as usize) < width && (r as usize) < width && occupied(r as usize * width + c as usize)
    })
}

fn in_range(spec: &GridSpec, origin: [f64; 2], p: [f64; 2]) -> bool {
    let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
    (dx * dx + dy * dy).sqrt() <= spec.half_extent
}

/// Visibility of every grid cell from the grid centre.
///
/// Cells whose centre lies farther than `half_extent` from the ego are
/// out of range; the rest are occluded iff an occupied cell lies strictly
/// between the ego cell and them along the traced ray.
pub fn trace_visibility(grid: &OccupancyGrid, spec: &GridSpec) -> VisibilityGrid {
    let w = grid.width;
    let origin_g = spec.to_grid(grid.origin, grid.origin);
    let mut state = Vec::with_capacity(w * w);
    for row in 0..w {
        for col in 0..w {
            let center = grid.cell_center(col, row);
            if !in_range(spec, grid.origin, center) {
                state.push(CellVisibility::OutOfRange);
                continue;
            }
            let target = [col as f64 + 0.5, row as f64 + 0.5];
            let blocked = ray_blocked(origin_g, target, w, |i| grid.occupied[i]);
            state.push(if blocked {
                CellVisibility::Occluded
            } else {
                CellVisibility::Visible
            });
        }
    }
    VisibilityGrid { width: w, state }
}

/// Labels every non-ego agent at every timestep as occluded or not.
///
/// At each timestep the occupancy grid excludes the ego and the agent being
/// queried; the agent is occluded iff the cell holding its centre is
/// occluded or out of range. Cells where the agent is invalid are never
/// occluded. The ego must be valid over the history; future timesteps
/// where the ego is invalid carry no labels.
pub fn label_occluded_agents(
    scene: &SceneTensor,
    ego_index: usize,
    spec: &GridSpec,
) -> Result<OcclusionLabels, OcclusionError> {
    spec.validate()?;
    if ego_index >= scene.n_agents {
        return Err(OcclusionError::InvalidEgo { ego: ego_index, t: 0 });
    }
    if let Some(t) = (0..scene.t_obs).find(|&t| !scene.get(ego_index, t).valid) {
        return Err(OcclusionError::InvalidEgo { ego: ego_index, t });
    }
    let (n, tt) = (scene.n_agents, scene.t_total);
    let width = spec.cells();
    let mut occluded = vec![false; n * tt];
    for t in 0..tt {
        let ego = scene.get(ego_index, t);
        if !ego.valid {
            continue;
        }
        let origin = [ego.x, ego.y];
        let footprints: Vec<Vec<usize>> = (0..n)
            .map(|a| {
                let s = scene.get(a, t);
                if a == ego_index || !s.valid {
                    Vec::new()
                } else {
                    footprint_cells(s, spec, width, origin)
                }
            })
            .collect();
        let mut counts = vec![0u16; width * width];
        for fp in &footprints {
            for &c in fp {
                counts[c] += 1;
            }
        }
        let origin_g = spec.to_grid(origin, origin);
        for a in 0..n {
            let s = scene.get(a, t);
            if a == ego_index || !s.valid {
                continue;
            }
            let label = match cell_of(spec, width, origin, [s.x, s.y]) {
                None => true,
                Some((col, row)) => {
                    let center = [
                        origin[0] - spec.half_extent + (col as f64 + 0.5) * spec.resolution,
                        origin[1] - spec.half_extent + (row as f64 + 0.5) * spec.resolution,
                    ];
                    if !in_range(spec, origin, center) {
                        true
                    } else {
                        let own = &footprints[a];
                        let target = [col as f64 + 0.5, row as f64 + 0.5];
                        ray_blocked(origin_g, target, width, |i| {
                            let self_hit = own.contains(&i) as u16;
                            counts[i] > self_hit
                        })
                    }
                }
            };
            occluded[a * tt + t] = label;
        }
    }
    Ok(OcclusionLabels {
        scenario_id: scene.scenario_id.clone(),
        ego_index,
        n,
        t: tt,
        occluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::AgentKind;

    fn agent(x: f64, y: f64, l: f64, w: f64) -> AgentState {
        AgentState {
            x,
            y,
            heading: 0.0,
            vx: 0.0,
            vy: 0.0,
            length: l,
            width: w,
            kind: AgentKind::Vehicle,
            valid: true,
        }
    }

    fn scene_with(agents: &[AgentState]) -> SceneTensor {
        let mut s = SceneTensor::new("occ", agents.len(), 3, 2, 0, 0.1);
        for (i, a) in agents.iter().enumerate() {
            for t in 0..3 {
                *s.get_mut(i, t) = *a;
            }
        }
        s
    }

    #[test]
    fn cell_count_formula() {
        let spec = GridSpec::default();
        assert_eq!(spec.cells(), 240);
        assert_eq!(GridSpec { resolution: 0.25, half_extent: 60.0 }.cells(), 480);
        assert_eq!(GridSpec { resolution: 0.7, half_extent: 1.0 }.cells(), 3);
    }

    #[test]
    fn ego_only_scene_has_free_grid() {
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0)]);
        let g = rasterize_agents(&s, 0, 0, &GridSpec { resolution: 1.0, half_extent: 5.0 });
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn centred_two_by_two_agent_covers_four_cells() {
        let spec = GridSpec { resolution: 1.0, half_extent: 5.0 };
        let s = scene_with(&[agent(0.0, 0.0, 0.0, 0.0), agent(0.0, 0.0, 2.0, 2.0)]);
        let g = rasterize_agents(&s, 0, 0, &spec);
        assert_eq!(g.occupied_count(), 4);
        for (c, r) in [(4, 4), (4, 5), (5, 4), (5, 5)] {
            assert!(g.is_occupied(c, r));
        }
    }

    #[test]
    fn zero_size_and_outside_agents() {
        let spec = GridSpec { resolution: 1.0, half_extent: 5.0 };
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(1.2, 2.7, 0.0, 0.0), agent(50.0, 0.0, 4.0, 2.0)]);
        let g = rasterize_agents(&s, 0, 0, &spec);
        assert_eq!(g.occupied_count(), 1);
        assert!(g.is_occupied(6, 7));
    }

    #[test]
    fn empty_grid_is_visible_in_range() {
        let spec = GridSpec { resolution: 1.0, half_extent: 8.0 };
        let g = OccupancyGrid::empty(spec, [0.0, 0.0]);
        let v = trace_visibility(&g, &spec);
        assert!(v.state.iter().all(|s| *s != CellVisibility::Occluded));
        assert_eq!(v.get(8, 8), CellVisibility::Visible);
        assert_eq!(v.get(0, 0), CellVisibility::OutOfRange);
    }

    #[test]
    fn single_blocker_shadows_cells_behind_it() {
        let spec = GridSpec { resolution: 1.0, half_extent: 10.0 };
        let mut g = OccupancyGrid::empty(spec, [0.0, 0.0]);
        // blocker at x in [3, 4), y in [0, 1)
        g.occupied[10 * g.width + 13] = true;
        let v = trace_visibility(&g, &spec);
        assert_eq!(v.get(13, 10), CellVisibility::Visible);
        for col in 14..20 {
            assert_eq!(v.get(col, 10), CellVisibility::Occluded, "col {col}");
        }
        assert_eq!(v.get(12, 10), CellVisibility::Visible);
        assert_eq!(v.get(13, 14), CellVisibility::Visible);
    }

    #[test]
    fn walk_ray_diagonal_skips_corner_neighbours() {
        let mut cells = Vec::new();
        walk_ray([0.0, 0.0], [2.5, 2.5], |c, r| {
            cells.push((c, r));
            true
        });
        assert_eq!(cells, vec![(0, 0), (1, 1), (2, 2)]);
        cells.clear();
        walk_ray([2.0, 2.0], [0.5, 2.5], |c, r| {
            cells.push((c, r));
            true
        });
        assert_eq!(cells, vec![(1, 2), (0, 2)]);
    }

    #[test]
    fn blocker_between_ego_and_target() {
        let spec = GridSpec::default();
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(5.0, 0.0, 2.0, 2.0), agent(10.0, 0.0, 4.0, 2.0)]);
        let labels = label_occluded_agents(&s, 0, &spec).unwrap();
        assert!(labels.is_occluded(2, 0));
        assert!(!labels.is_occluded(1, 0));
        assert!(!labels.is_occluded(0, 0));
    }

    #[test]
    fn nothing_between_means_visible() {
        let spec = GridSpec::default();
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(0.0, 10.0, 4.0, 2.0)]);
        let labels = label_occluded_agents(&s, 0, &spec).unwrap();
        assert!(labels.occluded.iter().all(|o| !o));
    }

    #[test]
    fn far_agents_are_occluded_and_invalid_cells_are_not() {
        let spec = GridSpec { resolution: 0.5, half_extent: 20.0 };
        let mut s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(30.0, 0.0, 4.0, 2.0), agent(0.0, 5.0, 4.0, 2.0)]);
        *s.get_mut(2, 1) = AgentState::EMPTY;
        let labels = label_occluded_agents(&s, 0, &spec).unwrap();
        assert!(labels.is_occluded(1, 0));
        assert!(!labels.is_occluded(2, 1));
    }

    #[test]
    fn invalid_ego_is_rejected() {
        let mut s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(3.0, 0.0, 4.0, 2.0)]);
        *s.get_mut(0, 1) = AgentState::EMPTY;
        assert_eq!(
            label_occluded_agents(&s, 0, &GridSpec::default()),
            Err(OcclusionError::InvalidEgo { ego: 0, t: 1 })
        );
    }

    #[test]
    fn select_ego_single_and_repeatable() {
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0)]);
        assert_eq!(select_ego(&s, 5).unwrap(), 0);
        let s = scene_with(&[agent(0.0, 0.0, 4.0, 2.0), agent(3.0, 0.0, 4.0, 2.0), agent(6.0, 0.0, 4.0, 2.0)]);
        assert_eq!(select_ego(&s, 11).unwrap(), select_ego(&s, 11).unwrap());
        let mut none = s.clone();
        for a in 0..3 {
            *none.get_mut(a, 0) = AgentState::EMPTY;
        }
        assert_eq!(select_ego(&none, 0), Err(OcclusionError::NoEligibleAgent));
    }

    #[test]
    fn labels_json_layout() {
        let labels = OcclusionLabels {
            scenario_id: "x".into(),
            ego_index: 1,
            n: 2,
            t: 3,
            occluded: vec![true, false, false, false, false, true],
        };
        let text = serde_json::to_string(&labels).unwrap();
        assert_eq!(
            text,
            r#"{"scenario_id":"x","ego_index":1,"occluded":[[true,false,false],[false,false,true]]}"#
        );
        let back: OcclusionLabels = serde_json::from_str(&text).unwrap();
        assert_eq!(back, labels);
    }
}
