//! Pretraining mask profiles, downstream task masks, and mask application.
//!
//! A [`MaskGrid`] marks `[agent][timestep]` cells hidden from the network.
//! Random profiles draw from [`crate::rng::CounterRng`]; the exact
//! sampling procedure of each profile is documented on its function so the
//! masks can be reproduced from the seed alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;
use crate::scene::{AgentState, SceneTensor};

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid mask config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub n: usize,
    pub t: usize,
    /// Row-major `[n][t]`; `true` means hidden.
    pub hidden: Vec<bool>,
}

impl MaskGrid {
    pub fn empty(n: usize, t: usize) -> Self {
        Self {
            n,
            t,
            hidden: vec![false; n * t],
        }
    }

    pub fn full(n: usize, t: usize) -> Self {
        Self {
            n,
            t,
            hidden: vec![true; n * t],
        }
    }

    #[inline]
    pub fn is_hidden(&self, agent: usize, t: usize) -> bool {
        self.hidden[agent * self.t + t]
    }

    #[inline]
    pub fn set(&mut self, agent: usize, t: usize, v: bool) {
        self.hidden[agent * self.t + t] = v;
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden.iter().filter(|h| **h).count()
    }

    /// Cells hidden by `self` that are also hidden by `other`.
    pub fn is_subset_of(&self, other: &MaskGrid) -> bool {
        self.dims() == other.dims()
            && self
                .hidden
                .iter()
                .zip(&other.hidden)
                .all(|(a, b)| !*a || *b)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.t)
    }

    fn check_dims(&self, n: usize, t: usize) -> Result<(), MaskError> {
        if self.dims() != (n, t) {
            return Err(MaskError::DimensionMismatch {
                expected: (n, t),
                got: self.dims(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProfile {
    Pointwise,
    Patchwise,
    Timewise,
}

impl MaskProfile {
    pub const ALL: [MaskProfile; 3] = [
        MaskProfile::Pointwise,
        MaskProfile::Patchwise,
        MaskProfile::Timewise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskProfile::Pointwise => "pointwise",
            MaskProfile::Patchwise => "patchwise",
            MaskProfile::Timewise => "timewise",
        }
    }
}

impl std::str::FromStr for MaskProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pointwise" | "point" => Ok(MaskProfile::Pointwise),
            "patchwise" | "patch" => Ok(MaskProfile::Patchwise),
            "timewise" | "time" | "time-only" => Ok(MaskProfile::Timewise),
            other => Err(format!("unknown mask profile `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskProfileConfig {
    pub profile: MaskProfile,
    pub ratio: f64,
    pub patch_len_min: usize,
    pub patch_len_max: usize,
    pub seed: u64,
}

impl Default for MaskProfileConfig {
    fn default() -> Self {
        Self {
            profile: MaskProfile::Pointwise,
            ratio: 0.75,
            patch_len_min: 2,
            patch_len_max: 5,
            seed: 0,
        }
    }
}

impl MaskProfileConfig {
    pub fn validate(&self, t: usize) -> Result<(), MaskError> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(MaskError::InvalidConfig(format!(
                "ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        if self.profile == MaskProfile::Patchwise
            && !(1 <= self.patch_len_min
                && self.patch_len_min <= self.patch_len_max
                && self.patch_len_max <= t)
        {
            return Err(MaskError::InvalidConfig(format!(
                "need 1 <= patch_len_min <= patch_len_max <= {t}, got [{}, {}]",
                self.patch_len_min, self.patch_len_max
            )));
        }
        Ok(())
    }

    /// Samples this profile with the config's own seed.
    pub fn sample(&self, n: usize, t: usize, valid: &[bool]) -> Result<MaskGrid, MaskError> {
        self.sample_with_seed(n, t, valid, self.seed)
    }

    pub fn sample_with_seed(
        &self,
        n: usize,
        t: usize,
        valid: &[bool],
        seed: u64,
    ) -> Result<MaskGrid, MaskError> {
        self.validate(t)?;
        match self.profile {
            MaskProfile::Pointwise => Ok(sample_pointwise_mask(n, t, valid, self.ratio, seed)),
            MaskProfile::Patchwise => sample_patchwise_mask(
                n,
                t,
                valid,
                self.ratio,
                self.patch_len_min,
                self.patch_len_max,
                seed,
            ),
            MaskProfile::Timewise => Ok(sample_timewise_mask(n, t, valid, self.ratio, seed)),
        }
    }
}

/// `floor(ratio * count)`.
pub fn target_count(ratio: f64, count: usize) -> usize {
    (ratio * count as f64).floor() as usize
}

/// Hides `floor(ratio * V)` of the `V` valid cells.
///
/// Valid cells are listed in row-major order and the first
/// `floor(ratio * V)` slots of a seeded partial Fisher-Yates shuffle are
/// hidden. Invalid cells are never selected.
pub fn sample_pointwise_mask(n: usize, t: usize, valid: &[bool], ratio: f64, seed: u64) -> MaskGrid {
    assert_eq!(valid.len(), n * t, "validity grid must be n*t");
    assert!((0.0..=1.0).contains(&ratio), "ratio must lie in [0, 1]");
    let cells: Vec<usize> = (0..n * t).filter(|&i| valid[i]).collect();
    let k = target_count(ratio, cells.len());
    let mut mask = MaskGrid::empty(n, t);
    for i in CounterRng::new(seed).choose(&cells, k) {
        mask.hidden[i] = true;
    }
    mask
}

/// Hides whole per-agent time intervals until at least `floor(ratio * V)`
/// valid cells are hidden.
///
/// Each round draws a length `L = min + below(max - min + 1)`, lists every
/// `(agent, start)` in row-major order whose interval `[start, start + L)`
/// lies inside the horizon, does not overlap an earlier patch of that agent
/// and covers at least one valid cell not yet hidden, then picks one
/// uniformly with `below(len)`. If no interval of length `L` fits, shorter
/// lengths down to `min` are tried in turn. When nothing of length `min`
/// fits, one maximal free gap holding a valid unhidden cell is picked with
/// `below(gaps)` and hidden whole, which lengthens the patch it borders.
/// Stops as soon as the target is reached, so the overshoot is below `max`.
pub fn sample_patchwise_mask(
    n: usize,
    t: usize,
    valid: &[bool],
    ratio: f64,
    patch_len_min: usize,
    patch_len_max: usize,
    seed: u64,
) -> Result<MaskGrid, MaskError> {
    assert_eq!(valid.len(), n * t, "validity grid must be n*t");
    assert!((0.0..=1.0).contains(&ratio), "ratio must lie in [0, 1]");
    if !(1 <= patch_len_min && patch_len_min <= patch_len_max && patch_len_max <= t) {
        return Err(MaskError::InvalidConfig(format!(
            "need 1 <= patch_len_min <= patch_len_max <= {t}, got [{patch_len_min}, {patch_len_max}]"
        )));
    }
    let v = valid.iter().filter(|x| **x).count();
    let target = target_count(ratio, v);
    let mut mask = MaskGrid::empty(n, t);
    let mut hidden = 0usize;
    let mut rng = CounterRng::new(seed);
    while hidden < target {
        let drawn = patch_len_min + rng.below((patch_len_max - patch_len_min + 1) as u64) as usize;
        let mut placed = false;
        for len in (patch_len_min..=drawn).rev() {
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..=t - len).map(move |s| (a, s)))
                .filter(|&(a, s)| {
                    let row = a * t;
                    let free = (s..s + len).all(|c| !mask.hidden[row + c]);
                    free && (s..s + len).any(|c| valid[row + c])
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let (a, s) = candidates[rng.below(candidates.len() as u64) as usize];
            for c in s..s + len {
                mask.set(a, c, true);
                if valid[a * t + c] {
                    hidden += 1;
                }
            }
            placed = true;
            break;
        }
        if !placed {
            // Only gaps shorter than `patch_len_min` remain; each touches an
            // earlier patch, so hiding a whole gap extends that patch.
            let gaps = free_gaps(&mask, valid, n, t);
            assert!(!gaps.is_empty(), "hidden count below target implies a free valid cell");
            let (a, s, len) = gaps[rng.below(gaps.len() as u64) as usize];
            for c in s..s + len {
                mask.set(a, c, true);
                if valid[a * t + c] {
                    hidden += 1;
                }
            }
        }
    }
    Ok(mask)
}

/// Maximal runs `(agent, start, len)` of unhidden cells, row-major, that
/// contain at least one valid cell.
fn free_gaps(mask: &MaskGrid, valid: &[bool], n: usize, t: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n {
        let mut c = 0;
        while c < t {
            if mask.is_hidden(a, c) {
                c += 1;
                continue;
            }
            let s = c;
            while c < t && !mask.is_hidden(a, c) {
                c += 1;
            }
            if (s..c).any(|x| valid[a * t + x]) {
                out.push((a, s, c - s));
            }
        }
    }
    out
}

/// Hides `floor(ratio * t)` whole timesteps for every agent. Columns are the
/// first slots of a seeded partial Fisher-Yates shuffle of `0..t`.
pub fn sample_timewise_mask(n: usize, t: usize, valid: &[bool], ratio: f64, seed: u64) -> MaskGrid {
    assert_eq!(valid.len(), n * t, "validity grid must be n*t");
    assert!((0.0..=1.0).contains(&ratio), "ratio must lie in [0, 1]");
    let cols: Vec<usize> = (0..t).collect();
    let mut mask = MaskGrid::empty(n, t);
    for c in CounterRng::new(seed).choose(&cols, target_count(ratio, t)) {
        for a in 0..n {
            mask.set(a, c, true);
        }
    }
    mask
}

/// Every future timestep of every agent hidden.
pub fn prediction_mask(n: usize, t: usize, t_obs: usize) -> MaskGrid {
    assert!(t_obs < t, "t_obs must be below t");
    let mut mask = MaskGrid::empty(n, t);
    for a in 0..n {
        for c in t_obs..t {
            mask.set(a, c, true);
        }
    }
    mask
}

/// Prediction mask with the ego future left visible.
pub fn conditional_mask(n: usize, t: usize, t_obs: usize, ego_index: usize) -> MaskGrid {
    assert!(ego_index < n, "ego index out of range");
    let mut mask = prediction_mask(n, t, t_obs);
    for c in t_obs..t {
        mask.set(ego_index, c, false);
    }
    mask
}

/// Future cells plus history cells flagged occluded. `occluded` is
/// row-major `[n][t_obs]`.
pub fn occlusion_task_mask(
    n: usize,
    t: usize,
    t_obs: usize,
    occluded: &[bool],
) -> Result<MaskGrid, MaskError> {
    if occluded.len() != n * t_obs {
        return Err(MaskError::DimensionMismatch {
            expected: (n, t_obs),
            got: (occluded.len() / t_obs.max(1), t_obs),
        });
    }
    let mut mask = prediction_mask(n, t, t_obs);
    for a in 0..n {
        for c in 0..t_obs {
            if occluded[a * t_obs + c] {
                mask.set(a, c, true);
            }
        }
    }
    Ok(mask)
}

/// Copy of `scene` with every hidden cell replaced by the zero-filled
/// invalid state.
pub fn apply_mask(scene: &SceneTensor, mask: &MaskGrid) -> Result<SceneTensor, MaskError> {
    mask.check_dims(scene.n_agents, scene.t_total)?;
    let mut out = scene.clone();
    for (s, h) in out.states.iter_mut().zip(&mask.hidden) {
        if *h {
            *s = AgentState::EMPTY;
        }
    }
    Ok(out)
}

/// Fraction of valid cells that are hidden; 0 without valid cells.
pub fn measured_ratio(mask: &MaskGrid, valid: &[bool]) -> f64 {
    assert_eq!(mask.hidden.len(), valid.len(), "mask and validity dims differ");
    let v = valid.iter().filter(|x| **x).count();
    if v == 0 {
        return 0.0;
    }
    let h = mask
        .hidden
        .iter()
        .zip(valid)
        .filter(|(h, v)| **h && **v)
        .count();
    h as f64 / v as f64
}
