//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's algorithms.

#![allow(dead_code)]

/// Stateful SplitMix64 stream: `state += gamma; return mix(state)`.
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next()) * n as u128) >> 64) as usize
    }
}

/// Documented pointwise sampler: row-major valid cells, partial
/// Fisher-Yates, first `floor(ratio * V)` slots hidden.
pub fn reference_pointwise(n: usize, t: usize, valid: &[bool], ratio: f64, seed: u64) -> Vec<bool> {
    let mut pool: Vec<usize> = (0..n * t).filter(|&i| valid[i]).collect();
    let k = (ratio * pool.len() as f64).floor() as usize;
    let mut rng = SplitMix::new(seed);
    for i in 0..k {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    let mut hidden = vec![false; n * t];
    for &c in &pool[..k] {
        hidden[c] = true;
    }
    hidden
}

/// Checks a patchwise mask: hidden valid count in `[target, target+max-1]`
/// and every maximal run of hidden cells in an agent row at least `min`
/// long (runs are unions of whole patches). Returns a description of the
/// first violation.
pub fn check_patchwise(
    n: usize,
    t: usize,
    valid: &[bool],
    hidden: &[bool],
    ratio: f64,
    min: usize,
    max: usize,
) -> Result<(), String> {
    let v = valid.iter().filter(|x| **x).count();
    let target = (ratio * v as f64).floor() as usize;
    let count = (0..n * t).filter(|&i| valid[i] && hidden[i]).count();
    if count < target || count > target + max - 1 {
        return Err(format!("hidden valid count {count} outside [{target}, {}]", target + max - 1));
    }
    for a in 0..n {
        let mut run = 0;
        for c in 0..=t {
            let h = c < t && hidden[a * t + c];
            if h {
                run += 1;
            } else {
                if run > 0 && run < min {
                    return Err(format!("agent {a}: hidden run of {run} shorter than {min}"));
                }
                run = 0;
            }
        }
    }
    Ok(())
}

/// Is mode `m` among the top `k` by probability (ties to the lower index)?
pub fn in_top_k(probs: &[f64], m: usize, k: usize) -> bool {
    let better = (0..probs.len())
        .filter(|&j| probs[j] > probs[m] || (probs[j] == probs[m] && j < m))
        .count();
    better < k
}

/// `traj[mode][t]`, `truth[t]` and `valid[t]` over the future horizon only.
pub fn brute_min_ade(traj: &[Vec<[f64; 2]>], probs: &[f64], truth: &[[f64; 2]], valid: &[bool], k: usize) -> f64 {
    let mut best = f64::INFINITY;
    for m in 0..traj.len() {
        if !in_top_k(probs, m, k) {
            continue;
        }
        let mut sum = 0.0;
        let mut cnt = 0;
        for t in 0..truth.len() {
            if valid[t] {
                let dx = traj[m][t][0] - truth[t][0];
                let dy = traj[m][t][1] - truth[t][1];
                sum += (dx * dx + dy * dy).sqrt();
                cnt += 1;
            }
        }
        best = best.min(sum / cnt as f64);
    }
    best
}

pub fn brute_min_fde(traj: &[Vec<[f64; 2]>], probs: &[f64], truth: &[[f64; 2]], valid: &[bool], k: usize) -> f64 {
    let last = (0..truth.len()).rev().find(|&t| valid[t]).expect("a valid future cell");
    (0..traj.len())
        .filter(|&m| in_top_k(probs, m, k))
        .map(|m| {
            let dx = traj[m][last][0] - truth[last][0];
            let dy = traj[m][last][1] - truth[last][1];
            (dx * dx + dy * dy).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Oriented rectangle: centre, heading, length along heading, width across.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Rect {
    fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        let dx = p[0] - self.cx;
        let dy = p[1] - self.cy;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn contains_strict(&self, p: [f64; 2]) -> bool {
        let l = self.to_local(p);
        l[0].abs() < self.length / 2.0 && l[1].abs() < self.width / 2.0
    }

    /// Does the open segment `p0 -> p1` pass through the rectangle interior?
    /// Liang-Barsky clipping in the rectangle frame.
    pub fn segment_hits(&self, p0: [f64; 2], p1: [f64; 2]) -> bool {
        let a = self.to_local(p0);
        let b = self.to_local(p1);
        let d = [b[0] - a[0], b[1] - a[1]];
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (axis, half) in [(0, self.length / 2.0), (1, self.width / 2.0)] {
            for (p, q) in [(-d[axis], a[axis] + half), (d[axis], half - a[axis])] {
                if p == 0.0 {
                    if q <= 0.0 {
                        return false;
                    }
                } else {
                    let r = q / p;
                    if p < 0.0 {
                        lo = lo.max(r);
                    } else {
                        hi = hi.min(r);
                    }
                }
            }
        }
        lo < hi
    }
}

/// Cells of a `cells x cells` grid (square cells of size `res`, lower-left
/// corner at `origin`) whose interior overlaps the rectangle, estimated by
/// `ss x ss` supersampling per cell.
pub fn supersample_cells(rect: &Rect, origin: [f64; 2], res: f64, cells: usize, ss: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for row in 0..cells {
        for col in 0..cells {
            let mut hit = false;
            'outer: for i in 0..ss {
                for j in 0..ss {
                    let p = [
                        origin[0] + (col as f64 + (i as f64 + 0.5) / ss as f64) * res,
                        origin[1] + (row as f64 + (j as f64 + 0.5) / ss as f64) * res,
                    ];
                    if rect.contains_strict(p) {
                        hit = true;
                        break 'outer;
                    }
                }
            }
            if hit {
                out.push((col, row));
            }
        }
    }
    out
}

/// Continuous visibility: is the segment from `eye` to `target` blocked by
/// a rectangle lying between them? A rectangle containing either endpoint
/// overlaps the observer or the target body and is not an occluder.
pub fn continuous_blocked(eye: [f64; 2], target: [f64; 2], blockers: &[Rect]) -> bool {
    blockers
        .iter()
        .any(|r| !r.contains_strict(eye) && !r.contains_strict(target) && r.segment_hits(eye, target))
}

/// Shortest distance from `p` to a point whose continuous visibility
/// differs from `p`'s, estimated by sampling circles of radius `r` in
/// steps of `step` up to `max_r`. Returns `max_r` when none is found.
pub fn distance_to_shadow_boundary(eye: [f64; 2], p: [f64; 2], blockers: &[Rect], step: f64, max_r: f64) -> f64 {
    let here = continuous_blocked(eye, p, blockers);
    let mut r = step;
    while r <= max_r {
        let n = ((2.0 * std::f64::consts::PI * r / step).ceil() as usize).max(8);
        for i in 0..n {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let q = [p[0] + r * a.cos(), p[1] + r * a.sin()];
            if continuous_blocked(eye, q, blockers) != here {
                return r;
            }
        }
        r += step;
    }
    max_r
}

impl Rect {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.heading.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]].map(|[u, v]| [self.cx + c * u - s * v, self.cy + s * u + c * v])
    }
}

/// Area of the rectangle inside the axis-aligned box `[x0, x1] x [y0, y1]`
/// (Sutherland-Hodgman clipping, then the shoelace formula).
pub fn overlap_area(rect: &Rect, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let mut poly: Vec<[f64; 2]> = rect.corners().to_vec();
    // Each edge keeps the half-plane `sign * (p[axis] - bound) >= 0`.
    for (axis, bound, sign) in [(0, x0, 1.0), (0, x1, -1.0), (1, y0, 1.0), (1, y1, -1.0)] {
        let inside = |p: &[f64; 2]| sign * (p[axis] - bound) >= 0.0;
        let mut out = Vec::new();
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                out.push(a);
            }
            if ia != ib {
                let t = (bound - a[axis]) / (b[axis] - a[axis]);
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        poly = out;
        if poly.is_empty() {
            return 0.0;
        }
    }
    let mut area = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        area += a[0] * b[1] - b[0] * a[1];
    }
    area.abs() / 2.0
}

/// Vehicle-sized rectangles, the first at the origin, the rest uniform in
/// `+-30 m` with centres at least 6 m apart so that no two bodies overlap.
pub fn random_traffic(seed: u64, n: usize) -> Vec<Rect> {
    let mut rng = SplitMix::new(seed);
    let mut unit = move || (rng.next() >> 11) as f64 / (1u64 << 53) as f64;
    let mut rects: Vec<Rect> = Vec::new();
    while rects.len() < n {
        let first = rects.is_empty();
        let r = Rect {
            cx: if first { 0.0 } else { -30.0 + 60.0 * unit() },
            cy: if first { 0.0 } else { -30.0 + 60.0 * unit() },
            heading: std::f64::consts::PI * (1.0 - 2.0 * unit()),
            length: 3.5 + 1.5 * unit(),
            width: 1.6 + 0.6 * unit(),
        };
        if rects.iter().all(|o| (o.cx - r.cx).hypot(o.cy - r.cy) >= 6.0) {
            rects.push(r);
        }
    }
    rects
}
