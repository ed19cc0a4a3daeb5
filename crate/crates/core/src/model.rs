//! Tiny masked-trajectory autoencoder.
//!
//! Every `[agent][timestep]` cell is one token. Visible cells are embedded
//! from their features, hidden or invalid cells use a learned mask token,
//! and a learned per-timestep embedding plus a mean-pooled map context are
//! added to all tokens. Each encoder block applies pre-norm temporal
//! attention (within an agent, across time), social attention (within a
//! timestep, across agents) and a feed-forward layer, all residual.
//!
//! Two decoders share one architecture: `pretrain_decoder` for trajectory
//! completion and `task_decoder` for the downstream tasks. A decoder emits
//! `K` position hypotheses per cell and `K` scene-level mode logits from the
//! mean-pooled latent.

use std::fs;
use std::path::Path;
use std::rc::Rc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::MaskGrid;
use crate::scene::{AgentKind, MapPolyline, SceneTensor};
use crate::tape::{Mat, NodeId, Tape};

/// Meters per model unit for positions and velocities.
pub const POS_SCALE: f64 = 10.0;
const SIZE_SCALE: f64 = 5.0;
pub const AGENT_FEATURES: usize = 8 + AgentKind::ALL.len();
pub const MAP_FEATURES: usize = 2 + 4;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value detected in {0}")]
    NonFinite(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("io failure: {0}")]
    Io(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub k_modes: usize,
    pub t_total: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_blocks: 2,
            n_heads: 2,
            k_modes: 6,
            t_total: 50,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.k_modes < 1 {
            return bad("k_modes must be at least 1");
        }
        if self.n_blocks < 1 {
            return bad("n_blocks must be at least 1");
        }
        if self.t_total < 1 {
            return bad("t_total must be at least 1");
        }
        if self.dropout != 0.0 {
            return bad("dropout is not supported; use 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderHead {
    Pretrain,
    Task,
}

impl DecoderHead {
    fn prefix(self) -> &'static str {
        match self {
            DecoderHead::Pretrain => "pretrain_decoder",
            DecoderHead::Task => "task_decoder",
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `+-1/sqrt(fan_in)`.
    Weight(usize),
    Zero,
    One,
}

/// Ordered `(name, rows, cols, init)` for every parameter array.
fn param_layout(c: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let d = c.d_model;
    let k = c.k_modes;
    let mut v: Vec<(String, usize, usize, Init)> = Vec::new();
    let mut push = |name: String, r: usize, cc: usize, init: Init| v.push((name, r, cc, init));
    push("embed.input_w".into(), AGENT_FEATURES, d, Init::Weight(AGENT_FEATURES));
    push("embed.input_b".into(), 1, d, Init::Zero);
    push("embed.time".into(), c.t_total, d, Init::Weight(d));
    push("embed.mask_token".into(), 1, d, Init::Weight(d));
    push("map.point_w".into(), MAP_FEATURES, d, Init::Weight(MAP_FEATURES));
    push("map.point_b".into(), 1, d, Init::Zero);
    push("map.out_w".into(), d, d, Init::Weight(d));
    push("map.out_b".into(), 1, d, Init::Zero);
    for b in 0..c.n_blocks {
        for sub in ["temporal", "social"] {
            let p = format!("encoder.block{b}.{sub}");
            push(format!("{p}.ln_gamma"), 1, d, Init::One);
            push(format!("{p}.ln_beta"), 1, d, Init::Zero);
            for m in ["q", "k", "v", "o"] {
                push(format!("{p}.w{m}"), d, d, Init::Weight(d));
                push(format!("{p}.b{m}"), 1, d, Init::Zero);
            }
        }
        let p = format!("encoder.block{b}.ffn");
        push(format!("{p}.ln_gamma"), 1, d, Init::One);
        push(format!("{p}.ln_beta"), 1, d, Init::Zero);
        push(format!("{p}.w1"), d, 2 * d, Init::Weight(d));
        push(format!("{p}.b1"), 1, 2 * d, Init::Zero);
        push(format!("{p}.w2"), 2 * d, d, Init::Weight(2 * d));
        push(format!("{p}.b2"), 1, d, Init::Zero);
    }
    push("encoder.final_ln_gamma".into(), 1, d, Init::One);
    push("encoder.final_ln_beta".into(), 1, d, Init::Zero);
    for head in [DecoderHead::Pretrain, DecoderHead::Task] {
        let p = head.prefix();
        push(format!("{p}.hidden_w"), d, d, Init::Weight(d));
        push(format!("{p}.hidden_b"), 1, d, Init::Zero);
        push(format!("{p}.out_w"), d, 2 * k, Init::Weight(d));
        push(format!("{p}.out_b"), 1, 2 * k, Init::Zero);
        push(format!("{p}.mode_w"), d, k, Init::Weight(d));
        push(format!("{p}.mode_b"), 1, k, Init::Zero);
    }
    v
}

/// Whether a parameter array belongs to the shared encoder (embedding, map
/// context and attention blocks) rather than a decoder.
pub fn is_encoder_array(name: &str) -> bool {
    name.starts_with("embed.") || name.starts_with("map.") || name.starts_with("encoder.")
}

/// Named parameter arrays in a stable order.
pub type ParamSet = IndexMap<String, Mat>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub arrays: ParamSet,
}

impl ModelParams {
    pub fn count(&self) -> usize {
        self.arrays.values().map(|m| m.data.len()).sum()
    }

    pub fn zeros_like(&self) -> ParamSet {
        self.arrays
            .iter()
            .map(|(k, m)| (k.clone(), Mat::zeros(m.rows, m.cols)))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays.values().all(|m| m.data.iter().all(|v| v.is_finite()))
    }
}

pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrays = param_layout(config)
        .into_iter()
        .map(|(name, r, c, init)| {
            let data = match init {
                Init::Zero => vec![0.0; r * c],
                Init::One => vec![1.0; r * c],
                Init::Weight(fan_in) => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    (0..r * c).map(|_| rng.gen_range(-a..a)).collect()
                }
            };
            (name, Mat::from_vec(r, c, data))
        })
        .collect();
    Ok(ModelParams {
        config: *config,
        arrays,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub k: usize,
    pub n: usize,
    pub t: usize,
    /// `[k][n][t]` positions in meters.
    pub trajectories: Vec<[f64; 2]>,
    pub mode_probs: Vec<f64>,
}

impl Forecast {
    #[inline]
    pub fn at(&self, mode: usize, agent: usize, t: usize) -> [f64; 2] {
        self.trajectories[(mode * self.n + agent) * self.t + t]
    }
}

fn agent_features(s: &crate::scene::AgentState) -> [f64; AGENT_FEATURES] {
    let mut f = [0.0; AGENT_FEATURES];
    let (sin, cos) = s.heading.sin_cos();
    f[0] = s.x / POS_SCALE;
    f[1] = s.y / POS_SCALE;
    f[2] = cos;
    f[3] = sin;
    f[4] = s.vx / POS_SCALE;
    f[5] = s.vy / POS_SCALE;
    f[6] = s.length / SIZE_SCALE;
    f[7] = s.width / SIZE_SCALE;
    f[8 + s.kind.index()] = 1.0;
    f
}

struct Graph<'a> {
    tape: Tape,
    params: &'a ModelParams,
    leaves: Vec<Option<NodeId>>,
}

impl<'a> Graph<'a> {
    fn new(params: &'a ModelParams) -> Self {
        Self {
            tape: Tape::new(),
            params,
            leaves: vec![None; params.arrays.len()],
        }
    }

    fn p(&mut self, name: &str) -> NodeId {
        let idx = self
            .params
            .arrays
            .get_index_of(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from layout"));
        if let Some(id) = self.leaves[idx] {
            return id;
        }
        let id = self.tape.leaf(self.params.arrays[idx].clone());
        self.leaves[idx] = Some(id);
        id
    }

    fn linear(&mut self, x: NodeId, prefix: &str, w: &str, b: &str) -> NodeId {
        let wn = self.p(&format!("{prefix}.{w}"));
        let bn = self.p(&format!("{prefix}.{b}"));
        self.tape.linear(x, wn, bn)
    }

    fn layer_norm(&mut self, x: NodeId, gamma: &str, beta: &str) -> NodeId {
        let g = self.p(gamma);
        let b = self.p(beta);
        self.tape.layer_norm(x, g, b)
    }

    fn attention(&mut self, x: NodeId, prefix: &str, groups: Rc<Vec<Vec<usize>>>) -> NodeId {
        let q = self.linear(x, prefix, "wq", "bq");
        let k = self.linear(x, prefix, "wk", "bk");
        let v = self.linear(x, prefix, "wv", "bv");
        let heads = self.params.config.n_heads;
        let a = self.tape.grouped_attention(q, k, v, groups, heads);
        self.linear(a, prefix, "wo", "bo")
    }

    fn encode(&mut self, scene: &SceneTensor, mask: &MaskGrid, map: &[MapPolyline]) -> NodeId {
        let (n, t) = (scene.n_agents, scene.t_total);
        let rows = n * t;
        let mut feats = Mat::zeros(rows, AGENT_FEATURES);
        let mut keep = vec![false; rows];
        for r in 0..rows {
            let s = &scene.states[r];
            if s.valid && !mask.hidden[r] {
                keep[r] = true;
                feats.data[r * AGENT_FEATURES..(r + 1) * AGENT_FEATURES].copy_from_slice(&agent_features(s));
            }
        }
        let x = self.tape.input(feats);
        let emb = self.linear(x, "embed", "input_w", "input_b");
        let token = self.p("embed.mask_token");
        let emb = self.tape.blend(emb, token, Rc::new(keep));

        let time = self.p("embed.time");
        let time_rows = self.gather_time(time, n, t);
        let emb = self.tape.add(emb, time_rows);

        let points: Vec<[f64; MAP_FEATURES]> = map
            .iter()
            .flat_map(|poly| {
                poly.valid_points().iter().map(move |p| {
                    let mut f = [0.0; MAP_FEATURES];
                    f[0] = p[0] / POS_SCALE;
                    f[1] = p[1] / POS_SCALE;
                    f[2 + poly.lane_kind.index()] = 1.0;
                    f
                })
            })
            .collect();
        let pm = Mat::from_vec(points.len(), MAP_FEATURES, points.concat());
        let pm = self.tape.input(pm);
        let ph = self.linear(pm, "map", "point_w", "point_b");
        let ph = self.tape.gelu(ph);
        let pooled = self.tape.mean_rows(ph);
        let ctx = self.linear(pooled, "map", "out_w", "out_b");
        let mut h = self.tape.add_row(emb, ctx);

        let temporal: Rc<Vec<Vec<usize>>> = Rc::new((0..n).map(|a| (a * t..(a + 1) * t).collect()).collect());
        let social: Rc<Vec<Vec<usize>>> = Rc::new((0..t).map(|c| (0..n).map(|a| a * t + c).collect()).collect());
        for b in 0..self.params.config.n_blocks {
            for (sub, groups) in [("temporal", &temporal), ("social", &social)] {
                let p = format!("encoder.block{b}.{sub}");
                let normed = self.layer_norm(h, &format!("{p}.ln_gamma"), &format!("{p}.ln_beta"));
                let a = self.attention(normed, &p, groups.clone());
                h = self.tape.add(h, a);
            }
            let p = format!("encoder.block{b}.ffn");
            let normed = self.layer_norm(h, &format!("{p}.ln_gamma"), &format!("{p}.ln_beta"));
            let f = self.linear(normed, &p, "w1", "b1");
            let f = self.tape.gelu(f);
            let f = self.linear(f, &p, "w2", "b2");
            h = self.tape.add(h, f);
        }
        self.layer_norm(h, "encoder.final_ln_gamma", "encoder.final_ln_beta")
    }

    /// `[n*t x d]` rows repeating the time embedding for every agent, built
    /// as a selection matrix product so gradients flow back to `time`.
    fn gather_time(&mut self, time: NodeId, n: usize, t: usize) -> NodeId {
        let mut sel = Mat::zeros(n * t, t);
        for a in 0..n {
            for c in 0..t {
                sel.data[(a * t + c) * t + c] = 1.0;
            }
        }
        let sel = self.tape.input(sel);
        self.tape.matmul(sel, time)
    }

    /// Returns `(positions [rows x 2K] in model units, logits [1 x K])`.
    fn decode(&mut self, latent: NodeId, head: DecoderHead) -> (NodeId, NodeId) {
        let p = head.prefix();
        let h = self.linear(latent, p, "hidden_w", "hidden_b");
        let h = self.tape.gelu(h);
        let out = self.linear(h, p, "out_w", "out_b");
        let pooled = self.tape.mean_rows(latent);
        let logits = self.linear(pooled, p, "mode_w", "mode_b");
        (out, logits)
    }
}

fn check_inputs(params: &ModelParams, scene: &SceneTensor, mask: &MaskGrid) -> Result<(), ModelError> {
    if scene.t_total != params.config.t_total {
        return Err(ModelError::ShapeMismatch(format!(
            "scene has {} timesteps, model expects {}",
            scene.t_total, params.config.t_total
        )));
    }
    if mask.dims() != (scene.n_agents, scene.t_total) {
        return Err(ModelError::ShapeMismatch(format!(
            "mask is {:?}, scene is {:?}",
            mask.dims(),
            (scene.n_agents, scene.t_total)
        )));
    }
    Ok(())
}

fn ensure_finite(m: &Mat, what: &str) -> Result<(), ModelError> {
    if m.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what.into()))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn to_forecast(out: &Mat, logits: &Mat, n: usize, t: usize, k: usize) -> Forecast {
    let mut trajectories = vec![[0.0; 2]; k * n * t];
    for m in 0..k {
        for r in 0..n * t {
            trajectories[m * n * t + r] = [out.at(r, 2 * m) * POS_SCALE, out.at(r, 2 * m + 1) * POS_SCALE];
        }
    }
    Forecast {
        k,
        n,
        t,
        trajectories,
        mode_probs: softmax(&logits.data),
    }
}

/// Encodes a masked scene into a `[n*t x d_model]` latent.
pub fn encode(
    params: &ModelParams,
    masked_scene: &SceneTensor,
    mask: &MaskGrid,
    map: &[MapPolyline],
) -> Result<Mat, ModelError> {
    check_inputs(params, masked_scene, mask)?;
    let mut g = Graph::new(params);
    let latent = g.encode(masked_scene, mask, map);
    let v = g.tape.value(latent).clone();
    ensure_finite(&v, "encoder output")?;
    Ok(v)
}

/// Decodes a latent for `n` agents into a forecast.
pub fn decode(params: &ModelParams, head: DecoderHead, latent: &Mat, n: usize) -> Result<Forecast, ModelError> {
    ensure_finite(latent, "latent")?;
    let t = params.config.t_total;
    if latent.rows != n * t || latent.cols != params.config.d_model {
        return Err(ModelError::ShapeMismatch(format!(
            "latent is {}x{}, expected {}x{}",
            latent.rows,
            latent.cols,
            n * t,
            params.config.d_model
        )));
    }
    let mut g = Graph::new(params);
    let l = g.tape.input(latent.clone());
    let (out, logits) = g.decode(l, head);
    let f = to_forecast(g.tape.value(out), g.tape.value(logits), n, t, params.config.k_modes);
    if f.trajectories.iter().flatten().chain(&f.mode_probs).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("forecast".into()));
    }
    Ok(f)
}

/// `decode(encode(..))` in one pass.
pub fn predict(
    params: &ModelParams,
    head: DecoderHead,
    masked_scene: &SceneTensor,
    mask: &MaskGrid,
    map: &[MapPolyline],
) -> Result<Forecast, ModelError> {
    let latent = encode(params, masked_scene, mask, map)?;
    decode(params, head, &latent, masked_scene.n_agents)
}

/// Cells whose positions are supervised: flagged in the mask and valid in
/// the target.
fn supervised_cells(target: &SceneTensor, target_mask: &MaskGrid) -> Vec<usize> {
    (0..target.states.len())
        .filter(|&r| target_mask.hidden[r] && target.states[r].valid)
        .collect()
}

/// Per-mode mean squared position error over the supervised cells.
fn mode_errors(
    k: usize,
    cells: &[usize],
    target: &SceneTensor,
    pos: impl Fn(usize, usize) -> [f64; 2],
) -> Vec<f64> {
    (0..k)
        .map(|m| {
            cells
                .iter()
                .map(|&r| {
                    let p = pos(m, r);
                    let s = &target.states[r];
                    (p[0] - s.x).powi(2) + (p[1] - s.y).powi(2)
                })
                .sum::<f64>()
                / cells.len() as f64
        })
        .collect()
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Winner-takes-all loss: the smallest per-mode mean squared position error
/// over supervised cells plus the cross-entropy of the mode probabilities
/// against that winning mode. Zero when nothing is supervised.
pub fn reconstruction_loss(forecast: &Forecast, target: &SceneTensor, target_mask: &MaskGrid) -> Result<f64, ModelError> {
    if (forecast.n, forecast.t) != (target.n_agents, target.t_total) || target_mask.dims() != (forecast.n, forecast.t) {
        return Err(ModelError::ShapeMismatch("forecast, target and mask dimensions differ".into()));
    }
    let cells = supervised_cells(target, target_mask);
    if cells.is_empty() {
        return Ok(0.0);
    }
    let nt = forecast.n * forecast.t;
    let errs = mode_errors(forecast.k, &cells, target, |m, r| forecast.trajectories[m * nt + r]);
    let best = argmin(&errs);
    Ok(errs[best] - forecast.mode_probs[best].ln())
}

/// Loss and its exact gradient with respect to every parameter array.
#[allow(clippy::too_many_arguments)]
pub fn forward_backward(
    params: &ModelParams,
    head: DecoderHead,
    masked_scene: &SceneTensor,
    mask: &MaskGrid,
    map: &[MapPolyline],
    target: &SceneTensor,
    target_mask: &MaskGrid,
) -> Result<(f64, ParamSet), ModelError> {
    check_inputs(params, masked_scene, mask)?;
    if target.states.len() != masked_scene.states.len() || target_mask.dims() != mask.dims() {
        return Err(ModelError::ShapeMismatch("target and input dimensions differ".into()));
    }
    let k = params.config.k_modes;
    let mut g = Graph::new(params);
    let latent = g.encode(masked_scene, mask, map);
    let (out, logits) = g.decode(latent, head);
    let outv = g.tape.value(out);
    let logitv = g.tape.value(logits);
    ensure_finite(outv, "decoder output")?;
    ensure_finite(logitv, "mode logits")?;

    let mut grads = params.zeros_like();
    let cells = supervised_cells(target, target_mask);
    if cells.is_empty() {
        return Ok((0.0, grads));
    }
    let rows = outv.rows;
    let errs = mode_errors(k, &cells, target, |m, r| {
        [outv.at(r, 2 * m) * POS_SCALE, outv.at(r, 2 * m + 1) * POS_SCALE]
    });
    let best = argmin(&errs);
    let mx = logitv.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logitv.data.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    let loss = errs[best] + lse - logitv.data[best];
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss".into()));
    }

    let mut d_out = Mat::zeros(rows, 2 * k);
    let scale = 2.0 * POS_SCALE / cells.len() as f64;
    for &r in &cells {
        let s = &target.states[r];
        d_out.data[r * 2 * k + 2 * best] = scale * (outv.at(r, 2 * best) * POS_SCALE - s.x);
        d_out.data[r * 2 * k + 2 * best + 1] = scale * (outv.at(r, 2 * best + 1) * POS_SCALE - s.y);
    }
    let mut d_logits = Mat::from_vec(1, k, softmax(&logitv.data));
    d_logits.data[best] -= 1.0;

    let adj = g.tape.backward(vec![(out, d_out), (logits, d_logits)]);
    for (i, leaf) in g.leaves.iter().enumerate() {
        if let Some(id) = leaf {
            if let Some(gm) = &adj[id.index()] {
                grads[i] = gm.clone();
            }
        }
    }
    Ok((loss, grads))
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    arrays: IndexMap<String, Vec<f64>>,
}

pub fn checkpoint_to_string(params: &ModelParams) -> Result<String, ModelError> {
    if !params.all_finite() {
        return Err(ModelError::NonFinite("parameters".into()));
    }
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: params.config,
        arrays: params
            .arrays
            .iter()
            .map(|(k, m)| (k.clone(), m.data.clone()))
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| ModelError::Format(e.to_string()))
}

pub fn checkpoint_from_str(text: &str) -> Result<ModelParams, ModelError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        if e.is_eof() {
            ModelError::Io(format!("checkpoint is truncated: {e}"))
        } else {
            ModelError::Format(e.to_string())
        }
    })?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Format("missing format_version".into()))? as u32;
    if found != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(value).map_err(|e| ModelError::Format(e.to_string()))?;
    file.config.validate()?;
    let layout = param_layout(&file.config);
    if layout.len() != file.arrays.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "checkpoint holds {} arrays, config implies {}",
            file.arrays.len(),
            layout.len()
        )));
    }
    let mut arrays = ParamSet::new();
    for ((name, r, c, _), (fname, data)) in layout.into_iter().zip(file.arrays) {
        if name != fname || data.len() != r * c {
            return Err(ModelError::ShapeMismatch(format!(
                "array `{fname}` does not match expected `{name}` ({r}x{c})"
            )));
        }
        arrays.insert(name, Mat::from_vec(r, c, data));
    }
    Ok(ModelParams {
        config: file.config,
        arrays,
    })
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let text = checkpoint_to_string(params)?;
    fs::write(path, text).map_err(|e| ModelError::Io(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| ModelError::Io(e.to_string()))?;
    checkpoint_from_str(&text)
}
