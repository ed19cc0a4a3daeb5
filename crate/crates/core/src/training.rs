//! Pretraining with random mask profiles, task finetuning, encoder transfer
//! and the ablation harness.
//!
//! Every scenario is normalized to its default anchor before masking. Batch
//! elements are evaluated in parallel and their gradients summed in batch
//! order, so results do not depend on the worker count.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::{
    apply_mask, conditional_mask, occlusion_task_mask, prediction_mask, MaskError, MaskGrid, MaskProfile,
    MaskProfileConfig,
};
use crate::metrics::{evaluate, MetricError, Subset};
use crate::model::{
    forward_backward, init_model, is_encoder_array, predict, reconstruction_loss, DecoderHead, ModelConfig,
    ModelError, ModelParams, ParamSet,
};
use crate::occlusion::OcclusionLabels;
use crate::rng::{derive_seed, CounterRng};
use crate::scene::{normalize_default, Scenario, SceneTensor};
use crate::tape::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("non-finite gradient in `{name}`")]
    NonFiniteGradient { name: String },
    #[error("shape mismatch at array `{name}`")]
    ShapeMismatch { name: String },
    #[error("the occlusion task needs occlusion labels for every scenario")]
    MissingLabels,
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 8,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.steps < 1 {
            return bad("steps must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.log_every < 1 {
            return bad("log_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PretrainRandom,
    Predict,
    Conditional,
    Occlusion,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PretrainRandom => "pretrain_random",
            TaskKind::Predict => "predict",
            TaskKind::Conditional => "conditional",
            TaskKind::Occlusion => "occlusion",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain_random" | "pretrain-random" => Ok(TaskKind::PretrainRandom),
            "predict" | "prediction" => Ok(TaskKind::Predict),
            "conditional" => Ok(TaskKind::Conditional),
            "occlusion" | "occluded" => Ok(TaskKind::Occlusion),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// The fixed input mask of a downstream task.
pub fn task_mask(task: TaskKind, scene: &SceneTensor, labels: Option<&OcclusionLabels>) -> Result<MaskGrid, TrainError> {
    let (n, t, t_obs) = (scene.n_agents, scene.t_total, scene.t_obs);
    match task {
        TaskKind::PretrainRandom => Err(TrainError::InvalidConfig(
            "pretrain_random has no fixed task mask".into(),
        )),
        TaskKind::Predict => Ok(prediction_mask(n, t, t_obs)),
        TaskKind::Conditional => Ok(conditional_mask(n, t, t_obs, scene.ego_index)),
        TaskKind::Occlusion => {
            let labels = labels.ok_or(TrainError::MissingLabels)?;
            if (labels.n, labels.t) != (n, t) {
                return Err(TrainError::ShapeMismatch {
                    name: format!("occlusion labels for {}", labels.scenario_id),
                });
            }
            Ok(occlusion_task_mask(n, t, t_obs, &labels.history(t_obs))?)
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: ParamSet = params
            .iter()
            .map(|(k, m)| (k.clone(), Mat::zeros(m.rows, m.cols)))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected adaptive-moment update, in place.
pub fn optimizer_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    for (name, p) in params.iter() {
        let ok = |set: &ParamSet| set.get(name).is_some_and(|g| g.rows == p.rows && g.cols == p.cols);
        if !ok(grads) || !ok(&state.m) || !ok(&state.v) {
            return Err(TrainError::ShapeMismatch { name: name.clone() });
        }
    }
    if grads.len() != params.len() {
        return Err(TrainError::ShapeMismatch {
            name: "gradient set".into(),
        });
    }
    if let Some((name, _)) = grads.iter().find(|(_, g)| g.data.iter().any(|v| !v.is_finite())) {
        return Err(TrainError::NonFiniteGradient { name: name.clone() });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        let m = state.m.get_mut(name).expect("checked above");
        let v = state.v.get_mut(name).expect("checked above");
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * gi;
            v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * gi * gi;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            p.data[i] -= config.learning_rate * mhat / (vhat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub wall_ms: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,wall_ms,loss\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.step, r.wall_ms, r.loss);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "step,wall_ms,loss" => {}
            _ => return Err("missing `step,wall_ms,loss` header".into()),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse_err = || format!("line {}: expected step,wall_ms,loss", i + 2);
            if f.len() != 3 {
                return Err(parse_err());
            }
            rows.push(LogRow {
                step: f[0].trim().parse().map_err(|_| parse_err())?,
                wall_ms: f[1].trim().parse().map_err(|_| parse_err())?,
                loss: f[2].trim().parse().map_err(|_| parse_err())?,
            });
        }
        if rows.is_empty() {
            return Err("log has no rows".into());
        }
        Ok(Self { rows })
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }
}

/// A normalized scenario with its input and supervision masks.
struct Sample {
    input: SceneTensor,
    mask: MaskGrid,
    scenario: Scenario,
    target_mask: MaskGrid,
}

fn check_dataset(dataset: &[Scenario], config: &ModelConfig) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(s) = dataset.iter().find(|s| s.scene.t_total != config.t_total) {
        return Err(TrainError::ShapeMismatch {
            name: format!("scenario {} has t_total {}", s.scene.scenario_id, s.scene.t_total),
        });
    }
    Ok(())
}

fn batch_indices(seed: u64, step: usize, batch: usize, len: usize) -> Vec<usize> {
    let mut rng = CounterRng::new(derive_seed(seed, step as u64));
    (0..batch).map(|_| rng.below(len as u64) as usize).collect()
}

/// Runs the training loop. `samples(step, slot, index)` builds the sample for
/// one batch slot.
fn train_loop<F>(
    params: &mut ModelParams,
    head: DecoderHead,
    len: usize,
    train: &TrainConfig,
    freeze_encoder: bool,
    samples: F,
) -> Result<TrainLog, TrainError>
where
    F: Fn(usize, usize, usize) -> Result<Sample, TrainError> + Sync,
{
    let start = Instant::now();
    let mut state = OptimState::new(&params.arrays);
    let mut log = TrainLog::default();
    for step in 0..train.steps {
        let idx = batch_indices(train.seed, step, train.batch_size, len);
        let batch: Vec<Sample> = idx
            .iter()
            .enumerate()
            .map(|(slot, &i)| samples(step, slot, i))
            .collect::<Result<_, _>>()?;
        let p: &ModelParams = params;
        let results: Vec<Result<(f64, ParamSet), ModelError>> = batch
            .par_iter()
            .map(|s| {
                forward_backward(
                    p,
                    head,
                    &s.input,
                    &s.mask,
                    &s.scenario.map,
                    &s.scenario.scene,
                    &s.target_mask,
                )
            })
            .collect();
        let mut total = 0.0;
        let mut grads = params.zeros_like();
        for r in results {
            let (loss, g) = match r {
                Ok(v) => v,
                Err(ModelError::NonFinite(_)) => return Err(TrainError::Divergence { step: step + 1 }),
                Err(e) => return Err(e.into()),
            };
            total += loss;
            for (acc, gi) in grads.values_mut().zip(g.values()) {
                acc.add_assign(gi);
            }
        }
        let scale = 1.0 / train.batch_size as f64;
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { step: step + 1 });
        }
        for (name, g) in grads.iter_mut() {
            if freeze_encoder && is_encoder_array(name) {
                g.data.iter_mut().for_each(|v| *v = 0.0);
            } else {
                g.data.iter_mut().for_each(|v| *v *= scale);
            }
        }
        optimizer_step(&mut params.arrays, &grads, &mut state, train).map_err(|e| match e {
            TrainError::NonFiniteGradient { .. } => TrainError::Divergence { step: step + 1 },
            other => other,
        })?;
        let n = step + 1;
        if n == 1 || n % train.log_every == 0 || n == train.steps {
            log.rows.push(LogRow {
                step: n,
                wall_ms: start.elapsed().as_millis() as u64,
                loss,
            });
        }
    }
    if !params.all_finite() {
        return Err(TrainError::Divergence { step: train.steps });
    }
    Ok(log)
}

/// Normalizes every scenario to its default anchor.
pub fn normalize_dataset(dataset: &[Scenario]) -> Vec<Scenario> {
    dataset.iter().map(|s| normalize_default(s).0).collect()
}

/// Mask seed for one batch slot: a fresh stream per step and slot.
pub fn pretrain_mask_seed(profile_seed: u64, step: usize, batch_size: usize, slot: usize) -> u64 {
    derive_seed(profile_seed, (step * batch_size + slot) as u64)
}

pub fn pretrain(
    dataset: &[Scenario],
    profile: &MaskProfileConfig,
    model_config: &ModelConfig,
    train: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    train.validate()?;
    check_dataset(dataset, model_config)?;
    let mut params = init_model(model_config, train.seed)?;
    let data = normalize_dataset(dataset);
    profile.validate(model_config.t_total)?;
    let log = train_loop(&mut params, DecoderHead::Pretrain, data.len(), train, false, |step, slot, i| {
        let scenario = &data[i];
        let scene = &scenario.scene;
        let seed = pretrain_mask_seed(profile.seed, step, train.batch_size, slot);
        let mask = profile.sample_with_seed(scene.n_agents, scene.t_total, &scene.validity(), seed)?;
        Ok(Sample {
            input: apply_mask(scene, &mask)?,
            target_mask: mask.clone(),
            mask,
            scenario: scenario.clone(),
        })
    })?;
    Ok((params, log))
}

/// Mean masked-reconstruction loss of the pretraining decoder over the
/// dataset with one fixed mask per scenario drawn from `profile` and `seed`.
pub fn masked_reconstruction_loss(
    params: &ModelParams,
    dataset: &[Scenario],
    profile: &MaskProfileConfig,
    seed: u64,
) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let data = normalize_dataset(dataset);
    let losses: Vec<Result<f64, TrainError>> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let scene = &s.scene;
            let mask = profile.sample_with_seed(
                scene.n_agents,
                scene.t_total,
                &scene.validity(),
                derive_seed(seed, i as u64),
            )?;
            let f = predict(params, DecoderHead::Pretrain, &apply_mask(scene, &mask)?, &mask, &s.map)?;
            Ok(reconstruction_loss(&f, scene, &mask)?)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len() as f64)
}

/// Copies the encoder arrays of `pretrained` into `fresh`.
pub fn transfer_encoder(pretrained: &ModelParams, fresh: &ModelParams) -> Result<ModelParams, TrainError> {
    let mut out = fresh.clone();
    for (name, m) in out.arrays.iter_mut().filter(|(n, _)| is_encoder_array(n)) {
        match pretrained.arrays.get(name) {
            Some(p) if p.rows == m.rows && p.cols == m.cols => m.data.clone_from(&p.data),
            _ => return Err(TrainError::ShapeMismatch { name: name.clone() }),
        }
    }
    if let Some(name) = pretrained
        .arrays
        .keys()
        .find(|n| is_encoder_array(n) && !fresh.arrays.contains_key(*n))
    {
        return Err(TrainError::ShapeMismatch { name: name.clone() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneOptions {
    pub freeze_encoder: bool,
    /// Also supervise occluded history cells in the occlusion task.
    pub supervise_occluded_history: bool,
}

/// Matches labels to scenarios by position and checks their ids agree.
pub(crate) fn labels_for<'a>(
    dataset: &[Scenario],
    labels: Option<&'a [OcclusionLabels]>,
) -> Result<Vec<Option<&'a OcclusionLabels>>, TrainError> {
    match labels {
        None => Ok(vec![None; dataset.len()]),
        Some(l) => {
            if l.len() != dataset.len() {
                return Err(TrainError::MissingLabels);
            }
            for (s, lab) in dataset.iter().zip(l) {
                if s.scene.scenario_id != lab.scenario_id {
                    return Err(TrainError::ShapeMismatch {
                        name: format!("labels for {} paired with {}", lab.scenario_id, s.scene.scenario_id),
                    });
                }
            }
            Ok(l.iter().map(Some).collect())
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn finetune(
    start: Option<&ModelParams>,
    task: TaskKind,
    dataset: &[Scenario],
    labels: Option<&[OcclusionLabels]>,
    options: FinetuneOptions,
    model_config: &ModelConfig,
    train: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    train.validate()?;
    if task == TaskKind::PretrainRandom {
        return Err(TrainError::InvalidConfig(
            "finetune needs a downstream task, not pretrain_random".into(),
        ));
    }
    if task == TaskKind::Occlusion && labels.is_none() {
        return Err(TrainError::MissingLabels);
    }
    check_dataset(dataset, model_config)?;
    let fresh = init_model(model_config, train.seed)?;
    let mut params = match start {
        Some(p) => transfer_encoder(p, &fresh)?,
        None => fresh,
    };
    let paired = labels_for(dataset, labels)?;
    let data = normalize_dataset(dataset);
    let mut samples = Vec::with_capacity(data.len());
    for (scenario, lab) in data.into_iter().zip(paired) {
        let scene = &scenario.scene;
        let mask = task_mask(task, scene, lab)?;
        let target_mask = if task == TaskKind::Occlusion && !options.supervise_occluded_history {
            prediction_mask(scene.n_agents, scene.t_total, scene.t_obs)
        } else {
            mask.clone()
        };
        samples.push(Sample {
            input: apply_mask(scene, &mask)?,
            mask,
            target_mask,
            scenario,
        });
    }
    let log = train_loop(
        &mut params,
        DecoderHead::Task,
        samples.len(),
        train,
        options.freeze_encoder,
        |_, _, i| {
            let s = &samples[i];
            Ok(Sample {
                input: s.input.clone(),
                mask: s.mask.clone(),
                scenario: s.scenario.clone(),
                target_mask: s.target_mask.clone(),
            })
        },
    )?;
    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub profile: MaskProfile,
    pub ratio: f64,
    pub min_ade: f64,
    pub min_fde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSetup {
    pub grid: Vec<(MaskProfile, f64)>,
    /// Patch lengths and mask seed; profile and ratio come from the grid.
    pub base_profile: MaskProfileConfig,
    pub model_config: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub k: usize,
}

/// Pretrains, finetunes on prediction and evaluates once per grid cell.
pub fn run_ablation(train_set: &[Scenario], eval_set: &[Scenario], setup: &AblationSetup) -> Result<Vec<AblationRow>, TrainError> {
    if setup.grid.is_empty() {
        return Err(TrainError::InvalidConfig("ablation grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(setup.grid.len());
    for &(profile, ratio) in &setup.grid {
        let cfg = MaskProfileConfig {
            profile,
            ratio,
            ..setup.base_profile
        };
        let (pre, _) = pretrain(train_set, &cfg, &setup.model_config, &setup.pretrain)?;
        let (tuned, _) = finetune(
            Some(&pre),
            TaskKind::Predict,
            train_set,
            None,
            FinetuneOptions::default(),
            &setup.model_config,
            &setup.finetune,
        )?;
        let (report, _) = evaluate(&tuned, eval_set, TaskKind::Predict, Subset::All, None, &[setup.k], 2.0)?;
        rows.push(AblationRow {
            profile,
            ratio,
            min_ade: report.min_ade[&setup.k],
            min_fde: report.min_fde[&setup.k],
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow], k: usize) -> String {
    let mut s = format!("profile,ratio,minADE_{k},minFDE_{k}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", r.profile.name(), r.ratio, r.min_ade, r.min_fde);
    }
    s
}
