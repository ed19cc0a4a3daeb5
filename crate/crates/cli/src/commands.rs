use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use trajmask::masking::{apply_mask, MaskProfile, MaskProfileConfig};
use trajmask::metrics::{agent_metrics_csv, evaluate, Subset};
use trajmask::model::{checkpoint_to_string, load_checkpoint, predict, DecoderHead, ModelConfig, ModelParams};
use trajmask::occlusion::{label_occluded_agents, select_ego, GridSpec, OcclusionLabels};
use trajmask::rng::derive_seed;
use trajmask::scene::{load_scenarios, normalize_default, Scenario};
use trajmask::synth::{generate_dataset, MapStyle, SynthSpec};
use trajmask::training::{
    ablation_csv, finetune, pretrain, run_ablation, task_mask, AblationSetup, FinetuneOptions, TaskKind, TrainConfig,
    TrainLog,
};

use crate::manifest::{read_input, write_atomic, write_manifest, RunManifest};
use crate::{svg, CliError, OUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "trajmask", version, about = "Masked-trajectory pretraining experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario dataset (JSON Lines).
    SynthGen(SynthGenArgs),
    /// Ray-trace occlusion labels for every scenario of a dataset.
    LabelOcclusion(LabelOcclusionArgs),
    /// Render a mask over one scenario as SVG, with the mask as JSON.
    MaskPreview(MaskPreviewArgs),
    /// Masked-reconstruction pretraining.
    Pretrain(PretrainArgs),
    /// Task finetuning, optionally from a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Mask ratio x profile ablation grid.
    Ablate(AblateArgs),
    /// Loss curves or trajectory renderings as SVG.
    Plot(PlotArgs),
}

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SynthGen(a) => synth_gen(a),
        Command::LabelOcclusion(a) => label_occlusion(a),
        Command::MaskPreview(a) => mask_preview(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Plot(a) => plot(a),
    }
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn output_or(path: &mut Option<PathBuf>, default_name: &str) -> PathBuf {
    path.get_or_insert_with(|| out_dir().join(default_name)).clone()
}

fn required(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    path.clone().ok_or_else(|| CliError::Usage(format!("missing input: pass --{flag} or set it in --config")))
}

/// `a/b.json` with `suffix` `log.csv` becomes `a/b.log.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Reads a config document, or the `config` of a manifest written by the
/// same subcommand.
fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<C, CliError> {
    let Some(path) = path else { return Ok(C::default()) };
    let text = read_input(path)?;
    let bad = |e: serde_json::Error| CliError::Data(format!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(bad)?;
    let value = if value.get("config_digest").is_some() && value.get("config").is_some() {
        let m: RunManifest = serde_json::from_value(value).map_err(bad)?;
        if m.command != command {
            return Err(CliError::Data(format!(
                "{} is a manifest for `{}`, not `{command}`",
                path.display(),
                m.command
            )));
        }
        if !m.digest_matches() {
            return Err(CliError::Data(format!("{}: config digest does not match its config", path.display())));
        }
        m.config
    } else {
        value
    };
    serde_json::from_value(value).map_err(bad)
}

fn finish<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>, artifacts: Vec<PathBuf>) -> Result<(), CliError> {
    let value = serde_json::to_value(config).expect("configs serialize");
    let manifest = RunManifest::new(command, value, seeds, artifacts);
    let path = write_manifest(&manifest.artifacts[0], &manifest)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<Scenario>, CliError> {
    let data = load_scenarios(path)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: dataset is empty", path.display())));
    }
    Ok(data)
}

fn dataset_t_total(data: &[Scenario]) -> usize {
    data[0].scene.t_total
}

fn load_labels(path: &Path) -> Result<Vec<OcclusionLabels>, CliError> {
    read_input(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load_optional_labels(path: &Option<PathBuf>) -> Result<Option<Vec<OcclusionLabels>>, CliError> {
    path.as_deref().map(load_labels).transpose()
}

fn load_model(path: &Path) -> Result<ModelParams, CliError> {
    read_input(path)?;
    Ok(load_checkpoint(path)?)
}

fn pick_scenario(data: &[Scenario], index: usize) -> Result<&Scenario, CliError> {
    data.get(index)
        .ok_or_else(|| CliError::Data(format!("scenario index {index} out of range (dataset has {})", data.len())))
}

fn pick_labels<'a>(labels: &'a Option<Vec<OcclusionLabels>>, scenario: &Scenario, index: usize) -> Result<Option<&'a OcclusionLabels>, CliError> {
    let Some(all) = labels else { return Ok(None) };
    let lab = all
        .get(index)
        .ok_or_else(|| CliError::Data(format!("no occlusion labels for scenario index {index}")))?;
    if lab.scenario_id != scenario.scene.scenario_id {
        return Err(CliError::Data(format!(
            "labels for {} paired with scenario {}",
            lab.scenario_id, scenario.scene.scenario_id
        )));
    }
    Ok(Some(lab))
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    k_modes: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

impl ModelArgs {
    fn apply(self, c: &mut ModelConfig) {
        set!(c.d_model, self.d_model);
        set!(c.n_blocks, self.n_blocks);
        set!(c.n_heads, self.n_heads);
        set!(c.k_modes, self.k_modes);
        set!(c.dropout, self.dropout);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// Seed for initialization and batch sampling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log_every: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, c: &mut TrainConfig) {
        set!(c.steps, self.steps);
        set!(c.batch_size, self.batch_size);
        set!(c.learning_rate, self.learning_rate);
        set!(c.seed, self.seed);
        set!(c.log_every, self.log_every);
    }
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// pointwise | patchwise | timewise
    #[arg(long)]
    profile: Option<MaskProfile>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    patch_len_min: Option<usize>,
    #[arg(long)]
    patch_len_max: Option<usize>,
    #[arg(long)]
    mask_seed: Option<u64>,
}

impl ProfileArgs {
    fn any(&self) -> bool {
        self.profile.is_some()
            || self.ratio.is_some()
            || self.patch_len_min.is_some()
            || self.patch_len_max.is_some()
            || self.mask_seed.is_some()
    }

    fn apply(self, c: &mut MaskProfileConfig) {
        set!(c.profile, self.profile);
        set!(c.ratio, self.ratio);
        set!(c.patch_len_min, self.patch_len_min);
        set!(c.patch_len_max, self.patch_len_max);
        set!(c.seed, self.mask_seed);
    }
}

// ---------------------------------------------------------------- synth-gen

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// argoverse-like | nuscenes-like | intersection
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    n_agents_min: Option<usize>,
    #[arg(long)]
    n_agents_max: Option<usize>,
    #[arg(long)]
    t_total: Option<usize>,
    #[arg(long)]
    t_obs: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    constant_velocity: Option<f64>,
    #[arg(long)]
    constant_turn: Option<f64>,
    #[arg(long)]
    lane_follow: Option<f64>,
    #[arg(long)]
    stop_and_go: Option<f64>,
    #[arg(long)]
    speed_min: Option<f64>,
    #[arg(long)]
    speed_max: Option<f64>,
    /// straight | curve | intersection
    #[arg(long)]
    map_style: Option<MapStyle>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    yaw_rate_min: Option<f64>,
    #[arg(long)]
    yaw_rate_max: Option<f64>,
    #[arg(long)]
    stop_period: Option<f64>,
    #[arg(long)]
    window_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthGenConfig {
    pub preset: String,
    /// Full spec; when absent the preset is used.
    pub spec: Option<SynthSpec>,
    pub count: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for SynthGenConfig {
    fn default() -> Self {
        Self {
            preset: "argoverse-like".into(),
            spec: None,
            count: 100,
            seed: 0,
            output: None,
        }
    }
}

fn preset(name: &str) -> Result<SynthSpec, CliError> {
    SynthSpec::preset(name).ok_or_else(|| CliError::Data(format!("unknown preset `{name}`")))
}

fn synth_gen(a: SynthGenArgs) -> Result<(), CliError> {
    let mut c: SynthGenConfig = load_config(a.config.as_deref(), "synth-gen")?;
    if let Some(p) = a.preset {
        c.spec = Some(preset(&p)?);
        c.preset = p;
    }
    let mut spec = match c.spec.take() {
        Some(s) => s,
        None => preset(&c.preset)?,
    };
    set!(c.count, a.count);
    set!(c.seed, a.seed);
    set!(c.output, a.output.map(Some));
    set!(spec.n_agents_range.0, a.n_agents_min);
    set!(spec.n_agents_range.1, a.n_agents_max);
    set!(spec.t_total, a.t_total);
    set!(spec.t_obs, a.t_obs);
    set!(spec.dt, a.dt);
    set!(spec.behavior_mix.constant_velocity, a.constant_velocity);
    set!(spec.behavior_mix.constant_turn, a.constant_turn);
    set!(spec.behavior_mix.lane_follow, a.lane_follow);
    set!(spec.behavior_mix.stop_and_go, a.stop_and_go);
    set!(spec.speed_range.0, a.speed_min);
    set!(spec.speed_range.1, a.speed_max);
    set!(spec.map_style, a.map_style);
    set!(spec.noise_std, a.noise_std);
    set!(spec.yaw_rate_range.0, a.yaw_rate_min);
    set!(spec.yaw_rate_range.1, a.yaw_rate_max);
    set!(spec.stop_period, a.stop_period);
    set!(spec.window_prob, a.window_prob);
    spec.validate()?;
    if c.count < 1 {
        return Err(CliError::Data("count must be at least 1".into()));
    }
    c.spec = Some(spec.clone());
    let out = output_or(&mut c.output, "scenarios.jsonl");
    generate_dataset(&spec, c.count, c.seed, &out)?;
    finish("synth-gen", &c, vec![c.seed], vec![out])
}

// ---------------------------------------------------------- label-occlusion

#[derive(Debug, Args)]
pub struct LabelOcclusionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Seed for ego selection; scenario i uses a seed derived from (seed, i).
    #[arg(long)]
    seed: Option<u64>,
    /// Meters per cell.
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    half_extent: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelOcclusionConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub grid: GridSpec,
}

fn label_occlusion(a: LabelOcclusionArgs) -> Result<(), CliError> {
    let mut c: LabelOcclusionConfig = load_config(a.config.as_deref(), "label-occlusion")?;
    set!(c.input, a.input.map(Some));
    set!(c.output, a.output.map(Some));
    set!(c.seed, a.seed);
    set!(c.grid.resolution, a.resolution);
    set!(c.grid.half_extent, a.half_extent);
    c.grid.validate()?;
    let data = load_dataset(&required(&c.input, "input")?)?;
    let mut text = String::new();
    for (i, s) in data.iter().enumerate() {
        let ego = select_ego(&s.scene, derive_seed(c.seed, i as u64))
            .map_err(|e| CliError::Data(format!("scenario {}: {e}", s.scene.scenario_id)))?;
        let labels = label_occluded_agents(&s.scene, ego, &c.grid)?;
        text.push_str(&serde_json::to_string(&labels).expect("labels serialize"));
        text.push('\n');
    }
    let out = output_or(&mut c.output, "occlusion.jsonl");
    write_atomic(&out, text.as_bytes())?;
    finish("label-occlusion", &c, vec![c.seed], vec![out])
}

// ------------------------------------------------------------- mask-preview

#[derive(Debug, Args)]
pub struct MaskPreviewArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Scenario index within the dataset.
    #[arg(long)]
    index: Option<usize>,
    /// Show a task mask (predict | conditional | occlusion) instead of a profile.
    #[arg(long)]
    task: Option<TaskKind>,
    /// Occlusion labels, needed for the occlusion task.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    profile: ProfileArgs,
    /// SVG path; the mask is written next to it as `<stem>.mask.json`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskPreviewConfig {
    pub input: Option<PathBuf>,
    pub index: usize,
    /// When set, the task mask is shown and `profile` is ignored.
    pub task: Option<TaskKind>,
    pub labels: Option<PathBuf>,
    pub profile: MaskProfileConfig,
    pub output: Option<PathBuf>,
}

fn mask_preview(a: MaskPreviewArgs) -> Result<(), CliError> {
    let mut c: MaskPreviewConfig = load_config(a.config.as_deref(), "mask-preview")?;
    set!(c.input, a.input.map(Some));
    set!(c.index, a.index);
    set!(c.labels, a.labels.map(Some));
    set!(c.output, a.output.map(Some));
    if a.profile.any() {
        c.task = None;
    }
    a.profile.apply(&mut c.profile);
    set!(c.task, a.task.map(Some));
    let data = load_dataset(&required(&c.input, "input")?)?;
    let scenario = pick_scenario(&data, c.index)?;
    let scene = &scenario.scene;
    let labels = load_optional_labels(&c.labels)?;
    let (mask, title, seeds) = match c.task {
        Some(task) => {
            let lab = pick_labels(&labels, scenario, c.index)?;
            (task_mask(task, scene, lab)?, format!("{}: {} task", scene.scenario_id, task.name()), vec![])
        }
        None => {
            let p = &c.profile;
            let mask = p.sample(scene.n_agents, scene.t_total, &scene.validity())?;
            let title = format!("{}: {} {}%", scene.scenario_id, p.profile.name(), p.ratio * 100.0);
            (mask, title, vec![p.seed])
        }
    };
    let out = output_or(&mut c.output, "mask.svg");
    let mask_json = sibling(&out, "mask.json");
    write_atomic(&out, svg::mask_svg(&title, &mask, &scene.validity(), scene.t_obs).as_bytes())?;
    write_atomic(&mask_json, (serde_json::to_string(&mask).expect("mask serializes") + "\n").as_bytes())?;
    finish("mask-preview", &c, seeds, vec![out, mask_json])
}

// ----------------------------------------------------------------- pretrain

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training scenarios (JSON Lines).
    #[arg(long, short)]
    data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Training log CSV; defaults to `<checkpoint stem>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    profile: ProfileArgs,
}

/// `model.t_total` is always taken from the dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub profile: MaskProfileConfig,
}

fn write_training(out: &Path, log_path: &Path, params: &ModelParams, log: &TrainLog) -> Result<(), CliError> {
    write_atomic(out, checkpoint_to_string(params)?.as_bytes())?;
    write_atomic(log_path, log.to_csv().as_bytes())
}

fn pretrain_cmd(a: PretrainArgs) -> Result<(), CliError> {
    let mut c: PretrainConfig = load_config(a.config.as_deref(), "pretrain")?;
    set!(c.data, a.data.map(Some));
    set!(c.output, a.output.map(Some));
    set!(c.log, a.log.map(Some));
    a.model.apply(&mut c.model);
    a.train.apply(&mut c.train);
    a.profile.apply(&mut c.profile);
    let data = load_dataset(&required(&c.data, "data")?)?;
    c.model.t_total = dataset_t_total(&data);
    let out = output_or(&mut c.output, "pretrained.json");
    let log_path = c.log.get_or_insert_with(|| sibling(&out, "log.csv")).clone();
    let (params, log) = pretrain(&data, &c.profile, &c.model, &c.train)?;
    write_training(&out, &log_path, &params, &log)?;
    finish("pretrain", &c, vec![c.train.seed, c.profile.seed], vec![out, log_path])
}

// ----------------------------------------------------------------- finetune

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    data: Option<PathBuf>,
    /// Pretrained checkpoint whose encoder is transferred; its architecture
    /// replaces the model flags.
    #[arg(long)]
    init: Option<PathBuf>,
    /// predict | conditional | occlusion
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    freeze_encoder: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    supervise_occluded_history: Option<bool>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub data: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub task: TaskKind,
    pub labels: Option<PathBuf>,
    pub options: FinetuneOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            data: None,
            init: None,
            task: TaskKind::Predict,
            labels: None,
            options: FinetuneOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            output: None,
            log: None,
        }
    }
}

fn finetune_cmd(a: FinetuneArgs) -> Result<(), CliError> {
    let mut c: FinetuneConfig = load_config(a.config.as_deref(), "finetune")?;
    set!(c.data, a.data.map(Some));
    set!(c.init, a.init.map(Some));
    set!(c.task, a.task);
    set!(c.labels, a.labels.map(Some));
    set!(c.options.freeze_encoder, a.freeze_encoder);
    set!(c.options.supervise_occluded_history, a.supervise_occluded_history);
    set!(c.output, a.output.map(Some));
    set!(c.log, a.log.map(Some));
    a.model.apply(&mut c.model);
    a.train.apply(&mut c.train);
    let data = load_dataset(&required(&c.data, "data")?)?;
    let start = c.init.as_deref().map(load_model).transpose()?;
    match &start {
        Some(p) => c.model = p.config,
        None => c.model.t_total = dataset_t_total(&data),
    }
    let labels = load_optional_labels(&c.labels)?;
    let out = output_or(&mut c.output, "finetuned.json");
    let log_path = c.log.get_or_insert_with(|| sibling(&out, "log.csv")).clone();
    let (params, log) = finetune(start.as_ref(), c.task, &data, labels.as_deref(), c.options, &c.model, &c.train)?;
    write_training(&out, &log_path, &params, &log)?;
    finish("finetune", &c, vec![c.train.seed], vec![out, log_path])
}

// ----------------------------------------------------------------- evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    /// all | occluded_only
    #[arg(long)]
    subset: Option<Subset>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Comma-separated k values; defaults to 1 and the model's mode count.
    #[arg(long = "k", value_delimiter = ',')]
    ks: Vec<usize>,
    /// Miss threshold on minFDE, meters.
    #[arg(long)]
    threshold: Option<f64>,
    /// JSON report path; per-agent rows go to `<stem>.agents.csv`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub task: TaskKind,
    pub subset: Subset,
    pub labels: Option<PathBuf>,
    pub ks: Vec<usize>,
    pub threshold: f64,
    pub output: Option<PathBuf>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            data: None,
            checkpoint: None,
            task: TaskKind::Predict,
            subset: Subset::All,
            labels: None,
            ks: Vec::new(),
            threshold: 2.0,
            output: None,
        }
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), CliError> {
    let mut c: EvaluateConfig = load_config(a.config.as_deref(), "evaluate")?;
    set!(c.data, a.data.map(Some));
    set!(c.checkpoint, a.checkpoint.map(Some));
    set!(c.task, a.task);
    set!(c.subset, a.subset);
    set!(c.labels, a.labels.map(Some));
    if !a.ks.is_empty() {
        c.ks = a.ks;
    }
    set!(c.threshold, a.threshold);
    set!(c.output, a.output.map(Some));
    let data = load_dataset(&required(&c.data, "data")?)?;
    let params = load_model(&required(&c.checkpoint, "checkpoint")?)?;
    if c.ks.is_empty() {
        c.ks = vec![1, params.config.k_modes];
        c.ks.dedup();
    }
    let labels = load_optional_labels(&c.labels)?;
    let (report, rows) = evaluate(&params, &data, c.task, c.subset, labels.as_deref(), &c.ks, c.threshold)?;
    let out = output_or(&mut c.output, "report.json");
    let agents = sibling(&out, "agents.csv");
    write_atomic(&out, (serde_json::to_string_pretty(&report).expect("report serializes") + "\n").as_bytes())?;
    write_atomic(&agents, agent_metrics_csv(&rows, &c.ks).as_bytes())?;
    finish("evaluate", &c, vec![], vec![out, agents])
}

// ------------------------------------------------------------------- ablate

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Comma-separated mask ratios.
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<f64>,
    /// Comma-separated profiles.
    #[arg(long, value_delimiter = ',')]
    profiles: Vec<MaskProfile>,
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long)]
    finetune_steps: Option<usize>,
    /// Batch size for both stages.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate for both stages.
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// Training seed for both stages.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub ratios: Vec<f64>,
    pub profiles: Vec<MaskProfile>,
    /// Patch lengths and mask seed shared by every grid cell.
    pub base_profile: MaskProfileConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub k: usize,
    pub output: Option<PathBuf>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            train_data: None,
            eval_data: None,
            ratios: vec![0.25, 0.5, 0.75],
            profiles: MaskProfile::ALL.to_vec(),
            base_profile: MaskProfileConfig::default(),
            model: ModelConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            k: 6,
            output: None,
        }
    }
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let mut c: AblateConfig = load_config(a.config.as_deref(), "ablate")?;
    set!(c.train_data, a.train_data.map(Some));
    set!(c.eval_data, a.eval_data.map(Some));
    if !a.ratios.is_empty() {
        c.ratios = a.ratios;
    }
    if !a.profiles.is_empty() {
        c.profiles = a.profiles;
    }
    set!(c.pretrain.steps, a.pretrain_steps);
    set!(c.finetune.steps, a.finetune_steps);
    for t in [&mut c.pretrain, &mut c.finetune] {
        set!(t.batch_size, a.batch_size);
        set!(t.learning_rate, a.learning_rate);
        set!(t.seed, a.seed);
    }
    set!(c.k, a.k);
    a.model.apply(&mut c.model);
    set!(c.output, a.output.map(Some));
    let train = load_dataset(&required(&c.train_data, "train-data")?)?;
    let eval = load_dataset(&required(&c.eval_data, "eval-data")?)?;
    c.model.t_total = dataset_t_total(&train);
    let setup = AblationSetup {
        grid: c.ratios.iter().flat_map(|&r| c.profiles.iter().map(move |&p| (p, r))).collect(),
        base_profile: c.base_profile,
        model_config: c.model,
        pretrain: c.pretrain,
        finetune: c.finetune,
        k: c.k,
    };
    let rows = run_ablation(&train, &eval, &setup)?;
    let out = output_or(&mut c.output, "ablation.csv");
    write_atomic(&out, ablation_csv(&rows, c.k).as_bytes())?;
    let seeds = vec![c.pretrain.seed, c.finetune.seed, c.base_profile.seed];
    finish("ablate", &c, seeds, vec![out])
}

// --------------------------------------------------------------------- plot

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    #[default]
    LossCurve,
    Trajectories,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loss_curve" | "loss-curve" => Ok(PlotKind::LossCurve),
            "trajectories" => Ok(PlotKind::Trajectories),
            other => Err(format!("unknown plot kind `{other}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// loss_curve | trajectories
    #[arg(long)]
    kind: Option<PlotKind>,
    /// Training log CSV; repeat for several curves.
    #[arg(long = "input", short)]
    inputs: Vec<PathBuf>,
    /// Legend label per input; defaults to the file stem.
    #[arg(long = "name")]
    names: Vec<String>,
    #[arg(long, short)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Loss curves read `inputs`; trajectory plots run `checkpoint` on scenario
/// `index` of `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub kind: PlotKind,
    pub inputs: Vec<PathBuf>,
    pub names: Vec<String>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub index: usize,
    pub task: TaskKind,
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            kind: PlotKind::LossCurve,
            inputs: Vec::new(),
            names: Vec::new(),
            data: None,
            checkpoint: None,
            index: 0,
            task: TaskKind::Predict,
            labels: None,
            output: None,
        }
    }
}

fn plot(a: PlotArgs) -> Result<(), CliError> {
    let mut c: PlotConfig = load_config(a.config.as_deref(), "plot")?;
    set!(c.kind, a.kind);
    if !a.inputs.is_empty() {
        c.inputs = a.inputs;
    }
    if !a.names.is_empty() {
        c.names = a.names;
    }
    set!(c.data, a.data.map(Some));
    set!(c.checkpoint, a.checkpoint.map(Some));
    set!(c.index, a.index);
    set!(c.task, a.task);
    set!(c.labels, a.labels.map(Some));
    set!(c.output, a.output.map(Some));
    let text = match c.kind {
        PlotKind::LossCurve => loss_curve(&mut c)?,
        PlotKind::Trajectories => trajectories(&c)?,
    };
    let out = output_or(&mut c.output, "plot.svg");
    write_atomic(&out, text.as_bytes())?;
    finish("plot", &c, vec![], vec![out])
}

fn loss_curve(c: &mut PlotConfig) -> Result<String, CliError> {
    if c.inputs.is_empty() {
        return Err(CliError::Usage("loss_curve needs at least one --input log".into()));
    }
    if !c.names.is_empty() && c.names.len() != c.inputs.len() {
        return Err(CliError::Usage(format!("{} names for {} inputs", c.names.len(), c.inputs.len())));
    }
    if c.names.is_empty() {
        c.names = c
            .inputs
            .iter()
            .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
    }
    let mut logs = Vec::new();
    for (path, name) in c.inputs.iter().zip(&c.names) {
        let malformed = |d: String| CliError::Data(format!("malformed log {}: {d}", path.display()));
        let log = TrainLog::from_csv(&read_input(path)?).map_err(malformed)?;
        if log.rows.is_empty() {
            return Err(malformed("no rows".into()));
        }
        logs.push((name.clone(), log));
    }
    Ok(svg::loss_curve_svg(&logs))
}

fn trajectories(c: &PlotConfig) -> Result<String, CliError> {
    let data = load_dataset(&required(&c.data, "data")?)?;
    let params = load_model(&required(&c.checkpoint, "checkpoint")?)?;
    let scenario = pick_scenario(&data, c.index)?;
    let labels = load_optional_labels(&c.labels)?;
    let lab = pick_labels(&labels, scenario, c.index)?;
    let (norm, _) = normalize_default(scenario);
    let scene = &norm.scene;
    let mask = task_mask(c.task, scene, lab)?;
    let input = apply_mask(scene, &mask)?;
    let forecast = predict(&params, DecoderHead::Task, &input, &mask, &norm.map)?;
    let focal: Vec<usize> = (0..scene.n_agents)
        .filter(|&a| a != scene.ego_index && (scene.t_obs..scene.t_total).any(|t| scene.get(a, t).valid))
        .collect();
    Ok(svg::trajectory_svg(&norm, &forecast, &focal))
}
