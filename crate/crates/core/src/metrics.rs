//! minADE_k, minFDE_k, miss rate and dataset evaluation.
//!
//! Top-k modes are the k most probable ones, ties going to the lower mode
//! index. Dataset scores average over agents within a scenario, then over
//! scenarios; the miss rate pools all evaluated agents.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::apply_mask;
use crate::model::{predict, DecoderHead, Forecast, ModelError, ModelParams};
use crate::occlusion::OcclusionLabels;
use crate::scene::{normalize_default, SceneTensor};
use crate::training::{labels_for, task_mask, TaskKind, TrainError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("k={k} is outside 1..={modes}")]
    KOutOfRange { k: usize, modes: usize },
    #[error("agent {agent} has no valid future timestep")]
    NoValidFuture { agent: usize },
    #[error("no values to aggregate")]
    EmptyInput,
    #[error("occlusion labels are required for this evaluation")]
    MissingLabels,
    #[error("no agents fall in the requested subset")]
    EmptySubset,
    #[error("invalid evaluation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<TrainError> for MetricError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::MissingLabels => MetricError::MissingLabels,
            TrainError::Model(m) => MetricError::Model(m),
            other => MetricError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    OccludedOnly,
}

impl std::str::FromStr for Subset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Subset::All),
            "occluded_only" | "occluded-only" | "occluded" => Ok(Subset::OccludedOnly),
            other => Err(format!("unknown subset `{other}`")),
        }
    }
}

/// Indices of the `k` most probable modes, most probable first.
pub fn top_k_modes(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn check_k(f: &Forecast, k: usize) -> Result<(), MetricError> {
    if k == 0 || k > f.k {
        Err(MetricError::KOutOfRange { k, modes: f.k })
    } else {
        Ok(())
    }
}

fn future_cells(truth: &SceneTensor, agent: usize) -> Vec<usize> {
    (truth.t_obs..truth.t_total).filter(|&c| truth.get(agent, c).valid).collect()
}

fn dist(p: [f64; 2], s: &crate::scene::AgentState) -> f64 {
    (p[0] - s.x).hypot(p[1] - s.y)
}

pub fn min_ade(forecast: &Forecast, truth: &SceneTensor, agent: usize, k: usize) -> Result<f64, MetricError> {
    check_k(forecast, k)?;
    let cells = future_cells(truth, agent);
    if cells.is_empty() {
        return Err(MetricError::NoValidFuture { agent });
    }
    Ok(top_k_modes(&forecast.mode_probs, k)
        .into_iter()
        .map(|m| {
            cells
                .iter()
                .map(|&c| dist(forecast.at(m, agent, c), truth.get(agent, c)))
                .sum::<f64>()
                / cells.len() as f64
        })
        .fold(f64::INFINITY, f64::min))
}

/// Endpoint error at the agent's last valid future timestep.
pub fn min_fde(forecast: &Forecast, truth: &SceneTensor, agent: usize, k: usize) -> Result<f64, MetricError> {
    check_k(forecast, k)?;
    let last = *future_cells(truth, agent)
        .last()
        .ok_or(MetricError::NoValidFuture { agent })?;
    Ok(top_k_modes(&forecast.mode_probs, k)
        .into_iter()
        .map(|m| dist(forecast.at(m, agent, last), truth.get(agent, last)))
        .fold(f64::INFINITY, f64::min))
}

/// Fraction of entries strictly above `threshold`.
pub fn miss_rate(per_agent_min_fde: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if per_agent_min_fde.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let misses = per_agent_min_fde.iter().filter(|&&v| v > threshold).count();
    Ok(misses as f64 / per_agent_min_fde.len() as f64)
}

/// Per-agent scores; `min_ade[i]` and `min_fde[i]` belong to `ks[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub scenario: usize,
    pub scenario_id: String,
    pub agent: usize,
    pub min_ade: Vec<f64>,
    pub min_fde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissRateEntry {
    pub k: usize,
    pub threshold: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub min_ade: BTreeMap<usize, f64>,
    pub min_fde: BTreeMap<usize, f64>,
    pub miss_rate: Vec<MissRateEntry>,
    pub n_evaluated: usize,
    pub n_scenarios: usize,
    pub subset: Subset,
}

/// Scores the listed agents of one scenario.
pub fn score_agents(
    forecast: &Forecast,
    truth: &SceneTensor,
    scenario: usize,
    agents: &[usize],
    ks: &[usize],
) -> Result<Vec<AgentMetrics>, MetricError> {
    agents
        .iter()
        .map(|&a| {
            Ok(AgentMetrics {
                scenario,
                scenario_id: truth.scenario_id.clone(),
                agent: a,
                min_ade: ks.iter().map(|&k| min_ade(forecast, truth, a, k)).collect::<Result<_, _>>()?,
                min_fde: ks.iter().map(|&k| min_fde(forecast, truth, a, k)).collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

/// Builds a report from per-agent rows ordered by scenario.
pub fn aggregate(per_agent: &[AgentMetrics], ks: &[usize], threshold: f64, subset: Subset) -> Result<MetricReport, MetricError> {
    if per_agent.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    let mut groups: Vec<&[AgentMetrics]> = Vec::new();
    let mut start = 0;
    for i in 1..=per_agent.len() {
        if i == per_agent.len() || per_agent[i].scenario != per_agent[start].scenario {
            groups.push(&per_agent[start..i]);
            start = i;
        }
    }
    let two_level = |pick: &dyn Fn(&AgentMetrics) -> f64| -> f64 {
        groups
            .iter()
            .map(|g| g.iter().map(pick).sum::<f64>() / g.len() as f64)
            .sum::<f64>()
            / groups.len() as f64
    };
    let mut min_ade = BTreeMap::new();
    let mut min_fde = BTreeMap::new();
    let mut miss = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        min_ade.insert(k, two_level(&|a| a.min_ade[i]));
        min_fde.insert(k, two_level(&|a| a.min_fde[i]));
        let fdes: Vec<f64> = per_agent.iter().map(|a| a.min_fde[i]).collect();
        miss.push(MissRateEntry {
            k,
            threshold,
            value: miss_rate(&fdes, threshold)?,
        });
    }
    Ok(MetricReport {
        min_ade,
        min_fde,
        miss_rate: miss,
        n_evaluated: per_agent.len(),
        n_scenarios: groups.len(),
        subset,
    })
}

/// Runs the task decoder on every scenario under `task`'s mask and scores
/// either all non-ego agents or only the partially occluded ones.
pub fn evaluate(
    params: &ModelParams,
    dataset: &[crate::scene::Scenario],
    task: TaskKind,
    subset: Subset,
    labels: Option<&[OcclusionLabels]>,
    ks: &[usize],
    threshold: f64,
) -> Result<(MetricReport, Vec<AgentMetrics>), MetricError> {
    if ks.is_empty() {
        return Err(MetricError::Invalid("no k values requested".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > params.config.k_modes) {
        return Err(MetricError::KOutOfRange {
            k,
            modes: params.config.k_modes,
        });
    }
    if subset == Subset::OccludedOnly && labels.is_none() {
        return Err(MetricError::MissingLabels);
    }
    let paired = labels_for(dataset, labels)?;
    let per_scenario: Vec<Result<Vec<AgentMetrics>, MetricError>> = dataset
        .par_iter()
        .zip(paired)
        .enumerate()
        .map(|(i, (scenario, lab))| {
            let (norm, _) = normalize_default(scenario);
            let scene = &norm.scene;
            let agents: Vec<usize> = match subset {
                Subset::All => (0..scene.n_agents).filter(|&a| a != scene.ego_index).collect(),
                Subset::OccludedOnly => lab.ok_or(MetricError::MissingLabels)?.partially_occluded(scene),
            };
            let agents: Vec<usize> = agents
                .into_iter()
                .filter(|&a| !future_cells(scene, a).is_empty())
                .collect();
            if agents.is_empty() {
                return Ok(Vec::new());
            }
            let mask = task_mask(task, scene, lab)?;
            let input = apply_mask(scene, &mask).map_err(|e| MetricError::Invalid(e.to_string()))?;
            let forecast = predict(params, DecoderHead::Task, &input, &mask, &norm.map)?;
            score_agents(&forecast, scene, i, &agents, ks)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_scenario {
        rows.extend(r?);
    }
    let report = aggregate(&rows, ks, threshold, subset)?;
    Ok((report, rows))
}

/// Per-agent rows as CSV: `scenario_id,agent,minADE_k...,minFDE_k...`.
pub fn agent_metrics_csv(rows: &[AgentMetrics], ks: &[usize]) -> String {
    let mut s = String::from("scenario_id,agent");
    for k in ks {
        s.push_str(&format!(",minADE_{k}"));
    }
    for k in ks {
        s.push_str(&format!(",minFDE_{k}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{}", r.scenario_id, r.agent));
        for v in r.min_ade.iter().chain(&r.min_fde) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}
