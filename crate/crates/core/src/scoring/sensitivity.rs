//! Rank stability under multiplicative noise on the raw judgments.
//!
//! Every trial rescales each provisional swing and each positive support
//! value by an independent factor from `U[1-ε, 1+ε]`, reruns the whole
//! pipeline, and records the resulting ranks. Trial `t` draws from its own
//! ChaCha stream `(seed, t)`, so results do not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elicitation::{
    snapshot_from_parts, validate_judgments, ScenarioJudgments, SupportPolicy, SwingJudgment,
    REFERENCE_SWING,
};
use crate::model::{derive_incidence, IncidenceMap, LinkingModel};
use crate::scoring::{priority_index, rank_items};
use crate::Error;

/// Largest support value on the elicitation scale.
const MAX_SUPPORT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensitivityConfig {
    /// Half-width of the multiplicative noise, in (0, 1).
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub top_k: usize,
    #[serde(default)]
    pub policy: SupportPolicy,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            trials: 1000,
            seed: 0,
            top_k: 10,
            policy: SupportPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemStability {
    pub item_id: String,
    pub baseline_rank: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    /// Fraction of trials in which the item ranked within `top_k`.
    pub top_k_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensitivityReport {
    pub scenario_id: String,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub top_k: usize,
    /// Ordered by baseline rank.
    pub items: Vec<ItemStability>,
}

struct Pipeline<'a> {
    model: &'a LinkingModel,
    incidence: IncidenceMap,
    items: Vec<String>,
    policy: SupportPolicy,
}

impl Pipeline<'_> {
    /// Rank of every item, indexed like `self.items`.
    fn ranks(
        &self,
        swings: &[SwingJudgment],
        supports: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Vec<usize>, Error> {
        let params =
            snapshot_from_parts(self.model, swings, supports, self.policy)?.into_parameters()?;
        let scores = priority_index(&params, &self.incidence)?;
        let by_id: BTreeMap<String, usize> = rank_items(&scores, None)
            .into_iter()
            .map(|r| (r.item_id, r.rank))
            .collect();
        Ok(self.items.iter().map(|id| by_id[id]).collect())
    }
}

fn base_supports(judgments: &ScenarioJudgments) -> BTreeMap<String, Vec<f64>> {
    let mut supports: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &judgments.support_judgments {
        supports
            .entry(s.decision_id.clone())
            .or_default()
            .push(s.label.value());
    }
    supports
}

fn perturbed_inputs(
    judgments: &ScenarioJudgments,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<SwingJudgment>, BTreeMap<String, Vec<f64>>) {
    let swings = judgments
        .swing_judgments
        .iter()
        .map(|sj| {
            let raw: Vec<(String, f64)> = sj
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v * rng.gen_range(1.0 - epsilon..=1.0 + epsilon)))
                .collect();
            let max = raw.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
            SwingJudgment {
                assessor_id: sj.assessor_id.clone(),
                group_id: sj.group_id.clone(),
                entries: raw
                    .into_iter()
                    .map(|(k, v)| (k, v / max * REFERENCE_SWING))
                    .collect(),
            }
        })
        .collect();

    let mut supports: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &judgments.support_judgments {
        let v = s.label.value();
        let v = if v > 0.0 {
            (v * rng.gen_range(1.0 - epsilon..=1.0 + epsilon)).clamp(f64::MIN_POSITIVE, MAX_SUPPORT)
        } else {
            v
        };
        supports.entry(s.decision_id.clone()).or_default().push(v);
    }
    (swings, supports)
}

/// Monte Carlo rank stability for one complete scenario.
///
/// The reported rank range always includes the baseline rank.
pub fn perturb_sensitivity(
    model: &LinkingModel,
    judgments: &ScenarioJudgments,
    config: &SensitivityConfig,
) -> Result<SensitivityReport, Error> {
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {}",
            config.epsilon
        )));
    }
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if config.top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let report = validate_judgments(model, judgments);
    if !report.is_empty() {
        return Err(Error::InvalidJudgments(report));
    }

    let incidence = derive_incidence(model)?;
    let pipeline = Pipeline {
        model,
        items: incidence.items().map(str::to_string).collect(),
        incidence,
        policy: config.policy,
    };
    let baseline = pipeline.ranks(&judgments.swing_judgments, &base_supports(judgments))?;

    let trial_ranks: Vec<Vec<usize>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let (swings, supports) = perturbed_inputs(judgments, config.epsilon, &mut rng);
            pipeline.ranks(&swings, &supports)
        })
        .collect::<Result<_, _>>()?;

    let mut items: Vec<ItemStability> = pipeline
        .items
        .iter()
        .enumerate()
        .map(|(idx, id)| {
            let base = baseline[idx];
            let (mut min_rank, mut max_rank, mut hits) = (base, base, 0usize);
            for ranks in &trial_ranks {
                let r = ranks[idx];
                min_rank = min_rank.min(r);
                max_rank = max_rank.max(r);
                if r <= config.top_k {
                    hits += 1;
                }
            }
            ItemStability {
                item_id: id.clone(),
                baseline_rank: base,
                min_rank,
                max_rank,
                top_k_probability: hits as f64 / config.trials as f64,
            }
        })
        .collect();
    items.sort_by_key(|i| i.baseline_rank);

    Ok(SensitivityReport {
        scenario_id: judgments.scenario_id.clone(),
        epsilon: config.epsilon,
        trials: config.trials,
        seed: config.seed,
        top_k: config.top_k,
        items,
    })
}
