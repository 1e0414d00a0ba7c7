//! Priority index, rankings and comparisons.
//!
//! Each decision contributes its weighted data support `w_j * d_j`, split
//! equally over the `n_j` distinct data items linked to it. Decisions without
//! linked items contribute nothing; their share is reported separately as
//! unsupported decision weight.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::elicitation::ConsensusParameters;
use crate::model::{derive_incidence, IncidenceMap, LinkingModel};
use crate::Error;

mod sensitivity;

pub use sensitivity::{perturb_sensitivity, ItemStability, SensitivityConfig, SensitivityReport};

fn check_same_decisions(
    params: &ConsensusParameters,
    incidence: &IncidenceMap,
) -> Result<(), Error> {
    let inc: BTreeSet<&str> = incidence.decisions().collect();
    let weights: BTreeSet<&str> = params.decision_weights.keys().map(String::as_str).collect();
    let supports: BTreeSet<&str> = params.supports.keys().map(String::as_str).collect();
    if let Some(j) = inc.symmetric_difference(&weights).next() {
        return Err(Error::ModelMismatch(format!(
            "decision `{j}` has no weight or is unknown"
        )));
    }
    if let Some(j) = inc.symmetric_difference(&supports).next() {
        return Err(Error::ModelMismatch(format!(
            "decision `{j}` has no support or is unknown"
        )));
    }
    Ok(())
}

/// Priority index of every data item in the incidence map.
///
/// Items linked to no decision score 0.
pub fn priority_index(
    params: &ConsensusParameters,
    incidence: &IncidenceMap,
) -> Result<BTreeMap<String, f64>, Error> {
    check_same_decisions(params, incidence)?;
    let mut scores: BTreeMap<String, f64> =
        incidence.items().map(|l| (l.to_string(), 0.0)).collect();
    for (j, items) in incidence.iter() {
        if items.is_empty() {
            continue;
        }
        let share = params.decision_weights[j] * params.supports[j] / items.len() as f64;
        for l in items {
            *scores
                .get_mut(l)
                .ok_or_else(|| Error::ModelMismatch(format!("item `{l}` not in the model")))? +=
                share;
        }
    }
    Ok(scores)
}

/// `Σ_j w_j d_j`: the share of all improvement that data could deliver.
pub fn total_weighted_support(params: &ConsensusParameters) -> f64 {
    params
        .decision_weights
        .iter()
        .map(|(j, w)| w * params.supports.get(j).copied().unwrap_or(0.0))
        .sum()
}

/// Weighted support of decisions with no linked data item.
pub fn unsupported_decision_weight(params: &ConsensusParameters, incidence: &IncidenceMap) -> f64 {
    incidence
        .iter()
        .filter(|(_, items)| items.is_empty())
        .map(|(j, _)| {
            params.decision_weights.get(j).copied().unwrap_or(0.0)
                * params.supports.get(j).copied().unwrap_or(0.0)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedItem {
    pub rank: usize,
    pub item_id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub category: String,
    pub score: f64,
}

/// Orders by score descending, then item id ascending. Ranks are 1..N with
/// no shared positions.
pub fn rank_items(scores: &BTreeMap<String, f64>, top_n: Option<usize>) -> Vec<RankedItem> {
    let mut entries: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries
        .into_iter()
        .take(top_n.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, (id, score))| RankedItem {
            rank: i + 1,
            item_id: id.clone(),
            name: String::new(),
            category: String::new(),
            score,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PriorityReport {
    pub scenario_id: String,
    pub item_scores: BTreeMap<String, f64>,
    pub ranking: Vec<RankedItem>,
    pub total_weighted_support: f64,
    /// Part of the total that sits on decisions without linked items.
    pub unsupported_decision_weight: f64,
}

impl PriorityReport {
    /// Scores and ranks every item of `model`. `top_n` only truncates the
    /// ranking; `item_scores` always covers all items.
    pub fn build(
        scenario_id: impl Into<String>,
        model: &LinkingModel,
        params: &ConsensusParameters,
        top_n: Option<usize>,
    ) -> Result<Self, Error> {
        let incidence = derive_incidence(model)?;
        let item_scores = priority_index(params, &incidence)?;
        let mut ranking = rank_items(&item_scores, top_n);
        for r in &mut ranking {
            if let Some(item) = model.find_item(&r.item_id) {
                r.name = item.name.clone();
                r.category = item.category.clone();
            }
        }
        Ok(Self {
            scenario_id: scenario_id.into(),
            item_scores,
            ranking,
            total_weighted_support: total_weighted_support(params),
            unsupported_decision_weight: unsupported_decision_weight(params, &incidence),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessWeight {
    pub value_stream_id: String,
    pub process_id: String,
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValueStreamWeight {
    pub value_stream_id: String,
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightRollup {
    pub processes: Vec<ProcessWeight>,
    pub value_streams: Vec<ValueStreamWeight>,
}

/// Sums decision weights per process and per value stream.
pub fn rollup_weights(
    params: &ConsensusParameters,
    model: &LinkingModel,
) -> Result<WeightRollup, Error> {
    let mut processes = Vec::new();
    let mut value_streams = Vec::new();
    for vs in &model.value_streams {
        let mut vs_total = 0.0;
        for p in &vs.processes {
            let mut total = 0.0;
            for d in &p.decisions {
                total += params.decision_weights.get(&d.id).ok_or_else(|| {
                    Error::ModelMismatch(format!("no weight for decision `{}`", d.id))
                })?;
            }
            vs_total += total;
            processes.push(ProcessWeight {
                value_stream_id: vs.id.clone(),
                process_id: p.id.clone(),
                name: p.name.clone(),
                weight: total,
            });
        }
        value_streams.push(ValueStreamWeight {
            value_stream_id: vs.id.clone(),
            name: vs.name.clone(),
            weight: vs_total,
        });
    }
    Ok(WeightRollup {
        processes,
        value_streams,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TopNComparison {
    pub n: usize,
    pub overlap_count: usize,
    /// Shared ids, in the order of the first ranking.
    pub common_ids: Vec<String>,
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

/// Overlap of the first `n` entries of two rankings.
pub fn compare_top_n<A: AsRef<str>, B: AsRef<str>>(
    ranking_a: &[A],
    ranking_b: &[B],
    n: usize,
) -> Result<TopNComparison, Error> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let top_a: Vec<&str> = ranking_a.iter().take(n).map(AsRef::as_ref).collect();
    let top_b: Vec<&str> = ranking_b.iter().take(n).map(AsRef::as_ref).collect();
    let set_a: BTreeSet<&str> = top_a.iter().copied().collect();
    let set_b: BTreeSet<&str> = top_b.iter().copied().collect();
    let common_ids: Vec<String> = top_a
        .iter()
        .filter(|id| set_b.contains(*id))
        .map(|s| s.to_string())
        .collect();
    Ok(TopNComparison {
        n,
        overlap_count: set_a.intersection(&set_b).count(),
        common_ids,
        only_a: top_a
            .iter()
            .filter(|id| !set_b.contains(*id))
            .map(|s| s.to_string())
            .collect(),
        only_b: top_b
            .iter()
            .filter(|id| !set_a.contains(*id))
            .map(|s| s.to_string())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemDelta {
    pub item_id: String,
    pub score_a: f64,
    pub score_b: f64,
    pub rank_a: usize,
    pub rank_b: usize,
    /// `rank_b - rank_a`; negative means the item moved up.
    pub rank_delta: i64,
}

/// Per-item changes between two reports over the same items, largest rank
/// movement first.
pub fn scenario_delta(
    report_a: &PriorityReport,
    report_b: &PriorityReport,
) -> Result<Vec<ItemDelta>, Error> {
    if !report_a.item_scores.keys().eq(report_b.item_scores.keys()) {
        return Err(Error::ModelMismatch(
            "reports cover different item sets".into(),
        ));
    }
    let ranks = |r: &PriorityReport| -> BTreeMap<String, usize> {
        rank_items(&r.item_scores, None)
            .into_iter()
            .map(|e| (e.item_id, e.rank))
            .collect()
    };
    let (ra, rb) = (ranks(report_a), ranks(report_b));
    let mut out: Vec<ItemDelta> = report_a
        .item_scores
        .iter()
        .map(|(id, &score_a)| ItemDelta {
            item_id: id.clone(),
            score_a,
            score_b: report_b.item_scores[id],
            rank_a: ra[id],
            rank_b: rb[id],
            rank_delta: rb[id] as i64 - ra[id] as i64,
        })
        .collect();
    out.sort_by(|a, b| {
        b.rank_delta
            .abs()
            .cmp(&a.rank_delta.abs())
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    Ok(out)
}
