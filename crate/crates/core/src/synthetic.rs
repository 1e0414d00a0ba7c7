//! Random linking models, parameters and judgments for property tests and
//! benchmarks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::elicitation::{
    compose_weights, normalize_positive, swing_groups, Assessor, ConsensusParameters,
    ScenarioJudgments, SupportJudgment, SupportLabel, SwingJudgment, REFERENCE_SWING,
};
use crate::model::{Analysis, DataItem, Decision, LinkingModel, Process, ValueStream};

/// Upper bounds for a generated model. Every count is drawn from `1..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceShape {
    pub max_value_streams: usize,
    pub max_processes: usize,
    pub max_decisions: usize,
    pub max_items: usize,
    pub max_analyses_per_decision: usize,
    pub max_items_per_analysis: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_value_streams: 4,
            max_processes: 5,
            max_decisions: 6,
            max_items: 20,
            max_analyses_per_decision: 3,
            max_items_per_analysis: 4,
        }
    }
}

/// A model together with per-group consensus weights and supports.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub model: LinkingModel,
    pub sibling_weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub supports: BTreeMap<String, f64>,
}

impl RandomInstance {
    pub fn parameters(&self) -> ConsensusParameters {
        ConsensusParameters {
            decision_weights: compose_weights(&self.sibling_weights, &self.model)
                .expect("every group has weights"),
            sibling_weights: self.sibling_weights.clone(),
            supports: self.supports.clone(),
        }
    }
}

const CATEGORIES: [&str; 4] = [
    "Role information",
    "Personal details",
    "Absence",
    "Training",
];

/// Builds a valid model. Some decisions may end up with no analyses.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, shape: &InstanceShape) -> LinkingModel {
    let n_items = rng.gen_range(1..=shape.max_items);
    let data_items: Vec<DataItem> = (0..n_items)
        .map(|l| DataItem {
            id: format!("i{l:02}"),
            name: format!("Item {l}"),
            category: CATEGORIES[l % CATEGORIES.len()].to_string(),
        })
        .collect();

    let mut value_streams = Vec::new();
    let mut analyses = Vec::new();
    for h in 0..rng.gen_range(1..=shape.max_value_streams) {
        let mut processes = Vec::new();
        for i in 0..rng.gen_range(1..=shape.max_processes) {
            let mut decisions = Vec::new();
            for j in 0..rng.gen_range(1..=shape.max_decisions) {
                let id = format!("d{h}.{i}.{j}");
                for _ in 0..rng.gen_range(0..=shape.max_analyses_per_decision) {
                    let k = rng.gen_range(1..=shape.max_items_per_analysis.min(n_items));
                    let ids = data_items
                        .choose_multiple(rng, k)
                        .map(|it| it.id.clone())
                        .collect();
                    analyses.push(Analysis {
                        id: format!("a{}", analyses.len()),
                        name: format!("Analysis for {id}"),
                        decision_id: id.clone(),
                        data_item_ids: ids,
                    });
                }
                decisions.push(Decision {
                    text: format!("Decision {id}"),
                    id,
                });
            }
            processes.push(Process {
                id: format!("p{h}.{i}"),
                name: format!("Process {h}.{i}"),
                decisions,
            });
        }
        value_streams.push(ValueStream {
            id: format!("v{h}"),
            name: format!("Value stream {h}"),
            processes,
        });
    }

    LinkingModel {
        name: "random".into(),
        synthetic_links: true,
        value_streams,
        data_items,
        analyses,
    }
}

/// Random model plus positive sibling weights (summing to one per group) and
/// supports drawn from the six-point scale.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, shape: &InstanceShape) -> RandomInstance {
    let model = random_model(rng, shape);
    let sibling_weights = swing_groups(&model)
        .into_iter()
        .map(|g| {
            let raw: BTreeMap<String, f64> = g
                .member_ids
                .into_iter()
                .map(|m| (m, rng.gen_range(0.05..1.0)))
                .collect();
            (g.group_id, normalize_positive(&raw))
        })
        .collect();
    let supports = model
        .decision_paths()
        .map(|p| {
            let label = *SupportLabel::ALL.choose(rng).expect("non-empty");
            (p.decision.id.clone(), label.value())
        })
        .collect();
    RandomInstance {
        model,
        sibling_weights,
        supports,
    }
}

/// A complete judgment set: every assessor judges every group and decision.
pub fn random_judgments<R: Rng + ?Sized>(
    rng: &mut R,
    model: &LinkingModel,
    assessors: usize,
) -> ScenarioJudgments {
    let ids: Vec<String> = (0..assessors).map(|p| format!("p{p}")).collect();
    let mut swing_judgments = Vec::new();
    let mut support_judgments = Vec::new();
    for id in &ids {
        for g in swing_groups(model) {
            let reference = rng.gen_range(0..g.member_ids.len());
            let entries = g
                .member_ids
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let v = if k == reference {
                        REFERENCE_SWING
                    } else {
                        rng.gen_range(1..=100) as f64
                    };
                    (m.clone(), v)
                })
                .collect();
            swing_judgments.push(SwingJudgment {
                assessor_id: id.clone(),
                group_id: g.group_id,
                entries,
            });
        }
        for p in model.decision_paths() {
            // skip "no support" so the strict geometric mean stays informative
            let label = SupportLabel::ALL[rng.gen_range(1..SupportLabel::ALL.len())];
            support_judgments.push(SupportJudgment {
                assessor_id: id.clone(),
                decision_id: p.decision.id.clone(),
                label,
            });
        }
    }
    ScenarioJudgments {
        scenario_id: "random".into(),
        anchor_description: "average to top 10%".into(),
        assessors: ids
            .into_iter()
            .map(|id| Assessor {
                id,
                role: "assessor".into(),
            })
            .collect(),
        swing_judgments,
        support_judgments,
    }
}
