//! Swing-weight and data-support judgments, their validation, and the
//! geometric-mean consensus that turns them into decision weights.
//!
//! Weights are elicited level by level. Every sibling group (all value
//! streams, the processes of one value stream, the decisions of one process)
//! is judged separately: the assessor gives the most valuable swing 100 and
//! rates the others relative to it. Per-assessor judgments are normalised,
//! combined by geometric mean, renormalised, and finally multiplied down the
//! tree to get one weight per decision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::LinkingModel;
use crate::validation::ValidationReport;
use crate::Error;

pub const MISSING_MEMBER: &str = "missing member";
pub const UNKNOWN_MEMBER: &str = "unknown member";
pub const NON_POSITIVE_SWING: &str = "non-positive swing";
pub const SWING_OUT_OF_RANGE: &str = "swing outside (0, 100]";
pub const NO_REFERENCE_SWING: &str = "no reference swing";
pub const UNKNOWN_GROUP: &str = "unknown group";
pub const UNKNOWN_ASSESSOR: &str = "unknown assessor";
pub const UNKNOWN_DECISION: &str = "unknown decision";
pub const DUPLICATE_JUDGMENT: &str = "duplicate judgment";
pub const DUPLICATE_ASSESSOR: &str = "duplicate assessor";
pub const GROUP_MISMATCH: &str = "judgment group does not match";

/// Provisional weight of the reference swing, in percent.
pub const REFERENCE_SWING: f64 = 100.0;

/// Identifies one sibling group of the value tree.
///
/// Encoded as `vs` (all value streams), `vs:<id>` (processes of one value
/// stream) or `proc:<id>` (decisions of one process).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    ValueStreams,
    Processes(String),
    Decisions(String),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::ValueStreams => f.write_str("vs"),
            GroupKey::Processes(vs) => write!(f, "vs:{vs}"),
            GroupKey::Decisions(p) => write!(f, "proc:{p}"),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "vs" {
            return Ok(GroupKey::ValueStreams);
        }
        match s.split_once(':') {
            Some(("vs", id)) if !id.is_empty() => Ok(GroupKey::Processes(id.to_string())),
            Some(("proc", id)) if !id.is_empty() => Ok(GroupKey::Decisions(id.to_string())),
            _ => Err(Error::UnknownId(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwingGroup {
    pub group_id: String,
    pub member_ids: Vec<String>,
}

/// Every sibling group of the model: `vs` first, then per value stream its
/// process group followed by one decision group per process.
pub fn swing_groups(model: &LinkingModel) -> Vec<SwingGroup> {
    let mut groups = vec![SwingGroup {
        group_id: GroupKey::ValueStreams.to_string(),
        member_ids: model.value_streams.iter().map(|v| v.id.clone()).collect(),
    }];
    for vs in &model.value_streams {
        groups.push(SwingGroup {
            group_id: GroupKey::Processes(vs.id.clone()).to_string(),
            member_ids: vs.processes.iter().map(|p| p.id.clone()).collect(),
        });
        for p in &vs.processes {
            groups.push(SwingGroup {
                group_id: GroupKey::Decisions(p.id.clone()).to_string(),
                member_ids: p.decisions.iter().map(|d| d.id.clone()).collect(),
            });
        }
    }
    groups
}

/// Looks up one sibling group by its encoded id.
pub fn find_group(model: &LinkingModel, group_id: &str) -> Option<SwingGroup> {
    let key: GroupKey = group_id.parse().ok()?;
    let member_ids = match &key {
        GroupKey::ValueStreams => model.value_streams.iter().map(|v| v.id.clone()).collect(),
        GroupKey::Processes(vs) => model
            .value_streams
            .iter()
            .find(|v| &v.id == vs)?
            .processes
            .iter()
            .map(|p| p.id.clone())
            .collect(),
        GroupKey::Decisions(proc) => model
            .processes()
            .find(|(_, p)| &p.id == proc)?
            .1
            .decisions
            .iter()
            .map(|d| d.id.clone())
            .collect(),
    };
    Some(SwingGroup {
        group_id: key.to_string(),
        member_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Assessor {
    pub id: String,
    #[serde(default)]
    pub role: String,
}

/// One assessor's provisional swing weights (percent) for one sibling group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SwingJudgment {
    pub assessor_id: String,
    pub group_id: String,
    pub entries: BTreeMap<String, f64>,
}

/// The six data-support classes offered to assessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportLabel {
    NoSupport,
    AlmostNone,
    Low,
    Medium,
    High,
    AlmostSufficient,
}

impl SupportLabel {
    pub const ALL: [SupportLabel; 6] = [
        SupportLabel::NoSupport,
        SupportLabel::AlmostNone,
        SupportLabel::Low,
        SupportLabel::Medium,
        SupportLabel::High,
        SupportLabel::AlmostSufficient,
    ];

    /// Share of the decision that should rest on quantitative analysis.
    pub fn value(self) -> f64 {
        match self {
            SupportLabel::NoSupport => 0.0,
            SupportLabel::AlmostNone => 0.10,
            SupportLabel::Low => 0.30,
            SupportLabel::Medium => 0.50,
            SupportLabel::High => 0.70,
            SupportLabel::AlmostSufficient => 0.90,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SupportLabel::NoSupport => "no_support",
            SupportLabel::AlmostNone => "almost_none",
            SupportLabel::Low => "low",
            SupportLabel::Medium => "medium",
            SupportLabel::High => "high",
            SupportLabel::AlmostSufficient => "almost_sufficient",
        }
    }
}

impl fmt::Display for SupportLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SupportLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SupportLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Maps a label name to its support value.
pub fn support_value(label: &str) -> Result<f64, Error> {
    label.parse::<SupportLabel>().map(SupportLabel::value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SupportJudgment {
    pub assessor_id: String,
    pub decision_id: String,
    pub label: SupportLabel,
}

/// All judgments collected for one elicitation context.
///
/// The anchor text describes what the swings mean (for example "average to
/// top 10%" or "now to wanted"); it never changes a computation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioJudgments {
    #[serde(rename = "scenario")]
    pub scenario_id: String,
    #[serde(rename = "anchor", default)]
    pub anchor_description: String,
    #[serde(default)]
    pub assessors: Vec<Assessor>,
    #[serde(default)]
    pub swing_judgments: Vec<SwingJudgment>,
    #[serde(default)]
    pub support_judgments: Vec<SupportJudgment>,
}

/// Checks one swing judgment against the group it claims to judge.
pub fn validate_swings(judgment: &SwingJudgment, group: &SwingGroup) -> ValidationReport {
    let mut report = ValidationReport::default();
    let loc = format!("{}/{}", judgment.assessor_id, judgment.group_id);
    if judgment.group_id != group.group_id {
        report.push(&loc, GROUP_MISMATCH);
    }
    for m in &group.member_ids {
        if !judgment.entries.contains_key(m) {
            report.push(format!("{loc}/{m}"), MISSING_MEMBER);
        }
    }
    for id in judgment.entries.keys() {
        if !group.member_ids.contains(id) {
            report.push(format!("{loc}/{id}"), UNKNOWN_MEMBER);
        }
    }
    report.extend(check_entries(&judgment.entries, &loc));
    report
}

fn check_entries(entries: &BTreeMap<String, f64>, loc: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (id, &v) in entries {
        if v.is_finite() && v <= 0.0 {
            report.push(format!("{loc}/{id}"), NON_POSITIVE_SWING);
        } else if !(v > 0.0 && v <= REFERENCE_SWING) {
            report.push(format!("{loc}/{id}"), SWING_OUT_OF_RANGE);
        }
    }
    if !entries.is_empty() && !entries.values().any(|&v| v == REFERENCE_SWING) {
        report.push(loc, NO_REFERENCE_SWING);
    }
    if entries.is_empty() {
        report.push(loc, MISSING_MEMBER);
    }
    report
}

/// Divides each entry by the sum of all entries. Entries must be positive.
pub fn normalize_positive(entries: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = entries.values().sum();
    entries
        .iter()
        .map(|(k, v)| (k.clone(), v / total))
        .collect()
}

/// Turns provisional percentages into weights that sum to one.
pub fn normalize_swings(judgment: &SwingJudgment) -> Result<BTreeMap<String, f64>, Error> {
    let loc = format!("{}/{}", judgment.assessor_id, judgment.group_id);
    let report = check_entries(&judgment.entries, &loc);
    if !report.is_empty() {
        return Err(Error::InvalidJudgments(report));
    }
    Ok(normalize_positive(&judgment.entries))
}

/// Outcome of comparing a subset of swings with a single swing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProbeResult {
    pub subset_sum: f64,
    pub target_value: f64,
    /// `subset_sum / target_value`; 1.0 means the judgments are additive.
    pub ratio: f64,
}

impl ProbeResult {
    pub fn is_consistent(&self, tolerance: f64) -> bool {
        (self.ratio - 1.0).abs() <= tolerance
    }
}

/// Sums the provisional weights of `subset` and compares them with `target`.
///
/// Pure arithmetic; whether a ratio other than 1 needs discussion is up to
/// the facilitator.
pub fn consistency_probe<S: AsRef<str>>(
    judgment: &SwingJudgment,
    subset: &[S],
    target: &str,
) -> Result<ProbeResult, Error> {
    if subset.is_empty() {
        return Err(Error::Empty("probe subset"));
    }
    let lookup = |id: &str| {
        judgment
            .entries
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    };
    let target_value = lookup(target)?;
    let mut seen = BTreeSet::new();
    let mut subset_sum = 0.0;
    for id in subset {
        let id = id.as_ref();
        if id == target {
            return Err(Error::TargetInSubset(id.to_string()));
        }
        if seen.insert(id) {
            subset_sum += lookup(id)?;
        }
    }
    Ok(ProbeResult {
        subset_sum,
        target_value,
        ratio: subset_sum / target_value,
    })
}

fn geometric_mean(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return first;
    }
    // sorted so the result does not depend on assessor order
    values.sort_by(f64::total_cmp);
    let log_sum: f64 = values.iter().map(|v| v.ln()).sum();
    (log_sum / values.len() as f64).exp()
}

/// Geometric-mean consensus over several assessors' normalised weights for
/// one group, renormalised to sum to one.
pub fn aggregate_group(
    normalized: &[BTreeMap<String, f64>],
) -> Result<BTreeMap<String, f64>, Error> {
    let first = normalized.first().ok_or(Error::Empty("assessor set"))?;
    if first.is_empty() {
        return Err(Error::Empty("group"));
    }
    for m in normalized {
        if m.len() != first.len() || !m.keys().all(|k| first.contains_key(k)) {
            return Err(Error::InconsistentMembers);
        }
        if let Some((k, v)) = m.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight for `{k}` must be positive, got {v}"
            )));
        }
    }
    let means: BTreeMap<String, f64> = first
        .keys()
        .map(|k| {
            let mut vals: Vec<f64> = normalized.iter().map(|m| m[k]).collect();
            (k.clone(), geometric_mean(&mut vals))
        })
        .collect();
    Ok(normalize_positive(&means))
}

/// Multiplies the consensus weights down the tree: `w_j = w_h * w_hi * w_hij`.
///
/// `consensus` is keyed by group id and must contain every group of the model.
pub fn compose_weights(
    consensus: &BTreeMap<String, BTreeMap<String, f64>>,
    model: &LinkingModel,
) -> Result<BTreeMap<String, f64>, Error> {
    let missing: Vec<String> = swing_groups(model)
        .into_iter()
        .filter(|g| !consensus.contains_key(&g.group_id))
        .map(|g| g.group_id)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroups(missing));
    }
    let weight = |group: &GroupKey, member: &str| -> Result<f64, Error> {
        consensus[&group.to_string()]
            .get(member)
            .copied()
            .ok_or_else(|| Error::ModelMismatch(format!("group `{group}` lacks member `{member}`")))
    };
    let mut out = BTreeMap::new();
    for path in model.decision_paths() {
        let w_h = weight(&GroupKey::ValueStreams, &path.value_stream.id)?;
        let w_hi = weight(
            &GroupKey::Processes(path.value_stream.id.clone()),
            &path.process.id,
        )?;
        let w_hij = weight(
            &GroupKey::Decisions(path.process.id.clone()),
            &path.decision.id,
        )?;
        out.insert(path.decision.id.clone(), w_h * w_hi * w_hij);
    }
    Ok(out)
}

/// How zero support votes enter the geometric mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Plain geometric mean: a single zero vote makes the result zero.
    #[default]
    Strict,
    /// Geometric mean over positive votes only; zero only if every vote is zero.
    ExcludeZeros,
}

/// Combines per-assessor support values for one decision.
pub fn aggregate_support(values: &[f64], policy: SupportPolicy) -> Result<f64, Error> {
    if values.is_empty() {
        return Err(Error::Empty("support values"));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "support value {v} outside [0, 1]"
        )));
    }
    let mut positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Ok(0.0);
    }
    match policy {
        SupportPolicy::Strict if positive.len() < values.len() => Ok(0.0),
        _ => Ok(geometric_mean(&mut positive)),
    }
}

/// Aggregated parameters ready for scoring.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsensusParameters {
    /// Consensus weights per sibling group. Empty when the parameters were
    /// imported as finished decision weights.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sibling_weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub decision_weights: BTreeMap<String, f64>,
    pub supports: BTreeMap<String, f64>,
}

/// Checks a whole judgment set against the model.
pub fn validate_judgments(model: &LinkingModel, judgments: &ScenarioJudgments) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut assessors = BTreeSet::new();
    for (k, a) in judgments.assessors.iter().enumerate() {
        if a.id.trim().is_empty() {
            report.push(format!("assessors[{k}].id"), crate::model::EMPTY_ID);
        } else if !assessors.insert(a.id.as_str()) {
            report.push(format!("assessors[{k}].id"), DUPLICATE_ASSESSOR);
        }
    }

    let groups: BTreeMap<String, SwingGroup> = swing_groups(model)
        .into_iter()
        .map(|g| (g.group_id.clone(), g))
        .collect();
    let mut pairs = BTreeSet::new();
    for (k, sj) in judgments.swing_judgments.iter().enumerate() {
        let loc = format!("swingJudgments[{k}]");
        if !assessors.contains(sj.assessor_id.as_str()) {
            report.push(format!("{loc}.assessorId"), UNKNOWN_ASSESSOR);
        }
        if !pairs.insert((sj.assessor_id.as_str(), sj.group_id.as_str())) {
            report.push(&loc, DUPLICATE_JUDGMENT);
        }
        match groups.get(&sj.group_id) {
            Some(g) => report.extend(validate_swings(sj, g)),
            None => report.push(format!("{loc}.groupId"), UNKNOWN_GROUP),
        }
    }

    let decisions = model.decision_ids();
    let mut pairs = BTreeSet::new();
    for (k, s) in judgments.support_judgments.iter().enumerate() {
        let loc = format!("supportJudgments[{k}]");
        if !assessors.contains(s.assessor_id.as_str()) {
            report.push(format!("{loc}.assessorId"), UNKNOWN_ASSESSOR);
        }
        if !decisions.contains(s.decision_id.as_str()) {
            report.push(format!("{loc}.decisionId"), UNKNOWN_DECISION);
        }
        if !pairs.insert((s.assessor_id.as_str(), s.decision_id.as_str())) {
            report.push(&loc, DUPLICATE_JUDGMENT);
        }
    }
    report
}

/// Consensus for one sibling group, or `None` when nobody judged it yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupConsensus {
    pub group_id: String,
    pub assessors: usize,
    pub weights: Option<BTreeMap<String, f64>>,
}

/// What can be computed from a possibly incomplete judgment set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsensusSnapshot {
    pub groups: Vec<GroupConsensus>,
    /// Only decisions whose three enclosing groups all have judgments.
    pub decision_weights: BTreeMap<String, f64>,
    pub supports: BTreeMap<String, f64>,
    pub missing_groups: Vec<String>,
    pub missing_supports: Vec<String>,
}

impl ConsensusSnapshot {
    pub fn is_complete(&self) -> bool {
        self.missing_groups.is_empty() && self.missing_supports.is_empty()
    }

    pub fn into_parameters(self) -> Result<ConsensusParameters, Error> {
        if !self.is_complete() {
            return Err(Error::Incomplete {
                missing_groups: self.missing_groups,
                missing_supports: self.missing_supports,
            });
        }
        Ok(ConsensusParameters {
            sibling_weights: self
                .groups
                .into_iter()
                .filter_map(|g| g.weights.map(|w| (g.group_id, w)))
                .collect(),
            decision_weights: self.decision_weights,
            supports: self.supports,
        })
    }
}

/// Runs the aggregation over already-validated swings and numeric supports.
///
/// Each group aggregates over exactly the assessors who judged it.
pub(crate) fn snapshot_from_parts<'a>(
    model: &LinkingModel,
    swings: impl IntoIterator<Item = &'a SwingJudgment>,
    supports: &BTreeMap<String, Vec<f64>>,
    policy: SupportPolicy,
) -> Result<ConsensusSnapshot, Error> {
    let mut by_group: BTreeMap<&str, Vec<BTreeMap<String, f64>>> = BTreeMap::new();
    for sj in swings {
        by_group
            .entry(sj.group_id.as_str())
            .or_default()
            .push(normalize_swings(sj)?);
    }

    let mut groups = Vec::new();
    let mut consensus = BTreeMap::new();
    let mut missing_groups = Vec::new();
    for g in swing_groups(model) {
        let judged = by_group.get(g.group_id.as_str());
        let weights = match judged {
            Some(maps) => {
                let w = aggregate_group(maps)?;
                consensus.insert(g.group_id.clone(), w.clone());
                Some(w)
            }
            None => {
                missing_groups.push(g.group_id.clone());
                None
            }
        };
        groups.push(GroupConsensus {
            group_id: g.group_id,
            assessors: judged.map_or(0, Vec::len),
            weights,
        });
    }

    let mut decision_weights = BTreeMap::new();
    for path in model.decision_paths() {
        let w = |key: GroupKey, member: &str| {
            consensus
                .get(&key.to_string())
                .and_then(|g: &BTreeMap<String, f64>| g.get(member).copied())
        };
        let product = w(GroupKey::ValueStreams, &path.value_stream.id).and_then(|w_h| {
            let w_hi = w(
                GroupKey::Processes(path.value_stream.id.clone()),
                &path.process.id,
            )?;
            let w_hij = w(
                GroupKey::Decisions(path.process.id.clone()),
                &path.decision.id,
            )?;
            Some(w_h * w_hi * w_hij)
        });
        if let Some(p) = product {
            decision_weights.insert(path.decision.id.clone(), p);
        }
    }

    let mut support_values = BTreeMap::new();
    let mut missing_supports = Vec::new();
    for path in model.decision_paths() {
        match supports.get(&path.decision.id) {
            Some(vals) if !vals.is_empty() => {
                support_values.insert(path.decision.id.clone(), aggregate_support(vals, policy)?);
            }
            _ => missing_supports.push(path.decision.id.clone()),
        }
    }

    Ok(ConsensusSnapshot {
        groups,
        decision_weights,
        supports: support_values,
        missing_groups,
        missing_supports,
    })
}

/// Aggregates whatever judgments exist so far. Fails only on invalid judgments.
pub fn consensus_snapshot(
    model: &LinkingModel,
    judgments: &ScenarioJudgments,
    policy: SupportPolicy,
) -> Result<ConsensusSnapshot, Error> {
    let report = validate_judgments(model, judgments);
    if !report.is_empty() {
        return Err(Error::InvalidJudgments(report));
    }
    let mut supports: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &judgments.support_judgments {
        supports
            .entry(s.decision_id.clone())
            .or_default()
            .push(s.label.value());
    }
    snapshot_from_parts(model, &judgments.swing_judgments, &supports, policy)
}

/// Full pipeline from raw judgments to scoring parameters. Every group and
/// every decision needs at least one judgment.
pub fn build_consensus(
    model: &LinkingModel,
    judgments: &ScenarioJudgments,
    policy: SupportPolicy,
) -> Result<ConsensusParameters, Error> {
    consensus_snapshot(model, judgments, policy)?.into_parameters()
}
