//! The linking model: value streams own processes, processes own decisions,
//! analyses tie a decision to the data items it needs.
//!
//! The first three layers form a strict tree. Analyses carry the only
//! many-to-many relation (analysis to data item), so the incidence between
//! decisions and data items is derived from them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::validation::ValidationReport;
use crate::Error;

pub const DUPLICATE_ID: &str = "duplicate identifier";
pub const EMPTY_ID: &str = "empty identifier";
pub const DANGLING_DECISION: &str = "dangling decision reference";
pub const DANGLING_ITEM: &str = "dangling data item reference";
pub const NO_ITEMS: &str = "analysis has no data items";
pub const NO_PROCESSES: &str = "value stream has no processes";
pub const NO_DECISIONS: &str = "process has no decisions";
pub const NO_VALUE_STREAMS: &str = "model has no value streams";
pub const EMPTY_CATEGORY: &str = "empty category";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinkingModel {
    pub name: String,
    /// Set when the analysis and data item layers are illustrative rather
    /// than collected from practice.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic_links: bool,
    pub value_streams: Vec<ValueStream>,
    pub data_items: Vec<DataItem>,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ValueStream {
    pub id: String,
    pub name: String,
    pub processes: Vec<Process>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Process {
    pub id: String,
    pub name: String,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Decision {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Analysis {
    pub id: String,
    pub name: String,
    pub decision_id: String,
    pub data_item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DataItem {
    pub id: String,
    pub name: String,
    pub category: String,
}

/// Position of a decision in the value tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionPath<'a> {
    pub value_stream: &'a ValueStream,
    pub process: &'a Process,
    pub decision: &'a Decision,
}

impl LinkingModel {
    /// All decisions in document order, with their owning process and value stream.
    pub fn decision_paths(&self) -> impl Iterator<Item = DecisionPath<'_>> {
        self.value_streams.iter().flat_map(|vs| {
            vs.processes.iter().flat_map(move |p| {
                p.decisions.iter().map(move |d| DecisionPath {
                    value_stream: vs,
                    process: p,
                    decision: d,
                })
            })
        })
    }

    pub fn processes(&self) -> impl Iterator<Item = (&ValueStream, &Process)> {
        self.value_streams
            .iter()
            .flat_map(|vs| vs.processes.iter().map(move |p| (vs, p)))
    }

    pub fn decision_count(&self) -> usize {
        self.decision_paths().count()
    }

    pub fn process_count(&self) -> usize {
        self.processes().count()
    }

    pub fn decision_ids(&self) -> BTreeSet<&str> {
        self.decision_paths()
            .map(|p| p.decision.id.as_str())
            .collect()
    }

    pub fn find_decision(&self, id: &str) -> Option<DecisionPath<'_>> {
        self.decision_paths().find(|p| p.decision.id == id)
    }

    pub fn find_item(&self, id: &str) -> Option<&DataItem> {
        self.data_items.iter().find(|i| i.id == id)
    }

    /// Checks the structural rules and collects every violation.
    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }
}

/// Scans the whole model and reports every structural problem it finds.
pub fn validate_model(doc: &LinkingModel) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen_vs = BTreeSet::new();
    let mut seen_proc = BTreeSet::new();
    let mut seen_dec = BTreeSet::new();

    if doc.value_streams.is_empty() {
        report.push("valueStreams", NO_VALUE_STREAMS);
    }

    for (h, vs) in doc.value_streams.iter().enumerate() {
        let loc = format!("valueStreams[{h}]");
        check_id(&mut report, &mut seen_vs, &vs.id, &loc);
        if vs.processes.is_empty() {
            report.push(&loc, NO_PROCESSES);
        }
        for (i, p) in vs.processes.iter().enumerate() {
            let loc = format!("{loc}.processes[{i}]");
            check_id(&mut report, &mut seen_proc, &p.id, &loc);
            if p.decisions.is_empty() {
                report.push(&loc, NO_DECISIONS);
            }
            for (j, d) in p.decisions.iter().enumerate() {
                let loc = format!("{loc}.decisions[{j}]");
                check_id(&mut report, &mut seen_dec, &d.id, &loc);
            }
        }
    }

    let mut seen_items = BTreeSet::new();
    for (l, item) in doc.data_items.iter().enumerate() {
        let loc = format!("dataItems[{l}]");
        check_id(&mut report, &mut seen_items, &item.id, &loc);
        if item.category.trim().is_empty() {
            report.push(format!("{loc}.category"), EMPTY_CATEGORY);
        }
    }

    let mut seen_analyses = BTreeSet::new();
    for (a, analysis) in doc.analyses.iter().enumerate() {
        let loc = format!("analyses[{a}]");
        check_id(&mut report, &mut seen_analyses, &analysis.id, &loc);
        if !seen_dec.contains(analysis.decision_id.as_str()) {
            report.push(format!("{loc}.decisionId"), DANGLING_DECISION);
        }
        if analysis.data_item_ids.is_empty() {
            report.push(format!("{loc}.dataItemIds"), NO_ITEMS);
        }
        for (k, item_id) in analysis.data_item_ids.iter().enumerate() {
            if !seen_items.contains(item_id.as_str()) {
                report.push(format!("{loc}.dataItemIds[{k}]"), DANGLING_ITEM);
            }
        }
    }

    report
}

fn check_id<'a>(
    report: &mut ValidationReport,
    seen: &mut BTreeSet<&'a str>,
    id: &'a str,
    loc: &str,
) {
    if id.trim().is_empty() {
        report.push(format!("{loc}.id"), EMPTY_ID);
    } else if !seen.insert(id) {
        report.push(format!("{loc}.id"), DUPLICATE_ID);
    }
}

/// Which data items feed which decision, with set semantics: an item reached
/// through several analyses of the same decision counts once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMap {
    links: BTreeMap<String, BTreeSet<String>>,
    items: BTreeSet<String>,
}

impl IncidenceMap {
    /// The 0/1 indicator for `(decision, item)`.
    pub fn phi(&self, decision: &str, item: &str) -> u8 {
        self.links.get(decision).is_some_and(|s| s.contains(item)) as u8
    }

    /// Number of distinct items linked to `decision`; 0 for unknown decisions.
    pub fn fanout(&self, decision: &str) -> usize {
        self.links.get(decision).map_or(0, BTreeSet::len)
    }

    pub fn linked_items(&self, decision: &str) -> Option<&BTreeSet<String>> {
        self.links.get(decision)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &str> {
        self.links.keys().map(String::as_str)
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(String::as_str)
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// `(decision, linked items)` for every decision, including empty ones.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.links.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Derives the decision/item incidence. Rejects models that fail validation.
pub fn derive_incidence(model: &LinkingModel) -> Result<IncidenceMap, Error> {
    let report = validate_model(model);
    if !report.is_empty() {
        return Err(Error::InvalidModel(report));
    }
    let mut links: BTreeMap<String, BTreeSet<String>> = model
        .decision_paths()
        .map(|p| (p.decision.id.clone(), BTreeSet::new()))
        .collect();
    for analysis in &model.analyses {
        // validated above: the decision exists
        let set = links.get_mut(&analysis.decision_id).expect("validated");
        set.extend(analysis.data_item_ids.iter().cloned());
    }
    let items = model.data_items.iter().map(|i| i.id.clone()).collect();
    Ok(IncidenceMap { links, items })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessCoverage {
    pub value_stream_id: String,
    pub process_id: String,
    pub name: String,
    pub decisions: usize,
    pub analyses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageStats {
    pub processes: Vec<ProcessCoverage>,
    /// Data items per category.
    pub categories: BTreeMap<String, usize>,
    pub total_decisions: usize,
    pub total_analyses: usize,
    pub total_items: usize,
}

/// Decision and analysis counts per process, item counts per category.
pub fn coverage_report(model: &LinkingModel) -> CoverageStats {
    let mut analyses_per_decision: HashMap<&str, usize> = HashMap::new();
    for a in &model.analyses {
        *analyses_per_decision
            .entry(a.decision_id.as_str())
            .or_default() += 1;
    }
    let processes: Vec<ProcessCoverage> = model
        .processes()
        .map(|(vs, p)| ProcessCoverage {
            value_stream_id: vs.id.clone(),
            process_id: p.id.clone(),
            name: p.name.clone(),
            decisions: p.decisions.len(),
            analyses: p
                .decisions
                .iter()
                .map(|d| {
                    analyses_per_decision
                        .get(d.id.as_str())
                        .copied()
                        .unwrap_or(0)
                })
                .sum(),
        })
        .collect();
    let mut categories = BTreeMap::new();
    for item in &model.data_items {
        *categories.entry(item.category.clone()).or_default() += 1;
    }
    CoverageStats {
        total_decisions: processes.iter().map(|p| p.decisions).sum(),
        total_analyses: processes.iter().map(|p| p.analyses).sum(),
        total_items: model.data_items.len(),
        processes,
        categories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn hr_fixture_is_valid() {
        let report = validate_model(&fixture::hr_model());
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn dangling_decision_reported_once() {
        let mut m = fixture::demo_model();
        m.analyses[0].decision_id = "nope".into();
        let report = validate_model(&m);
        assert_eq!(report.len(), 1, "{report}");
        assert_eq!(report.violations[0].message, DANGLING_DECISION);
        assert_eq!(report.violations[0].location, "analyses[0].decisionId");
    }

    #[test]
    fn duplicate_item_reported_once() {
        let mut m = fixture::demo_model();
        let dup = m.data_items[0].clone();
        m.data_items.push(dup);
        let report = validate_model(&m);
        assert_eq!(report.len(), 1, "{report}");
        assert_eq!(report.violations[0].message, DUPLICATE_ID);
    }

    #[test]
    fn all_violations_collected() {
        let mut m = fixture::demo_model();
        m.value_streams[0].processes[1].decisions.clear();
        m.data_items[1].category = " ".into();
        m.analyses[0].data_item_ids.clear();
        m.analyses[1].data_item_ids.push("ghost".into());
        m.value_streams[0].id = String::new();
        let report = validate_model(&m);
        for msg in [
            NO_DECISIONS,
            EMPTY_CATEGORY,
            NO_ITEMS,
            DANGLING_ITEM,
            EMPTY_ID,
        ] {
            assert!(report.contains(msg), "missing {msg}: {report}");
        }
        // j3 vanished with the emptied process, so its analysis dangles too
        assert!(report.contains(DANGLING_DECISION));
    }

    #[test]
    fn empty_value_stream_rejected() {
        let mut m = fixture::demo_model();
        m.value_streams.push(ValueStream {
            id: "v2".into(),
            name: "Empty".into(),
            processes: vec![],
        });
        assert!(validate_model(&m).contains(NO_PROCESSES));
    }

    #[test]
    fn demo_incidence() {
        let inc = derive_incidence(&fixture::demo_model()).unwrap();
        assert_eq!(inc.fanout("j1"), 2);
        assert_eq!(inc.fanout("j2"), 0);
        assert_eq!(inc.fanout("j3"), 2);
        assert_eq!(inc.phi("j1", "A"), 1);
        assert_eq!(inc.phi("j1", "C"), 0);
        assert_eq!(inc.phi("j3", "C"), 1);
    }

    #[test]
    fn repeated_link_counts_once() {
        let mut m = fixture::demo_model();
        m.analyses.push(Analysis {
            id: "extra".into(),
            name: "Second look at A".into(),
            decision_id: "j1".into(),
            data_item_ids: vec!["A".into(), "A".into()],
        });
        let inc = derive_incidence(&m).unwrap();
        assert_eq!(inc.phi("j1", "A"), 1);
        assert_eq!(inc.fanout("j1"), 2);
    }

    #[test]
    fn incidence_rejects_invalid_model() {
        let mut m = fixture::demo_model();
        m.analyses[0].decision_id = "nope".into();
        assert!(matches!(derive_incidence(&m), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn fanout_equals_phi_sum() {
        let m = fixture::hr_model();
        let inc = derive_incidence(&m).unwrap();
        for d in m.decision_ids() {
            let sum: usize = m
                .data_items
                .iter()
                .map(|i| inc.phi(d, &i.id) as usize)
                .sum();
            assert_eq!(inc.fanout(d), sum);
        }
        assert_eq!(inc, derive_incidence(&m).unwrap());
    }

    #[test]
    fn hr_coverage() {
        let m = fixture::hr_model();
        let cov = coverage_report(&m);
        assert_eq!(cov.processes.len(), 25);
        assert_eq!(cov.total_decisions, 55);
        assert_eq!(cov.total_analyses, m.analyses.len());
        assert_eq!(cov.categories.len(), 16);
        assert_eq!(cov.categories.values().sum::<usize>(), m.data_items.len());
    }

    #[test]
    fn coverage_without_analyses() {
        let mut m = fixture::demo_model();
        m.analyses.clear();
        let cov = coverage_report(&m);
        assert!(cov.processes.iter().all(|p| p.analyses == 0));
        assert_eq!(cov.total_analyses, 0);
    }

    #[test]
    fn demo_coverage() {
        let cov = coverage_report(&fixture::demo_model());
        let counts: Vec<_> = cov
            .processes
            .iter()
            .map(|p| (p.process_id.as_str(), p.decisions))
            .collect();
        assert_eq!(counts, vec![("p1", 2), ("p2", 1)]);
    }
}
