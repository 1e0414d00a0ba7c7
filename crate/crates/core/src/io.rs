//! JSON document formats and report export.
//!
//! Three input documents exist: `model.json` ([`LinkingModel`]),
//! `judgments.json` ([`ScenarioJudgments`]) and `aggregated.json`
//! ([`AggregatedParametersDoc`]). Import distinguishes malformed JSON,
//! schema mismatches (with the JSON path) and invariant violations.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::elicitation::{validate_swings, ConsensusParameters, ScenarioJudgments, SwingGroup};
use crate::model::{validate_model, LinkingModel};
use crate::scoring::{PriorityReport, SensitivityReport};
use crate::validation::ValidationReport;

/// Allowed deviation of imported weight sums from 1. Published tables are
/// rounded, so their columns do not add up exactly.
pub const AGGREGATED_WEIGHT_TOLERANCE: f64 = 0.01;

pub const WEIGHT_SUM_OUT_OF_TOLERANCE: &str = "weights sum outside tolerance";
pub const WEIGHT_OUT_OF_RANGE: &str = "weight outside [0, 1]";
pub const SUPPORT_OUT_OF_RANGE: &str = "support outside [0, 1]";
pub const MISSING_DECISION: &str = "decision missing from parameters";

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violation:\n{0}")]
    Invariant(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    Model,
    Judgments,
    Aggregated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Model(LinkingModel),
    Judgments(ScenarioJudgments),
    Aggregated(AggregatedParametersDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AggregatedDecision {
    pub decision_id: String,
    pub weight: f64,
    pub support: f64,
}

/// Finished decision weights and supports, e.g. transcribed from a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AggregatedParametersDoc {
    pub decisions: Vec<AggregatedDecision>,
}

impl AggregatedParametersDoc {
    pub fn weight_sum(&self) -> f64 {
        self.decisions.iter().map(|d| d.weight).sum()
    }

    /// Checks the document on its own: ranges, duplicates and the weight sum.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut seen = BTreeSet::new();
        for (k, d) in self.decisions.iter().enumerate() {
            let loc = format!("decisions[{k}]");
            if !seen.insert(d.decision_id.as_str()) {
                report.push(format!("{loc}.decisionId"), crate::model::DUPLICATE_ID);
            }
            if !(0.0..=1.0).contains(&d.weight) {
                report.push(format!("{loc}.weight"), WEIGHT_OUT_OF_RANGE);
            }
            if !(0.0..=1.0).contains(&d.support) {
                report.push(format!("{loc}.support"), SUPPORT_OUT_OF_RANGE);
            }
        }
        let sum = self.weight_sum();
        if sum.is_nan() || (sum - 1.0).abs() > AGGREGATED_WEIGHT_TOLERANCE {
            report.push("decisions", WEIGHT_SUM_OUT_OF_TOLERANCE);
        }
        report
    }

    /// Resolves every entry against `model`; each model decision needs
    /// exactly one entry.
    pub fn into_parameters(self, model: &LinkingModel) -> Result<ConsensusParameters, ImportError> {
        let mut report = self.validate();
        let known = model.decision_ids();
        for (k, d) in self.decisions.iter().enumerate() {
            if !known.contains(d.decision_id.as_str()) {
                report.push(
                    format!("decisions[{k}].decisionId"),
                    crate::elicitation::UNKNOWN_DECISION,
                );
            }
        }
        let present: BTreeSet<&str> = self
            .decisions
            .iter()
            .map(|d| d.decision_id.as_str())
            .collect();
        for j in &known {
            if !present.contains(j) {
                report.push(*j, MISSING_DECISION);
            }
        }
        if !report.is_empty() {
            return Err(ImportError::Invariant(report));
        }
        Ok(ConsensusParameters {
            sibling_weights: Default::default(),
            decision_weights: self
                .decisions
                .iter()
                .map(|d| (d.decision_id.clone(), d.weight))
                .collect(),
            supports: self
                .decisions
                .into_iter()
                .map(|d| (d.decision_id, d.support))
                .collect(),
        })
    }

    /// Writes parameters in model decision order.
    pub fn from_parameters(params: &ConsensusParameters, model: &LinkingModel) -> Self {
        Self {
            decisions: model
                .decision_paths()
                .map(|p| {
                    let j = &p.decision.id;
                    AggregatedDecision {
                        decision_id: j.clone(),
                        weight: params.decision_weights.get(j).copied().unwrap_or(0.0),
                        support: params.supports.get(j).copied().unwrap_or(0.0),
                    }
                })
                .collect(),
        }
    }
}

fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ImportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ImportError::Syntax {
        line: 0,
        column: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ImportError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize(value).map_err(|e| ImportError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn parse_model(text: &str) -> Result<LinkingModel, ImportError> {
    let model: LinkingModel = parse_json(text.as_bytes())?;
    let report = validate_model(&model);
    if !report.is_empty() {
        return Err(ImportError::Invariant(report));
    }
    Ok(model)
}

/// Parses a judgments file and checks what can be checked without a model:
/// unique assessors, one judgment per pair, and well-formed swing entries.
pub fn parse_judgments(text: &str) -> Result<ScenarioJudgments, ImportError> {
    let doc: ScenarioJudgments = parse_json(text.as_bytes())?;
    let mut report = ValidationReport::default();
    let mut assessors = BTreeSet::new();
    for (k, a) in doc.assessors.iter().enumerate() {
        if !assessors.insert(a.id.as_str()) {
            report.push(
                format!("assessors[{k}].id"),
                crate::elicitation::DUPLICATE_ASSESSOR,
            );
        }
    }
    let mut pairs = BTreeSet::new();
    for (k, sj) in doc.swing_judgments.iter().enumerate() {
        if !pairs.insert((sj.assessor_id.as_str(), sj.group_id.as_str())) {
            report.push(
                format!("swingJudgments[{k}]"),
                crate::elicitation::DUPLICATE_JUDGMENT,
            );
        }
        // membership is checked against the model later; only entry values here
        let own = SwingGroup {
            group_id: sj.group_id.clone(),
            member_ids: sj.entries.keys().cloned().collect(),
        };
        report.extend(validate_swings(sj, &own));
    }
    let mut pairs = BTreeSet::new();
    for (k, s) in doc.support_judgments.iter().enumerate() {
        if !pairs.insert((s.assessor_id.as_str(), s.decision_id.as_str())) {
            report.push(
                format!("supportJudgments[{k}]"),
                crate::elicitation::DUPLICATE_JUDGMENT,
            );
        }
    }
    if !report.is_empty() {
        return Err(ImportError::Invariant(report));
    }
    Ok(doc)
}

pub fn parse_aggregated(text: &str) -> Result<AggregatedParametersDoc, ImportError> {
    let doc: AggregatedParametersDoc = parse_json(text.as_bytes())?;
    let report = doc.validate();
    if !report.is_empty() {
        return Err(ImportError::Invariant(report));
    }
    Ok(doc)
}

pub fn import_document(kind: DocumentKind, bytes: &[u8]) -> Result<Document, ImportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ImportError::Syntax {
        line: 0,
        column: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    Ok(match kind {
        DocumentKind::Model => Document::Model(parse_model(text)?),
        DocumentKind::Judgments => Document::Judgments(parse_judgments(text)?),
        DocumentKind::Aggregated => Document::Aggregated(parse_aggregated(text)?),
    })
}

pub fn parse_priority_report(text: &str) -> Result<PriorityReport, ImportError> {
    parse_json(text.as_bytes())
}

pub fn parse_sensitivity_report(text: &str) -> Result<SensitivityReport, ImportError> {
    parse_json(text.as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types always serialise");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy)]
pub enum ReportRef<'a> {
    Priority(&'a PriorityReport),
    Sensitivity(&'a SensitivityReport),
}

/// Serialises a report. Priority CSV columns are
/// `rank,item_id,name,category,index` with six decimals.
pub fn export_report(report: ReportRef<'_>, format: ReportFormat) -> Vec<u8> {
    match (report, format) {
        (ReportRef::Priority(r), ReportFormat::Json) => to_json(r).into_bytes(),
        (ReportRef::Sensitivity(r), ReportFormat::Json) => to_json(r).into_bytes(),
        (ReportRef::Priority(r), ReportFormat::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["rank", "item_id", "name", "category", "index"])
                .expect("in-memory write");
            for e in &r.ranking {
                w.write_record([
                    e.rank.to_string(),
                    e.item_id.clone(),
                    e.name.clone(),
                    e.category.clone(),
                    format!("{:.6}", e.score),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
        (ReportRef::Sensitivity(r), ReportFormat::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "item_id",
                "baseline_rank",
                "min_rank",
                "max_rank",
                "top_k_probability",
            ])
            .expect("in-memory write");
            for i in &r.items {
                w.write_record([
                    i.item_id.clone(),
                    i.baseline_rank.to_string(),
                    i.min_rank.to_string(),
                    i.max_rank.to_string(),
                    format!("{:.6}", i.top_k_probability),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}
