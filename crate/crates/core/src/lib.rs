//! Prioritises candidate data items for a business-analytics system.
//!
//! A [`LinkingModel`] connects value streams, processes and decisions to the
//! analyses and data items that inform them. Decision weights come from
//! hierarchical swing weighting ([`elicitation`]), each decision gets a data
//! support value, and [`scoring`] splits every decision's weighted support
//! equally over its linked data items to produce the priority index.

pub mod elicitation;
pub mod fixture;
pub mod io;
pub mod model;
pub mod scoring;
pub mod synthetic;
pub mod validation;

pub use elicitation::{
    aggregate_group, aggregate_support, build_consensus, compose_weights, consensus_snapshot,
    consistency_probe, normalize_swings, support_value, validate_judgments, validate_swings,
    Assessor, ConsensusParameters, ConsensusSnapshot, GroupKey, ProbeResult, ScenarioJudgments,
    SupportJudgment, SupportLabel, SupportPolicy, SwingGroup, SwingJudgment,
};
pub use model::{
    coverage_report, derive_incidence, validate_model, Analysis, CoverageStats, DataItem, Decision,
    IncidenceMap, LinkingModel, Process, ValueStream,
};
pub use scoring::{
    compare_top_n, perturb_sensitivity, priority_index, rank_items, rollup_weights, scenario_delta,
    total_weighted_support, PriorityReport, RankedItem, SensitivityConfig, SensitivityReport,
};
pub use validation::{ValidationReport, Violation};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model:\n{0}")]
    InvalidModel(ValidationReport),
    #[error("invalid judgments:\n{0}")]
    InvalidJudgments(ValidationReport),
    #[error("unknown identifier `{0}`")]
    UnknownId(String),
    #[error("target `{0}` is part of the probe subset")]
    TargetInSubset(String),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("assessor weight maps cover different members")]
    InconsistentMembers,
    #[error("no consensus weights for groups: {}", .0.join(", "))]
    MissingGroups(Vec<String>),
    #[error(
        "scenario incomplete: groups without judgments [{}], decisions without support [{}]",
        missing_groups.join(", "),
        missing_supports.join(", ")
    )]
    Incomplete {
        missing_groups: Vec<String>,
        missing_supports: Vec<String>,
    },
    #[error("unknown support label `{0}`")]
    UnknownLabel(String),
    #[error("inputs refer to different models: {0}")]
    ModelMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
