//! Bundled documents.
//!
//! The HR case study carries the published process map (6 value streams,
//! 25 processes, 55 decisions) and the published decision weights and data
//! supports. Its analyses and data items are illustrative only, which the
//! model marks with `syntheticLinks: true`. The other fixtures are small
//! hand-made scenarios used throughout the tests.

use crate::elicitation::ScenarioJudgments;
use crate::io::{parse_aggregated, parse_judgments, parse_model, AggregatedParametersDoc};
use crate::model::LinkingModel;

pub const HR_MODEL_JSON: &str = include_str!("../fixtures/hr_model.json");
pub const HR_AGGREGATED_JSON: &str = include_str!("../fixtures/hr_aggregated.json");
pub const DEMO_MODEL_JSON: &str = include_str!("../fixtures/demo_model.json");
pub const DEMO_JUDGMENTS_JSON: &str = include_str!("../fixtures/demo_judgments.json");
pub const SWING_EXAMPLE_MODEL_JSON: &str = include_str!("../fixtures/swing_example_model.json");
pub const SWING_EXAMPLE_JUDGMENTS_JSON: &str =
    include_str!("../fixtures/swing_example_judgments.json");

pub fn hr_model() -> LinkingModel {
    parse_model(HR_MODEL_JSON).expect("bundled HR model is valid")
}

pub fn hr_aggregated() -> AggregatedParametersDoc {
    parse_aggregated(HR_AGGREGATED_JSON).expect("bundled HR parameters are valid")
}

/// One value stream, processes `p1 = {j1, j2}` and `p2 = {j3}`, items A, B, C
/// with links `j1 -> {A, B}` and `j3 -> {A, C}`.
pub fn demo_model() -> LinkingModel {
    parse_model(DEMO_MODEL_JSON).expect("bundled demo model is valid")
}

/// Judgments for [`demo_model`] giving `w = {0.3, 0.3, 0.4}` and
/// `d = {0.7, 0.3, 0.9}`.
pub fn demo_judgments() -> ScenarioJudgments {
    parse_judgments(DEMO_JUDGMENTS_JSON).expect("bundled demo judgments are valid")
}

pub fn swing_example_model() -> LinkingModel {
    parse_model(SWING_EXAMPLE_MODEL_JSON).expect("bundled example model is valid")
}

/// A single performance-management group judged `{j0: 100, j1: 33, j2: 67}`.
pub fn swing_example_judgments() -> ScenarioJudgments {
    parse_judgments(SWING_EXAMPLE_JUDGMENTS_JSON).expect("bundled example judgments are valid")
}
