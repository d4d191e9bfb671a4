//! Request and response bodies. Every response carries `schema_version`;
//! see `docs/api.md`.

use std::fmt;
use std::str::FromStr;

use dmlab_core::env::Event;
use dmlab_core::metrics::{ComparisonRow, MetricSummary, ScenarioMetrics};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Stakeholder,
    Volunteer,
    Victim,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Stakeholder, Role::Volunteer, Role::Victim];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Stakeholder => "stakeholder",
            Role::Volunteer => "volunteer",
            Role::Victim => "victim",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Role::Stakeholder => "Stakeholder",
            Role::Volunteer => "Volunteer",
            Role::Victim => "Victim",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stakeholder" => Ok(Role::Stakeholder),
            "volunteer" => Ok(Role::Volunteer),
            "victim" => Ok(Role::Victim),
            other => Err(format!(
                "unknown role {other:?}; expected stakeholder, volunteer or victim"
            )),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CreateSessionRequest {
    pub role: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub role: Role,
    pub tutorial_pending: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionLabel {
    /// The level's own action id; gather is the id after the last class.
    pub action: usize,
    pub label: String,
    pub is_gather: bool,
    pub available: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextItemResponse {
    pub schema_version: u32,
    pub session_id: String,
    /// 0 is the tutorial; scored scenarios count from 1.
    pub scenario_index: usize,
    pub is_training: bool,
    pub level: u8,
    pub level_name: String,
    pub record_id: String,
    pub payload: DisplayPayload,
    pub options: Vec<OptionLabel>,
    pub credits_remaining: u32,
    /// Reward accumulated so far in this scenario.
    pub tree_score: f64,
    pub scored_scenarios_completed: usize,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ActionRequest {
    pub action: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub message: String,
    pub chosen_label: String,
    /// Set after a classification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct_label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub schema_version: u32,
    pub event: Event,
    pub reward: f64,
    /// Scenario score after this action.
    pub tree_score: f64,
    pub feedback: Feedback,
    pub scenario_completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_metrics: Option<ScenarioMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub schema_version: u32,
    pub session_id: String,
    pub role: Role,
    /// Scored scenarios in play order.
    pub scenarios: Vec<ScenarioMetrics>,
    pub total_tree_score: f64,
    pub totals: MetricSummary,
    pub insights: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub scenarios: usize,
    /// `None` renders as N/A.
    pub mts: Option<f64>,
    pub mca: Option<f64>,
    pub mwa: Option<f64>,
    pub mad: Option<f64>,
}

impl From<&ComparisonRow> for ReportRow {
    fn from(row: &ComparisonRow) -> Self {
        let v = row.values.as_ref();
        ReportRow {
            label: row.label.clone(),
            scenarios: row.n_scenarios,
            mts: v.map(|v| v.mts),
            mca: v.map(|v| v.mca),
            mwa: v.map(|v| v.mwa),
            mad: v.map(|v| v.mad),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
    /// Plain-text rendering of `rows`.
    pub text: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_parse_case_insensitively() {
        assert_eq!("Victim".parse::<Role>().unwrap(), Role::Victim);
        assert_eq!(" volunteer ".parse::<Role>().unwrap(), Role::Volunteer);
        assert!("pilot".parse::<Role>().is_err());
        assert_eq!(serde_json::to_string(&Role::Stakeholder).unwrap(), "\"stakeholder\"");
    }
}
