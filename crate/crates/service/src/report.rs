//! Human-vs-agent comparison groups.

use dmlab_core::env::RewardSpec;
use dmlab_core::metrics::{comparison_table, render_comparison_text, ScenarioMetrics};

use crate::model::{ComparisonReport, ReportRow, Role, SCHEMA_VERSION};
use crate::store::SessionRecord;

/// A finished participant's scored scenarios, in session creation order.
#[derive(Clone, Debug)]
pub struct Participant {
    pub role: Role,
    pub scenarios: Vec<ScenarioMetrics>,
}

/// Finished sessions of `records` as participants.
pub fn participants(records: &[SessionRecord], rewards: &RewardSpec) -> dmlab_core::Result<Vec<Participant>> {
    records
        .iter()
        .filter(|r| r.finished)
        .map(|r| {
            Ok(Participant {
                role: r.role,
                scenarios: r.scored_metrics(rewards)?,
            })
        })
        .collect()
}

/// Per role: the aggregate and the participant with most scenarios (first
/// in creation order on ties). Without a role filter a collective row
/// follows. No participants at all gives no groups.
pub fn comparison_groups(participants: &[Participant], role: Option<Role>) -> Vec<(String, Vec<ScenarioMetrics>)> {
    if participants.is_empty() {
        return Vec::new();
    }
    let roles: Vec<Role> = match role {
        Some(r) => vec![r],
        None => Role::ALL.to_vec(),
    };
    let mut groups = Vec::new();
    for r in roles {
        let of_role: Vec<&Participant> = participants.iter().filter(|p| p.role == r).collect();
        groups.push((
            r.title().to_string(),
            of_role.iter().flat_map(|p| p.scenarios.clone()).collect(),
        ));
        let mut top: Option<&Participant> = None;
        for p in &of_role {
            if top.is_none_or(|t| p.scenarios.len() > t.scenarios.len()) {
                top = Some(p);
            }
        }
        groups.push((
            format!("{} (Most Scenarios Completed)", r.title()),
            top.map(|t| t.scenarios.clone()).unwrap_or_default(),
        ));
    }
    if role.is_none() {
        groups.push((
            "All (Collective)".to_string(),
            participants.iter().flat_map(|p| p.scenarios.clone()).collect(),
        ));
    }
    groups
}

pub fn build_report(groups: &[(String, Vec<ScenarioMetrics>)]) -> ComparisonReport {
    let rows = comparison_table(groups);
    ComparisonReport {
        schema_version: SCHEMA_VERSION,
        rows: rows.iter().map(ReportRow::from).collect(),
        text: if rows.is_empty() {
            String::new()
        } else {
            render_comparison_text(&rows)
        },
    }
}
