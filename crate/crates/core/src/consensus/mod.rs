//! Scout reports to consensus DNA candidates.
//!
//! The deterministic vote is both the no-LLM fallback and the first member of
//! every candidate pool, so the verifier always has a grounded option.

mod judge;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{PromptBundle, ScoutReport, INVENTORY_HEADER};
use crate::inventory::ObjectInventory;
use crate::resources::{JUDGE_SYSTEM_TEMPLATE, LEXICON, OUTPUT_SKELETON, SAFETY_ORDER, VOCABULARY};
use crate::schema::{serialize_dna, EnumField, ScenarioDna};

pub use judge::{generate_candidates, EndpointJudge, JudgeBackend, JudgeContext, SyntheticJudge};

pub const DEFAULT_TRACE_BUDGET: usize = 2_000;
pub const INVALID_JSON_MARKER: &str = "INVALID JSON";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("consensus needs at least one report with valid DNA")]
    NoValidReports,
    #[error("judge prompt needs at least one scout report")]
    NoReports,
    #[error("judge unavailable: all {attempts} sample(s) failed ({last_error})")]
    JudgeUnavailable { attempts: usize, last_error: String },
    #[error("candidate count must be >= 1")]
    InvalidCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    LlmJudge,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub frame_id: String,
    pub candidates: Vec<ScenarioDna>,
    pub source: CandidateSource,
    /// Positions filled with the deterministic fallback after a failed sample.
    #[serde(default)]
    pub replaced: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub dna: ScenarioDna,
    pub flagged_for_review: Vec<String>,
}

fn tie_winner<'a>(field: &str, tied: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    tied.min_by_key(|value| {
        (SAFETY_ORDER.rank(field, value), VOCABULARY.position(field, value).unwrap_or(usize::MAX))
    })
}

fn plurality<'a>(field: &str, votes: &BTreeMap<&'a str, usize>) -> Option<&'a str> {
    let top = votes.values().copied().max()?;
    tie_winner(field, votes.iter().filter(|(_, n)| **n == top).map(|(v, _)| *v))
}

fn ceil_median(risks: &mut [i64]) -> i64 {
    risks.sort_unstable();
    let n = risks.len();
    if n % 2 == 1 {
        risks[n / 2]
    } else {
        // ceil((a + b) / 2) without floats.
        let sum = risks[n / 2 - 1] + risks[n / 2];
        sum.div_euclid(2) + sum.rem_euclid(2)
    }
}

/// Safety-biased majority vote over the valid reports.
///
/// Object-implying values (blocking factor, special agent, VRU status) only
/// take part in the vote when the inventory corroborates them or every valid
/// scout asserts them; other votes for them are dropped and flagged.
pub fn deterministic_consensus(reports: &[ScoutReport], inventory: &ObjectInventory) -> Result<Consensus, ConsensusError> {
    let valid: Vec<(&str, &ScenarioDna)> =
        reports.iter().filter_map(|r| r.valid_dna().map(|d| (r.scout_name.as_str(), d))).collect();
    if valid.is_empty() {
        return Err(ConsensusError::NoValidReports);
    }
    let n = valid.len();
    let mut flagged = Vec::new();
    let mut dna = valid[0].1.clone();

    for field in EnumField::ALL {
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, d) in &valid {
            *votes.entry(d.get(field)).or_default() += 1;
        }
        let mut eligible = votes.clone();
        for (value, count) in &votes {
            let Some(classes) = LEXICON.field_classes(field.name(), value) else { continue };
            if inventory.has_any(classes) || *count == n {
                continue;
            }
            eligible.remove(value);
            flagged.push(format!("{field}:{value} ({count} of {n} scouts, no inventory support)"));
        }
        let winner = plurality(field.name(), &eligible).unwrap_or("none");
        dna.set(field, winner);
    }

    let mut control_votes: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, d) in &valid {
        let mut seen: Vec<&str> = d.road_topology.traffic_controls.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for c in seen {
            *control_votes.entry(c).or_default() += 1;
        }
    }
    let mut controls: Vec<String> = VOCABULARY
        .tokens("traffic_controls")
        .iter()
        .filter(|t| control_votes.get(t.as_str()).is_some_and(|v| v * 2 >= n))
        .cloned()
        .collect();
    if controls.len() > 1 {
        controls.retain(|c| c != "none");
    }
    if controls.is_empty() {
        controls.push("none".into());
    }
    dna.road_topology.traffic_controls = controls;

    let mut proposers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (name, d) in &valid {
        for tag in &d.wod_e2e_tags {
            let entry = proposers.entry(tag.as_str()).or_default();
            if !entry.contains(name) {
                entry.push(name);
            }
        }
    }
    let mut tags = Vec::new();
    for tag in VOCABULARY.tokens("wod_e2e_tags") {
        let Some(names) = proposers.get(tag.as_str()) else { continue };
        let corroborated = LEXICON.tag_classes(tag).is_some_and(|classes| inventory.has_any(classes));
        if names.len() >= 2 || corroborated {
            tags.push(tag.clone());
        } else {
            flagged.push(format!("tag:{tag} (proposed only by {}, no inventory support)", names[0]));
        }
    }
    dna.wod_e2e_tags = tags;

    let mut risks: Vec<i64> = valid.iter().map(|(_, d)| d.risk()).collect();
    let risk = ceil_median(&mut risks);
    dna.scenario_criticality.risk_score = risk;

    let (_, closest) = valid
        .iter()
        .min_by(|(na, a), (nb, b)| (a.risk() - risk).abs().cmp(&(b.risk() - risk).abs()).then_with(|| na.cmp(nb)))
        .expect("valid is non-empty");
    dna.description = closest.description.clone();

    Ok(Consensus { dna, flagged_for_review: flagged })
}

/// Field list in the same shape as the scout prompt's vocabulary block.
pub fn schema_guide() -> String {
    let mut lines = Vec::new();
    let mut layer = "";
    for field in EnumField::ALL {
        if field.layer() != layer {
            layer = field.layer();
            lines.push(format!("{layer}:"));
        }
        lines.push(format!("  - `{}`: {}", field.name(), quoted(field.vocabulary())));
        if field == EnumField::DrivableAreaStatus {
            lines.push(format!("  - `traffic_controls` (list): {}", quoted(VOCABULARY.tokens("traffic_controls"))));
        }
    }
    lines.push("scenario_criticality.risk_score: integer 0-10".into());
    lines.push(format!("wod_e2e_tags (list): {}", quoted(VOCABULARY.tokens("wod_e2e_tags"))));
    lines.join("\n")
}

fn quoted(tokens: &[String]) -> String {
    let inner: Vec<String> = tokens.iter().map(|t| format!("\"{t}\"")).collect();
    format!("[{}]", inner.join(", "))
}

pub fn judge_system_prompt() -> String {
    JUDGE_SYSTEM_TEMPLATE
        .replace("{SCHEMA_GUIDE}", &schema_guide())
        .replace("{OUTPUT_SKELETON}", OUTPUT_SKELETON.trim_end())
}

fn excerpt(trace: &str, budget: usize) -> String {
    if trace.chars().count() <= budget {
        return trace.to_string();
    }
    let mut out: String = trace.chars().take(budget).collect();
    out.push_str(" [truncated]");
    out
}

pub fn build_judge_prompt(
    reports: &[ScoutReport],
    inventory_text: &str,
    trace_budget: usize,
) -> Result<PromptBundle, ConsensusError> {
    if reports.is_empty() {
        return Err(ConsensusError::NoReports);
    }
    let mut user = format!("{INVENTORY_HEADER}\n{inventory_text}\n");
    for (i, report) in reports.iter().enumerate() {
        user.push_str(&format!("\n### SCOUT {}: {} ({})\n", i + 1, report.scout_name, report.model_id));
        user.push_str("[Reasoning Trace]:\n");
        user.push_str(&excerpt(&report.reasoning_trace, trace_budget));
        user.push_str("\n[JSON]:\n");
        match report.valid_dna() {
            Some(dna) => user.push_str(&serialize_dna(dna).expect("report DNA was validated")),
            None => user.push_str(INVALID_JSON_MARKER),
        }
        user.push('\n');
    }
    Ok(PromptBundle { system: judge_system_prompt(), user_text: user, images: Vec::new() })
}
