//! Deterministic reward for candidate DNAs and Best-of-N selection.
//!
//! R = alpha * grounding + beta * causality - gamma * hallucination.

use serde::{Deserialize, Serialize};

use crate::gateway::ScoutReport;
use crate::inventory::ObjectInventory;
use crate::resources::{CAUSALITY, LEXICON};
use crate::schema::{EnumField, ScenarioDna};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { alpha: 2.0, beta: 3.0, gamma: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifierError {
    #[error("reward weights must be non-negative and gamma > alpha + beta (got {0:?})")]
    InvalidWeights(RewardWeights),
    #[error("no candidates to select from")]
    NoCandidates,
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, VerifierError> {
        let w = RewardWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), VerifierError> {
        let finite = [self.alpha, self.beta, self.gamma].iter().all(|x| x.is_finite() && *x >= 0.0);
        if finite && self.gamma > self.alpha + self.beta {
            Ok(())
        } else {
            Err(VerifierError::InvalidWeights(*self))
        }
    }

    pub fn reward(&self, g: u32, c: u32, h: u32) -> f64 {
        self.alpha * f64::from(g) + self.beta * f64::from(c) - self.gamma * f64::from(h)
    }
}

/// Binary indicators are the default. Count mode scores the number of
/// grounded tags, satisfied causality rules and hallucinated values instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    #[default]
    Binary,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub value: u32,
    pub verdicts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate_index: usize,
    pub g: u32,
    pub c: u32,
    pub h: u32,
    pub reward: f64,
    pub verdicts: Vec<String>,
}

impl CandidateScore {
    pub fn hallucination_verdicts(&self) -> usize {
        self.verdicts.iter().filter(|v| v.starts_with(HALLUCINATION_PREFIX)).count()
    }
}

const HALLUCINATION_PREFIX: &str = "Hallucinated ";

/// Object-implying values carried by `dna`, with the detector classes that
/// would corroborate each. "none" and values without a lexicon entry (flood)
/// are not object claims.
pub fn object_claims(dna: &ScenarioDna) -> Vec<(EnumField, &str, &'static [String])> {
    [EnumField::BlockingFactor, EnumField::SpecialAgentClass, EnumField::VruStatus]
        .into_iter()
        .filter_map(|field| {
            let value = dna.get(field);
            LEXICON.field_classes(field.name(), value).map(|classes| (field, value, classes))
        })
        .collect()
}

pub fn grounding_indicator(dna: &ScenarioDna, inventory: &ObjectInventory, mode: IndicatorMode) -> Indicator {
    let mut verdicts = Vec::new();
    let mut grounded = 0;
    let mut all = true;
    for tag in &dna.wod_e2e_tags {
        let Some(classes) = LEXICON.tag_classes(tag) else { continue };
        if inventory.has_any(classes) {
            grounded += 1;
            verdicts.push(format!("{tag} Grounded"));
        } else {
            all = false;
            verdicts.push(format!("{tag} Ungrounded"));
        }
    }
    let value = match mode {
        IndicatorMode::Binary => u32::from(all),
        IndicatorMode::Count => grounded,
    };
    Indicator { value, verdicts }
}

pub fn causality_indicator(dna: &ScenarioDna, mode: IndicatorMode) -> Indicator {
    let crit = &dna.scenario_criticality;
    let action = crit.ego_required_action.as_str();
    let blocking = crit.blocking_factor.as_str();
    let challenge = crit.primary_challenge.as_str();
    let mut verdicts = Vec::new();

    let avoidance = CAUSALITY.avoidance_actions.iter().any(|a| a == action);
    let rule_a = !avoidance || blocking != "none" || challenge != "none";
    if avoidance {
        verdicts.push(if rule_a {
            format!("Causal: {action} explained by blocking_factor={blocking}, primary_challenge={challenge}")
        } else {
            format!("Acausal: {action} with no blocking factor or challenge")
        });
    }

    let passive = CAUSALITY.passive_actions.iter().any(|a| a == action);
    let rule_b = blocking == "none" || !passive;
    if blocking != "none" {
        verdicts.push(if rule_b {
            format!("Causal: blocking_factor={blocking} answered by {action}")
        } else {
            format!("Acausal: blocking_factor={blocking} but {action}")
        });
    }

    let value = match mode {
        IndicatorMode::Binary => u32::from(rule_a && rule_b),
        IndicatorMode::Count => u32::from(rule_a) + u32::from(rule_b),
    };
    Indicator { value, verdicts }
}

pub fn hallucination_indicator(
    dna: &ScenarioDna,
    inventory: &ObjectInventory,
    reports: &[ScoutReport],
    mode: IndicatorMode,
) -> Indicator {
    let mut verdicts = Vec::new();
    for (field, value, classes) in object_claims(dna) {
        if inventory.has_any(classes) {
            continue;
        }
        let asserted = reports.iter().filter_map(ScoutReport::valid_dna).any(|r| r.get(field) == value);
        if !asserted {
            verdicts.push(format!("{HALLUCINATION_PREFIX}{field}={value}: not in inventory or any scout report"));
        }
    }
    let count = verdicts.len() as u32;
    let value = match mode {
        IndicatorMode::Binary => u32::from(count > 0),
        IndicatorMode::Count => count,
    };
    Indicator { value, verdicts }
}

pub fn score_candidate_with_mode(
    index: usize,
    dna: &ScenarioDna,
    inventory: &ObjectInventory,
    reports: &[ScoutReport],
    weights: &RewardWeights,
    mode: IndicatorMode,
) -> CandidateScore {
    let g = grounding_indicator(dna, inventory, mode);
    let c = causality_indicator(dna, mode);
    let h = hallucination_indicator(dna, inventory, reports, mode);
    CandidateScore {
        candidate_index: index,
        reward: weights.reward(g.value, c.value, h.value),
        g: g.value,
        c: c.value,
        h: h.value,
        verdicts: g.verdicts.into_iter().chain(c.verdicts).chain(h.verdicts).collect(),
    }
}

pub fn score_candidate(
    dna: &ScenarioDna,
    inventory: &ObjectInventory,
    reports: &[ScoutReport],
    weights: &RewardWeights,
) -> CandidateScore {
    score_candidate_with_mode(0, dna, inventory, reports, weights, IndicatorMode::Binary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub winner: ScenarioDna,
    pub winner_index: usize,
    pub scores: Vec<CandidateScore>,
}

impl Selection {
    pub fn winner_score(&self) -> &CandidateScore {
        &self.scores[self.winner_index]
    }
}

/// Argmax by reward; ties go to fewer hallucination verdicts, then the lowest index.
pub fn select_best(
    candidates: &[ScenarioDna],
    inventory: &ObjectInventory,
    reports: &[ScoutReport],
    weights: &RewardWeights,
    mode: IndicatorMode,
) -> Result<Selection, VerifierError> {
    weights.validate()?;
    if candidates.is_empty() {
        return Err(VerifierError::NoCandidates);
    }
    let scores: Vec<CandidateScore> = candidates
        .iter()
        .enumerate()
        .map(|(i, dna)| score_candidate_with_mode(i, dna, inventory, reports, weights, mode))
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let b = &scores[best];
        let better = s.reward > b.reward
            || (s.reward == b.reward && s.hallucination_verdicts() < b.hallucination_verdicts());
        if better {
            best = i;
        }
    }
    Ok(Selection { winner: candidates[best].clone(), winner_index: best, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{BoxGeom, Camera, Detection};
    use crate::schema::{construction_example, nominal_dna};

    fn inventory(classes: &[(&str, f64)]) -> ObjectInventory {
        let ds: Vec<Detection> = classes
            .iter()
            .map(|(c, conf)| Detection {
                frame_id: "f".into(),
                camera: Camera::FrontCenter,
                class_name: c.to_string(),
                confidence: *conf,
                bbox: BoxGeom { x: 0.0, y: 0.0, w: 200.0, h: 180.0 },
                image_w: 1280.0,
                image_h: 720.0,
            })
            .collect();
        ObjectInventory::build("f", &ds, 0.15).unwrap()
    }

    fn report(dna: ScenarioDna) -> ScoutReport {
        let raw = crate::gateway::render_synthetic_completion(&dna, &inventory(&[]), "m", 40.0);
        ScoutReport::from_completion("f", "s", &raw)
    }

    #[test]
    fn weights_invariant() {
        assert!(RewardWeights::default().validate().is_ok());
        assert!(RewardWeights::new(2.0, 3.0, 5.0).is_err());
        assert!(RewardWeights::new(-1.0, 3.0, 10.0).is_err());
    }

    #[test]
    fn grounding_cases() {
        let mut dna = nominal_dna();
        dna.wod_e2e_tags = vec!["construction".into()];
        let g = grounding_indicator(&dna, &inventory(&[("orange drum", 0.9)]), IndicatorMode::Binary);
        assert_eq!(g.value, 1);
        assert_eq!(g.verdicts, ["construction Grounded"]);
        assert_eq!(grounding_indicator(&nominal_dna(), &inventory(&[]), IndicatorMode::Binary).value, 1);
        dna.wod_e2e_tags = vec!["vru_hazard".into()];
        assert_eq!(grounding_indicator(&dna, &inventory(&[]), IndicatorMode::Binary).value, 0);
    }

    #[test]
    fn ungroundable_tags_do_not_count() {
        let mut dna = nominal_dna();
        dna.wod_e2e_tags = vec!["lane_diversion".into(), "weather_adverse".into()];
        let g = grounding_indicator(&dna, &inventory(&[]), IndicatorMode::Binary);
        assert_eq!(g.value, 1);
        assert!(g.verdicts.is_empty());
    }

    #[test]
    fn causality_cases() {
        assert_eq!(causality_indicator(&construction_example(), IndicatorMode::Binary).value, 1);
        assert_eq!(causality_indicator(&nominal_dna(), IndicatorMode::Binary).value, 1);
        let mut dna = nominal_dna();
        dna.scenario_criticality.ego_required_action = "emergency_brake".into();
        assert_eq!(causality_indicator(&dna, IndicatorMode::Binary).value, 0);
        let mut dna = nominal_dna();
        dna.scenario_criticality.blocking_factor = "debris".into();
        assert_eq!(causality_indicator(&dna, IndicatorMode::Binary).value, 0);
        assert_eq!(causality_indicator(&dna, IndicatorMode::Count).value, 1);
    }

    #[test]
    fn hallucination_cases() {
        let mut dna = nominal_dna();
        dna.key_interacting_agents.special_agent_class = "fire_truck".into();
        let h = hallucination_indicator(&dna, &inventory(&[]), &[], IndicatorMode::Binary);
        assert_eq!(h.value, 1);
        assert!(h.verdicts[0].contains("special_agent_class=fire_truck"));

        assert_eq!(hallucination_indicator(&nominal_dna(), &inventory(&[]), &[], IndicatorMode::Binary).value, 0);

        let mut ped = nominal_dna();
        ped.scenario_criticality.blocking_factor = "pedestrian".into();
        ped.scenario_criticality.ego_required_action = "stop".into();
        let inv = inventory(&[("person", 0.45)]);
        assert_eq!(hallucination_indicator(&ped, &inv, &[report(ped.clone())], IndicatorMode::Binary).value, 0);
    }

    #[test]
    fn scout_assertion_alone_clears_hallucination() {
        let mut dna = nominal_dna();
        dna.key_interacting_agents.special_agent_class = "ambulance".into();
        let h = hallucination_indicator(&dna, &inventory(&[]), &[report(dna.clone())], IndicatorMode::Binary);
        assert_eq!(h.value, 0);
    }

    #[test]
    fn flood_is_exempt() {
        let mut dna = nominal_dna();
        dna.scenario_criticality.blocking_factor = "flood".into();
        assert_eq!(hallucination_indicator(&dna, &inventory(&[]), &[], IndicatorMode::Binary).value, 0);
    }

    #[test]
    fn exact_ties_go_to_index_zero() {
        let dna = nominal_dna();
        let sel = select_best(&[dna.clone(), dna], &inventory(&[]), &[], &RewardWeights::default(), IndicatorMode::Binary)
            .unwrap();
        assert_eq!(sel.winner_index, 0);
        assert!(select_best(&[], &inventory(&[]), &[], &RewardWeights::default(), IndicatorMode::Binary).is_err());
    }

    #[test]
    fn count_mode_counts() {
        let mut dna = nominal_dna();
        dna.key_interacting_agents.special_agent_class = "fire_truck".into();
        dna.key_interacting_agents.vru_status = "jaywalking_fast".into();
        let h = hallucination_indicator(&dna, &inventory(&[]), &[], IndicatorMode::Count);
        assert_eq!(h.value, 2);
    }
}
