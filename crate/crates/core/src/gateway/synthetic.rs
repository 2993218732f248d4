//! Seeded scout stand-in for offline runs.
//!
//! Starts from the simulation truth and applies three kinds of noise:
//! invented objects, dropped tags and risk jitter. Output goes through the
//! same completion parser as a real endpoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{word_count, GatewayError, RawCompletion, ScoutReport};
use crate::eval::GoldLabel;
use crate::inventory::ObjectInventory;
use crate::resources::LEXICON;
use crate::schema::{serialize_dna, EnumField, ScenarioDna, RISK_MAX, RISK_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub hallucination_rate: f64,
    pub omission_rate: f64,
    pub risk_jitter_sd: f64,
    #[serde(default = "default_tps")]
    pub tokens_per_s: f64,
}

fn default_tps() -> f64 {
    40.0
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile { hallucination_rate: 0.0, omission_rate: 0.0, risk_jitter_sd: 0.0, tokens_per_s: default_tps() }
    }
}

impl NoiseProfile {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.hallucination_rate) || !rate_ok(self.omission_rate) {
            return Err(GatewayError::Config("noise rates must lie in [0, 1]".into()));
        }
        if !(self.risk_jitter_sd >= 0.0 && self.risk_jitter_sd.is_finite()) {
            return Err(GatewayError::Config("risk_jitter_sd must be finite and >= 0".into()));
        }
        if !(self.tokens_per_s > 0.0) {
            return Err(GatewayError::Config("tokens_per_s must be > 0".into()));
        }
        Ok(())
    }
}

/// Stable 64-bit seed from a base seed and labels (scout name, frame id).
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

const INVENTABLE: [EnumField; 2] = [EnumField::BlockingFactor, EnumField::SpecialAgentClass];

/// Object values for `field` that neither the inventory nor the truth supports.
fn unsupported_values(field: EnumField, truth: &ScenarioDna, inventory: &ObjectInventory) -> Vec<String> {
    let table = match field {
        EnumField::BlockingFactor => &LEXICON.blocking_factor,
        EnumField::SpecialAgentClass => &LEXICON.special_agent_class,
        _ => return Vec::new(),
    };
    table
        .iter()
        .filter(|(value, classes)| *value != truth.get(field) && !inventory.has_any(classes))
        .map(|(value, _)| value.clone())
        .collect()
}

pub fn synth_dna(truth: &ScenarioDna, inventory: &ObjectInventory, noise: &NoiseProfile, seed: u64) -> ScenarioDna {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dna = truth.clone();

    // Every draw happens regardless of outcome so streams stay aligned.
    let hallucinate = rng.random::<f64>() < noise.hallucination_rate;
    let first_field = rng.random_range(0..INVENTABLE.len());
    let pick = rng.random::<u64>();
    let omit = rng.random::<f64>() < noise.omission_rate;
    let omit_pick = rng.random::<u64>();
    let jitter_draw: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);

    if hallucinate {
        for offset in 0..INVENTABLE.len() {
            let field = INVENTABLE[(first_field + offset) % INVENTABLE.len()];
            let options = unsupported_values(field, truth, inventory);
            if !options.is_empty() {
                dna.set(field, options[(pick % options.len() as u64) as usize].clone());
                break;
            }
        }
    }
    if omit && !dna.wod_e2e_tags.is_empty() {
        let idx = (omit_pick % dna.wod_e2e_tags.len() as u64) as usize;
        dna.wod_e2e_tags.remove(idx);
    }
    if noise.risk_jitter_sd > 0.0 {
        let jitter = (jitter_draw * noise.risk_jitter_sd).round() as i64;
        dna.scenario_criticality.risk_score = (dna.risk() + jitter).clamp(RISK_MIN, RISK_MAX);
    }
    dna
}

/// Think-wrapped completion with usage reported, so latency x throughput
/// reproduces the token count exactly.
pub fn render_synthetic_completion(
    dna: &ScenarioDna,
    inventory: &ObjectInventory,
    model_id: &str,
    tokens_per_s: f64,
) -> RawCompletion {
    let json = serialize_dna(dna).expect("synthetic DNA stays inside the vocabulary");
    let text = format!(
        "<think>\nVisual sweep over left, center and right views.\nInventory check:\n{}\nVerdict: {} scene, action {}.\n</think>\n{}",
        inventory.rendered_text,
        dna.road_topology.scene_type,
        dna.scenario_criticality.ego_required_action,
        json
    );
    let tokens = word_count(&text);
    RawCompletion {
        text,
        reasoning_content: None,
        completion_tokens: Some(tokens),
        latency_s: tokens as f64 / tokens_per_s,
        model_id: model_id.to_string(),
    }
}

pub fn synth_scout(
    scout_name: &str,
    frame_truth: &GoldLabel,
    inventory: &ObjectInventory,
    noise: &NoiseProfile,
    seed: u64,
) -> ScoutReport {
    let dna = synth_dna(&frame_truth.dna, inventory, noise, seed);
    let raw = render_synthetic_completion(&dna, inventory, &format!("synthetic/{scout_name}"), noise.tokens_per_s);
    ScoutReport::from_completion(&frame_truth.frame_id, scout_name, &raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{construction_example, nominal_dna};

    fn gold(dna: ScenarioDna) -> GoldLabel {
        GoldLabel::new("f1", dna, "sim")
    }

    #[test]
    fn zero_noise_is_identity() {
        let g = gold(construction_example());
        let inv = ObjectInventory::empty("f1", 0.15);
        let report = synth_scout("s", &g, &inv, &NoiseProfile::default(), 9);
        assert_eq!(report.valid_dna(), Some(&g.dna));
        assert!(report.reasoning_trace.starts_with("Visual sweep"));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = gold(construction_example());
        let inv = ObjectInventory::empty("f1", 0.15);
        let noise = NoiseProfile { hallucination_rate: 0.5, omission_rate: 0.5, risk_jitter_sd: 2.0, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(synth_scout("s", &g, &inv, &noise, seed), synth_scout("s", &g, &inv, &noise, seed));
        }
    }

    #[test]
    fn hallucination_is_unsupported_object() {
        let g = gold(nominal_dna());
        let inv = ObjectInventory::empty("f1", 0.15);
        let noise = NoiseProfile { hallucination_rate: 1.0, ..Default::default() };
        for seed in 0..50 {
            let dna = synth_dna(&g.dna, &inv, &noise, seed);
            let changed = dna.scenario_criticality.blocking_factor != "none"
                || dna.key_interacting_agents.special_agent_class != "none";
            assert!(changed, "seed {seed}");
            assert_ne!(dna.scenario_criticality.blocking_factor, "flood");
        }
    }

    #[test]
    fn jitter_stays_in_range() {
        let mut dna = nominal_dna();
        dna.scenario_criticality.risk_score = 10;
        let noise = NoiseProfile { risk_jitter_sd: 5.0, ..Default::default() };
        let inv = ObjectInventory::empty("f1", 0.15);
        for seed in 0..100 {
            let r = synth_dna(&dna, &inv, &noise, seed).risk();
            assert!((0..=10).contains(&r));
        }
    }

    #[test]
    fn usage_matches_latency_times_throughput() {
        let inv = ObjectInventory::empty("f1", 0.15);
        let raw = render_synthetic_completion(&construction_example(), &inv, "m", 37.0);
        let n = raw.completion_tokens.unwrap() as f64;
        assert!((raw.latency_s * 37.0 - n).abs() / n < 1e-9);
    }

    #[test]
    fn seeds_depend_on_every_part() {
        let a = derive_seed(1, &["scout_a", "f1"]);
        assert_ne!(a, derive_seed(2, &["scout_a", "f1"]));
        assert_ne!(a, derive_seed(1, &["scout_b", "f1"]));
        assert_ne!(a, derive_seed(1, &["scout_af", "1"]));
        assert_eq!(a, derive_seed(1, &["scout_a", "f1"]));
    }
}
