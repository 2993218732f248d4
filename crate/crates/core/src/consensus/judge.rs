//! LLM judge sampling with deterministic backfill.

use futures::future::join_all;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CandidateSet, CandidateSource, ConsensusError};
use crate::gateway::{
    derive_seed, parse_scout_response, render_synthetic_completion, ChatClient, GatewayError, PromptBundle,
    RawCompletion, ScoutConfig, ScoutReport,
};
use crate::inventory::ObjectInventory;
use crate::resources::LEXICON;
use crate::schema::{EnumField, ScenarioDna};

/// What a judge backend may look at besides the prompt.
pub struct JudgeContext<'a> {
    pub frame_id: &'a str,
    /// Deterministic vote; also the replacement for failed samples.
    pub consensus: &'a ScenarioDna,
    pub inventory: &'a ObjectInventory,
    pub reports: &'a [ScoutReport],
}

#[async_trait::async_trait]
pub trait JudgeBackend: Send + Sync {
    fn name(&self) -> &str;
    async fn sample(
        &self,
        prompt: &PromptBundle,
        sample_index: usize,
        ctx: &JudgeContext<'_>,
    ) -> Result<RawCompletion, GatewayError>;
}

pub struct EndpointJudge {
    config: ScoutConfig,
    client: ChatClient,
}

impl EndpointJudge {
    pub fn new(config: ScoutConfig, client: ChatClient) -> Self {
        EndpointJudge { config, client }
    }
}

#[async_trait::async_trait]
impl JudgeBackend for EndpointJudge {
    fn name(&self) -> &str {
        &self.config.name
    }

    async fn sample(&self, prompt: &PromptBundle, _: usize, _: &JudgeContext<'_>) -> Result<RawCompletion, GatewayError> {
        let text_only = PromptBundle { images: Vec::new(), ..prompt.clone() };
        self.client.query(&self.config, &text_only).await
    }
}

/// Offline judge: echoes the deterministic vote, sometimes inventing an
/// object nobody reported so the verifier has something to reject.
pub struct SyntheticJudge {
    pub name: String,
    pub invention_rate: f64,
    pub seed: u64,
}

fn invented_value(rng: &mut ChaCha8Rng, ctx: &JudgeContext<'_>) -> Option<(EnumField, String)> {
    let mut options = Vec::new();
    for (field, table) in [
        (EnumField::SpecialAgentClass, &LEXICON.special_agent_class),
        (EnumField::BlockingFactor, &LEXICON.blocking_factor),
    ] {
        for (value, classes) in table {
            let reported = ctx.reports.iter().filter_map(ScoutReport::valid_dna).any(|d| d.get(field) == value);
            if !reported && !ctx.inventory.has_any(classes) && ctx.consensus.get(field) != value {
                options.push((field, value.clone()));
            }
        }
    }
    if options.is_empty() {
        return None;
    }
    let i = rng.random_range(0..options.len());
    Some(options.swap_remove(i))
}

#[async_trait::async_trait]
impl JudgeBackend for SyntheticJudge {
    fn name(&self) -> &str {
        &self.name
    }

    async fn sample(&self, _: &PromptBundle, sample_index: usize, ctx: &JudgeContext<'_>) -> Result<RawCompletion, GatewayError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[&self.name, ctx.frame_id, &sample_index.to_string()]));
        let mut dna = ctx.consensus.clone();
        if rng.random::<f64>() < self.invention_rate {
            if let Some((field, value)) = invented_value(&mut rng, ctx) {
                dna.set(field, value);
            }
        }
        Ok(render_synthetic_completion(&dna, ctx.inventory, &format!("synthetic/{}", self.name), 60.0))
    }
}

/// Draws `n` judge samples concurrently. Unparseable or failed samples are
/// replaced by the deterministic vote; if every sample fails at the transport
/// level the judge is reported unavailable.
pub async fn generate_candidates(
    judge: &dyn JudgeBackend,
    prompt: &PromptBundle,
    n: usize,
    ctx: &JudgeContext<'_>,
) -> Result<CandidateSet, ConsensusError> {
    if n == 0 {
        return Err(ConsensusError::InvalidCount);
    }
    let results = join_all((0..n).map(|i| judge.sample(prompt, i, ctx))).await;
    let mut candidates = Vec::with_capacity(n);
    let mut replaced = Vec::new();
    let mut transport_failures = 0;
    let mut last_error = String::new();
    for (i, result) in results.into_iter().enumerate() {
        let parsed = match result {
            Ok(raw) => parse_scout_response(&raw.text).dna.valid().cloned(),
            Err(err) => {
                transport_failures += 1;
                last_error = err.to_string();
                tracing::warn!(judge = judge.name(), frame = ctx.frame_id, sample = i, error = %err, "judge sample failed");
                None
            }
        };
        match parsed {
            Some(dna) => candidates.push(dna),
            None => {
                replaced.push(i);
                candidates.push(ctx.consensus.clone());
            }
        }
    }
    if transport_failures == n {
        return Err(ConsensusError::JudgeUnavailable { attempts: n, last_error });
    }
    Ok(CandidateSet {
        frame_id: ctx.frame_id.to_string(),
        candidates,
        source: CandidateSource::LlmJudge,
        replaced,
    })
}
