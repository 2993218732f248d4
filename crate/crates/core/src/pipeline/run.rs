use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::config::{JudgeMode, PipelineConfig, SelectionMode};
use super::PipelineError;
use crate::consensus::{
    build_judge_prompt, deterministic_consensus, generate_candidates, CandidateSource, ConsensusError, EndpointJudge,
    JudgeBackend, JudgeContext, SyntheticJudge,
};
use crate::eval::{emit_report, CostParams, evaluate, DensityPoint, EvalReport, GoldLabel, Predictions};
use crate::gateway::{
    build_scout_prompt, scout_user_text, ChatClient, EndpointScout, ImagePayload, PromptBundle, RetryPolicy,
    ScoutBackend, ScoutReport, ScoutRequest, SyntheticScout,
};
use crate::index::{load_gold, load_gold_jsonl, IndexRecord, IndexStore, ScoutSummary};
use crate::inventory::{read_detections, read_manifest, Detection, FrameEntry, ObjectInventory};
use crate::resources::SCOUT_SYSTEM_PROMPT;
use crate::schema::ScenarioDna;
use crate::verifier::{score_candidate_with_mode, select_best, CandidateScore};

/// Picks `k` keyframes per scene at evenly spaced positions
/// `floor(i * (len - 1) / (k - 1))`; for k = 3 that is first, middle, last.
/// Scenes keep manifest order. Frames with an explicit `keyframe_slot` win
/// over positional selection for their scene.
pub fn select_keyframes(manifest: &[FrameEntry], k: usize) -> Vec<&FrameEntry> {
    let mut scenes: Vec<(&str, Vec<&FrameEntry>)> = Vec::new();
    for frame in manifest {
        match scenes.iter_mut().find(|(id, _)| *id == frame.scene_id) {
            Some((_, frames)) => frames.push(frame),
            None => scenes.push((&frame.scene_id, vec![frame])),
        }
    }
    let mut out = Vec::new();
    for (_, frames) in scenes {
        let slotted: Vec<&FrameEntry> = frames.iter().copied().filter(|f| f.keyframe_slot.is_some()).collect();
        if !slotted.is_empty() {
            out.extend(slotted);
            continue;
        }
        let len = frames.len();
        let mut picks: Vec<usize> = if k == 1 || len == 1 {
            vec![0]
        } else {
            (0..k).map(|i| i * (len - 1) / (k - 1)).collect()
        };
        picks.dedup();
        out.extend(picks.into_iter().map(|i| frames[i]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutFailure {
    pub scout_name: String,
    pub error: String,
}

/// Working state for one committed frame; the API serves traces and
/// verdicts from here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAudit {
    pub frame_id: String,
    pub scene_id: String,
    pub image_paths: crate::inventory::ImagePaths,
    pub inventory_text: String,
    pub reports: Vec<ScoutReport>,
    pub scout_failures: Vec<ScoutFailure>,
    pub candidates: Vec<ScenarioDna>,
    pub candidate_source: CandidateSource,
    /// Judge samples replaced by the deterministic vote.
    pub replaced: Vec<usize>,
    pub judge_error: Option<String>,
    pub scores: Vec<CandidateScore>,
    pub winner_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub selected: usize,
    pub already_indexed: usize,
    pub committed: usize,
    pub failures: Vec<FrameFailure>,
    pub flagged_records: usize,
    pub scout_failures: usize,
    pub judge_fallbacks: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many new commits, as if interrupted.
    pub max_new_frames: Option<usize>,
    /// Stamp every record with this time (test mode).
    pub fixed_timestamp: Option<DateTime<Utc>>,
}

struct Frame {
    entry: FrameEntry,
    inventory: ObjectInventory,
    truth: Option<ScenarioDna>,
}

struct Engine<'a> {
    config: &'a PipelineConfig,
    scouts: Vec<Box<dyn ScoutBackend>>,
    judge: Option<Box<dyn JudgeBackend>>,
}

struct Committed {
    record: IndexRecord,
    audit: FrameAudit,
}

fn read_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), detail: e.to_string() }
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingFile(path.display().to_string()))
    }
}

fn build_engine(config: &PipelineConfig) -> Engine<'_> {
    let client = ChatClient::new(RetryPolicy::default());
    let scouts = config
        .scouts
        .iter()
        .map(|s| -> Box<dyn ScoutBackend> {
            if s.config.is_mock() {
                Box::new(SyntheticScout::new(s.config.clone(), s.noise.unwrap_or(config.mock_noise), config.seed))
            } else {
                Box::new(EndpointScout::new(s.config.clone(), client.clone()))
            }
        })
        .collect();
    let judge = match (config.judge.mode, &config.judge.endpoint) {
        (JudgeMode::Llm, Some(e)) if e.is_mock() => Some(Box::new(SyntheticJudge {
            name: e.name.clone(),
            invention_rate: config.judge.invention_rate,
            seed: config.seed,
        }) as Box<dyn JudgeBackend>),
        (JudgeMode::Llm, Some(e)) => Some(Box::new(EndpointJudge::new(e.clone(), client.clone())) as Box<dyn JudgeBackend>),
        _ => None,
    };
    Engine { config, scouts, judge }
}

fn load_images(entry: &FrameEntry, base: Option<&Path>) -> Result<Vec<ImagePayload>, String> {
    entry
        .image_paths
        .ordered()
        .iter()
        .map(|p| {
            let path = Path::new(p);
            let path = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.to_path_buf(),
            };
            ImagePayload::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))
        })
        .collect()
}

impl Engine<'_> {
    async fn process(&self, frame: &Frame, images_base: Option<&Path>, stamp: DateTime<Utc>) -> Result<Committed, String> {
        let id = frame.entry.frame_id.as_str();
        let inv = &frame.inventory;
        let needs_images = self.scouts.iter().any(|s| !s.config().is_mock());
        let prompt = if needs_images {
            let images = load_images(&frame.entry, images_base)?;
            build_scout_prompt(&inv.rendered_text, images).map_err(|e| e.to_string())?
        } else {
            PromptBundle {
                system: SCOUT_SYSTEM_PROMPT.to_string(),
                user_text: scout_user_text(&inv.rendered_text),
                images: Vec::new(),
            }
        };
        let request = ScoutRequest { frame_id: id, prompt: &prompt, inventory: inv, truth: frame.truth.as_ref() };
        let results = futures::future::join_all(self.scouts.iter().map(|s| s.complete(&request))).await;

        let mut reports = Vec::new();
        let mut scout_failures = Vec::new();
        for (scout, result) in self.scouts.iter().zip(results) {
            let name = &scout.config().name;
            match result {
                Ok(raw) => reports.push(ScoutReport::from_completion(id, name, &raw)),
                Err(e) => {
                    tracing::warn!(frame = id, scout = %name, error = %e, "scout failed");
                    scout_failures.push(ScoutFailure { scout_name: name.clone(), error: e.to_string() });
                }
            }
        }
        if reports.is_empty() {
            return Err("every scout failed".into());
        }

        let consensus = deterministic_consensus(&reports, inv).map_err(|e| e.to_string())?;
        let mut candidates = vec![consensus.dna.clone()];
        let mut source = CandidateSource::Deterministic;
        let mut replaced = Vec::new();
        let mut judge_error = None;
        if let Some(judge) = &self.judge {
            let ctx = JudgeContext { frame_id: id, consensus: &consensus.dna, inventory: inv, reports: &reports };
            let outcome = match build_judge_prompt(&reports, &inv.rendered_text, self.config.trace_budget) {
                Ok(p) => generate_candidates(judge.as_ref(), &p, self.config.n_candidates, &ctx).await,
                Err(e) => Err(e),
            };
            match outcome {
                Ok(set) => {
                    source = set.source;
                    replaced = set.replaced.iter().map(|i| i + 1).collect();
                    candidates.extend(set.candidates);
                }
                Err(e @ ConsensusError::JudgeUnavailable { .. }) => {
                    tracing::warn!(frame = id, error = %e, "judge unavailable, keeping the deterministic vote");
                    judge_error = Some(e.to_string());
                }
                Err(e) => return Err(e.to_string()),
            }
        }

        let w = &self.config.weights;
        let mode = self.config.indicator_mode;
        let (winner, winner_index, scores) = match self.config.selection {
            SelectionMode::BestOfN => {
                let s = select_best(&candidates, inv, &reports, w, mode).map_err(|e| e.to_string())?;
                (s.winner, s.winner_index, s.scores)
            }
            SelectionMode::FirstScout => {
                let dna = reports.iter().find_map(ScoutReport::valid_dna).ok_or("no scout produced valid DNA")?.clone();
                let score = score_candidate_with_mode(0, &dna, inv, &reports, w, mode);
                candidates = vec![dna.clone()];
                (dna, 0, vec![score])
            }
        };

        let record = IndexRecord {
            frame_id: id.to_string(),
            scene_id: frame.entry.scene_id.clone(),
            dna: winner,
            winner_score: scores[winner_index].clone(),
            scout_summaries: reports
                .iter()
                .map(|r| ScoutSummary {
                    scout_name: r.scout_name.clone(),
                    risk_score: r.valid_dna().map(ScenarioDna::risk),
                    latency_s: r.latency_s,
                    completion_tokens: r.completion_tokens,
                    tokens_per_s: r.tokens_per_s,
                })
                .collect(),
            flagged_for_review: consensus.flagged_for_review,
            created_at: stamp,
            extras: BTreeMap::new(),
        };
        let audit = FrameAudit {
            frame_id: id.to_string(),
            scene_id: frame.entry.scene_id.clone(),
            image_paths: frame.entry.image_paths.clone(),
            inventory_text: inv.rendered_text.clone(),
            reports,
            scout_failures,
            candidates,
            candidate_source: source,
            replaced,
            judge_error,
            scores,
            winner_index,
        };
        Ok(Committed { record, audit })
    }
}

fn append_audit(path: &Path, audit: &FrameAudit) -> Result<(), PipelineError> {
    let mut line = serde_json::to_string(audit).map_err(|e| read_err(path, e))?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| read_err(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| read_err(path, e))?;
    file.sync_data().map_err(|e| read_err(path, e))
}

/// Audit entries by frame id; later entries win and unreadable lines are skipped.
pub fn load_audit(path: &Path) -> Result<HashMap<String, FrameAudit>, PipelineError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(read_err(path, e)),
    };
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str::<FrameAudit>(line) {
            Ok(a) => {
                out.insert(a.frame_id.clone(), a);
            }
            Err(e) => tracing::warn!(path = %path.display(), line = i + 1, error = %e, "skipping audit line"),
        }
    }
    Ok(out)
}

/// Inventory for every manifest frame; the detections are grouped once.
fn frames_with_inventory(
    selected: &[&FrameEntry],
    detections: &[Detection],
    truth: &HashMap<String, ScenarioDna>,
    tau: f64,
) -> Result<Vec<Frame>, PipelineError> {
    let mut by_frame: HashMap<&str, Vec<Detection>> = HashMap::new();
    for d in detections {
        by_frame.entry(d.frame_id.as_str()).or_default().push(d.clone());
    }
    selected
        .iter()
        .map(|entry| {
            let own = by_frame.get(entry.frame_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let inventory = if own.is_empty() {
                ObjectInventory::empty(&entry.frame_id, tau)
            } else {
                ObjectInventory::build(&entry.frame_id, own, tau)?
            };
            Ok(Frame { entry: (*entry).clone(), inventory, truth: truth.get(&entry.frame_id).cloned() })
        })
        .collect()
}

/// ingest -> scouts -> consensus/judge -> verifier -> index, skipping frames
/// already present so an interrupted run can simply be restarted.
pub async fn run_mine(config: &PipelineConfig, options: &RunOptions) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let paths = &config.paths;
    require(&paths.manifest)?;
    require(&paths.detections)?;
    let manifest = read_manifest(&paths.manifest)?;
    let detections = read_detections(&paths.detections)?;
    let truth: HashMap<String, ScenarioDna> = match (&paths.truth, config.uses_truth()) {
        (Some(p), true) => {
            require(p)?;
            load_gold_jsonl(p)?.into_iter().map(|g| (g.frame_id, g.dna)).collect()
        }
        _ => HashMap::new(),
    };
    if let Some(dir) = paths.index.parent() {
        fs::create_dir_all(dir).map_err(|e| read_err(dir, e))?;
    }
    let mut store = IndexStore::open(&paths.index)?;
    let audit_path = paths.audit_path();

    let selected = select_keyframes(&manifest, config.keyframes_per_scene);
    let mut summary = RunSummary { selected: selected.len(), ..RunSummary::default() };
    let pending: Vec<&FrameEntry> = selected.iter().copied().filter(|f| !store.contains(&f.frame_id)).collect();
    summary.already_indexed = selected.len() - pending.len();
    let frames = frames_with_inventory(&pending, &detections, &truth, config.tau_recall)?;

    let engine = Arc::new(build_engine(config));
    let images_base = paths.manifest.parent().map(Path::to_path_buf);
    let stamp = options.fixed_timestamp;
    let limit = options.max_new_frames.unwrap_or(usize::MAX);

    // Ordered buffering keeps appends in manifest order for any pool width.
    let mut results = stream::iter(frames.iter())
        .map(|frame| {
            let engine = Arc::clone(&engine);
            let base = images_base.clone();
            async move {
                let at = stamp.unwrap_or_else(Utc::now);
                (frame, engine.process(frame, base.as_deref(), at).await)
            }
        })
        .buffered(config.parallelism.frames);
    while let Some((frame, result)) = results.next().await {
        if summary.committed >= limit {
            break;
        }
        match result {
            Ok(done) => {
                summary.scout_failures += done.audit.scout_failures.len();
                summary.judge_fallbacks += usize::from(done.audit.judge_error.is_some());
                summary.flagged_records += usize::from(!done.record.flagged_for_review.is_empty());
                append_audit(&audit_path, &done.audit)?;
                store.append(done.record)?;
                summary.committed += 1;
            }
            Err(error) => {
                tracing::error!(frame = %frame.entry.frame_id, %error, "frame failed");
                summary.failures.push(FrameFailure { frame_id: frame.entry.frame_id.clone(), error });
            }
        }
    }
    Ok(summary)
}

/// Index predictions and per-scout density points.
pub fn predictions_from_index(store: &IndexStore) -> (Predictions, Vec<DensityPoint>) {
    let mut predictions = Predictions::new();
    let mut density = Vec::new();
    for r in store.records() {
        predictions.insert(r.frame_id.clone(), r.dna.clone());
        for s in &r.scout_summaries {
            density.push(DensityPoint::new(&r.frame_id, &s.scout_name, s.latency_s, s.tokens_per_s));
        }
    }
    (predictions, density)
}

pub fn evaluate_paths(index: &Path, gold: &Path, cost: CostParams) -> Result<EvalReport, PipelineError> {
    require(index)?;
    require(gold)?;
    let store = IndexStore::open(index)?;
    let labels: Vec<GoldLabel> = load_gold(gold)?;
    let (predictions, density) = predictions_from_index(&store);
    Ok(evaluate(&predictions, &labels, density, cost)?)
}

/// Scores the index against the gold set and writes the report files.
pub fn run_eval(config: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let report = evaluate_paths(&config.paths.index, &config.paths.gold, config.cost)?;
    emit_report(&report, &config.paths.report_path())?;
    Ok(report)
}
