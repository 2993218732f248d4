//! Metrics against a gold set, plus latency / token-volume / energy analytics.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::resources::CATEGORIES;
use crate::schema::{validate_dna, ScenarioDna, ValidationReport};

pub use report::{emit_report, load_report, summary_text, ReportFiles};

pub const NOMINAL: &str = "nominal";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("no frame appears in both predictions and gold")]
    EmptyIntersection,
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("gold label for {frame_id} is invalid: {report}")]
    InvalidGold { frame_id: String, report: ValidationReport },
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}: malformed report file: {detail}")]
    Malformed { path: String, detail: String },
}

/// Whether `dna` shows the attribute named by `category`.
pub fn category_present(dna: &ScenarioDna, category: &str) -> bool {
    let Some(pred) = CATEGORIES.predicates.get(category) else { return false };
    pred.tags.iter().any(|t| dna.has_tag(t))
        || pred.fields.iter().any(|(field, values)| {
            crate::schema::EnumField::from_name(field).is_some_and(|f| values.iter().any(|v| v == dna.get(f)))
        })
}

pub fn tracked_categories() -> &'static [String] {
    &CATEGORIES.tracked
}

/// First tracked category the DNA shows, else nominal.
pub fn primary_category(dna: &ScenarioDna) -> String {
    tracked_categories()
        .iter()
        .find(|c| category_present(dna, c))
        .cloned()
        .unwrap_or_else(|| NOMINAL.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub frame_id: String,
    pub dna: ScenarioDna,
    pub category: String,
    pub annotator: String,
    pub verified_at: DateTime<Utc>,
}

impl GoldLabel {
    pub fn new(frame_id: &str, dna: ScenarioDna, annotator: &str) -> Self {
        GoldLabel {
            frame_id: frame_id.to_string(),
            category: primary_category(&dna),
            dna,
            annotator: annotator.to_string(),
            verified_at: Utc::now(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let report = validate_dna(&self.dna);
        if !report.valid {
            return Err(EvalError::InvalidGold { frame_id: self.frame_id.clone(), report });
        }
        if self.category != NOMINAL && !tracked_categories().contains(&self.category) {
            return Err(EvalError::UnknownCategory(self.category.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Prf {
    /// Undefined rates count as 0.
    pub fn from_counts(c: Counts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp).unwrap_or(0.0);
        let recall = ratio(c.tp, c.tp + c.fn_).unwrap_or(0.0);
        Prf { precision, recall, f1: f1_score(precision, recall) }
    }
}

pub type Predictions = BTreeMap<String, ScenarioDna>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroResult {
    pub prf: Prf,
    pub counts: Counts,
    /// Gold frames with no prediction; counted as all-FN.
    pub missing_frames: Vec<String>,
}

fn frame_counts<'a>(
    predictions: &'a Predictions,
    gold: &'a [GoldLabel],
    categories: &'a [String],
) -> impl Iterator<Item = (&'a str, bool, bool)> + 'a {
    gold.iter().flat_map(move |g| {
        let pred = predictions.get(&g.frame_id);
        categories.iter().map(move |c| {
            (c.as_str(), pred.is_some_and(|p| category_present(p, c)), category_present(&g.dna, c))
        })
    })
}

fn missing(predictions: &Predictions, gold: &[GoldLabel]) -> Vec<String> {
    gold.iter().filter(|g| !predictions.contains_key(&g.frame_id)).map(|g| g.frame_id.clone()).collect()
}

pub fn micro_prf(predictions: &Predictions, gold: &[GoldLabel]) -> MicroResult {
    let mut counts = Counts::default();
    for (_, p, a) in frame_counts(predictions, gold, tracked_categories()) {
        counts.add(p, a);
    }
    MicroResult { prf: Prf::from_counts(counts), counts, missing_frames: missing(predictions, gold) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub counts: Counts,
    pub precision: f64,
    /// None when the class has no gold positives.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub note: Option<String>,
}

impl ClassMetrics {
    fn from_counts(counts: Counts) -> Self {
        let precision = ratio(counts.tp, counts.tp + counts.fp).unwrap_or(0.0);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        ClassMetrics {
            counts,
            precision,
            recall,
            f1: recall.map(|r| f1_score(precision, r)),
            note: recall.is_none().then(|| "no gold positives; recall undefined".to_string()),
        }
    }
}

pub fn per_class_prf(predictions: &Predictions, gold: &[GoldLabel]) -> BTreeMap<String, ClassMetrics> {
    let mut counts: BTreeMap<String, Counts> =
        tracked_categories().iter().map(|c| (c.clone(), Counts::default())).collect();
    for (c, p, a) in frame_counts(predictions, gold, tracked_categories()) {
        counts.get_mut(c).expect("tracked category").add(p, a);
    }
    counts.into_iter().map(|(c, n)| (c, ClassMetrics::from_counts(n))).collect()
}

pub fn risk_mae(predictions: &Predictions, gold: &[GoldLabel]) -> Result<f64, EvalError> {
    let errors: Vec<i64> = gold
        .iter()
        .filter_map(|g| predictions.get(&g.frame_id).map(|p| (p.risk() - g.dna.risk()).abs()))
        .collect();
    if errors.is_empty() {
        return Err(EvalError::EmptyIntersection);
    }
    Ok(errors.iter().sum::<i64>() as f64 / errors.len() as f64)
}

/// Implied completion tokens: latency x throughput, rounded.
pub fn reasoning_density(latency_s: f64, tokens_per_s: f64) -> u64 {
    (latency_s.max(0.0) * tokens_per_s.max(0.0)).round() as u64
}

/// Energy cost of `n_frames` at a constant GPU draw.
pub fn estimate_cost(latency_s: f64, power_w: f64, price_per_kwh: f64, n_frames: u64) -> f64 {
    latency_s / 3600.0 * power_w / 1000.0 * price_per_kwh * n_frames as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub power_w: f64,
    pub price_per_kwh: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { power_w: 350.0, price_per_kwh: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Summary { n, mean: sorted.iter().sum::<f64>() / n as f64, median, min: sorted[0], max: sorted[n - 1] }
    }
}

/// One scout call, as needed for latency and density analytics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub frame_id: String,
    pub scout_name: String,
    pub latency_s: f64,
    pub tokens_per_s: f64,
    pub implied_tokens: u64,
}

impl DensityPoint {
    pub fn new(frame_id: &str, scout_name: &str, latency_s: f64, tokens_per_s: f64) -> Self {
        DensityPoint {
            frame_id: frame_id.to_string(),
            scout_name: scout_name.to_string(),
            latency_s,
            tokens_per_s,
            implied_tokens: reasoning_density(latency_s, tokens_per_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutEconomics {
    pub scout_name: String,
    pub latency: Summary,
    pub tokens_per_s: Summary,
    pub implied_tokens: Summary,
    /// Energy cost of 1000 frames at this scout's mean latency.
    pub cost_per_1000_frames: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame_id: String,
    pub gold_risk: i64,
    pub pred_risk: Option<i64>,
    pub false_positives: Vec<String>,
    pub false_negatives: Vec<String>,
}

impl FrameError {
    pub fn abs_error(&self) -> Option<i64> {
        self.pred_risk.map(|p| (p - self.gold_risk).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tracked: Vec<String>,
    pub micro: MicroResult,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub risk_mae: Option<f64>,
    pub n_frames: usize,
    pub per_frame: Vec<FrameError>,
    pub density: Vec<DensityPoint>,
    pub cost: CostParams,
    pub economics: Vec<ScoutEconomics>,
}

pub fn scout_economics(points: &[DensityPoint], cost: CostParams) -> Vec<ScoutEconomics> {
    let mut by_scout: BTreeMap<&str, Vec<&DensityPoint>> = BTreeMap::new();
    for p in points {
        by_scout.entry(&p.scout_name).or_default().push(p);
    }
    by_scout
        .into_iter()
        .map(|(name, ps)| {
            let latency = Summary::of(&ps.iter().map(|p| p.latency_s).collect::<Vec<_>>());
            ScoutEconomics {
                scout_name: name.to_string(),
                tokens_per_s: Summary::of(&ps.iter().map(|p| p.tokens_per_s).collect::<Vec<_>>()),
                implied_tokens: Summary::of(&ps.iter().map(|p| p.implied_tokens as f64).collect::<Vec<_>>()),
                cost_per_1000_frames: estimate_cost(latency.mean, cost.power_w, cost.price_per_kwh, 1000),
                latency,
            }
        })
        .collect()
}

pub fn evaluate(
    predictions: &Predictions,
    gold: &[GoldLabel],
    density: Vec<DensityPoint>,
    cost: CostParams,
) -> Result<EvalReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let micro = micro_prf(predictions, gold);
    if !micro.missing_frames.is_empty() {
        tracing::warn!(missing = ?micro.missing_frames, "gold frames without predictions count as false negatives");
    }
    let per_frame = gold
        .iter()
        .map(|g| {
            let pred = predictions.get(&g.frame_id);
            let mut fps = Vec::new();
            let mut fns = Vec::new();
            for c in tracked_categories() {
                let p = pred.is_some_and(|p| category_present(p, c));
                let a = category_present(&g.dna, c);
                if p && !a {
                    fps.push(c.clone());
                } else if a && !p {
                    fns.push(c.clone());
                }
            }
            FrameError {
                frame_id: g.frame_id.clone(),
                gold_risk: g.dna.risk(),
                pred_risk: pred.map(ScenarioDna::risk),
                false_positives: fps,
                false_negatives: fns,
            }
        })
        .collect();
    let economics = scout_economics(&density, cost);
    Ok(EvalReport {
        tracked: tracked_categories().to_vec(),
        per_class: per_class_prf(predictions, gold),
        risk_mae: risk_mae(predictions, gold).ok(),
        n_frames: gold.len(),
        micro,
        per_frame,
        density,
        cost,
        economics,
    })
}

/// Gold frame ids with no prediction, deduplicated and sorted.
pub fn unknown_gold_frames(predictions: &Predictions, gold: &[GoldLabel]) -> BTreeSet<String> {
    missing(predictions, gold).into_iter().collect()
}
