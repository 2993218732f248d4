//! Report files: a text summary and CSV tables that reload losslessly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    scout_economics, ClassMetrics, CostParams, Counts, DensityPoint, EvalError, EvalReport, FrameError, MicroResult,
    Prf,
};

pub struct ReportFiles {
    pub summary: PathBuf,
    pub metrics: PathBuf,
    pub per_class: PathBuf,
    pub per_frame: PathBuf,
    pub density: PathBuf,
}

impl ReportFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ReportFiles {
            summary: dir.join("summary.txt"),
            metrics: dir.join("metrics.csv"),
            per_class: dir.join("per_class.csv"),
            per_frame: dir.join("per_frame.csv"),
            density: dir.join("density.csv"),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn rate(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn summary_text(report: &EvalReport) -> String {
    let mut s = String::new();
    let m = &report.micro;
    let _ = writeln!(s, "Evaluation over {} gold frame(s)", report.n_frames);
    let _ = writeln!(s, "Tracked categories (micro average): {}", report.tracked.join(", "));
    let _ = writeln!(
        s,
        "Micro P {:.3} R {:.3} F1 {:.3} (TP {} FP {} FN {})",
        m.prf.precision, m.prf.recall, m.prf.f1, m.counts.tp, m.counts.fp, m.counts.fn_
    );
    match report.risk_mae {
        Some(mae) => {
            let matched = report.per_frame.iter().filter(|f| f.pred_risk.is_some()).count();
            let _ = writeln!(s, "MAE risk {mae:.3} over {matched} matched frame(s)");
        }
        None => {
            let _ = writeln!(s, "MAE risk n/a (no frame in both predictions and gold)");
        }
    }
    if !m.missing_frames.is_empty() {
        let _ = writeln!(
            s,
            "Missing predictions (counted as FN): {} frame(s): {}",
            m.missing_frames.len(),
            m.missing_frames.join(", ")
        );
    }
    let _ = writeln!(s, "Per category:");
    for (category, c) in &report.per_class {
        let _ = write!(
            s,
            "  {category:<16} P {:.3} R {} F1 {} (TP {} FP {} FN {})",
            c.precision,
            rate(c.recall),
            rate(c.f1),
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_
        );
        if let Some(note) = &c.note {
            let _ = write!(s, " [{note}]");
        }
        s.push('\n');
    }
    if !report.economics.is_empty() {
        let _ = writeln!(s, "Economics ({} W @ ${}/kWh):", report.cost.power_w, report.cost.price_per_kwh);
        for e in &report.economics {
            let _ = writeln!(
                s,
                "  {:<16} latency {:.2} s  TPS {:.1}  implied tokens {:.0}  cost/1000 frames ${:.3}",
                e.scout_name, e.latency.mean, e.tokens_per_s.mean, e.implied_tokens.mean, e.cost_per_1000_frames
            );
        }
    }
    s
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io { path: path.display().to_string(), detail: e.to_string() }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<ReportFiles, EvalError> {
    if report.n_frames == 0 {
        return Err(EvalError::EmptyGold);
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = ReportFiles::in_dir(dir);
    fs::write(&files.summary, summary_text(report)).map_err(|e| io_err(&files.summary, e))?;

    let m = &report.micro;
    let metrics = [
        ("tracked", report.tracked.join(";")),
        ("n_frames", report.n_frames.to_string()),
        ("micro_precision", m.prf.precision.to_string()),
        ("micro_recall", m.prf.recall.to_string()),
        ("micro_f1", m.prf.f1.to_string()),
        ("micro_tp", m.counts.tp.to_string()),
        ("micro_fp", m.counts.fp.to_string()),
        ("micro_fn", m.counts.fn_.to_string()),
        ("missing_frames", m.missing_frames.join(";")),
        ("risk_mae", opt(report.risk_mae)),
        ("power_w", report.cost.power_w.to_string()),
        ("price_per_kwh", report.cost.price_per_kwh.to_string()),
    ];
    write_csv(
        &files.metrics,
        &["metric", "value"],
        metrics.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect(),
    )?;

    write_csv(
        &files.per_class,
        &["category", "tp", "fp", "fn", "precision", "recall", "f1", "note"],
        report
            .per_class
            .iter()
            .map(|(cat, c)| {
                vec![
                    cat.clone(),
                    c.counts.tp.to_string(),
                    c.counts.fp.to_string(),
                    c.counts.fn_.to_string(),
                    c.precision.to_string(),
                    opt(c.recall),
                    opt(c.f1),
                    c.note.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &files.per_frame,
        &["frame_id", "gold_risk", "pred_risk", "abs_error", "false_positives", "false_negatives"],
        report
            .per_frame
            .iter()
            .map(|f| {
                vec![
                    f.frame_id.clone(),
                    f.gold_risk.to_string(),
                    f.pred_risk.map(|r| r.to_string()).unwrap_or_default(),
                    f.abs_error().map(|r| r.to_string()).unwrap_or_default(),
                    f.false_positives.join(";"),
                    f.false_negatives.join(";"),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &files.density,
        &["frame_id", "scout_name", "latency_s", "tokens_per_s", "implied_tokens"],
        report
            .density
            .iter()
            .map(|d| {
                vec![
                    d.frame_id.clone(),
                    d.scout_name.clone(),
                    d.latency_s.to_string(),
                    d.tokens_per_s.to_string(),
                    d.implied_tokens.to_string(),
                ]
            })
            .collect(),
    )?;
    Ok(files)
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

struct Fields<'a> {
    path: &'a Path,
}

impl Fields<'_> {
    fn bad(&self, detail: impl Into<String>) -> EvalError {
        EvalError::Malformed { path: self.path.display().to_string(), detail: detail.into() }
    }

    fn num<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, EvalError> {
        s.parse().map_err(|_| self.bad(format!("bad {what}: {s:?}")))
    }

    fn opt_num<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<Option<T>, EvalError> {
        if s.is_empty() {
            Ok(None)
        } else {
            self.num(s, what).map(Some)
        }
    }

    fn cell<'r>(&self, row: &'r [String], i: usize) -> Result<&'r str, EvalError> {
        row.get(i).map(String::as_str).ok_or_else(|| self.bad(format!("missing column {i}")))
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';').filter(|x| !x.is_empty()).map(str::to_string).collect()
}

/// Rebuilds an [`EvalReport`] from the CSV files `emit_report` wrote.
pub fn load_report(dir: &Path) -> Result<EvalReport, EvalError> {
    let files = ReportFiles::in_dir(dir);

    let f = Fields { path: &files.metrics };
    let metrics: BTreeMap<String, String> = read_rows(&files.metrics)?
        .into_iter()
        .map(|r| Ok((f.cell(&r, 0)?.to_string(), f.cell(&r, 1)?.to_string())))
        .collect::<Result<_, EvalError>>()?;
    let get = |k: &str| metrics.get(k).map(String::as_str).ok_or_else(|| f.bad(format!("missing metric {k}")));
    let micro = MicroResult {
        prf: Prf {
            precision: f.num(get("micro_precision")?, "precision")?,
            recall: f.num(get("micro_recall")?, "recall")?,
            f1: f.num(get("micro_f1")?, "f1")?,
        },
        counts: Counts {
            tp: f.num(get("micro_tp")?, "tp")?,
            fp: f.num(get("micro_fp")?, "fp")?,
            fn_: f.num(get("micro_fn")?, "fn")?,
        },
        missing_frames: split_list(get("missing_frames")?),
    };
    let cost = CostParams {
        power_w: f.num(get("power_w")?, "power_w")?,
        price_per_kwh: f.num(get("price_per_kwh")?, "price_per_kwh")?,
    };

    let f = Fields { path: &files.per_class };
    let mut per_class = BTreeMap::new();
    for r in read_rows(&files.per_class)? {
        let note = f.cell(&r, 7)?;
        per_class.insert(
            f.cell(&r, 0)?.to_string(),
            ClassMetrics {
                counts: Counts {
                    tp: f.num(f.cell(&r, 1)?, "tp")?,
                    fp: f.num(f.cell(&r, 2)?, "fp")?,
                    fn_: f.num(f.cell(&r, 3)?, "fn")?,
                },
                precision: f.num(f.cell(&r, 4)?, "precision")?,
                recall: f.opt_num(f.cell(&r, 5)?, "recall")?,
                f1: f.opt_num(f.cell(&r, 6)?, "f1")?,
                note: (!note.is_empty()).then(|| note.to_string()),
            },
        );
    }

    let f = Fields { path: &files.per_frame };
    let per_frame = read_rows(&files.per_frame)?
        .into_iter()
        .map(|r| {
            Ok(FrameError {
                frame_id: f.cell(&r, 0)?.to_string(),
                gold_risk: f.num(f.cell(&r, 1)?, "gold_risk")?,
                pred_risk: f.opt_num(f.cell(&r, 2)?, "pred_risk")?,
                false_positives: split_list(f.cell(&r, 4)?),
                false_negatives: split_list(f.cell(&r, 5)?),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let f = Fields { path: &files.density };
    let density = read_rows(&files.density)?
        .into_iter()
        .map(|r| {
            Ok(DensityPoint {
                frame_id: f.cell(&r, 0)?.to_string(),
                scout_name: f.cell(&r, 1)?.to_string(),
                latency_s: f.num(f.cell(&r, 2)?, "latency_s")?,
                tokens_per_s: f.num(f.cell(&r, 3)?, "tokens_per_s")?,
                implied_tokens: f.num(f.cell(&r, 4)?, "implied_tokens")?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let f = Fields { path: &files.metrics };
    Ok(EvalReport {
        tracked: split_list(get("tracked")?),
        risk_mae: f.opt_num(get("risk_mae")?, "risk_mae")?,
        n_frames: f.num(get("n_frames")?, "n_frames")?,
        economics: scout_economics(&density, cost),
        micro,
        per_class,
        per_frame,
        density,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::schema::nominal_dna;

    fn report(consensus_numbers: bool) -> EvalReport {
        let mut tagged = nominal_dna();
        tagged.wod_e2e_tags.push("construction".into());
        tagged.scenario_criticality.risk_score = 7;
        let gold = vec![
            GoldLabel::new("a", tagged.clone(), "t"),
            GoldLabel::new("b", nominal_dna(), "t"),
            GoldLabel::new("c", tagged.clone(), "t"),
        ];
        let preds: Predictions = [("a".to_string(), tagged.clone()), ("b".to_string(), tagged)].into();
        let density = vec![DensityPoint::new("a", "qwen", 31.5, 99.5), DensityPoint::new("b", "gemma", 8.0, 36.3)];
        let mut r = evaluate(&preds, &gold, density, CostParams::default()).unwrap();
        if consensus_numbers {
            r.micro.prf = Prf { precision: 0.712, recall: 0.966, f1: f1_score(0.712, 0.966) };
        }
        r
    }

    #[test]
    fn summary_prints_f1() {
        let text = summary_text(&report(true));
        assert!(text.contains("F1 0.820"), "{text}");
        assert!(text.contains("Missing predictions (counted as FN): 1 frame(s): c"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let original = report(false);
        emit_report(&original, dir.path()).unwrap();
        assert_eq!(load_report(dir.path()).unwrap(), original);
        let density = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
        assert!(density.contains("a,qwen,31.5,99.5,3134"));
    }

    #[test]
    fn empty_gold_refused() {
        let mut r = report(false);
        r.n_frames = 0;
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_report(&r, dir.path()).err(), Some(EvalError::EmptyGold));
    }
}
