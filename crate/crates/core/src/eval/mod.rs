//! Key-subshot selection and precision/recall/F-measure scoring.

pub mod baseline;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::write_atomic;
use crate::data::synth::ceil_fraction;
use crate::data::LabeledVideo;
use crate::error::{Error, Result};
use crate::hrnn::KeynessPrediction;
use crate::registry::KeynessModel;

pub use baseline::{flat_baseline_forward, FlatLstmModel, Reduction};

/// Default fraction of subshots kept in a summary.
pub const DEFAULT_BUDGET: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Top `⌈fraction·m⌉` subshots by key probability.
    Budget(f64),
    /// Every subshot whose key probability exceeds the threshold.
    Threshold(f64),
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Budget(DEFAULT_BUDGET)
    }
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::Budget(b) if !(b > 0.0 && b <= 1.0) => Err(Error::Config(format!(
                "budget fraction must lie in (0, 1], got {b}"
            ))),
            SelectionRule::Threshold(t) if !t.is_finite() => {
                Err(Error::Config(format!("threshold must be finite, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySelection {
    /// Ascending subshot indices.
    pub selected: Vec<usize>,
    pub budget_fraction: f64,
}

/// Rank by key probability (ties to the lower index) and keep the top
/// `⌈budget_fraction·m⌉`.
pub fn select_key_subshots(
    predictions: &[KeynessPrediction],
    budget_fraction: f64,
) -> Result<SummarySelection> {
    SelectionRule::Budget(budget_fraction).validate()?;
    let k = ceil_fraction(budget_fraction, predictions.len());
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .key_probability()
            .total_cmp(&predictions[a].key_probability())
            .then(a.cmp(&b))
    });
    let mut selected = order[..k].to_vec();
    selected.sort_unstable();
    Ok(SummarySelection {
        selected,
        budget_fraction,
    })
}

pub fn select_by_threshold(predictions: &[KeynessPrediction], threshold: f64) -> SummarySelection {
    SummarySelection {
        selected: predictions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.key_probability() > threshold)
            .map(|(i, _)| i)
            .collect(),
        budget_fraction: 1.0,
    }
}

pub fn select(predictions: &[KeynessPrediction], rule: SelectionRule) -> Result<SummarySelection> {
    rule.validate()?;
    match rule {
        SelectionRule::Budget(b) => select_key_subshots(predictions, b),
        SelectionRule::Threshold(t) => Ok(select_by_threshold(predictions, t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Exact-index matching of a selection against a reference summary.
pub fn precision_recall_f(selected: &[usize], reference: &[usize], m: usize) -> Result<Scores> {
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let refs: BTreeSet<usize> = reference.iter().copied().collect();
    if let Some(&bad) = sel.iter().chain(&refs).find(|&&i| i >= m) {
        return Err(Error::Config(format!(
            "subshot index {bad} is outside 0..{m}"
        )));
    }
    let hits = sel.intersection(&refs).count() as f64;
    let precision = if sel.is_empty() {
        0.0
    } else {
        hits / sel.len() as f64
    };
    let recall = if refs.is_empty() {
        0.0
    } else {
        hits / refs.len() as f64
    };
    // Harmonic mean of P and R, in the form that stays exact for small counts.
    let f_measure = if hits > 0.0 {
        2.0 * hits / (sel.len() + refs.len()) as f64
    } else {
        0.0
    };
    Ok(Scores {
        precision,
        recall,
        f_measure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub video_id: String,
    pub scores: Scores,
}

/// Per-video scores and their unweighted means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub videos: Vec<VideoScore>,
}

pub const REPORT_HEADER: &str = "video_id\tprecision\trecall\tf_measure";

impl EvalReport {
    pub fn from_videos(videos: Vec<VideoScore>) -> Result<Self> {
        if videos.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = videos.len() as f64;
        let mean = |f: fn(&Scores) -> f64| videos.iter().map(|v| f(&v.scores)).sum::<f64>() / n;
        Ok(EvalReport {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f_measure: mean(|s| s.f_measure),
            videos,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for v in &self.videos {
            let s = &v.scores;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                v.video_id, s.precision, s.recall, s.f_measure
            );
        }
        let _ = writeln!(
            out,
            "ALL\t{}\t{}\t{}",
            self.precision, self.recall, self.f_measure
        );
        out
    }

    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Format {
            path: path.to_path_buf(),
            offset: line as u64,
            reason: format!("line {}: {reason}", line + 1),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == REPORT_HEADER => {}
            _ => return Err(bad(0, "missing report header".into())),
        }
        let mut videos = Vec::new();
        let mut all = None;
        for (n, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(n, format!("expected 4 columns, found {}", cols.len())));
            }
            let num = |i: usize| {
                cols[i]
                    .parse::<f64>()
                    .map_err(|e| bad(n, format!("column {}: {e}", i + 1)))
            };
            let scores = Scores {
                precision: num(1)?,
                recall: num(2)?,
                f_measure: num(3)?,
            };
            if cols[0] == "ALL" {
                all = Some(scores);
            } else {
                videos.push(VideoScore {
                    video_id: cols[0].to_string(),
                    scores,
                });
            }
        }
        let all = all.ok_or_else(|| bad(0, "missing ALL row".into()))?;
        Ok(EvalReport {
            precision: all.precision,
            recall: all.recall,
            f_measure: all.f_measure,
            videos,
        })
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_tsv().as_bytes())
    }
}

/// Score precomputed predictions; references are the subshots with
/// `raw_score >= 0.5`.
pub fn evaluate_predictions(
    videos: &[LabeledVideo],
    predictions: &[Vec<KeynessPrediction>],
    rule: SelectionRule,
) -> Result<EvalReport> {
    rule.validate()?;
    if videos.len() != predictions.len() {
        return Err(Error::shape(
            "evaluate_predictions",
            videos.len(),
            predictions.len(),
        ));
    }
    let mut rows = Vec::with_capacity(videos.len());
    for (v, p) in videos.iter().zip(predictions) {
        let m = v.labels.len();
        if p.len() != m {
            return Err(Error::LabelCount {
                video_id: v.sequence.video_id.clone(),
                expected: p.len(),
                actual: m,
            });
        }
        let sel = select(p, rule)?;
        rows.push(VideoScore {
            video_id: v.sequence.video_id.clone(),
            scores: precision_recall_f(&sel.selected, &v.key_subshots(), m)?,
        });
    }
    EvalReport::from_videos(rows)
}

/// Predict every video (in parallel, merged in input order) and score it.
pub fn evaluate_dataset(
    model: &dyn KeynessModel,
    videos: &[LabeledVideo],
    rule: SelectionRule,
) -> Result<EvalReport> {
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = videos
        .par_iter()
        .map(|v| model.predict(&v.sequence))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(videos, &predictions, rule)
}
