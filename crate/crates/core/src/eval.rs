//! Accuracy, percentile bootstrap intervals and per-condition reports.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("accuracy of zero predictions".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Percentile bootstrap interval of the mean of `correct`. Resample `r`
/// draws from its own ChaCha stream, so adding resamples keeps earlier ones.
pub fn bootstrap_ci(correct: &[bool], n_resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = correct.len();
    if n == 0 || n_resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let hits = (0..n).filter(|_| correct[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile(&means, alpha), quantile(&means, 1.0 - alpha))
}

/// Linearly interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub condition: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EvalResult {
    /// Builds a result from per-example correctness. The interval is
    /// widened to include the point estimate when the percentile bounds
    /// miss it.
    pub fn from_correctness(condition: impl Into<String>, correct: &[bool], n_resamples: usize, seed: u64) -> Result<Self> {
        if correct.is_empty() {
            return Err(Error::Empty("no examples in condition".into()));
        }
        let hits = correct.iter().filter(|&&c| c).count();
        let accuracy = hits as f64 / correct.len() as f64;
        let (lo, hi) = bootstrap_ci(correct, n_resamples, DEFAULT_LEVEL, seed);
        Ok(Self {
            condition: condition.into(),
            n: correct.len(),
            correct: hits,
            accuracy,
            ci_low: lo.min(accuracy),
            ci_high: hi.max(accuracy),
        })
    }

    pub fn render(&self) -> String {
        format_acc_ci(self.accuracy, self.ci_low, self.ci_high)
    }
}

/// `acc (low-high)` in percent with one decimal, e.g. `81.3 (74.6-87.3)`.
pub fn format_acc_ci(accuracy: f64, low: f64, high: f64) -> String {
    format!("{:.1} ({:.1}-{:.1})", 100.0 * accuracy, 100.0 * low, 100.0 * high)
}

/// Groups per-example correctness by condition (first-seen order) and adds
/// an `all` row first.
pub fn evaluate_by_condition(
    conditions: &[String],
    correct: &[bool],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<EvalResult>> {
    if conditions.len() != correct.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} conditions for {} examples",
            conditions.len(),
            correct.len()
        )));
    }
    let mut out = vec![EvalResult::from_correctness("all", correct, n_resamples, seed)?];
    let mut names: Vec<&String> = Vec::new();
    for c in conditions {
        if !names.contains(&c) {
            names.push(c);
        }
    }
    for name in names {
        let subset: Vec<bool> = conditions
            .iter()
            .zip(correct)
            .filter(|(c, _)| *c == name)
            .map(|(_, &k)| k)
            .collect();
        out.push(EvalResult::from_correctness(name.clone(), &subset, n_resamples, seed)?);
    }
    Ok(out)
}

/// Mean accuracy and bounds over the `k` most accurate runs (stable order
/// on ties).
pub fn top_k_average(runs: &[EvalResult], k: usize) -> Result<EvalResult> {
    if runs.is_empty() || k == 0 {
        return Err(Error::Empty("top-k average of no runs".into()));
    }
    let mut sorted: Vec<&EvalResult> = runs.iter().collect();
    sorted.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
    let top = &sorted[..k.min(sorted.len())];
    let m = top.len() as f64;
    Ok(EvalResult {
        condition: top[0].condition.clone(),
        n: top[0].n,
        correct: (top.iter().map(|r| r.correct).sum::<usize>() as f64 / m).round() as usize,
        accuracy: top.iter().map(|r| r.accuracy).sum::<f64>() / m,
        ci_low: top.iter().map(|r| r.ci_low).sum::<f64>() / m,
        ci_high: top.iter().map(|r| r.ci_high).sum::<f64>() / m,
    })
}

/// Results of one model variant, one entry per condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResults {
    pub variant: String,
    pub results: Vec<EvalResult>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub variants: Vec<String>,
    /// `(condition, n, one cell per variant)`.
    pub rows: Vec<(String, usize, Vec<String>)>,
}

/// One row per condition, one column per variant in the given order.
/// Conditions with no examples in any variant are dropped with a warning.
pub fn per_condition_report(variants: &[VariantResults]) -> Report {
    let mut conditions: Vec<&str> = Vec::new();
    for v in variants {
        for r in &v.results {
            if !conditions.contains(&r.condition.as_str()) {
                conditions.push(&r.condition);
            }
        }
    }
    let mut rows = Vec::new();
    for cond in conditions {
        let found: Vec<Option<&EvalResult>> = variants
            .iter()
            .map(|v| v.results.iter().find(|r| r.condition == cond && r.n > 0))
            .collect();
        if found.iter().all(Option::is_none) {
            log::warn!("condition `{cond}` has no examples; omitted from report");
            continue;
        }
        let n = found.iter().flatten().map(|r| r.n).max().unwrap_or(0);
        let cells = found.iter().map(|r| r.map_or_else(|| "-".to_string(), EvalResult::render)).collect();
        rows.push((cond.to_string(), n, cells));
    }
    Report {
        variants: variants.iter().map(|v| v.variant.clone()).collect(),
        rows,
    }
}

impl Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["condition".to_string(), "n".to_string()];
        header.extend(self.variants.iter().cloned());
        w.write_record(&header)?;
        for (cond, n, cells) in &self.rows {
            let mut rec = vec![cond.clone(), n.to_string()];
            rec.extend(cells.iter().cloned());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Aligned plain-text table; the first column reads `condition (n)`.
    pub fn to_text(&self) -> String {
        let mut table: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        let mut header = vec!["condition".to_string()];
        header.extend(self.variants.iter().cloned());
        table.push(header);
        for (cond, n, cells) in &self.rows {
            let mut row = vec![format!("{cond} ({n})")];
            row.extend(cells.iter().cloned());
            table.push(row);
        }
        let cols = table[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub label: usize,
    pub logits: Vec<f64>,
    pub pred: usize,
}

impl PredictionRecord {
    pub fn new(clip_id: impl Into<String>, label: usize, logits: Vec<f64>) -> Self {
        Self {
            clip_id: clip_id.into(),
            label,
            pred: argmax(&logits),
            logits,
        }
    }
}

pub fn write_predictions(w: &mut impl Write, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
