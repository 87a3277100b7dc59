//! Spike-candidate detection and hanging rootograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::DesignMatrices;
use crate::distributions::{tnb_logpmf, Nb2Params};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::inference::{predict_design, PredictionRow};

pub const DEFAULT_SENSITIVITY: f64 = 4.0;

/// Frequencies below this are replaced by it when smoothing.
const FREQ_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCandidate {
    pub value: u64,
    pub freq: u64,
    pub smoothed: f64,
    /// `(freq - smoothed) / sqrt((freq + smoothed) / 2 + var(smoothed))`.
    pub score: f64,
}

/// Counts whose frequency among the positives stands out from the geometric
/// mean of their neighbours, ranked by score. Only scores above
/// `sensitivity` are returned.
pub fn detect_spike_candidates(y: &[u64], sensitivity: f64) -> Vec<SpikeCandidate> {
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    for &v in y.iter().filter(|&&v| v > 0) {
        *freq.entry(v).or_default() += 1;
    }
    let f = |j: u64| (freq.get(&j).copied().unwrap_or(0) as f64).max(FREQ_FLOOR);
    let mut out: Vec<SpikeCandidate> = freq
        .iter()
        .map(|(&j, &count)| {
            // Baseline and its delta-method variance under Poisson counts. The
            // Poisson part pools the count with the baseline, which keeps a
            // baseline dragged down by sparse neighbours from inflating the score.
            let (smoothed, spread) = if j == 1 {
                // No left neighbour among positives: extrapolate log-linearly.
                let r = f(2) / f(3);
                let s = (f(2) * r).max(FREQ_FLOOR);
                (s, s * r * (4.0 + r))
            } else {
                ((f(j - 1) * f(j + 1)).sqrt(), (f(j - 1) + f(j + 1)) / 4.0)
            };
            SpikeCandidate {
                value: j,
                freq: count,
                smoothed,
                score: (count as f64 - smoothed) / ((count as f64 + smoothed) / 2.0 + spread).sqrt(),
            }
        })
        .filter(|c| c.score > sensitivity)
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.value.cmp(&b.value)));
    out
}

/// Spike detection on the response of a dataset.
pub fn detect_spikes_in(data: &Dataset, sensitivity: f64) -> Result<Vec<SpikeCandidate>> {
    let y = data.response()?;
    if !y.iter().any(|&v| v > 0) {
        return Err(Error::NoPositives);
    }
    Ok(detect_spike_candidates(&y, sensitivity))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootogramRow {
    pub count: u64,
    pub observed_freq: f64,
    pub expected_freq: f64,
    pub sqrt_observed: f64,
    pub sqrt_expected: f64,
    /// `sqrt_expected - sqrt_observed`: negative where the model under-predicts.
    pub hanging_deviation: f64,
}

impl RootogramRow {
    fn new(count: u64, observed: f64, expected: f64) -> Self {
        let (so, se) = (observed.sqrt(), expected.max(0.0).sqrt());
        Self {
            count,
            observed_freq: observed,
            expected_freq: expected,
            sqrt_observed: so,
            sqrt_expected: se,
            hanging_deviation: se - so,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootogramTable {
    /// One row per count `0..=max_count`.
    pub rows: Vec<RootogramRow>,
    /// Counts above `max_count`, pooled.
    pub tail: RootogramRow,
    pub max_count: u64,
}

impl RootogramTable {
    pub fn total_observed(&self) -> f64 {
        self.rows.iter().map(|r| r.observed_freq).sum::<f64>() + self.tail.observed_freq
    }

    pub fn total_expected(&self) -> f64 {
        self.rows.iter().map(|r| r.expected_freq).sum::<f64>() + self.tail.expected_freq
    }

    pub fn max_abs_deviation(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.hanging_deviation.abs()))
    }

    pub fn row(&self, count: u64) -> Option<&RootogramRow> {
        self.rows.get(count as usize)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "count",
            "observed_freq",
            "expected_freq",
            "sqrt_observed",
            "sqrt_expected",
            "hanging_deviation",
        ])?;
        let tail_label = format!("{}+", self.max_count + 1);
        for (label, r) in self
            .rows
            .iter()
            .map(|r| (r.count.to_string(), r))
            .chain(std::iter::once((tail_label, &self.tail)))
        {
            w.write_record([
                label,
                r.observed_freq.to_string(),
                r.expected_freq.to_string(),
                r.sqrt_observed.to_string(),
                r.sqrt_expected.to_string(),
                r.hanging_deviation.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Standalone SVG: observed bars hang from the expected curve, on the
    /// square-root scale, with a reference line at zero.
    pub fn to_svg(&self) -> String {
        let (width, height, margin) = (800.0, 400.0, 50.0);
        let n = self.rows.len().max(1) as f64;
        let top = self
            .rows
            .iter()
            .map(|r| r.sqrt_expected.max(r.sqrt_observed))
            .fold(1.0_f64, f64::max);
        let bottom = self.rows.iter().map(|r| r.hanging_deviation).fold(0.0_f64, f64::min);
        let span = top - bottom;
        let plot_w = width - 2.0 * margin;
        let plot_h = height - 2.0 * margin;
        let sx = |j: f64| margin + plot_w * (j + 0.5) / n;
        let sy = |v: f64| margin + plot_h * (top - v) / span;
        let bar_w = 0.8 * plot_w / n;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for r in &self.rows {
            let x = sx(r.count as f64) - bar_w / 2.0;
            let (y_top, y_bottom) = (sy(r.sqrt_expected), sy(r.hanging_deviation));
            let _ = writeln!(
                s,
                r##"<rect x="{x:.2}" y="{y_top:.2}" width="{bar_w:.2}" height="{:.2}" fill="#b0b0b0" stroke="#606060"/>"##,
                (y_bottom - y_top).max(0.0)
            );
        }
        let points: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.count as f64), sy(r.sqrt_expected)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#c00000" stroke-width="2"/>"##,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r##"<line x1="{margin}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"##,
            width - margin,
            y0 = sy(0.0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{:.2}" stroke="black"/>"#,
            height - margin
        );
        let step = (self.rows.len() / 10).max(1);
        for r in self.rows.iter().step_by(step) {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                sx(r.count as f64),
                height - margin + 15.0,
                r.count
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="15" y="{:.2}" font-size="12" transform="rotate(-90 15 {:.2})" text-anchor="middle">sqrt(frequency)</text>"#,
            height / 2.0,
            height / 2.0
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Nearest-rank quantile of the counts.
fn quantile(y: &[u64], q: f64) -> u64 {
    let mut sorted = y.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub const DEFAULT_ROOTOGRAM_QUANTILE: f64 = 0.999;

/// Expected probabilities `Pr(y = j)` for `j = 0..=max_count` at one row.
fn row_pmf(pred: &PredictionRow, inflated: &[u64], max_count: u64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; max_count as usize + 1];
    out[0] = 1.0 - pred.p_positive;
    let nb = Nb2Params::new(pred.lambda, pred.theta)?;
    let w_tnb = pred.p_positive * pred.mixing.tnb_weight();
    if max_count >= 1 {
        // NB2 ratio recurrence from the truncated pmf at 1:
        // f(j+1)/f(j) = (j + theta)/(j + 1) * lambda/(lambda + theta).
        let ratio = pred.lambda / (pred.lambda + pred.theta);
        let mut log_f = tnb_logpmf(1, nb)?;
        for j in 1..=max_count {
            out[j as usize] += w_tnb * log_f.exp();
            log_f += ((j as f64 + pred.theta) / (j as f64 + 1.0) * ratio).ln();
        }
    }
    for (&v, &p) in inflated.iter().zip(pred.mixing.probs()) {
        if v <= max_count {
            out[v as usize] += pred.p_positive * p;
        }
    }
    Ok(out)
}

/// Observed and expected count frequencies with a pooled tail above
/// `max_count` (default: the 99.9th percentile of the observed counts).
pub fn rootogram(fit: &FitResult, data: &Dataset, max_count: Option<u64>) -> Result<RootogramTable> {
    let design = DesignMatrices::build(&fit.encoding, data)?;
    let y = data.response()?;
    rootogram_design(fit, &design, &y, max_count)
}

pub fn rootogram_design(
    fit: &FitResult,
    design: &DesignMatrices,
    y: &[u64],
    max_count: Option<u64>,
) -> Result<RootogramTable> {
    if y.is_empty() {
        return Err(Error::Degenerate("rootogram of an empty dataset".into()));
    }
    let max_count = max_count.unwrap_or_else(|| quantile(y, DEFAULT_ROOTOGRAM_QUANTILE));
    let bins = max_count as usize + 1;
    // Standard errors are not needed here.
    let mut point = fit.clone();
    point.covariance = None;
    let preds = predict_design(&point, design)?;
    let inflated = fit.inflated().values();
    // Fixed-size chunks summed in row order keep the table reproducible.
    let partial = preds
        .par_chunks(1024)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; bins];
            for p in chunk {
                let pmf = row_pmf(p, inflated, max_count)?;
                acc.iter_mut().zip(&pmf).for_each(|(x, y)| *x += y);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut expected = vec![0.0; bins];
    for acc in &partial {
        expected.iter_mut().zip(acc).for_each(|(x, y)| *x += y);
    }
    let mut observed = vec![0.0; bins];
    let mut tail_observed = 0.0;
    for &v in y {
        match observed.get_mut(v as usize) {
            Some(o) => *o += 1.0,
            None => tail_observed += 1.0,
        }
    }
    let n = y.len() as f64;
    let tail_expected = (n - expected.iter().sum::<f64>()).max(0.0);
    Ok(RootogramTable {
        rows: (0..bins)
            .map(|j| RootogramRow::new(j as u64, observed[j], expected[j]))
            .collect(),
        tail: RootogramRow::new(max_count + 1, tail_observed, tail_expected),
        max_count,
    })
}
