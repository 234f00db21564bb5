//! Median-filter postprocessing, onset F-measure, and the Almost Stochastic
//! Order significance test.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::timeline::{Event, ScoreMatrix};

/// Odd window length in frames for a window given in seconds: the rounded
/// frame count, bumped up to the next odd number when even.
pub fn median_window_frames(window_seconds: f64, resolution: f64) -> usize {
    let frames = (window_seconds / resolution).round().max(1.0) as usize;
    if frames.is_multiple_of(2) {
        frames + 1
    } else {
        frames
    }
}

/// Per-class running median over frames. Near the edges the window shrinks
/// symmetrically so it stays centered and odd. A window longer than the clip
/// yields the whole-clip (lower) median for every frame.
pub fn median_filter(scores: &ScoreMatrix, window_seconds: f64) -> Result<ScoreMatrix> {
    if !(window_seconds > 0.0 && window_seconds.is_finite()) {
        return Err(Error::Validation(format!(
            "median filter window must be positive, got {window_seconds}"
        )));
    }
    let window = median_window_frames(window_seconds, scores.grid().resolution());
    Ok(scores.with_scores(median_filter_frames(scores.scores(), window)))
}

/// [`median_filter`] on a raw `frames × classes` array with an odd window in frames.
pub fn median_filter_frames(values: &Array2<f64>, window: usize) -> Array2<f64> {
    let (frames, classes) = values.dim();
    let half = window / 2;
    let mut out = Array2::zeros((frames, classes));
    let mut buf = Vec::with_capacity(window.max(frames));
    for c in 0..classes {
        let col = values.column(c);
        if window > frames {
            buf.clear();
            buf.extend(col.iter().copied());
            let m = lower_median(&mut buf);
            out.column_mut(c).fill(m);
            continue;
        }
        for t in 0..frames {
            let h = half.min(t).min(frames - 1 - t);
            buf.clear();
            buf.extend(col.slice(ndarray::s![t - h..=t + h]).iter().copied());
            out[[t, c]] = lower_median(&mut buf);
        }
    }
    out
}

fn lower_median(buf: &mut [f64]) -> f64 {
    let k = (buf.len() - 1) / 2;
    let (_, m, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
    *m
}

/// Onset matching tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetEvalConfig {
    pub tolerance: f64,
}

impl Default for OnsetEvalConfig {
    fn default() -> Self {
        OnsetEvalConfig { tolerance: 0.05 }
    }
}

/// Micro-averaged onset-based detection scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnsetScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Events of several clips, keyed by clip id.
pub type EventsByClip = BTreeMap<String, Vec<Event>>;

/// Greedy onset matching: ground truths are visited in onset order and each
/// takes the earliest unmatched prediction of the same class whose onset lies
/// within `tolerance`. Counts are pooled over all clips and classes.
pub fn onset_f(pred: &EventsByClip, gt: &EventsByClip, cfg: &OnsetEvalConfig) -> Result<OnsetScore> {
    if !(cfg.tolerance > 0.0) {
        return Err(Error::Validation(format!("tolerance must be positive, got {}", cfg.tolerance)));
    }
    let empty = Vec::new();
    let (mut tp, mut n_pred, mut n_gt) = (0usize, 0usize, 0usize);
    let clips: std::collections::BTreeSet<&String> = pred.keys().chain(gt.keys()).collect();
    for clip in clips {
        let p = pred.get(clip).unwrap_or(&empty);
        let g = gt.get(clip).unwrap_or(&empty);
        n_pred += p.len();
        n_gt += g.len();
        let classes: std::collections::BTreeSet<usize> = g.iter().map(|e| e.class_id).collect();
        for c in classes {
            let onsets = |evs: &[Event]| {
                let mut v: Vec<f64> = evs.iter().filter(|e| e.class_id == c).map(|e| e.onset).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            tp += greedy_onset_matches(&onsets(g), &onsets(p), cfg.tolerance);
        }
    }
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(OnsetScore { precision, recall, f1, tp, fp: n_pred - tp, fn_: n_gt - tp })
}

/// Number of matches between two sorted onset lists.
fn greedy_onset_matches(reference: &[f64], estimate: &[f64], tolerance: f64) -> usize {
    let mut used = vec![false; estimate.len()];
    // estimates before this index are too early for every remaining reference
    let mut first = 0;
    let mut matches = 0;
    for &r in reference {
        while first < estimate.len() && estimate[first] < r && (r - estimate[first]) > tolerance {
            first += 1;
        }
        for j in first..estimate.len() {
            if (estimate[j] - r).abs() <= tolerance {
                if !used[j] {
                    used[j] = true;
                    matches += 1;
                    break;
                }
            } else if estimate[j] > r {
                break;
            }
        }
    }
    matches
}

/// Settings of the Almost Stochastic Order test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsoConfig {
    pub alpha: f64,
    /// Bonferroni divisor applied to `alpha`.
    pub num_comparisons: usize,
    pub bootstrap_samples: usize,
    pub rng_seed: u64,
    /// `epsilon_min` below this counts as significant.
    pub threshold: f64,
}

impl Default for AsoConfig {
    fn default() -> Self {
        AsoConfig { alpha: 0.05, num_comparisons: 1, bootstrap_samples: 1000, rng_seed: 0, threshold: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsoResult {
    pub epsilon_min: f64,
    /// Point estimate of the violation ratio on the full samples.
    pub violation_ratio: f64,
    pub significant: bool,
}

/// Share of the squared quantile distance where `a` falls below `b`:
/// `∫ max(Q_b - Q_a, 0)² / ∫ (Q_a - Q_b)²` over `t ∈ (0, 1)`, integrated
/// exactly over the step quantile functions. Returns 0.5 when the quantile
/// functions coincide.
pub fn violation_ratio(a: &[f64], b: &[f64]) -> f64 {
    let mut qa = a.to_vec();
    let mut qb = b.to_vec();
    qa.sort_by(f64::total_cmp);
    qb.sort_by(f64::total_cmp);
    violation_ratio_sorted(&qa, &qb)
}

fn violation_ratio_sorted(qa: &[f64], qb: &[f64]) -> f64 {
    let (n, m) = (qa.len(), qb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0f64;
    let (mut violation, mut total) = (0.0, 0.0);
    while i < n && j < m {
        // next breakpoints (i+1)/n and (j+1)/m, compared exactly
        let lhs = (i + 1) * m;
        let rhs = (j + 1) * n;
        let next = if lhs <= rhs { (i + 1) as f64 / n as f64 } else { (j + 1) as f64 / m as f64 };
        let width = next - t;
        let diff = qa[i] - qb[j];
        total += diff * diff * width;
        if diff < 0.0 {
            violation += diff * diff * width;
        }
        t = next;
        if lhs <= rhs {
            i += 1;
        }
        if rhs <= lhs {
            j += 1;
        }
    }
    if total == 0.0 {
        0.5
    } else {
        violation / total
    }
}

/// ASO test of whether `scores_a` is stochastically larger than `scores_b`.
/// `epsilon_min` is the one-sided bootstrap upper confidence bound of the
/// violation ratio at level `1 - alpha / num_comparisons`, clamped to `[0, 1]`.
pub fn aso(scores_a: &[f64], scores_b: &[f64], cfg: &AsoConfig) -> Result<AsoResult> {
    if scores_a.len() < 2 || scores_b.len() < 2 {
        return Err(Error::Size("ASO needs at least two scores per sample".into()));
    }
    if scores_a.iter().chain(scores_b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("ASO scores must be finite".into()));
    }
    if cfg.num_comparisons == 0 {
        return Err(Error::Validation("num_comparisons must be at least 1".into()));
    }
    let level_alpha = cfg.alpha / cfg.num_comparisons as f64;
    if !(level_alpha > 0.0 && level_alpha < 1.0) {
        return Err(Error::Validation(format!("effective alpha {level_alpha} outside (0, 1)")));
    }
    if cfg.bootstrap_samples < 2 {
        return Err(Error::Validation("at least two bootstrap samples are required".into()));
    }
    let estimate = violation_ratio(scores_a, scores_b);
    let (n, m) = (scores_a.len(), scores_b.len());
    let replicates: Vec<f64> = (0..cfg.bootstrap_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(k as u64);
            let mut ra: Vec<f64> = (0..n).map(|_| scores_a[rng.random_range(0..n)]).collect();
            let mut rb: Vec<f64> = (0..m).map(|_| scores_b[rng.random_range(0..m)]).collect();
            ra.sort_by(f64::total_cmp);
            rb.sort_by(f64::total_cmp);
            violation_ratio_sorted(&ra, &rb)
        })
        .collect();
    let scale = ((n * m) as f64 / (n + m) as f64).sqrt();
    let centered: Vec<f64> = replicates.iter().map(|r| scale * (r - estimate)).collect();
    let mean = centered.iter().sum::<f64>() / centered.len() as f64;
    let sigma =
        (centered.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / centered.len() as f64).sqrt();
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - level_alpha);
    let epsilon_min = (estimate + sigma / scale * z).clamp(0.0, 1.0);
    Ok(AsoResult { epsilon_min, violation_ratio: estimate, significant: epsilon_min < cfg.threshold })
}
