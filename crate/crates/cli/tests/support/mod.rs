//! Shared generators and brute-force oracles for the CLI test targets.
//! Oracles here deliberately avoid the library's sweep, staircase and
//! interval helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use framesed::psds::{EvalClip, EvalDataset, PsdsParams, RATIO_TOLERANCE};
use framesed::{ClassVocabulary, Event, FrameGrid, ScoreKind, ScoreMatrix};
use ndarray::Array2;
use rand::Rng;

pub fn framesed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framesed")).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on failure.
pub fn framesed_ok(args: &[&str]) -> Output {
    let out = framesed(args);
    assert!(out.status.success(), "framesed {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// A small evaluation set kept in plain arrays so oracles can work on it directly.
#[derive(Debug, Clone)]
pub struct Micro {
    pub resolution: f64,
    pub classes: usize,
    /// Per clip: `frames × classes` probabilities.
    pub scores: Vec<Array2<f64>>,
    /// Per clip: `(class, onset, offset)`, disjoint within a class.
    pub gt: Vec<Vec<(usize, f64, f64)>>,
}

impl Micro {
    pub fn random<R: Rng>(rng: &mut R, max_clips: usize, max_classes: usize, max_frames: usize) -> Self {
        let resolution = [0.04, 0.1, 0.5][rng.random_range(0..3)];
        let classes = rng.random_range(1..=max_classes);
        let clips = rng.random_range(1..=max_clips);
        let levels = rng.random_range(2..=9);
        let mut scores = Vec::new();
        let mut gt = Vec::new();
        for _ in 0..clips {
            let frames = rng.random_range(1..=max_frames);
            let duration = frames as f64 * resolution;
            let mut events = Vec::new();
            for c in 0..classes {
                // disjoint events from sorted cut points
                let k = rng.random_range(0..=3);
                let mut cuts: Vec<f64> = (0..2 * k)
                    .map(|_| {
                        if rng.random_bool(0.5) {
                            rng.random_range(0..=frames) as f64 * resolution
                        } else {
                            rng.random_range(0.0..duration)
                        }
                    })
                    .collect();
                cuts.sort_by(f64::total_cmp);
                for pair in cuts.chunks(2) {
                    if pair[1] - pair[0] > 1e-6 {
                        events.push((c, pair[0], pair[1]));
                    }
                }
            }
            // scores biased towards ground truth, with ties from a coarse level set
            let s = Array2::from_shape_fn((frames, classes), |(t, c)| {
                let mid = (t as f64 + 0.5) * resolution;
                let inside = events.iter().any(|&(ec, on, off)| ec == c && on <= mid && mid < off);
                let raw: f64 = if rng.random_bool(0.3) {
                    rng.random_range(0.0..1.0)
                } else if inside {
                    rng.random_range(0.4..1.0)
                } else {
                    rng.random_range(0.0..0.6)
                };
                if rng.random_bool(0.5) {
                    (raw * levels as f64).ceil() / levels as f64
                } else {
                    raw
                }
            });
            scores.push(s.mapv(|v: f64| v.clamp(0.0, 1.0)));
            gt.push(events);
        }
        Micro { resolution, classes, scores, gt }
    }

    pub fn num_gt(&self, class: usize) -> usize {
        self.gt.iter().flatten().filter(|e| e.0 == class).count()
    }

    pub fn dataset(&self) -> EvalDataset {
        let vocab = Arc::new(ClassVocabulary::new((0..self.classes).map(|c| format!("class{c}"))).unwrap());
        let clips = self
            .scores
            .iter()
            .zip(&self.gt)
            .enumerate()
            .map(|(k, (s, g))| EvalClip {
                clip_id: format!("clip{k:03}"),
                scores: ScoreMatrix::new(
                    FrameGrid::new(self.resolution, s.nrows()).unwrap(),
                    Arc::clone(&vocab),
                    s.clone(),
                    ScoreKind::Probability,
                )
                .unwrap(),
                ground_truth: g.iter().map(|&(c, a, b)| Event::new(c, a, b).unwrap()).collect(),
            })
            .collect();
        EvalDataset::new(clips).unwrap()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Micro {
        Micro { scores: self.scores.iter().map(|s| s.mapv(&f)).collect(), ..self.clone() }
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// `(tp, fp)` of one class over all clips when frames with score `>= thr` are detections.
fn counts_at(m: &Micro, class: usize, thr: f64, params: &PsdsParams) -> (usize, usize) {
    let (mut tp, mut fp) = (0, 0);
    for (s, gt) in m.scores.iter().zip(&m.gt) {
        let mut dets = Vec::new();
        let mut start: Option<usize> = None;
        for t in 0..=s.nrows() {
            let on = t < s.nrows() && s[[t, class]] >= thr;
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(a)) => {
                    dets.push((a as f64 * m.resolution, t as f64 * m.resolution));
                    start = None;
                }
                _ => {}
            }
        }
        let gts: Vec<(f64, f64)> = gt.iter().filter(|e| e.0 == class).map(|e| (e.1, e.2)).collect();
        let mut valid = Vec::new();
        for d in &dets {
            let hit: f64 = gts.iter().map(|g| overlap(*d, *g)).sum();
            if hit / (d.1 - d.0) >= params.rho_dtc - RATIO_TOLERANCE {
                valid.push(*d);
            } else {
                fp += 1;
            }
        }
        for g in &gts {
            let cov: f64 = valid.iter().map(|d| overlap(*d, *g)).sum();
            if cov / (g.1 - g.0) >= params.rho_gtc - RATIO_TOLERANCE {
                tp += 1;
            }
        }
    }
    (tp, fp)
}

/// Dense-sweep PSDS: every distinct score, every midpoint between neighbours
/// and a threshold above all scores; TPR at eFPR `e` is the best TPR among
/// sweep points with eFPR `<= e`.
pub fn dense_psds(m: &Micro, params: &PsdsParams) -> f64 {
    let hours: f64 = m.scores.iter().map(|s| s.nrows() as f64 * m.resolution).sum::<f64>() / 3600.0;
    let mut curves: Vec<Vec<(f64, f64)>> = Vec::new();
    for c in 0..m.classes {
        let n_gt = m.num_gt(c);
        if n_gt == 0 {
            match params.missing_classes {
                framesed::psds::MissingClassPolicy::PerfectTpr => curves.push(vec![(0.0, 1.0)]),
                framesed::psds::MissingClassPolicy::Exclude => {}
            }
            continue;
        }
        let mut values: Vec<f64> = m.scores.iter().flat_map(|s| s.column(c).to_vec()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds = values.clone();
        thresholds.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        thresholds.push(f64::INFINITY);
        let points = thresholds
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| {
                let (tp, fp) = counts_at(m, c, t, params);
                (fp as f64 / hours, tp as f64 / n_gt as f64)
            })
            .collect();
        curves.push(points);
    }
    let tpr_at =
        |curve: &[(f64, f64)], e: f64| curve.iter().filter(|p| p.0 <= e).map(|p| p.1).fold(0.0, f64::max);
    let mut breaks: Vec<f64> = curves.iter().flatten().map(|p| p.0).filter(|&e| e < params.e_max).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut area = 0.0;
    for (k, &e) in breaks.iter().enumerate() {
        let next = breaks.get(k + 1).copied().unwrap_or(params.e_max);
        let tprs: Vec<f64> = curves.iter().map(|c| tpr_at(c, e)).collect();
        let n = tprs.len() as f64;
        let mean = tprs.iter().sum::<f64>() / n;
        let sd = (tprs.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
        area += (mean - params.alpha_st * sd).max(0.0) * (next - e);
    }
    area / params.e_max
}

/// Frames touched by an event, by explicit per-frame overlap tests, merged into runs.
pub fn snapped_union(events: &[(f64, f64)], resolution: f64, frames: usize) -> Vec<(f64, f64)> {
    let active: Vec<bool> = (0..frames)
        .map(|t| {
            let frame = (t as f64 * resolution, (t + 1) as f64 * resolution);
            events.iter().any(|&e| overlap(frame, e) > 1e-9)
        })
        .collect();
    let mut runs = Vec::new();
    let mut t = 0;
    while t < frames {
        if active[t] {
            let start = t;
            while t < frames && active[t] {
                t += 1;
            }
            runs.push((start as f64 * resolution, t as f64 * resolution));
        } else {
            t += 1;
        }
    }
    runs
}

/// Violation ratio by midpoint quadrature on a `dt` grid of the empirical quantile functions.
pub fn violation_ratio_grid(a: &[f64], b: &[f64], dt: f64) -> f64 {
    let mut qa = a.to_vec();
    let mut qb = b.to_vec();
    qa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    qb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let q = |s: &[f64], t: f64| s[((t * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
    let steps = (1.0 / dt).round() as usize;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let d = q(&qa, t) - q(&qb, t);
        den += d * d;
        if d < 0.0 {
            num += d * d;
        }
    }
    if den == 0.0 {
        0.5
    } else {
        num / den
    }
}

/// Bootstrap ASO upper bound at one-sided level 0.05 using the grid violation ratio.
pub fn aso_oracle<R: Rng>(a: &[f64], b: &[f64], replicates: usize, rng: &mut R) -> f64 {
    const Z95: f64 = 1.6448536269514722;
    let (n, m) = (a.len(), b.len());
    let est = violation_ratio_grid(a, b, 1e-3);
    let scale = ((n * m) as f64 / (n + m) as f64).sqrt();
    let reps: Vec<f64> = (0..replicates)
        .map(|_| {
            let ra: Vec<f64> = (0..n).map(|_| a[rng.random_range(0..n)]).collect();
            let rb: Vec<f64> = (0..m).map(|_| b[rng.random_range(0..m)]).collect();
            scale * (violation_ratio_grid(&ra, &rb, 1e-3) - est)
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / replicates as f64;
    let sd = (reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / replicates as f64).sqrt();
    (est + sd / scale * Z95).clamp(0.0, 1.0)
}

/// All regular files under `dir` (recursively) with their bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).unwrap();
                out.insert(path, strip_wall_time(bytes));
            }
        }
    }
    out
}

/// Run manifests record elapsed time; that one field is excluded from byte comparisons.
fn strip_wall_time(bytes: Vec<u8>) -> Vec<u8> {
    let text = match String::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => return e.into_bytes(),
    };
    if !text.contains("\"wall_time_ms\"") {
        return text.into_bytes();
    }
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_ms\""))
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

pub fn write_tsv_events(path: &Path, rows: &[(String, f64, f64, String)]) {
    let mut s = String::from("filename\tonset\toffset\tevent_label\n");
    for (clip, on, off, label) in rows {
        s.push_str(&format!("{clip}.wav\t{on}\t{off}\t{label}\n"));
    }
    fs::write(path, s).unwrap();
}
