//! Threshold-independent Polyphonic Sound Detection Score.
//!
//! For every class, detections are evaluated at each distinct score value
//! (the change points), so the per-class ROC is exact rather than sampled.
//! Matching uses the intersection criteria: a detection is valid when enough
//! of it lies on ground truth (DTC), and a ground truth counts as detected when
//! enough of it is covered by valid detections (GTC). False positives are
//! normalized per hour of audio (eFPR).
//!
//! Lowering the threshold only ever switches frames on, so the ROC is built by
//! sweeping scores downward and updating the affected detection in place
//! instead of re-decoding every clip at every threshold.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::median_filter;
use crate::interval::overlap;
use crate::timeline::{ClassVocabulary, Event, ScoreKind, ScoreMatrix};

/// Intersection ratios within this distance of the criterion count as meeting it.
pub const RATIO_TOLERANCE: f64 = 1e-9;

/// How classes without any ground truth in the evaluation set are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingClassPolicy {
    /// TPR is 1 at every operating point.
    #[default]
    PerfectTpr,
    /// Left out of the class average.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdsParams {
    pub rho_dtc: f64,
    pub rho_gtc: f64,
    /// Weight of the across-class TPR standard deviation.
    pub alpha_st: f64,
    /// Upper eFPR limit in false positives per hour.
    pub e_max: f64,
    pub missing_classes: MissingClassPolicy,
    /// Median filter applied to the scores before evaluation, in seconds.
    pub median_filter: Option<f64>,
}

impl Default for PsdsParams {
    fn default() -> Self {
        PsdsParams {
            rho_dtc: 0.7,
            rho_gtc: 0.7,
            alpha_st: 0.0,
            e_max: 100.0,
            missing_classes: MissingClassPolicy::PerfectTpr,
            median_filter: None,
        }
    }
}

impl PsdsParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.rho_dtc) || !in_unit(self.rho_gtc) {
            return Err(Error::Validation(format!(
                "intersection criteria must lie in (0, 1], got dtc={} gtc={}",
                self.rho_dtc, self.rho_gtc
            )));
        }
        if !(self.alpha_st >= 0.0 && self.alpha_st.is_finite()) {
            return Err(Error::Validation(format!("alpha_st must be >= 0, got {}", self.alpha_st)));
        }
        if !(self.e_max > 0.0) {
            return Err(Error::Validation(format!("e_max must be positive, got {}", self.e_max)));
        }
        if let Some(w) = self.median_filter {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("median filter window must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Scores and ground truth of one clip.
#[derive(Debug, Clone)]
pub struct EvalClip {
    pub clip_id: String,
    pub scores: ScoreMatrix,
    pub ground_truth: Vec<Event>,
}

/// Evaluation set sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    vocabulary: Arc<ClassVocabulary>,
    clips: Vec<EvalClip>,
}

impl EvalDataset {
    pub fn new(clips: Vec<EvalClip>) -> Result<Self> {
        let first = clips.first().ok_or_else(|| Error::Contract("evaluation dataset is empty".into()))?;
        let vocabulary = Arc::clone(first.scores.vocabulary());
        for clip in &clips {
            if clip.scores.kind() != ScoreKind::Probability {
                return Err(Error::Contract(format!(
                    "clip '{}' holds logits; evaluation needs probabilities",
                    clip.clip_id
                )));
            }
            if **clip.scores.vocabulary() != *vocabulary {
                return Err(Error::Contract(format!("clip '{}' uses a different vocabulary", clip.clip_id)));
            }
            if let Some(e) = clip.ground_truth.iter().find(|e| e.class_id >= vocabulary.len()) {
                return Err(Error::Vocabulary(format!(
                    "clip '{}': ground-truth class id {} outside the vocabulary",
                    clip.clip_id, e.class_id
                )));
            }
        }
        Ok(EvalDataset { vocabulary, clips })
    }

    pub fn vocabulary(&self) -> &Arc<ClassVocabulary> {
        &self.vocabulary
    }

    pub fn clips(&self) -> &[EvalClip] {
        &self.clips
    }

    /// Total audio duration in hours.
    pub fn duration_hours(&self) -> f64 {
        self.clips.iter().map(|c| c.scores.grid().span()).sum::<f64>() / 3600.0
    }

    /// Same dataset with every score matrix median filtered.
    pub fn median_filtered(&self, window_seconds: f64) -> Result<Self> {
        let clips = self
            .clips
            .par_iter()
            .map(|c| {
                Ok(EvalClip {
                    clip_id: c.clip_id.clone(),
                    scores: median_filter(&c.scores, window_seconds)?,
                    ground_truth: c.ground_truth.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalDataset { vocabulary: Arc::clone(&self.vocabulary), clips })
    }

    /// Applies `f` to every score. `f` must map into `[0, 1]`.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64 + Sync) -> Result<Self> {
        let clips = self
            .clips
            .iter()
            .map(|c| {
                Ok(EvalClip {
                    clip_id: c.clip_id.clone(),
                    scores: ScoreMatrix::new(
                        *c.scores.grid(),
                        Arc::clone(&self.vocabulary),
                        c.scores.scores().mapv(&f),
                        ScoreKind::Probability,
                    )?,
                    ground_truth: c.ground_truth.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalDataset { vocabulary: Arc::clone(&self.vocabulary), clips })
    }

    fn ground_truth_count(&self, class_id: usize) -> usize {
        self.clips.iter().map(|c| c.ground_truth.iter().filter(|e| e.class_id == class_id).count()).sum()
    }
}

/// Sorted distinct positive scores of one class across the dataset.
/// Thresholded detections only change at these values; decode thresholds lie
/// in `(0, 1]`, so zero-score frames are never detections.
pub fn change_point_thresholds(dataset: &EvalDataset, class_id: usize) -> Vec<f64> {
    let mut values: Vec<f64> =
        dataset.clips.iter().flat_map(|c| c.scores.scores().column(class_id).to_vec()).collect();
    values.retain(|&v| v > 0.0);
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Intersection-based counting for one class of one clip: returns
/// `(true positives, false positives)`. A detection is a false positive when
/// less than `rho_dtc` of it overlaps ground truth; a ground truth is a true
/// positive when DTC-valid detections cover at least `rho_gtc` of it.
pub fn intersection_match(
    detections: &[Event],
    ground_truths: &[Event],
    rho_dtc: f64,
    rho_gtc: f64,
) -> (usize, usize) {
    let mut valid = Vec::with_capacity(detections.len());
    let mut fp = 0;
    for d in detections {
        let hit: f64 = ground_truths.iter().map(|g| overlap(d.onset, d.offset, g.onset, g.offset)).sum();
        if hit / d.duration() >= rho_dtc - RATIO_TOLERANCE {
            valid.push(d);
        } else {
            fp += 1;
        }
    }
    let tp = ground_truths
        .iter()
        .filter(|g| {
            let covered: f64 = valid.iter().map(|d| overlap(g.onset, g.offset, d.onset, d.offset)).sum();
            covered / g.duration() >= rho_gtc - RATIO_TOLERANCE
        })
        .count();
    (tp, fp)
}

/// Counts at one decision threshold of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    /// Detections are frames with score `>= threshold`; `+inf` means no detections.
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tpr: f64,
    pub efpr: f64,
}

fn serialize_threshold<S: serde::Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.is_finite() {
        s.serialize_f64(*t)
    } else {
        s.serialize_none()
    }
}

/// Per-class ROC: every operating point plus its upper staircase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRoc {
    pub class_id: usize,
    pub class_name: String,
    pub num_ground_truth: usize,
    #[serde(skip)]
    pub points: Vec<OperatingPoint>,
    /// Non-dominated `(eFPR, TPR)` support points, eFPR strictly increasing and TPR strictly increasing.
    pub staircase: Vec<(f64, f64)>,
}

impl ClassRoc {
    /// Best TPR reachable at an eFPR of at most `efpr`.
    pub fn tpr_at(&self, efpr: f64) -> f64 {
        let idx = self.staircase.partition_point(|p| p.0 <= efpr);
        if idx == 0 {
            0.0
        } else {
            self.staircase[idx - 1].1
        }
    }
}

/// Upper staircase: for increasing eFPR, the points that raise the best TPR so far.
pub fn upper_staircase(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (e, t) in sorted {
        match out.last() {
            Some(&(_, best)) if t <= best => {}
            _ => out.push((e, t)),
        }
    }
    out
}

/// Which algorithm builds the per-class ROC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RocMethod {
    /// Single downward sweep with in-place detection updates.
    #[default]
    Incremental,
    /// Decode and match from scratch at every change point.
    Exhaustive,
}

/// Exact ROC of one class over all change-point thresholds.
pub fn per_class_roc(
    dataset: &EvalDataset,
    class_id: usize,
    params: &PsdsParams,
    method: RocMethod,
) -> Result<ClassRoc> {
    params.validate()?;
    if class_id >= dataset.vocabulary.len() {
        return Err(Error::Vocabulary(format!("class id {class_id} out of range")));
    }
    let hours = dataset.duration_hours();
    if !(hours > 0.0) {
        return Err(Error::Validation("dataset duration is zero".into()));
    }
    let counts = match method {
        RocMethod::Incremental => sweep_counts(dataset, class_id, params),
        RocMethod::Exhaustive => exhaustive_counts(dataset, class_id, params),
    };
    let n_gt = dataset.ground_truth_count(class_id);
    let points: Vec<OperatingPoint> = counts
        .into_iter()
        .map(|(threshold, tp, fp)| OperatingPoint {
            threshold,
            tp,
            fp,
            tpr: if n_gt == 0 { 1.0 } else { tp as f64 / n_gt as f64 },
            efpr: fp as f64 / hours,
        })
        .collect();
    let staircase = upper_staircase(&points.iter().map(|p| (p.efpr, p.tpr)).collect::<Vec<_>>());
    Ok(ClassRoc {
        class_id,
        class_name: dataset.vocabulary.name(class_id).unwrap_or_default().to_string(),
        num_ground_truth: n_gt,
        points,
        staircase,
    })
}

/// `(threshold, tp, fp)` for the no-detection point and every change point, from high to low threshold.
fn exhaustive_counts(
    dataset: &EvalDataset,
    class_id: usize,
    params: &PsdsParams,
) -> Vec<(f64, usize, usize)> {
    let gts: Vec<Vec<Event>> = dataset
        .clips
        .iter()
        .map(|c| c.ground_truth.iter().filter(|e| e.class_id == class_id).copied().collect())
        .collect();
    let mut out = vec![(f64::INFINITY, 0, 0)];
    for &threshold in change_point_thresholds(dataset, class_id).iter().rev() {
        let (mut tp, mut fp) = (0, 0);
        for (clip, gt) in dataset.clips.iter().zip(&gts) {
            let detections = decode_at(&clip.scores, class_id, threshold);
            let (t, f) = intersection_match(&detections, gt, params.rho_dtc, params.rho_gtc);
            tp += t;
            fp += f;
        }
        out.push((threshold, tp, fp));
    }
    out
}

fn decode_at(scores: &ScoreMatrix, class_id: usize, threshold: f64) -> Vec<Event> {
    let grid = scores.grid();
    crate::timeline::active_runs(scores.scores().column(class_id).iter().map(|&v| v >= threshold))
        .into_iter()
        .map(|(s, e)| Event { class_id, onset: grid.frame_start(s), offset: grid.frame_start(e) })
        .collect()
}

/// Detection and ground-truth bookkeeping of one clip during the sweep.
struct ClipSweep {
    resolution: f64,
    gts: Vec<(f64, f64)>,
    covered: Vec<f64>,
    gt_hit: Vec<bool>,
    active: Vec<bool>,
    /// For a run `[s, e)`: `run_end[s] = e` and `run_start[e - 1] = s`.
    run_end: Vec<usize>,
    run_start: Vec<usize>,
    run_valid: Vec<bool>,
}

impl ClipSweep {
    fn new(frames: usize, resolution: f64, gts: Vec<(f64, f64)>) -> Self {
        let n = gts.len();
        ClipSweep {
            resolution,
            gts,
            covered: vec![0.0; n],
            gt_hit: vec![false; n],
            active: vec![false; frames],
            run_end: vec![0; frames],
            run_start: vec![0; frames],
            run_valid: vec![false; frames],
        }
    }

    fn bounds(&self, s: usize, e: usize) -> (f64, f64) {
        (s as f64 * self.resolution, e as f64 * self.resolution)
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) a run's coverage; returns the FP delta.
    fn account(&mut self, s: usize, e: usize, valid: bool, sign: f64) -> isize {
        if !valid {
            return sign as isize;
        }
        let (a, b) = self.bounds(s, e);
        for (g, cov) in self.gts.iter().zip(self.covered.iter_mut()) {
            let o = overlap(a, b, g.0, g.1);
            if o > 0.0 {
                *cov += sign * o;
            }
        }
        0
    }

    fn is_valid(&self, s: usize, e: usize, rho_dtc: f64) -> bool {
        let (a, b) = self.bounds(s, e);
        let hit: f64 = self.gts.iter().map(|g| overlap(a, b, g.0, g.1)).sum();
        hit / (b - a) >= rho_dtc - RATIO_TOLERANCE
    }

    /// Switches frame `t` on; returns the change of (TP, FP).
    fn activate(&mut self, t: usize, rho_dtc: f64, rho_gtc: f64) -> (isize, isize) {
        if self.active[t] {
            return (0, 0);
        }
        self.active[t] = true;
        let frames = self.active.len();
        let mut fp = 0isize;
        let mut start = t;
        let mut end = t + 1;
        if t > 0 && self.active[t - 1] {
            let s = self.run_start[t - 1];
            fp += self.account(s, t, self.run_valid[s], -1.0);
            start = s;
        }
        if t + 1 < frames && self.active[t + 1] {
            let e = self.run_end[t + 1];
            fp += self.account(t + 1, e, self.run_valid[t + 1], -1.0);
            end = e;
        }
        let valid = self.is_valid(start, end, rho_dtc);
        fp += self.account(start, end, valid, 1.0);
        self.run_end[start] = end;
        self.run_start[end - 1] = start;
        self.run_valid[start] = valid;

        let (a, b) = self.bounds(start, end);
        let mut tp = 0isize;
        for (i, g) in self.gts.iter().enumerate() {
            // only ground truths touching the merged run can change status
            if g.1 < a || g.0 > b {
                continue;
            }
            let hit = self.covered[i] / (g.1 - g.0) >= rho_gtc - RATIO_TOLERANCE;
            if hit != self.gt_hit[i] {
                tp += if hit { 1 } else { -1 };
                self.gt_hit[i] = hit;
            }
        }
        (tp, fp)
    }
}

fn sweep_counts(dataset: &EvalDataset, class_id: usize, params: &PsdsParams) -> Vec<(f64, usize, usize)> {
    let mut clips: Vec<ClipSweep> = dataset
        .clips
        .iter()
        .map(|c| {
            let gts = c
                .ground_truth
                .iter()
                .filter(|e| e.class_id == class_id)
                .map(|e| (e.onset, e.offset))
                .collect();
            ClipSweep::new(c.scores.num_frames(), c.scores.grid().resolution(), gts)
        })
        .collect();
    let mut entries: Vec<(f64, u32, u32)> = Vec::new();
    for (k, clip) in dataset.clips.iter().enumerate() {
        for (t, &v) in clip.scores.scores().column(class_id).iter().enumerate() {
            entries.push((v, k as u32, t as u32));
        }
    }
    entries.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out = Vec::with_capacity(entries.len() + 1);
    out.push((f64::INFINITY, 0usize, 0usize));
    let (mut tp, mut fp) = (0isize, 0isize);
    let mut i = 0;
    while i < entries.len() {
        let value = entries[i].0;
        if value <= 0.0 {
            break;
        }
        while i < entries.len() && entries[i].0 == value {
            let (_, k, t) = entries[i];
            let (dtp, dfp) = clips[k as usize].activate(t as usize, params.rho_dtc, params.rho_gtc);
            tp += dtp;
            fp += dfp;
            i += 1;
        }
        out.push((value, tp as usize, fp as usize));
    }
    out
}

/// Outcome of a PSDS evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdsResult {
    pub psds: f64,
    pub params: PsdsParams,
    pub dataset_duration_hours: f64,
    /// Classes entering the average, in vocabulary order.
    pub classes: Vec<ClassRoc>,
    /// `(eFPR, eTPR)` support points of the effective curve up to `e_max`.
    pub effective_curve: Vec<(f64, f64)>,
}

/// Normalized area under the effective TPR-vs-eFPR curve up to `e_max`.
pub fn psds(dataset: &EvalDataset, params: &PsdsParams) -> Result<PsdsResult> {
    psds_with(dataset, params, RocMethod::Incremental)
}

pub fn psds_with(dataset: &EvalDataset, params: &PsdsParams, method: RocMethod) -> Result<PsdsResult> {
    params.validate()?;
    let filtered;
    let dataset = match params.median_filter {
        Some(w) => {
            filtered = dataset.median_filtered(w)?;
            &filtered
        }
        None => dataset,
    };
    let hours = dataset.duration_hours();
    if !(hours > 0.0) {
        return Err(Error::Validation("dataset duration is zero".into()));
    }
    let mut rocs = (0..dataset.vocabulary.len())
        .into_par_iter()
        .map(|c| per_class_roc(dataset, c, params, method))
        .collect::<Result<Vec<_>>>()?;
    if rocs.iter().all(|r| r.num_ground_truth == 0) {
        return Err(Error::Validation("no class has ground truth events".into()));
    }
    if params.missing_classes == MissingClassPolicy::Exclude {
        rocs.retain(|r| r.num_ground_truth > 0);
    }
    let (area, effective_curve) = integrate(&rocs, params);
    Ok(PsdsResult {
        psds: (area / params.e_max).clamp(0.0, 1.0),
        params: *params,
        dataset_duration_hours: hours,
        classes: rocs,
        effective_curve,
    })
}

/// Exact integral of the piecewise-constant effective TPR over `[0, e_max]`.
fn integrate(rocs: &[ClassRoc], params: &PsdsParams) -> (f64, Vec<(f64, f64)>) {
    let mut breaks: Vec<f64> = rocs
        .iter()
        .flat_map(|r| r.staircase.iter().map(|p| p.0))
        .filter(|&e| e < params.e_max)
        .chain(std::iter::once(0.0))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut cursor = vec![0usize; rocs.len()];
    let mut tprs = vec![0.0; rocs.len()];
    let mut curve = Vec::with_capacity(breaks.len());
    let mut area = 0.0;
    for (k, &e) in breaks.iter().enumerate() {
        for (i, roc) in rocs.iter().enumerate() {
            while cursor[i] < roc.staircase.len() && roc.staircase[cursor[i]].0 <= e {
                tprs[i] = roc.staircase[cursor[i]].1;
                cursor[i] += 1;
            }
        }
        let etpr = effective_tpr(&tprs, params.alpha_st);
        let next = breaks.get(k + 1).copied().unwrap_or(params.e_max);
        area += etpr * (next - e);
        curve.push((e, etpr));
    }
    (area, curve)
}

/// `max(0, mean - alpha·std)` with the population standard deviation.
pub fn effective_tpr(tprs: &[f64], alpha_st: f64) -> f64 {
    if tprs.is_empty() {
        return 0.0;
    }
    let n = tprs.len() as f64;
    let mean = tprs.iter().sum::<f64>() / n;
    if alpha_st == 0.0 {
        return mean.max(0.0);
    }
    let var = tprs.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mean - alpha_st * var.sqrt()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::FrameGrid;
    use ndarray::Array2;

    fn ev(c: usize, a: f64, b: f64) -> Event {
        Event::new(c, a, b).unwrap()
    }

    fn dataset(columns: Vec<Vec<Vec<f64>>>, gts: Vec<Vec<Event>>, resolution: f64) -> EvalDataset {
        let classes = columns[0].len();
        let vocab = Arc::new(ClassVocabulary::new((0..classes).map(|c| format!("c{c}"))).unwrap());
        let clips = columns
            .into_iter()
            .zip(gts)
            .enumerate()
            .map(|(k, (cols, gt))| {
                let frames = cols[0].len();
                let m = Array2::from_shape_fn((frames, classes), |(t, c)| cols[c][t]);
                EvalClip {
                    clip_id: format!("clip{k}"),
                    scores: ScoreMatrix::new(
                        FrameGrid::new(resolution, frames).unwrap(),
                        Arc::clone(&vocab),
                        m,
                        ScoreKind::Probability,
                    )
                    .unwrap(),
                    ground_truth: gt,
                }
            })
            .collect();
        EvalDataset::new(clips).unwrap()
    }

    #[test]
    fn change_points() {
        let d = dataset(vec![vec![vec![0.5; 4]]], vec![vec![]], 1.0);
        assert_eq!(change_point_thresholds(&d, 0), vec![0.5]);
        let d = dataset(vec![vec![vec![0.2, 0.8, 0.2]]], vec![vec![]], 1.0);
        assert_eq!(change_point_thresholds(&d, 0), vec![0.2, 0.8]);
    }

    #[test]
    fn matching_examples() {
        let g = [ev(0, 1.0, 3.0)];
        assert_eq!(intersection_match(&[ev(0, 1.0, 3.0)], &g, 1.0, 1.0), (1, 0));
        assert_eq!(intersection_match(&[ev(0, 5.0, 6.0)], &g, 0.7, 0.7), (0, 1));
        let g = [ev(0, 0.0, 10.0)];
        assert_eq!(intersection_match(&[ev(0, 0.0, 6.0)], &g, 0.7, 0.7), (0, 0));
    }

    #[test]
    fn matching_sums_over_detections() {
        // two valid halves jointly cover the ground truth
        let g = [ev(0, 0.0, 10.0)];
        let d = [ev(0, 0.0, 4.0), ev(0, 5.0, 9.0)];
        assert_eq!(intersection_match(&d, &g, 0.7, 0.7), (1, 0));
    }

    #[test]
    fn perfect_and_empty() {
        let gt = vec![vec![ev(0, 1.0, 3.0)], vec![ev(0, 0.0, 2.0)]];
        let perfect = dataset(
            vec![vec![vec![0.0, 1.0, 1.0, 0.0, 0.0]], vec![vec![1.0, 1.0, 0.0, 0.0, 0.0]]],
            gt.clone(),
            1.0,
        );
        let r = psds(&perfect, &PsdsParams::default()).unwrap();
        assert_eq!(r.psds, 1.0);
        let empty = dataset(vec![vec![vec![0.0; 5]], vec![vec![0.0; 5]]], gt, 1.0);
        assert_eq!(psds(&empty, &PsdsParams::default()).unwrap().psds, 0.0);
    }

    #[test]
    fn incremental_matches_exhaustive() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 1000) as f64 / 1000.0
        };
        for _ in 0..30 {
            let clips = 4;
            let columns: Vec<Vec<Vec<f64>>> = (0..clips)
                .map(|_| (0..2).map(|_| (0..12).map(|_| (next() * 10.0).floor() / 10.0).collect()).collect())
                .collect();
            let gts: Vec<Vec<Event>> = (0..clips)
                .map(|_| {
                    (0..2)
                        .map(|c| {
                            let a = next() * 0.3;
                            ev(c, a, a + 0.05 + next() * 0.15)
                        })
                        .collect()
                })
                .collect();
            let d = dataset(columns, gts, 0.04);
            for c in 0..2 {
                let p = PsdsParams::default();
                let a = per_class_roc(&d, c, &p, RocMethod::Incremental).unwrap();
                let b = per_class_roc(&d, c, &p, RocMethod::Exhaustive).unwrap();
                assert_eq!(a.points, b.points);
            }
        }
    }

    #[test]
    fn variance_penalty_lowers_score() {
        // class 0 perfect, class 1 missed entirely
        let d = dataset(
            vec![vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]],
            vec![vec![ev(0, 1.0, 2.0), ev(1, 0.0, 1.0)]],
            1.0,
        );
        let base = psds(&d, &PsdsParams::default()).unwrap().psds;
        let penalized = psds(&d, &PsdsParams { alpha_st: 1.0, ..Default::default() }).unwrap().psds;
        assert!(penalized < base);
    }

    #[test]
    fn missing_class_policies() {
        let d =
            dataset(vec![vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]], vec![vec![ev(0, 1.0, 2.0)]], 1.0);
        let perfect = psds(&d, &PsdsParams::default()).unwrap();
        assert!((perfect.psds - 0.5).abs() < 1e-12);
        let excluded =
            psds(&d, &PsdsParams { missing_classes: MissingClassPolicy::Exclude, ..Default::default() })
                .unwrap();
        assert_eq!(excluded.psds, 0.0);
        assert_eq!(excluded.classes.len(), 1);
    }

    #[test]
    fn no_ground_truth_anywhere_is_an_error() {
        let d = dataset(vec![vec![vec![0.1, 0.2]]], vec![vec![]], 1.0);
        assert!(psds(&d, &PsdsParams::default()).is_err());
    }

    #[test]
    fn staircase_is_strictly_increasing() {
        let s = upper_staircase(&[(0.0, 0.0), (1.0, 0.5), (0.5, 0.5), (2.0, 0.4), (3.0, 1.0)]);
        assert_eq!(s, vec![(0.0, 0.0), (0.5, 0.5), (3.0, 1.0)]);
    }
}
