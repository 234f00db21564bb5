//! Clips, class vocabularies, strong-label events, frame grids and the
//! conversions between event lists and frame matrices.
//!
//! Frame `t` of a grid with resolution `r` covers the half-open interval
//! `[t·r, (t+1)·r)`, so adjacent frames partition time.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::interval;

/// Frame length in seconds of the canonical grid.
pub const DEFAULT_RESOLUTION: f64 = 0.04;

/// Number of frames of a 10 s clip on the canonical grid.
pub const CANONICAL_FRAMES: usize = 250;

/// Overlaps (in seconds) at or below this are treated as float noise.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Ordered list of unique class names. Position in the list is the class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Vocabulary(format!("empty class name at position {i}")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate class name '{name}'")));
            }
        }
        Ok(ClassVocabulary { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.names.get(class_id).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Like [`index_of`](Self::index_of) but reports unknown names as a vocabulary error.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::Vocabulary(format!("unknown class '{name}'")))
    }

    /// For every class of `to`, the column index it occupies in `self`.
    pub fn column_map(&self, to: &ClassVocabulary) -> Result<Vec<usize>> {
        to.names
            .iter()
            .map(|name| {
                self.index_of(name).ok_or_else(|| {
                    Error::Vocabulary(format!("class '{name}' missing from source vocabulary"))
                })
            })
            .collect()
    }

    /// Classes present in both vocabularies, in the order of `self`.
    pub fn intersection(&self, other: &ClassVocabulary) -> ClassVocabulary {
        let names: Vec<String> =
            self.names.iter().filter(|n| other.index.contains_key(*n)).cloned().collect();
        ClassVocabulary::new(names).expect("subset of a valid vocabulary is valid")
    }
}

/// One labeled interval `[onset, offset)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub class_id: usize,
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn new(class_id: usize, onset: f64, offset: f64) -> Result<Self> {
        if !onset.is_finite() || !offset.is_finite() {
            return Err(Error::Validation(format!("non-finite event boundary ({onset}, {offset})")));
        }
        if onset < 0.0 {
            return Err(Error::Validation(format!("negative onset {onset}")));
        }
        if offset <= onset {
            return Err(Error::Validation(format!(
                "event offset {offset} must be greater than onset {onset}"
            )));
        }
        Ok(Event { class_id, onset, offset })
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Strong labels of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipAnnotations {
    pub clip_id: String,
    pub duration: f64,
    pub events: Vec<Event>,
}

impl ClipAnnotations {
    /// Validates events against the clip duration. With `clamp`, offsets past
    /// the end are cut to `duration` and events starting at or after the end are
    /// dropped; without it such events are rejected.
    pub fn new(clip_id: impl Into<String>, duration: f64, events: Vec<Event>, clamp: bool) -> Result<Self> {
        let clip_id = clip_id.into();
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Validation(format!(
                "clip '{clip_id}': duration must be positive, got {duration}"
            )));
        }
        let mut kept = Vec::with_capacity(events.len());
        for ev in events {
            if ev.offset <= duration + TIME_EPS {
                kept.push(Event { offset: ev.offset.min(duration), ..ev });
            } else if clamp {
                if ev.onset < duration {
                    kept.push(Event { offset: duration, ..ev });
                }
            } else {
                return Err(Error::Validation(format!(
                    "clip '{clip_id}': event ({}, {}) ends after clip duration {duration}",
                    ev.onset, ev.offset
                )));
            }
        }
        Ok(ClipAnnotations { clip_id, duration, events: kept })
    }

    /// Events of one class as `(onset, offset)` pairs, in stored order.
    pub fn intervals_of(&self, class_id: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.events.iter().filter(move |e| e.class_id == class_id).map(|e| (e.onset, e.offset))
    }
}

/// Regular frame raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    resolution: f64,
    num_frames: usize,
}

impl FrameGrid {
    pub fn new(resolution: f64, num_frames: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Validation(format!("frame resolution must be positive, got {resolution}")));
        }
        if num_frames == 0 {
            return Err(Error::Validation("frame grid needs at least one frame".into()));
        }
        Ok(FrameGrid { resolution, num_frames })
    }

    /// Smallest grid at `resolution` whose span covers `duration`.
    pub fn covering(duration: f64, resolution: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Validation(format!("duration must be positive, got {duration}")));
        }
        let frames = (duration / resolution - 1e-9).ceil().max(1.0) as usize;
        FrameGrid::new(resolution, frames)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_start(&self, t: usize) -> f64 {
        t as f64 * self.resolution
    }

    pub fn frame_end(&self, t: usize) -> f64 {
        (t + 1) as f64 * self.resolution
    }

    /// Total covered time in seconds.
    pub fn span(&self) -> f64 {
        self.num_frames as f64 * self.resolution
    }

    fn with_frames(&self, num_frames: usize) -> Self {
        FrameGrid { resolution: self.resolution, num_frames }
    }

    fn same_resolution(&self, other: &FrameGrid) -> bool {
        (self.resolution - other.resolution).abs() <= 1e-12 * self.resolution.max(1.0)
    }
}

/// Per-frame, per-class activity in `[0, 1]` (`num_frames × C`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    grid: FrameGrid,
    values: Array2<f64>,
}

impl TargetMatrix {
    pub fn new(grid: FrameGrid, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != grid.num_frames() {
            return Err(Error::Contract(format!(
                "target matrix has {} rows but the grid has {} frames",
                values.nrows(),
                grid.num_frames()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("target value {v} outside [0, 1]")));
        }
        Ok(TargetMatrix { grid, values })
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    /// Reorders/filters columns from vocabulary `from` to vocabulary `to`.
    pub fn project(&self, from: &ClassVocabulary, to: &ClassVocabulary) -> Result<Self> {
        if from.len() != self.num_classes() {
            return Err(Error::Contract(format!(
                "matrix has {} classes but source vocabulary has {}",
                self.num_classes(),
                from.len()
            )));
        }
        let columns = from.column_map(to)?;
        Ok(TargetMatrix { grid: self.grid, values: self.values.select(Axis(1), &columns) })
    }
}

/// Whether a score matrix holds probabilities or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Probability,
    Logit,
}

/// Frame-level scores of one clip (`num_frames × C`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    grid: FrameGrid,
    vocabulary: Arc<ClassVocabulary>,
    scores: Array2<f64>,
    kind: ScoreKind,
}

impl ScoreMatrix {
    pub fn new(
        grid: FrameGrid,
        vocabulary: Arc<ClassVocabulary>,
        scores: Array2<f64>,
        kind: ScoreKind,
    ) -> Result<Self> {
        if scores.nrows() != grid.num_frames() || scores.ncols() != vocabulary.len() {
            return Err(Error::Contract(format!(
                "score matrix is {}x{} but grid/vocabulary expect {}x{}",
                scores.nrows(),
                scores.ncols(),
                grid.num_frames(),
                vocabulary.len()
            )));
        }
        if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite score {v}")));
        }
        if kind == ScoreKind::Probability {
            if let Some(v) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!("probability score {v} outside [0, 1]")));
            }
        }
        Ok(ScoreMatrix { grid, vocabulary, scores, kind })
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn vocabulary(&self) -> &Arc<ClassVocabulary> {
        &self.vocabulary
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn into_scores(self) -> Array2<f64> {
        self.scores
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn num_frames(&self) -> usize {
        self.grid.num_frames()
    }

    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Applies the logistic function to logit scores; probabilities pass through.
    pub fn to_probabilities(&self) -> ScoreMatrix {
        match self.kind {
            ScoreKind::Probability => self.clone(),
            ScoreKind::Logit => ScoreMatrix {
                grid: self.grid,
                vocabulary: Arc::clone(&self.vocabulary),
                scores: self.scores.mapv(sigmoid),
                kind: ScoreKind::Probability,
            },
        }
    }

    /// Same grid and vocabulary with new values of the same kind. Values are not re-validated.
    pub(crate) fn with_scores(&self, scores: Array2<f64>) -> ScoreMatrix {
        debug_assert_eq!(scores.dim(), self.scores.dim());
        ScoreMatrix { grid: self.grid, vocabulary: Arc::clone(&self.vocabulary), scores, kind: self.kind }
    }

    /// Columns reordered/filtered to `to`, which must be a subset of this matrix's vocabulary.
    pub fn project(&self, to: Arc<ClassVocabulary>) -> Result<Self> {
        let columns = self.vocabulary.column_map(&to)?;
        Ok(ScoreMatrix {
            grid: self.grid,
            scores: self.scores.select(Axis(1), &columns),
            vocabulary: to,
            kind: self.kind,
        })
    }

    /// Thresholds probability scores into events: each maximal run of frames
    /// with score `>= threshold` becomes one event. Output is sorted by class,
    /// then onset.
    pub fn decode_events(&self, threshold: f64, classes: Option<&[usize]>) -> Result<Vec<Event>> {
        if self.kind == ScoreKind::Logit {
            return Err(Error::Contract("cannot decode events from logits; apply the sigmoid first".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Contract(format!("decode threshold must lie in (0, 1], got {threshold}")));
        }
        let all: Vec<usize>;
        let classes = match classes {
            Some(c) => c,
            None => {
                all = (0..self.num_classes()).collect();
                &all
            }
        };
        let mut events = Vec::new();
        for &c in classes {
            if c >= self.num_classes() {
                return Err(Error::Vocabulary(format!("class id {c} out of range")));
            }
            let column = self.scores.column(c);
            for (start, end) in active_runs(column.iter().map(|&v| v >= threshold)) {
                events.push(Event {
                    class_id: c,
                    onset: self.grid.frame_start(start),
                    offset: self.grid.frame_start(end),
                });
            }
        }
        Ok(events)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maximal runs of `true` as half-open frame ranges `[start, end)`.
pub fn active_runs(flags: impl IntoIterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (t, on) in flags.into_iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t));
                start = None;
            }
            _ => {}
        }
        n = t + 1;
    }
    if let Some(s) = start {
        runs.push((s, n));
    }
    runs
}

/// How much of a frame an event must cover to mark the frame active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameRule {
    /// Any strictly positive overlap.
    #[default]
    AnyOverlap,
    /// At least half of the frame is covered by the class's events.
    MajorityOverlap,
}

/// Rasterizes strong labels onto `grid`: entry `(t, c)` is 1 when events of
/// class `c` cover frame `t` according to `rule`, else 0.
pub fn rasterize_events(
    ann: &ClipAnnotations,
    vocab: &ClassVocabulary,
    grid: &FrameGrid,
    rule: FrameRule,
) -> Result<TargetMatrix> {
    if grid.span() + TIME_EPS < ann.duration {
        return Err(Error::Contract(format!(
            "grid spans {} s but clip '{}' lasts {} s",
            grid.span(),
            ann.clip_id,
            ann.duration
        )));
    }
    let mut values = Array2::<f64>::zeros((grid.num_frames(), vocab.len()));
    for ev in &ann.events {
        if ev.class_id >= vocab.len() {
            return Err(Error::Vocabulary(format!(
                "clip '{}': class id {} not in vocabulary of size {}",
                ann.clip_id,
                ev.class_id,
                vocab.len()
            )));
        }
        if ev.offset > ann.duration + TIME_EPS {
            return Err(Error::Validation(format!(
                "clip '{}': event ({}, {}) outside clip duration {}",
                ann.clip_id, ev.onset, ev.offset, ann.duration
            )));
        }
    }
    let r = grid.resolution();
    let needed = match rule {
        FrameRule::AnyOverlap => TIME_EPS,
        FrameRule::MajorityOverlap => 0.5 * r - TIME_EPS,
    };
    for c in 0..vocab.len() {
        let pieces = interval::union(ann.intervals_of(c));
        if pieces.is_empty() {
            continue;
        }
        let mut coverage = vec![0.0f64; grid.num_frames()];
        for &(on, off) in &pieces {
            let first = ((on / r).floor() as usize).saturating_sub(1);
            let last = ((off / r).ceil() as usize + 1).min(grid.num_frames());
            for (t, cov) in coverage.iter_mut().enumerate().take(last).skip(first) {
                *cov += interval::overlap(on, off, grid.frame_start(t), grid.frame_end(t));
            }
        }
        for (t, cov) in coverage.into_iter().enumerate() {
            let active = match rule {
                FrameRule::AnyOverlap => cov > needed,
                FrameRule::MajorityOverlap => cov >= needed,
            };
            if active {
                values[[t, c]] = 1.0;
            }
        }
    }
    TargetMatrix::new(*grid, values)
}

/// Anything laid out with frames along its first axis.
pub trait FrameAxis: Sized {
    fn frame_count(&self) -> usize;

    /// Contiguous frames `[start, start + len)`; callers guarantee the range is valid.
    fn slice_frames(&self, start: usize, len: usize) -> Self;
}

impl FrameAxis for ScoreMatrix {
    fn frame_count(&self) -> usize {
        self.num_frames()
    }

    fn slice_frames(&self, start: usize, len: usize) -> Self {
        ScoreMatrix {
            grid: self.grid.with_frames(len),
            vocabulary: Arc::clone(&self.vocabulary),
            scores: self.scores.slice(s![start..start + len, ..]).to_owned(),
            kind: self.kind,
        }
    }
}

impl FrameAxis for TargetMatrix {
    fn frame_count(&self) -> usize {
        self.grid.num_frames()
    }

    fn slice_frames(&self, start: usize, len: usize) -> Self {
        TargetMatrix {
            grid: self.grid.with_frames(len),
            values: self.values.slice(s![start..start + len, ..]).to_owned(),
        }
    }
}

/// Random contiguous crop of `length_frames`; the start is uniform over all valid positions.
pub fn crop_random<T: FrameAxis, R: Rng + ?Sized>(m: &T, length_frames: usize, rng: &mut R) -> Result<T> {
    let n = m.frame_count();
    if length_frames == 0 || length_frames > n {
        return Err(Error::Size(format!("cannot crop {length_frames} frames from {n}")));
    }
    let start = rng.random_range(0..=n - length_frames);
    Ok(m.slice_frames(start, length_frames))
}

/// Joins consecutive slices of one long clip along the frame axis.
pub fn concat_slices(slices: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = slices.first().ok_or_else(|| Error::Contract("no slices to concatenate".into()))?;
    for (i, m) in slices.iter().enumerate().skip(1) {
        if m.vocabulary != first.vocabulary && *m.vocabulary != *first.vocabulary {
            return Err(Error::Contract(format!("slice {i} has a different vocabulary")));
        }
        if !m.grid.same_resolution(&first.grid) {
            return Err(Error::Contract(format!("slice {i} has a different resolution")));
        }
        if m.kind != first.kind {
            return Err(Error::Contract(format!("slice {i} mixes logits and probabilities")));
        }
    }
    let views: Vec<_> = slices.iter().map(|m| m.scores.view()).collect();
    let scores = concatenate(Axis(0), &views).expect("column counts checked");
    let total = scores.nrows();
    Ok(ScoreMatrix {
        grid: first.grid.with_frames(total),
        vocabulary: Arc::clone(&first.vocabulary),
        scores,
        kind: first.kind,
    })
}
