//! Temporal resampling of embedding sequences onto the 250-frame grid, the
//! position-wise linear head, and the warmup + cosine learning-rate schedule.

use std::sync::Arc;

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::timeline::{
    ClassVocabulary, FrameAxis, FrameGrid, ScoreKind, ScoreMatrix, CANONICAL_FRAMES, DEFAULT_RESOLUTION,
};

/// `S × D` embedding sequence of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    clip_id: String,
    values: Array2<f64>,
}

impl EmbeddingSequence {
    pub fn new(clip_id: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        let clip_id = clip_id.into();
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Size(format!(
                "embedding '{clip_id}' must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("embedding '{clip_id}' has non-finite values")));
        }
        Ok(EmbeddingSequence { clip_id, values })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    fn with_values(&self, values: Array2<f64>) -> Self {
        EmbeddingSequence { clip_id: self.clip_id.clone(), values }
    }
}

impl FrameAxis for EmbeddingSequence {
    fn frame_count(&self) -> usize {
        self.frames()
    }

    fn slice_frames(&self, start: usize, len: usize) -> Self {
        self.with_values(self.values.slice(s![start..start + len, ..]).to_owned())
    }
}

/// Adaptive average pooling: output frame `i` is the mean of input frames
/// `[floor(i·S/out), ceil((i+1)·S/out))`. Buckets overlap when `out` does not divide `S`.
pub fn adaptive_avg_pool(e: &EmbeddingSequence, out_frames: usize) -> Result<EmbeddingSequence> {
    let s_in = e.frames();
    if out_frames == 0 || out_frames > s_in {
        return Err(Error::Contract(format!(
            "adaptive pooling needs 0 < out <= S, got out={out_frames}, S={s_in}; use interpolation"
        )));
    }
    let src = e.values();
    let mut out = Array2::<f64>::zeros((out_frames, e.dim()));
    for i in 0..out_frames {
        let start = i * s_in / out_frames;
        let end = ((i + 1) * s_in).div_ceil(out_frames);
        let count = (end - start) as f64;
        let bucket = src.slice(s![start..end, ..]);
        let first = src.row(start);
        // mean as first + mean(x - first): exact for constant buckets
        for d in 0..e.dim() {
            let base = first[d];
            let dev: f64 = bucket.column(d).iter().map(|&x| x - base).sum();
            out[[i, d]] = base + dev / count;
        }
    }
    Ok(e.with_values(out))
}

/// Endpoint-aligned linear interpolation: output frame `i` samples source
/// coordinate `i·(S−1)/(out−1)`. A single-frame input is broadcast.
pub fn linear_interp(e: &EmbeddingSequence, out_frames: usize) -> Result<EmbeddingSequence> {
    let s_in = e.frames();
    if out_frames == 0 {
        return Err(Error::Size("interpolation target must have at least one frame".into()));
    }
    let src = e.values();
    if s_in == 1 {
        let row = src.row(0);
        let out = Array2::from_shape_fn((out_frames, e.dim()), |(_, d)| row[d]);
        return Ok(e.with_values(out));
    }
    if out_frames == 1 {
        return Err(Error::Contract(
            "endpoint-aligned interpolation needs at least two output frames".into(),
        ));
    }
    let span = out_frames - 1;
    let mut out = Array2::<f64>::zeros((out_frames, e.dim()));
    for i in 0..out_frames {
        let num = i * (s_in - 1);
        let lo = num / span;
        let frac = (num % span) as f64 / span as f64;
        if frac == 0.0 {
            out.row_mut(i).assign(&src.row(lo));
            continue;
        }
        let hi = lo + 1;
        for d in 0..e.dim() {
            let (a, b) = (src[[lo, d]], src[[hi, d]]);
            let v = a + frac * (b - a);
            out[[i, d]] = v.clamp(a.min(b), a.max(b));
        }
    }
    Ok(e.with_values(out))
}

/// Brings a sequence to `out_frames`: pooling when longer, interpolation when
/// shorter, unchanged when equal.
pub fn resample(e: &EmbeddingSequence, out_frames: usize) -> Result<EmbeddingSequence> {
    use std::cmp::Ordering::*;
    match e.frames().cmp(&out_frames) {
        Greater => adaptive_avg_pool(e, out_frames),
        Less => linear_interp(e, out_frames),
        Equal => Ok(e.clone()),
    }
}

/// [`resample`] onto the canonical 250-frame grid.
pub fn resample_canonical(e: &EmbeddingSequence) -> Result<EmbeddingSequence> {
    resample(e, CANONICAL_FRAMES)
}

/// Position-wise linear layer: `C × D` weight and `C` bias.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearHead {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Contract(format!(
                "head weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("head parameters must be finite".into()));
        }
        Ok(LinearHead { weight, bias })
    }

    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearHead { weight: Array2::zeros((classes, dim)), bias: Array1::zeros(classes) }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }

    /// Raw `frames × C` logits `E·Wᵀ + b`.
    pub fn logits(&self, embeddings: &Array2<f64>) -> Result<Array2<f64>> {
        if embeddings.ncols() != self.dim() {
            return Err(Error::Contract(format!(
                "embedding dim {} does not match head dim {}",
                embeddings.ncols(),
                self.dim()
            )));
        }
        Ok(embeddings.dot(&self.weight.t()) + &self.bias)
    }
}

/// Applies the head to every frame independently, producing a logit score matrix
/// on the 40 ms grid.
pub fn head_forward(
    e: &EmbeddingSequence,
    head: &LinearHead,
    vocabulary: Arc<ClassVocabulary>,
) -> Result<ScoreMatrix> {
    if vocabulary.len() != head.num_classes() {
        return Err(Error::Contract(format!(
            "head predicts {} classes but vocabulary has {}",
            head.num_classes(),
            vocabulary.len()
        )));
    }
    let logits = head.logits(e.values())?;
    let grid = FrameGrid::new(DEFAULT_RESOLUTION, e.frames())?;
    ScoreMatrix::new(grid, vocabulary, logits, ScoreKind::Logit)
}

/// Linear warmup followed by cosine decay.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub final_lr: f64,
}

impl ScheduleConfig {
    pub fn new(peak_lr: f64, warmup_steps: usize, total_steps: usize, final_lr: f64) -> Result<Self> {
        if !(peak_lr > 0.0 && peak_lr.is_finite()) {
            return Err(Error::Validation(format!("peak_lr must be positive, got {peak_lr}")));
        }
        if !(final_lr >= 0.0 && final_lr.is_finite()) {
            return Err(Error::Validation(format!("final_lr must be >= 0, got {final_lr}")));
        }
        if total_steps <= warmup_steps {
            return Err(Error::Validation(format!(
                "total_steps ({total_steps}) must exceed warmup_steps ({warmup_steps})"
            )));
        }
        Ok(ScheduleConfig { peak_lr, warmup_steps, total_steps, final_lr })
    }
}

/// Learning rate at `step`; steps past the end return `final_lr`.
pub fn lr_at(cfg: &ScheduleConfig, step: usize) -> f64 {
    if step >= cfg.total_steps {
        return cfg.final_lr;
    }
    if step < cfg.warmup_steps {
        return cfg.peak_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
