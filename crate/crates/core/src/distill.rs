//! Ensemble distillation targets, the frame-level distillation loss and its
//! gradient, mixup over (input, hard, soft) triples, class-balanced clip
//! sampling, and a small linear-probe trainer tying them together.

use std::collections::BTreeSet;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::interval;
use crate::resample::{lr_at, LinearHead, ScheduleConfig};
use crate::timeline::{sigmoid, ClassVocabulary, ClipAnnotations, ScoreKind, ScoreMatrix, TargetMatrix};

/// Element-wise mean of member logits for one clip.
pub fn ensemble_average(logit_sets: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first =
        logit_sets.first().ok_or_else(|| Error::Contract("ensemble needs at least one member".into()))?;
    let mut sum = first.scores().clone();
    for (i, m) in logit_sets.iter().enumerate().skip(1) {
        if m.scores().dim() != first.scores().dim() {
            return Err(Error::Contract(format!(
                "member {i} has shape {:?}, expected {:?}",
                m.scores().dim(),
                first.scores().dim()
            )));
        }
        if !Arc::ptr_eq(m.vocabulary(), first.vocabulary()) && m.vocabulary() != first.vocabulary() {
            return Err(Error::Contract(format!("member {i} has a different vocabulary")));
        }
        if m.grid() != first.grid() {
            return Err(Error::Contract(format!("member {i} has a different frame grid")));
        }
        sum += m.scores();
    }
    for (i, m) in logit_sets.iter().enumerate() {
        if m.kind() != ScoreKind::Logit {
            return Err(Error::Contract(format!("member {i} holds probabilities, not logits")));
        }
    }
    sum /= logit_sets.len() as f64;
    ScoreMatrix::new(*first.grid(), Arc::clone(first.vocabulary()), sum, ScoreKind::Logit)
}

/// Soft targets: sigmoid of the averaged member logits.
pub fn ensemble_targets(logit_sets: &[ScoreMatrix]) -> Result<TargetMatrix> {
    let avg = ensemble_average(logit_sets)?;
    TargetMatrix::new(*avg.grid(), avg.scores().mapv(sigmoid))
}

/// Weighting of the supervised and distillation terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KdConfig {
    /// Weight of the distillation term; the supervised term gets `1 - lambda_kd`.
    pub lambda_kd: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig { lambda_kd: 0.5 }
    }
}

impl KdConfig {
    pub fn new(lambda_kd: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_kd) {
            return Err(Error::Validation(format!("lambda_kd must lie in [0, 1], got {lambda_kd}")));
        }
        Ok(KdConfig { lambda_kd })
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` in a form that does not overflow.
#[inline]
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn check_triplet(student: &Array2<f64>, hard: &Array2<f64>, soft: &Array2<f64>) -> Result<()> {
    if student.dim() != hard.dim() || student.dim() != soft.dim() {
        return Err(Error::Contract(format!(
            "shape mismatch: student {:?}, hard {:?}, soft {:?}",
            student.dim(),
            hard.dim(),
            soft.dim()
        )));
    }
    if student.is_empty() {
        return Err(Error::Contract("empty loss input".into()));
    }
    if student.iter().chain(hard).chain(soft).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in loss input".into()));
    }
    Ok(())
}

/// Frame-level distillation loss on raw arrays, averaged over frames × classes.
pub fn kd_loss_raw(
    student_logits: &Array2<f64>,
    hard: &Array2<f64>,
    soft: &Array2<f64>,
    cfg: &KdConfig,
) -> Result<f64> {
    check_triplet(student_logits, hard, soft)?;
    let lam = cfg.lambda_kd;
    let mut total = 0.0;
    for ((&z, &h), &s) in student_logits.iter().zip(hard).zip(soft) {
        total += (1.0 - lam) * bce_with_logit(z, h) + lam * bce_with_logit(z, s);
    }
    Ok(total / student_logits.len() as f64)
}

/// Gradient of [`kd_loss_raw`] with respect to the student logits.
pub fn kd_loss_grad_raw(
    student_logits: &Array2<f64>,
    hard: &Array2<f64>,
    soft: &Array2<f64>,
    cfg: &KdConfig,
) -> Result<Array2<f64>> {
    check_triplet(student_logits, hard, soft)?;
    let lam = cfg.lambda_kd;
    let n = student_logits.len() as f64;
    let mut grad = Array2::zeros(student_logits.dim());
    ndarray::Zip::from(&mut grad).and(student_logits).and(hard).and(soft).for_each(|g, &z, &h, &s| {
        let p = sigmoid(z);
        *g = ((1.0 - lam) * (p - h) + lam * (p - s)) / n;
    });
    Ok(grad)
}

/// `(1-λ)·BCE(σ(student), hard) + λ·BCE(σ(student), soft)`, each averaged over frames × classes.
pub fn kd_loss(
    student_logits: &ScoreMatrix,
    hard: &TargetMatrix,
    soft: &TargetMatrix,
    cfg: &KdConfig,
) -> Result<f64> {
    if student_logits.kind() != ScoreKind::Logit {
        return Err(Error::Contract("student scores must be logits".into()));
    }
    kd_loss_raw(student_logits.scores(), hard.values(), soft.values(), cfg)
}

pub fn kd_loss_grad(
    student_logits: &ScoreMatrix,
    hard: &TargetMatrix,
    soft: &TargetMatrix,
    cfg: &KdConfig,
) -> Result<Array2<f64>> {
    if student_logits.kind() != ScoreKind::Logit {
        return Err(Error::Contract("student scores must be logits".into()));
    }
    kd_loss_grad_raw(student_logits.scores(), hard.values(), soft.values(), cfg)
}

/// An input (spectrogram or embedding) with its hard labels and soft targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub input: Array2<f64>,
    pub hard: Array2<f64>,
    pub soft: Array2<f64>,
}

/// Mixes input, hard labels and soft targets with the same coefficient: `lam·a + (1-lam)·b`.
pub fn mixup_with_targets(a: &TrainingTriple, b: &TrainingTriple, lam: f64) -> Result<TrainingTriple> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::Contract(format!("mixup coefficient {lam} outside [0, 1]")));
    }
    if a.input.dim() != b.input.dim() || a.hard.dim() != b.hard.dim() || a.soft.dim() != b.soft.dim() {
        return Err(Error::Contract("mixup operands differ in shape".into()));
    }
    let mix = |x: &Array2<f64>, y: &Array2<f64>| {
        ndarray::Zip::from(x).and(y).map_collect(|&p, &q| lam * p + (1.0 - lam) * q)
    };
    Ok(TrainingTriple {
        input: mix(&a.input, &b.input),
        hard: mix(&a.hard, &b.hard),
        soft: mix(&a.soft, &b.soft),
    })
}

/// Total active time per class: for every clip, the length of the union of
/// that class's events, summed over clips. Indexed by class id.
pub fn label_frequencies(dataset: &[ClipAnnotations], vocab: &ClassVocabulary) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::Contract("label frequencies need a non-empty dataset".into()));
    }
    let mut freq = vec![0.0; vocab.len()];
    for clip in dataset {
        let classes: BTreeSet<usize> = clip.events.iter().map(|e| e.class_id).collect();
        for c in classes {
            if c >= vocab.len() {
                return Err(Error::Vocabulary(format!(
                    "clip '{}' uses class id {c} outside the vocabulary",
                    clip.clip_id
                )));
            }
            freq[c] += interval::union_length(clip.intervals_of(c));
        }
    }
    Ok(freq)
}

/// How the inverse frequencies of a clip's labels combine into its weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightAggregation {
    #[default]
    Sum,
    Mean,
}

/// Treatment of clips without any labels of positive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyClipPolicy {
    /// Leave the clip out of the sampling distribution.
    #[default]
    Skip,
    /// Give the clip the smallest weight among labeled clips.
    MinimumWeight,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WeightOptions {
    pub aggregation: WeightAggregation,
    pub empty_clips: EmptyClipPolicy,
}

/// Normalized per-clip sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    clip_ids: Vec<String>,
    weights: Vec<f64>,
}

impl SamplingWeights {
    /// Normalizes positive raw weights to a probability distribution.
    pub fn from_raw(clip_ids: Vec<String>, raw: Vec<f64>) -> Result<Self> {
        if clip_ids.len() != raw.len() {
            return Err(Error::Contract("clip ids and weights differ in length".into()));
        }
        if clip_ids.is_empty() {
            return Err(Error::Contract("no clips to weight".into()));
        }
        if let Some(w) = raw.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Validation(format!("sampling weight {w} is not positive")));
        }
        let total = neumaier_sum(&raw);
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(SamplingWeights { clip_ids, weights })
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.clip_ids.iter().map(String::as_str).zip(self.weights.iter().copied())
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Clip weights from inverse label active time, normalized to sum to one.
pub fn sampling_weights(
    dataset: &[ClipAnnotations],
    vocab: &ClassVocabulary,
    options: WeightOptions,
) -> Result<SamplingWeights> {
    let freq = label_frequencies(dataset, vocab)?;
    let mut ids = Vec::with_capacity(dataset.len());
    let mut raw: Vec<Option<f64>> = Vec::with_capacity(dataset.len());
    for clip in dataset {
        let labels: BTreeSet<usize> =
            clip.events.iter().map(|e| e.class_id).filter(|&c| freq[c] > 0.0).collect();
        let w = if labels.is_empty() {
            None
        } else {
            let inv: f64 = labels.iter().map(|&c| 1.0 / freq[c]).sum();
            Some(match options.aggregation {
                WeightAggregation::Sum => inv,
                WeightAggregation::Mean => inv / labels.len() as f64,
            })
        };
        ids.push(clip.clip_id.clone());
        raw.push(w);
    }
    let floor = raw.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mut kept_ids = Vec::with_capacity(ids.len());
    let mut kept = Vec::with_capacity(ids.len());
    for (id, w) in ids.into_iter().zip(raw) {
        match (w, options.empty_clips) {
            (Some(w), _) => {
                kept_ids.push(id);
                kept.push(w);
            }
            (None, EmptyClipPolicy::MinimumWeight) if floor.is_finite() => {
                kept_ids.push(id);
                kept.push(floor);
            }
            _ => {}
        }
    }
    if kept.is_empty() {
        return Err(Error::Validation("no clip has a label with positive active time".into()));
    }
    SamplingWeights::from_raw(kept_ids, kept)
}

/// Walker/Vose alias table: O(K) construction, O(1) draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Contract("alias table needs at least one weight".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Validation("alias weights must be finite and non-negative".into()));
        }
        let total: f64 = neumaier_sum(weights);
        if total <= 0.0 {
            return Err(Error::Validation("alias weights sum to zero".into()));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * k as f64 / total).collect();
        let mut prob = vec![1.0; k];
        let mut alias: Vec<usize> = (0..k).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..k).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are numerically 1
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// `n` draws with replacement, each clip chosen with its normalized weight.
pub fn weighted_sample(w: &SamplingWeights, n: usize, rng_seed: u64) -> Result<Vec<String>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let table = AliasTable::new(w.weights())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..n).map(|_| w.clip_ids[table.sample(&mut rng)].clone()).collect())
}

/// One training clip for the linear probe, already on the 250-frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeClip {
    pub embedding: Array2<f64>,
    pub hard: Array2<f64>,
    pub soft: Option<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProbeConfig {
    pub kd: KdConfig,
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Beta(α, α) parameter for mixup; `None` disables mixup.
    pub mixup_alpha: Option<f64>,
}

/// Result of [`probe_fit`].
#[derive(Debug, Clone)]
pub struct ProbeFit {
    pub head: LinearHead,
    /// Mean loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

/// Trains a linear head on frozen embeddings with mini-batch gradient descent
/// on the distillation loss. Clips without soft targets use their hard labels
/// in the distillation term. Deterministic for a fixed seed.
pub fn probe_fit(train: &[ProbeClip], cfg: &ProbeConfig, rng_seed: u64) -> Result<ProbeFit> {
    let first = train.first().ok_or_else(|| Error::Contract("probe training set is empty".into()))?;
    let (frames, dim) = first.embedding.dim();
    let classes = first.hard.ncols();
    for (i, clip) in train.iter().enumerate() {
        if clip.embedding.dim() != (frames, dim) || clip.hard.dim() != (frames, classes) {
            return Err(Error::Contract(format!("probe clip {i} has inconsistent shape")));
        }
        if let Some(soft) = &clip.soft {
            if soft.dim() != clip.hard.dim() {
                return Err(Error::Contract(format!("probe clip {i} soft targets mis-shaped")));
            }
        }
    }
    if cfg.batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let beta = match cfg.mixup_alpha {
        Some(a) => Some(Beta::new(a, a).map_err(|e| Error::Validation(format!("mixup alpha: {e}")))?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut head = LinearHead::zeros(classes, dim);
    let mut step_losses = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let lr = lr_at(&cfg.schedule, step);
            let mut grad_w = Array2::<f64>::zeros((classes, dim));
            let mut grad_b = Array1::<f64>::zeros(classes);
            let mut loss = 0.0;
            for &idx in batch {
                let mut triple = as_triple(&train[idx]);
                if let Some(beta) = &beta {
                    let partner = as_triple(&train[rng.random_range(0..train.len())]);
                    let lam = beta.sample(&mut rng);
                    triple = mixup_with_targets(&triple, &partner, lam)?;
                }
                let logits = head.logits(&triple.input)?;
                loss += kd_loss_raw(&logits, &triple.hard, &triple.soft, &cfg.kd)?;
                let g = kd_loss_grad_raw(&logits, &triple.hard, &triple.soft, &cfg.kd)?;
                grad_w += &g.t().dot(&triple.input);
                grad_b += &g.sum_axis(Axis(0));
            }
            let scale = lr / batch.len() as f64;
            loss /= batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Training { step, reason: format!("loss became {loss}") });
            }
            head.weight.scaled_add(-scale, &grad_w);
            head.bias.scaled_add(-scale, &grad_b);
            step_losses.push(loss);
            step += 1;
        }
    }
    Ok(ProbeFit { head, step_losses })
}

fn as_triple(clip: &ProbeClip) -> TrainingTriple {
    TrainingTriple {
        input: clip.embedding.clone(),
        hard: clip.hard.clone(),
        soft: clip.soft.clone().unwrap_or_else(|| clip.hard.clone()),
    }
}
