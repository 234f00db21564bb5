//! Seedable log-mel spectrogram augmentations: mixup, Freq-MixStyle,
//! filter augmentation and frequency warping.
//!
//! Spectrograms are `F × T` arrays (frequency bins along rows).

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// `F × T` log-mel spectrogram.
pub type Spectrogram = Array2<f64>;

/// Parameters of the augmentation pipeline.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub mixup_alpha: f64,
    pub fms_alpha: f64,
    pub fms_prob: f64,
    /// Inclusive range of filter breakpoints drawn per call.
    pub filter_bands: (usize, usize),
    /// Inclusive gain range in dB.
    pub filter_db: (f64, f64),
    /// Inclusive range of frequency-axis scale factors.
    pub warp_range: (f64, f64),
    pub enable_mixup: bool,
    pub enable_fms: bool,
    pub enable_filter: bool,
    pub enable_warp: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mixup_alpha: 0.2,
            fms_alpha: 0.3,
            fms_prob: 0.4,
            filter_bands: (2, 5),
            filter_db: (-6.0, 6.0),
            warp_range: (0.9, 1.1),
            enable_mixup: true,
            enable_fms: true,
            enable_filter: true,
            enable_warp: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.mixup_alpha > 0.0) || !(self.fms_alpha > 0.0) {
            return bad("Beta parameters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fms_prob) {
            return bad(format!("fms_prob {} outside [0, 1]", self.fms_prob));
        }
        if self.filter_bands.0 == 0 || self.filter_bands.0 > self.filter_bands.1 {
            return bad(format!("invalid filter band range {:?}", self.filter_bands));
        }
        if !(self.filter_db.0 <= self.filter_db.1) {
            return bad(format!("invalid filter dB range {:?}", self.filter_db));
        }
        if !(self.warp_range.0 > 0.0 && self.warp_range.0 <= self.warp_range.1) {
            return bad(format!("invalid warp range {:?}", self.warp_range));
        }
        Ok(())
    }
}

fn same_shape(a: &Spectrogram, b: &Spectrogram) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!("spectrogram shapes differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `lam·a + (1-lam)·b`, element-wise. Also used for `1 × T` waveforms.
pub fn mixup(a: &Spectrogram, b: &Spectrogram, lam: f64) -> Result<Spectrogram> {
    same_shape(a, b)?;
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::Contract(format!("mixup coefficient {lam} outside [0, 1]")));
    }
    Ok(Zip::from(a).and(b).map_collect(|&x, &y| lam * x + (1.0 - lam) * y))
}

/// Per-bin time mean and (population) standard deviation.
fn bin_stats(a: &Spectrogram) -> (Array1<f64>, Array1<f64>) {
    let t = a.ncols() as f64;
    let mean = a.sum_axis(Axis(1)) / t;
    let std = Zip::from(a.rows())
        .and(&mean)
        .map_collect(|row, &m| (row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t).sqrt());
    (mean, std)
}

/// Normalizes `a` per frequency bin and re-styles it with statistics mixed
/// from `a` and `b`.
pub fn freq_mixstyle(a: &Spectrogram, b: &Spectrogram, lam: f64, eps: f64) -> Result<Spectrogram> {
    same_shape(a, b)?;
    if a.ncols() == 0 {
        return Err(Error::Size("spectrogram has no frames".into()));
    }
    let (mu_a, sd_a) = bin_stats(a);
    let (mu_b, sd_b) = bin_stats(b);
    let mut out = a.clone();
    for (f, mut row) in out.rows_mut().into_iter().enumerate() {
        let mu_mix = lam * mu_a[f] + (1.0 - lam) * mu_b[f];
        let sd_mix = lam * sd_a[f] + (1.0 - lam) * sd_b[f];
        let scale = sd_mix / (sd_a[f] + eps);
        row.mapv_inplace(|x| (x - mu_a[f]) * scale + mu_mix);
    }
    Ok(out)
}

/// Piecewise-linear gain over frequency bins: constant before the first and
/// after the last breakpoint, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCurve {
    /// Sorted breakpoint positions in bin coordinates, within `[0, F-1]`.
    pub breakpoints: Vec<f64>,
    /// Gain in dB at each breakpoint.
    pub gains: Vec<f64>,
}

impl FilterCurve {
    pub fn draw<R: Rng + ?Sized>(bins: usize, cfg: &AugmentConfig, rng: &mut R) -> Self {
        let k = rng.random_range(cfg.filter_bands.0..=cfg.filter_bands.1);
        let top = (bins.max(1) - 1) as f64;
        let mut breakpoints: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * top).collect();
        breakpoints.sort_by(f64::total_cmp);
        let (lo, hi) = cfg.filter_db;
        let gains = (0..k).map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) }).collect();
        FilterCurve { breakpoints, gains }
    }

    pub fn gain_at(&self, bin: f64) -> f64 {
        let bp = &self.breakpoints;
        let last = bp.len() - 1;
        if bin <= bp[0] {
            return self.gains[0];
        }
        if bin >= bp[last] {
            return self.gains[last];
        }
        let j = bp.partition_point(|&x| x <= bin);
        let (x0, x1) = (bp[j - 1], bp[j]);
        let (g0, g1) = (self.gains[j - 1], self.gains[j]);
        if x1 == x0 {
            return g1;
        }
        g0 + (g1 - g0) * (bin - x0) / (x1 - x0)
    }

    /// Gain per bin for a spectrogram with `bins` rows.
    pub fn curve(&self, bins: usize) -> Array1<f64> {
        Array1::from_shape_fn(bins, |f| self.gain_at(f as f64))
    }
}

/// Adds a random piecewise-linear dB gain curve to every frame.
pub fn filter_augment(a: &Spectrogram, cfg: &AugmentConfig, rng_seed: u64) -> Result<Spectrogram> {
    if a.nrows() < 2 {
        return Err(Error::Size("filter augmentation needs at least two bins".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let curve = FilterCurve::draw(a.nrows(), cfg, &mut rng).curve(a.nrows());
    Ok(apply_gain(a, &curve))
}

fn apply_gain(a: &Spectrogram, gain: &Array1<f64>) -> Spectrogram {
    let mut out = a.clone();
    for (mut row, &g) in out.rows_mut().into_iter().zip(gain) {
        row.mapv_inplace(|x| x + g);
    }
    out
}

/// Center-anchored stretch/compress of the frequency axis. Output bin `f`
/// reads source coordinate `clamp(f·scale + (1-scale)·(F-1)/2, 0, F-1)`.
pub fn freq_warp(a: &Spectrogram, scale: f64) -> Result<Spectrogram> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Contract(format!("warp scale must be positive, got {scale}")));
    }
    let bins = a.nrows();
    if bins < 2 {
        return Err(Error::Size("frequency warping needs at least two bins".into()));
    }
    let top = (bins - 1) as f64;
    let center = top / 2.0;
    let mut out = Array2::zeros(a.dim());
    for f in 0..bins {
        let src = (f as f64 * scale + (1.0 - scale) * center).clamp(0.0, top);
        let lo = src.floor() as usize;
        let frac = src - lo as f64;
        if frac == 0.0 || lo + 1 >= bins {
            out.row_mut(f).assign(&a.row(lo.min(bins - 1)));
            continue;
        }
        let (r0, r1) = (a.row(lo), a.row(lo + 1));
        Zip::from(out.row_mut(f)).and(&r0).and(&r1).for_each(|o, &x, &y| *o = x + frac * (y - x));
    }
    Ok(out)
}

/// [`freq_warp`] with a scale drawn uniformly from `cfg.warp_range`.
pub fn random_freq_warp(a: &Spectrogram, cfg: &AugmentConfig, rng_seed: u64) -> Result<Spectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = cfg.warp_range;
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    freq_warp(a, scale)
}

/// Record of the random choices made by [`augment`].
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct AugmentTrace {
    pub mixup_lambda: Option<f64>,
    pub fms_lambda: Option<f64>,
    pub filter: Option<(Vec<f64>, Vec<f64>)>,
    pub warp_scale: Option<f64>,
}

/// Runs the enabled transforms in order: frequency warp, filter augmentation,
/// Freq-MixStyle (with probability `fms_prob`) and mixup. The partner is only
/// used by the two mixing transforms; without one they are skipped.
pub fn augment(
    a: &Spectrogram,
    partner: Option<&Spectrogram>,
    cfg: &AugmentConfig,
    rng_seed: u64,
) -> Result<(Spectrogram, AugmentTrace)> {
    cfg.validate()?;
    if let Some(b) = partner {
        same_shape(a, b)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut trace = AugmentTrace::default();
    let mut out = a.clone();
    if cfg.enable_warp && out.nrows() >= 2 {
        let (lo, hi) = cfg.warp_range;
        let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        out = freq_warp(&out, scale)?;
        trace.warp_scale = Some(scale);
    }
    if cfg.enable_filter && out.nrows() >= 2 {
        let curve = FilterCurve::draw(out.nrows(), cfg, &mut rng);
        out = apply_gain(&out, &curve.curve(out.nrows()));
        trace.filter = Some((curve.breakpoints, curve.gains));
    }
    if let Some(b) = partner {
        if cfg.enable_fms && rng.random::<f64>() < cfg.fms_prob {
            let lam = Beta::new(cfg.fms_alpha, cfg.fms_alpha)
                .map_err(|e| Error::Validation(e.to_string()))?
                .sample(&mut rng);
            out = freq_mixstyle(&out, b, lam, 1e-5)?;
            trace.fms_lambda = Some(lam);
        }
        if cfg.enable_mixup {
            let lam = Beta::new(cfg.mixup_alpha, cfg.mixup_alpha)
                .map_err(|e| Error::Validation(e.to_string()))?
                .sample(&mut rng);
            out = mixup(&out, b, lam)?;
            trace.mixup_lambda = Some(lam);
        }
    }
    Ok((out, trace))
}
