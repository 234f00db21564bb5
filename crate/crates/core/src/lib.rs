//! # framesed
//!
//! Frame-level sound event detection toolkit built around a 40 ms frame grid:
//!
//! - [`timeline`]: vocabularies, strong-label events, frame rasterization and event decoding
//! - [`resample`]: embedding resampling to 250 frames, the position-wise linear head, LR schedule
//! - [`distill`]: ensemble targets, frame-level distillation loss, mixup, balanced sampling, probe training
//! - [`augment`]: mixup, Freq-MixStyle, filter augmentation and frequency warping
//! - [`psds`]: exact threshold-independent PSDS with intersection-based matching
//! - [`eval`]: median filtering, onset F-measure, ASO significance testing
//! - [`io`]: TSV and `SEDB` binary interchange formats

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod distill;
pub mod error;
pub mod eval;
pub mod interval;
pub mod io;
pub mod psds;
pub mod resample;
pub mod timeline;

pub use error::{Error, Result};
pub use timeline::{
    ClassVocabulary, ClipAnnotations, Event, FrameGrid, ScoreKind, ScoreMatrix, TargetMatrix,
};
