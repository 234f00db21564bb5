use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use framesed::augment::{self, AugmentConfig};
use framesed::distill::{
    self, EmptyClipPolicy, KdConfig, ProbeClip, ProbeConfig, SamplingWeights, WeightAggregation,
    WeightOptions,
};
use framesed::eval::{self, AsoConfig, OnsetEvalConfig};
use framesed::io::{self, MatrixFormat, MatrixLayout, UnknownLabels};
use framesed::psds::{self, EvalClip, EvalDataset, MissingClassPolicy, PsdsParams};
use framesed::resample::{self, EmbeddingSequence, LinearHead, ScheduleConfig};
use framesed::timeline::{self, FrameRule};
use framesed::{ClassVocabulary, ClipAnnotations, Event, FrameGrid, ScoreKind, ScoreMatrix};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{write_manifest, ManifestBuilder};
use crate::{
    Aggregate, AsoArgs, AugmentArgs, CliError, DistillArgs, DurationArgs, EmptyClips, OnsetArgs,
    PostprocessArgs, ProbeArgs, PsdsArgs, RasterizeArgs, ResampleArgs, Rule, SampleArgs, ScoreInput,
    WeightsArgs,
};

type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(io::write_atomic(path, text.as_bytes())?)
}

/// Pretty JSON to stdout, and to `report` when given.
fn emit_json(value: &impl Serialize, report: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    print!("{text}");
    if let Some(path) = report {
        write_text(path, &text)?;
    }
    Ok(())
}

fn clip_durations(args: &DurationArgs) -> CliResult<Option<BTreeMap<String, f64>>> {
    match &args.durations {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(Some(io::parse_durations(&text, path)?))
        }
        None => Ok(None),
    }
}

fn load_annotations(
    events: &Path,
    vocab: &ClassVocabulary,
    durations: &DurationArgs,
    clamp: bool,
) -> CliResult<Vec<ClipAnnotations>> {
    let rows = io::read_event_rows(events)?;
    let by_clip = io::events_by_clip(&rows, vocab, UnknownLabels::Reject, events)?;
    let table = clip_durations(durations)?;
    by_clip
        .into_iter()
        .map(|(clip, evs)| {
            let duration = match &table {
                Some(t) => {
                    *t.get(&clip).ok_or_else(|| invalid(format!("no duration listed for clip '{clip}'")))?
                }
                None => durations.clip_duration,
            };
            Ok(ClipAnnotations::new(clip, duration, evs, clamp)?)
        })
        .collect()
}

pub fn rasterize(args: &RasterizeArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("rasterize", args, None);
    manifest.input(&args.events)?;
    manifest.input(&args.vocab)?;
    let vocab = io::read_vocabulary(&args.vocab)?;
    let clips = load_annotations(&args.events, &vocab, &args.durations, args.clamp)?;
    let rule = match args.rule {
        Rule::Any => FrameRule::AnyOverlap,
        Rule::Majority => FrameRule::MajorityOverlap,
    };
    create_dir(&args.out)?;
    if clips.is_empty() {
        warn("events file lists no clips; nothing rasterized");
    }
    let format: MatrixFormat = args.format.into();
    let written: Vec<(String, usize)> = clips
        .par_iter()
        .map(|ann| {
            let grid = FrameGrid::covering(ann.duration, args.resolution)?;
            let targets = timeline::rasterize_events(ann, &vocab, &grid, rule)?;
            let path = args.out.join(format!("{}.{}", ann.clip_id, format.extension()));
            io::write_matrix_file(&path, targets.values(), &grid, &vocab, format)?;
            Ok((ann.clip_id.clone(), grid.num_frames()))
        })
        .collect::<CliResult<_>>()?;
    let mut index = String::from("clip_id\tframes\n");
    for (clip, frames) in &written {
        index.push_str(&format!("{clip}\t{frames}\n"));
    }
    write_text(&args.out.join("manifest.tsv"), &index)?;
    write_manifest(&manifest.finish(), &args.out, true)
}

pub fn weights(args: &WeightsArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("weights", args, None);
    manifest.input(&args.events)?;
    manifest.input(&args.vocab)?;
    let vocab = io::read_vocabulary(&args.vocab)?;
    let clips = load_annotations(&args.events, &vocab, &args.durations, args.clamp)?;
    let mut text = String::from("filename\tweight\n");
    if clips.is_empty() {
        warn("events file lists no clips; weights file is empty");
    } else {
        let options = WeightOptions {
            aggregation: match args.aggregate {
                Aggregate::Sum => WeightAggregation::Sum,
                Aggregate::Mean => WeightAggregation::Mean,
            },
            empty_clips: match args.empty {
                EmptyClips::Skip => EmptyClipPolicy::Skip,
                EmptyClips::Min => EmptyClipPolicy::MinimumWeight,
            },
        };
        let w = distill::sampling_weights(&clips, &vocab, options)?;
        for (clip, weight) in w.iter() {
            text.push_str(&format!("{clip}\t{weight}\n"));
        }
    }
    write_text(&args.out, &text)?;
    write_manifest(&manifest.finish(), &args.out, false)
}

fn read_weights(path: &Path) -> CliResult<Option<SamplingWeights>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("").trim();
        let w = fields
            .next()
            .and_then(|w| w.trim().parse::<f64>().ok())
            .ok_or_else(|| invalid(format!("{}:{}:2: weight is not a number", path.display(), idx + 1)))?;
        ids.push(id.to_string());
        raw.push(w);
    }
    if ids.is_empty() {
        return Ok(None);
    }
    Ok(Some(SamplingWeights::from_raw(ids, raw)?))
}

pub fn sample(args: &SampleArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("sample", args, Some(args.seed));
    manifest.input(&args.weights)?;
    let drawn = match read_weights(&args.weights)? {
        Some(w) => distill::weighted_sample(&w, args.n, args.seed)?,
        None => {
            warn("weights file is empty; no clips drawn");
            Vec::new()
        }
    };
    let mut text = String::new();
    for id in drawn {
        text.push_str(&id);
        text.push('\n');
    }
    write_text(&args.out, &text)?;
    write_manifest(&manifest.finish(), &args.out, false)
}

/// Spectrogram as `F × T`; frame-major files are transposed.
fn read_spectrogram(path: &Path) -> CliResult<Array2<f64>> {
    let (m, layout) = io::read_sedb(path)?;
    Ok(match layout {
        MatrixLayout::FrequencyMajor => m,
        MatrixLayout::FrameMajor => m.t().to_owned(),
    })
}

fn pair<T: Copy>(v: &[T], name: &str) -> CliResult<(T, T)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(invalid(format!("--{name} takes two values"))),
    }
}

pub fn augment(args: &AugmentArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("augment", args, Some(args.seed));
    manifest.input(&args.input)?;
    let spec = read_spectrogram(&args.input)?;
    let partner = match &args.partner {
        Some(p) => {
            manifest.input(p)?;
            Some(read_spectrogram(p)?)
        }
        None => None,
    };
    let cfg = AugmentConfig {
        mixup_alpha: args.mixup_alpha,
        fms_alpha: args.fms_alpha,
        fms_prob: args.fms_prob,
        filter_bands: pair(&args.filter_bands, "filter-bands")?,
        filter_db: pair(&args.filter_db, "filter-db")?,
        warp_range: pair(&args.warp_range, "warp-range")?,
        enable_mixup: !args.no_mixup,
        enable_fms: !args.no_fms,
        enable_filter: !args.no_filter,
        enable_warp: !args.no_warp,
    };
    let (out, trace) = augment::augment(&spec, partner.as_ref(), &cfg, args.seed)?;
    io::write_atomic(&args.out, &io::encode_sedb(&out, MatrixLayout::FrequencyMajor))?;
    write_manifest(&manifest.finish(), &args.out, false)?;
    emit_json(&trace, None)
}

pub fn resample(args: &ResampleArgs) -> CliResult<()> {
    if args.frames == 0 {
        return Err(invalid("--frames must be positive"));
    }
    let mut manifest = ManifestBuilder::new("resample", args, None);
    manifest.input(&args.input)?;
    let files = io::list_clip_files(&args.input)?;
    if files.is_empty() {
        warn("input directory holds no clip files");
    }
    create_dir(&args.out)?;
    let rows: Vec<String> = files
        .par_iter()
        .map(|(clip, path)| {
            let (m, _) = io::read_sedb(path)?;
            let seq = EmbeddingSequence::new(clip.clone(), m)?;
            let out = resample::resample(&seq, args.frames)?;
            let dest = args.out.join(format!("{clip}.sedb"));
            io::write_atomic(&dest, &io::encode_sedb(out.values(), MatrixLayout::FrameMajor))?;
            Ok(format!("{clip}\t{}\t{}\n", seq.frames(), out.frames()))
        })
        .collect::<CliResult<_>>()?;
    write_text(
        &args.out.join("manifest.tsv"),
        &(String::from("clip_id\tin_frames\tout_frames\n") + &rows.concat()),
    )?;
    write_manifest(&manifest.finish(), &args.out, true)
}

fn placeholder_vocab(classes: usize) -> Arc<ClassVocabulary> {
    Arc::new(ClassVocabulary::new((0..classes).map(|c| format!("class_{c}"))).expect("distinct names"))
}

fn read_frame_matrix(path: &Path) -> CliResult<Array2<f64>> {
    match MatrixFormat::of_path(path) {
        Some(MatrixFormat::Binary) => Ok(io::read_sedb(path)?.0),
        _ => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(io::parse_score_tsv(&text, path)?.2)
        }
    }
}

pub fn distill_targets(args: &DistillArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("distill-targets", args, None);
    let mut members = Vec::with_capacity(args.members.len());
    for dir in &args.members {
        manifest.input(dir)?;
        let files: BTreeMap<String, std::path::PathBuf> = io::list_clip_files(dir)?.into_iter().collect();
        members.push(files);
    }
    let clips: BTreeSet<&String> = members.iter().flat_map(|m| m.keys()).collect();
    if clips.is_empty() {
        warn("member directories hold no logit files");
    }
    create_dir(&args.out)?;
    let rows: Vec<String> = clips
        .into_par_iter()
        .map(|clip| {
            let mut logits = Vec::new();
            for files in &members {
                if let Some(path) = files.get(clip) {
                    let m = read_frame_matrix(path)?;
                    let grid = FrameGrid::new(0.04, m.nrows().max(1))?;
                    logits.push(ScoreMatrix::new(grid, placeholder_vocab(m.ncols()), m, ScoreKind::Logit)?);
                }
            }
            let soft =
                distill::ensemble_targets(&logits).map_err(|e| invalid(format!("clip '{clip}': {e}")))?;
            let dest = args.out.join(format!("{clip}.sedb"));
            io::write_atomic(&dest, &io::encode_sedb(soft.values(), MatrixLayout::FrameMajor))?;
            Ok(format!("{clip}\t{}\n", logits.len()))
        })
        .collect::<CliResult<_>>()?;
    write_text(&args.out.join("manifest.tsv"), &(String::from("clip_id\tn_members\n") + &rows.concat()))?;
    write_manifest(&manifest.finish(), &args.out, true)
}

/// Trained head as stored on disk.
#[derive(Debug, Serialize)]
pub struct HeadFile {
    pub classes: Vec<String>,
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub final_loss: Option<f64>,
    pub steps: usize,
}

/// Vocabulary of a target directory: `--vocab` when given, else the header of its first TSV file.
fn target_vocab(
    explicit: Option<&Path>,
    files: &[(String, std::path::PathBuf)],
) -> CliResult<ClassVocabulary> {
    if let Some(p) = explicit {
        return Ok(io::read_vocabulary(p)?);
    }
    let (_, first) = files
        .iter()
        .find(|(_, p)| MatrixFormat::of_path(p) == Some(MatrixFormat::Tsv))
        .ok_or_else(|| invalid("binary target files need --vocab"))?;
    let text = fs::read_to_string(first).map_err(|e| CliError::io(first, e))?;
    Ok(io::parse_score_tsv(&text, first)?.1)
}

fn embedding_on_grid(clip: &str, path: &Path, frames: usize) -> CliResult<EmbeddingSequence> {
    let (m, _) = io::read_sedb(path)?;
    let seq = EmbeddingSequence::new(clip, m)?;
    Ok(resample::resample(&seq, frames)?)
}

pub fn probe_train(args: &ProbeArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("probe-train", args, Some(args.seed));
    manifest.input(&args.embeddings)?;
    manifest.input(&args.targets)?;
    let embeddings: BTreeMap<String, std::path::PathBuf> =
        io::list_clip_files(&args.embeddings)?.into_iter().collect();
    let target_files = io::list_clip_files(&args.targets)?;
    if target_files.is_empty() {
        return Err(invalid("target directory holds no clip files"));
    }
    let vocab = target_vocab(args.vocab.as_deref(), &target_files)?;
    let soft_files: Option<BTreeMap<String, std::path::PathBuf>> = match &args.soft {
        Some(dir) => {
            manifest.input(dir)?;
            Some(io::list_clip_files(dir)?.into_iter().collect())
        }
        None => None,
    };
    let train: Vec<ProbeClip> = target_files
        .par_iter()
        .map(|(clip, tpath)| {
            let hard = read_frame_matrix(tpath)?;
            if hard.ncols() != vocab.len() {
                return Err(invalid(format!(
                    "targets of '{clip}' have {} classes, expected {}",
                    hard.ncols(),
                    vocab.len()
                )));
            }
            let epath = embeddings
                .get(clip)
                .ok_or_else(|| invalid(format!("no embedding file for clip '{clip}'")))?;
            let emb = embedding_on_grid(clip, epath, hard.nrows())?;
            let soft = match soft_files.as_ref().and_then(|s| s.get(clip)) {
                Some(p) => Some(read_frame_matrix(p)?),
                None => None,
            };
            Ok(ProbeClip { embedding: emb.into_values(), hard, soft })
        })
        .collect::<CliResult<_>>()?;
    let batches = train.len().div_ceil(args.batch_size.max(1));
    let total = (args.epochs * batches).max(args.warmup + 1);
    let cfg = ProbeConfig {
        kd: KdConfig::new(args.lambda)?,
        schedule: ScheduleConfig::new(args.lr, args.warmup, total, args.final_lr)?,
        epochs: args.epochs,
        batch_size: args.batch_size,
        mixup_alpha: args.mixup_alpha,
    };
    let fit = distill::probe_fit(&train, &cfg, args.seed)?;
    let head_file = HeadFile {
        classes: vocab.names().to_vec(),
        weight: fit.head.weight.rows().into_iter().map(|r| r.to_vec()).collect(),
        bias: fit.head.bias.to_vec(),
        final_loss: fit.step_losses.last().copied(),
        steps: fit.step_losses.len(),
    };
    let mut text = serde_json::to_string_pretty(&head_file).expect("head serializes");
    text.push('\n');
    write_text(&args.out, &text)?;

    if let (Some(dir), Some(out)) = (&args.predict, &args.predictions_out) {
        manifest.input(dir)?;
        predict_dir(&fit.head, Arc::new(vocab), dir, out, args.format.into())?;
    }
    write_manifest(&manifest.finish(), &args.out, false)
}

fn predict_dir(
    head: &LinearHead,
    vocab: Arc<ClassVocabulary>,
    dir: &Path,
    out: &Path,
    format: MatrixFormat,
) -> CliResult<()> {
    create_dir(out)?;
    let files = io::list_clip_files(dir)?;
    files.par_iter().try_for_each(|(clip, path)| {
        let emb = embedding_on_grid(clip, path, timeline::CANONICAL_FRAMES)?;
        let scores = resample::head_forward(&emb, head, Arc::clone(&vocab))?.to_probabilities();
        let dest = out.join(format!("{clip}.{}", format.extension()));
        io::write_matrix_file(&dest, scores.scores(), scores.grid(), &vocab, format)?;
        Ok::<_, CliError>(())
    })
}

/// Loads every clip of a score directory as probabilities.
fn load_scores(input: &ScoreInput) -> CliResult<Vec<(String, ScoreMatrix)>> {
    let files = io::list_clip_files(&input.scores)?;
    let vocab = match &input.vocab {
        Some(p) => Some(Arc::new(io::read_vocabulary(p)?)),
        None => None,
    };
    let kind = if input.logits { ScoreKind::Logit } else { ScoreKind::Probability };
    // TSV files without --vocab share the first file's vocabulary
    let shared = match (&vocab, files.first()) {
        (Some(v), _) => Some(Arc::clone(v)),
        (None, Some((_, p))) if MatrixFormat::of_path(p) == Some(MatrixFormat::Tsv) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(Arc::new(io::parse_score_tsv(&text, p)?.1))
        }
        _ => None,
    };
    files
        .par_iter()
        .map(|(clip, path)| {
            let m = io::read_score_file(path, shared.as_ref(), input.resolution, kind)?;
            Ok((clip.clone(), m.to_probabilities()))
        })
        .collect()
}

pub fn postprocess(args: &PostprocessArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("postprocess", args, None);
    manifest.input(&args.input.scores)?;
    let clips = load_scores(&args.input)?;
    if clips.is_empty() {
        warn("score directory holds no clip files");
    }
    create_dir(&args.out)?;
    let format: MatrixFormat = args.format.into();
    let processed: Vec<(String, ScoreMatrix)> = clips
        .into_par_iter()
        .map(|(clip, m)| {
            let m = match args.median_filter {
                Some(w) => eval::median_filter(&m, w)?,
                None => m,
            };
            let dest = args.out.join(format!("{clip}.{}", format.extension()));
            io::write_matrix_file(&dest, m.scores(), m.grid(), m.vocabulary(), format)?;
            Ok((clip, m))
        })
        .collect::<CliResult<_>>()?;
    if let (Some(threshold), Some(events_out)) = (args.threshold, &args.events_out) {
        let mut events = BTreeMap::new();
        for (clip, m) in &processed {
            events.insert(clip.clone(), m.decode_events(threshold, None)?);
        }
        let vocab = match processed.first() {
            Some((_, m)) => Arc::clone(m.vocabulary()),
            None => placeholder_vocab(0),
        };
        write_text(events_out, &io::format_events(&events, &vocab))?;
    }
    write_manifest(&manifest.finish(), &args.out, true)
}

#[derive(Serialize)]
struct PsdsReport<'a> {
    psds: Option<f64>,
    num_clips: usize,
    dataset_duration_hours: f64,
    parameters: PsdsParams,
    classes: &'a [psds::ClassRoc],
    effective_curve: &'a [(f64, f64)],
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

pub fn eval_psds(args: &PsdsArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("eval-psds", args, None);
    manifest.input(&args.input.scores)?;
    manifest.input(&args.gt)?;
    let params = PsdsParams {
        rho_dtc: args.dtc,
        rho_gtc: args.gtc,
        alpha_st: args.alpha_st,
        e_max: args.emax,
        missing_classes: if args.exclude_missing {
            MissingClassPolicy::Exclude
        } else {
            MissingClassPolicy::PerfectTpr
        },
        median_filter: args.median_filter,
    };
    params.validate()?;
    let mut clips = load_scores(&args.input)?;
    if clips.is_empty() {
        let msg = "score directory holds no clip files".to_string();
        warn(&msg);
        emit_json(
            &PsdsReport {
                psds: None,
                num_clips: 0,
                dataset_duration_hours: 0.0,
                parameters: params,
                classes: &[],
                effective_curve: &[],
                warning: Some(msg),
            },
            args.report.as_deref(),
        )?;
        return finish_report(manifest, args.report.as_deref());
    }
    let mut unknown = UnknownLabels::Reject;
    if let Some(path) = &args.classes {
        manifest.input(path)?;
        let subset = Arc::new(io::read_vocabulary(path)?);
        clips = clips
            .into_iter()
            .map(|(c, m)| Ok((c, m.project(Arc::clone(&subset))?)))
            .collect::<CliResult<_>>()?;
        unknown = UnknownLabels::Skip;
    }
    let vocab = Arc::clone(clips[0].1.vocabulary());
    let rows = io::read_event_rows(&args.gt)?;
    let mut gt = io::events_by_clip(&rows, &vocab, unknown, &args.gt)?;
    let known: BTreeSet<&String> = clips.iter().map(|(c, _)| c).collect();
    if let Some(missing) = gt.keys().find(|k| !known.contains(k)) {
        return Err(invalid(format!("ground truth lists clip '{missing}' that has no score file")));
    }
    let eval_clips: Vec<EvalClip> = clips
        .into_iter()
        .map(|(clip_id, scores)| {
            let ground_truth: Vec<Event> = gt.remove(&clip_id).unwrap_or_default();
            EvalClip { clip_id, scores, ground_truth }
        })
        .collect();
    let dataset = EvalDataset::new(eval_clips)?;
    let result = psds::psds(&dataset, &params)?;
    emit_json(
        &PsdsReport {
            psds: Some(result.psds),
            num_clips: dataset.clips().len(),
            dataset_duration_hours: result.dataset_duration_hours,
            parameters: result.params,
            classes: &result.classes,
            effective_curve: &result.effective_curve,
            warning: None,
        },
        args.report.as_deref(),
    )?;
    finish_report(manifest, args.report.as_deref())
}

fn finish_report(manifest: ManifestBuilder, report: Option<&Path>) -> CliResult<()> {
    match report {
        Some(path) => write_manifest(&manifest.finish(), path, false),
        None => Ok(()),
    }
}

pub fn eval_onset_f(args: &OnsetArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("eval-onset-f", args, None);
    manifest.input(&args.pred)?;
    manifest.input(&args.gt)?;
    let pred_rows = io::read_event_rows(&args.pred)?;
    let gt_rows = io::read_event_rows(&args.gt)?;
    let labels: BTreeSet<&str> = pred_rows.iter().chain(&gt_rows).map(|r| r.label.as_str()).collect();
    let vocab = ClassVocabulary::new(labels)?;
    if gt_rows.is_empty() && pred_rows.is_empty() {
        warn("no events in either file");
    }
    let pred = io::events_by_clip(&pred_rows, &vocab, UnknownLabels::Reject, &args.pred)?;
    let gt = io::events_by_clip(&gt_rows, &vocab, UnknownLabels::Reject, &args.gt)?;
    let score = eval::onset_f(&pred, &gt, &OnsetEvalConfig { tolerance: args.tolerance })?;
    emit_json(&score, args.report.as_deref())?;
    finish_report(manifest, args.report.as_deref())
}

fn read_numbers(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                invalid(format!("{}:{}:1: '{}' is not a number", path.display(), i + 1, l.trim()))
            })
        })
        .collect()
}

#[derive(Serialize)]
struct AsoReport {
    epsilon_min: f64,
    significant: bool,
    violation_ratio: f64,
}

pub fn aso(args: &AsoArgs) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("aso", args, Some(args.seed));
    manifest.input(&args.a)?;
    manifest.input(&args.b)?;
    let a = read_numbers(&args.a)?;
    let b = read_numbers(&args.b)?;
    let cfg = AsoConfig {
        alpha: args.alpha,
        num_comparisons: args.comparisons,
        bootstrap_samples: args.bootstrap,
        rng_seed: args.seed,
        threshold: args.threshold,
    };
    let r = eval::aso(&a, &b, &cfg)?;
    emit_json(
        &AsoReport {
            epsilon_min: r.epsilon_min,
            significant: r.significant,
            violation_ratio: r.violation_ratio,
        },
        args.report.as_deref(),
    )?;
    finish_report(manifest, args.report.as_deref())
}
