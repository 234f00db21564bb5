//! File formats: event TSVs, vocabulary lists, per-clip score TSVs and the
//! `SEDB` binary matrix container.
//!
//! `SEDB` layout (all little-endian):
//!
//! ```text
//! version 1: "SEDB" | u32 version=1 | u32 rows | u32 cols | rows·cols f32, row-major
//! version 2: "SEDB" | u32 version=2 | u32 rows | u32 cols | u32 layout | rows·cols f32
//! ```
//!
//! Version 1 holds frame-major matrices (embeddings, logits, targets).
//! Version 2 adds a layout tag so spectrograms (`F × T`, frequency-major)
//! can share the container.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::timeline::{ClassVocabulary, Event, FrameGrid, ScoreKind, ScoreMatrix, TIME_EPS};

pub const SEDB_MAGIC: &[u8; 4] = b"SEDB";

/// Row interpretation of a `SEDB` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixLayout {
    /// Rows are frames (embeddings, logits, targets). Written as version 1.
    FrameMajor,
    /// Rows are frequency bins, columns frames (spectrograms). Written as version 2.
    FrequencyMajor,
}

impl MatrixLayout {
    fn tag(self) -> u32 {
        match self {
            MatrixLayout::FrameMajor => 0,
            MatrixLayout::FrequencyMajor => 1,
        }
    }
}

pub fn encode_sedb(m: &Array2<f64>, layout: MatrixLayout) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(20 + rows * cols * 4);
    out.extend_from_slice(SEDB_MAGIC);
    let version: u32 = match layout {
        MatrixLayout::FrameMajor => 1,
        MatrixLayout::FrequencyMajor => 2,
    };
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    if version == 2 {
        out.extend_from_slice(&layout.tag().to_le_bytes());
    }
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_sedb(bytes: &[u8], path: &Path) -> Result<(Array2<f64>, MatrixLayout)> {
    let fail = |message: String| Error::Format { path: path.to_path_buf(), message };
    if bytes.len() < 16 || &bytes[..4] != SEDB_MAGIC {
        return Err(fail("missing SEDB header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let (offset, layout) = match version {
        1 => (16, MatrixLayout::FrameMajor),
        2 => {
            if bytes.len() < 20 {
                return Err(fail("truncated version-2 header".into()));
            }
            let layout = match word(16) {
                0 => MatrixLayout::FrameMajor,
                1 => MatrixLayout::FrequencyMajor,
                other => return Err(fail(format!("unknown layout tag {other}"))),
            };
            (20, layout)
        }
        other => return Err(fail(format!("unsupported SEDB version {other}"))),
    };
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail("matrix size overflows".into()))?;
    if bytes.len() - offset != expected {
        return Err(fail(format!(
            "expected {expected} payload bytes for {rows}x{cols}, found {}",
            bytes.len() - offset
        )));
    }
    let values: Vec<f64> = bytes[offset..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Ok((m, layout))
}

pub fn read_sedb(path: &Path) -> Result<(Array2<f64>, MatrixLayout)> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode_sedb(&bytes, path)
}

/// Writes `contents` to `path` via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("out")));
    {
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        w.into_inner()
            .map_err(|e| Error::io(&tmp, e.into_error()))?
            .sync_all()
            .map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, column, message: message.into() }
}

/// Clip id of a file name: the stem without directories or extension.
pub fn clip_id_from_filename(name: &str) -> String {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string()
}

/// One class name per line; blank lines are ignored.
pub fn parse_vocabulary(text: &str, path: &Path) -> Result<ClassVocabulary> {
    let names: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    ClassVocabulary::new(names).map_err(|e| parse_err(path, 1, 1, e.to_string()))
}

pub fn read_vocabulary(path: &Path) -> Result<ClassVocabulary> {
    parse_vocabulary(&read_text(path)?, path)
}

pub fn format_vocabulary(vocab: &ClassVocabulary) -> String {
    let mut s = String::new();
    for n in vocab.names() {
        s.push_str(n);
        s.push('\n');
    }
    s
}

/// Event row before class lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub clip_id: String,
    pub onset: f64,
    pub offset: f64,
    pub label: String,
    /// 1-based line of the row in its file.
    pub line: usize,
}

/// Parses an events TSV with header `filename onset offset event_label`.
/// Column order follows the header; extra columns are ignored.
pub fn parse_event_rows(text: &str, path: &Path) -> Result<Vec<EventRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) =
        lines.find(|(_, l)| !l.trim().is_empty()).ok_or_else(|| parse_err(path, 1, 1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| parse_err(path, 1, 1, format!("header lacks column '{name}'")))
    };
    let (fi, oi, ei, li) = (find("filename")?, find("onset")?, find("offset")?, find("event_label")?);
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let field = |i: usize| {
            fields.get(i).map(|s| s.trim()).ok_or_else(|| parse_err(path, lineno, i + 1, "missing field"))
        };
        let number = |i: usize| -> Result<f64> {
            let raw = field(i)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(path, lineno, i + 1, format!("'{raw}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, i + 1, "non-finite time"));
            }
            if v < 0.0 {
                return Err(parse_err(path, lineno, i + 1, format!("negative time {v}")));
            }
            Ok(v)
        };
        let onset = number(oi)?;
        let offset = number(ei)?;
        if offset <= onset {
            return Err(parse_err(path, lineno, ei + 1, format!("offset {offset} not after onset {onset}")));
        }
        let label = field(li)?;
        if label.is_empty() {
            return Err(parse_err(path, lineno, li + 1, "empty event label"));
        }
        rows.push(EventRow {
            clip_id: clip_id_from_filename(field(fi)?),
            onset,
            offset,
            label: label.to_string(),
            line: lineno,
        });
    }
    Ok(rows)
}

pub fn read_event_rows(path: &Path) -> Result<Vec<EventRow>> {
    parse_event_rows(&read_text(path)?, path)
}

/// What to do with rows whose label is not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownLabels {
    Reject,
    Skip,
}

/// Resolves labels against `vocab` and groups events by clip.
pub fn events_by_clip(
    rows: &[EventRow],
    vocab: &ClassVocabulary,
    unknown: UnknownLabels,
    path: &Path,
) -> Result<BTreeMap<String, Vec<Event>>> {
    let mut out: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for row in rows {
        let class_id = match (vocab.index_of(&row.label), unknown) {
            (Some(c), _) => c,
            (None, UnknownLabels::Skip) => continue,
            (None, UnknownLabels::Reject) => {
                return Err(Error::Vocabulary(format!(
                    "{}:{}: unknown class '{}'",
                    path.display(),
                    row.line,
                    row.label
                )))
            }
        };
        out.entry(row.clip_id.clone()).or_default().push(Event::new(class_id, row.onset, row.offset)?);
    }
    Ok(out)
}

pub fn format_events(events: &BTreeMap<String, Vec<Event>>, vocab: &ClassVocabulary) -> String {
    let mut s = String::from("filename\tonset\toffset\tevent_label\n");
    for (clip, evs) in events {
        for e in evs {
            s.push_str(&format!(
                "{clip}\t{}\t{}\t{}\n",
                fmt_time(e.onset),
                fmt_time(e.offset),
                vocab.name(e.class_id).unwrap_or("?")
            ));
        }
    }
    s
}

/// Seconds printed with millisecond-scale noise removed.
fn fmt_time(t: f64) -> String {
    let rounded = (t * 1e9).round() / 1e9;
    format!("{rounded}")
}

/// Score/target interchange TSV: `onset offset <class...>` header, one row per frame.
pub fn format_score_tsv(values: &Array2<f64>, grid: &FrameGrid, vocab: &ClassVocabulary) -> String {
    let mut s = String::from("onset\toffset");
    for n in vocab.names() {
        s.push('\t');
        s.push_str(n);
    }
    s.push('\n');
    for (t, row) in values.rows().into_iter().enumerate() {
        s.push_str(&fmt_time(grid.frame_start(t)));
        s.push('\t');
        s.push_str(&fmt_time(grid.frame_end(t)));
        for v in row {
            s.push('\t');
            s.push_str(&format!("{v}"));
        }
        s.push('\n');
    }
    s
}

/// Parsed score TSV: frame grid, class names from the header, and values.
pub fn parse_score_tsv(text: &str, path: &Path) -> Result<(FrameGrid, ClassVocabulary, Array2<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, 1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "onset" || cols[1] != "offset" {
        return Err(parse_err(path, 1, 1, "header must start with 'onset\\toffset' followed by class names"));
    }
    let vocab =
        ClassVocabulary::new(cols[2..].iter().copied()).map_err(|e| parse_err(path, 1, 3, e.to_string()))?;
    let classes = vocab.len();
    let mut values = Vec::new();
    let mut bounds = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != classes + 2 {
            return Err(parse_err(
                path,
                lineno,
                fields.len().min(classes + 2) + 1,
                format!("expected {} fields, found {}", classes + 2, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(classes + 2);
        for (i, f) in fields.iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, i + 1, format!("'{}' is not a number", f.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, i + 1, "non-finite value"));
            }
            row.push(v);
        }
        bounds.push((row[0], row[1], lineno));
        values.extend_from_slice(&row[2..]);
    }
    let frames = bounds.len();
    if frames == 0 {
        return Err(parse_err(path, 2, 1, "no frames"));
    }
    let resolution = bounds[0].1 - bounds[0].0;
    let grid = FrameGrid::new(resolution, frames).map_err(|e| parse_err(path, 2, 1, e.to_string()))?;
    for (t, &(on, off, lineno)) in bounds.iter().enumerate() {
        if (on - grid.frame_start(t)).abs() > 1e-6 || (off - grid.frame_end(t)).abs() > 1e-6 {
            return Err(parse_err(
                path,
                lineno,
                1,
                format!("frame {t} bounds ({on}, {off}) do not follow a regular {resolution} s grid from 0"),
            ));
        }
    }
    let m = Array2::from_shape_vec((frames, classes), values).expect("row lengths checked");
    Ok((grid, vocab, m))
}

/// Per-clip matrix file in a directory, in either interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Tsv,
    Binary,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Tsv => "tsv",
            MatrixFormat::Binary => "sedb",
        }
    }

    pub fn of_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "tsv" => Some(MatrixFormat::Tsv),
            "sedb" => Some(MatrixFormat::Binary),
            _ => None,
        }
    }
}

/// Files of a clip directory in clip-id order. When `manifest.tsv` exists its
/// first column selects and orders the clips; otherwise every `.tsv`/`.sedb`
/// file is used.
pub fn list_clip_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found: BTreeMap<String, PathBuf> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || MatrixFormat::of_path(&path).is_none() {
            continue;
        }
        let stem = clip_id_from_filename(path.file_name().and_then(|n| n.to_str()).unwrap_or(""));
        if stem == "manifest" || stem.starts_with('.') {
            continue;
        }
        if let Some(prev) = found.insert(stem.clone(), path.clone()) {
            return Err(Error::Validation(format!(
                "clip '{stem}' has two files: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    let manifest = dir.join("manifest.tsv");
    if !manifest.is_file() {
        return Ok(found.into_iter().collect());
    }
    let text = read_text(&manifest)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let id = line.split('\t').next().unwrap_or("").trim();
        if id.is_empty() {
            continue;
        }
        let path = found
            .get(id)
            .ok_or_else(|| parse_err(&manifest, idx + 1, 1, format!("no file for clip '{id}'")))?;
        out.push((id.to_string(), path.clone()));
    }
    Ok(out)
}

/// Reads a per-clip score file. Binary files carry no class names or grid,
/// so `vocab` and `resolution` must be supplied for them.
pub fn read_score_file(
    path: &Path,
    vocab: Option<&Arc<ClassVocabulary>>,
    resolution: f64,
    kind: ScoreKind,
) -> Result<ScoreMatrix> {
    match MatrixFormat::of_path(path) {
        Some(MatrixFormat::Tsv) => {
            let (grid, file_vocab, m) = parse_score_tsv(&read_text(path)?, path)?;
            let vocab = match vocab {
                Some(v) if **v == file_vocab => Arc::clone(v),
                Some(v) => {
                    // accept any column order as long as the class sets agree
                    let reordered = ScoreMatrix::new(grid, Arc::new(file_vocab), m, kind)?;
                    return reordered.project(Arc::clone(v));
                }
                None => Arc::new(file_vocab),
            };
            ScoreMatrix::new(grid, vocab, m, kind)
        }
        Some(MatrixFormat::Binary) => {
            let vocab = vocab.ok_or_else(|| {
                Error::Contract(format!("{}: binary score files need a vocabulary", path.display()))
            })?;
            let (m, _) = read_sedb(path)?;
            let grid = FrameGrid::new(resolution, m.nrows().max(1))?;
            ScoreMatrix::new(grid, Arc::clone(vocab), m, kind)
        }
        None => {
            Err(Error::Format { path: path.to_path_buf(), message: "unknown score file extension".into() })
        }
    }
}

/// Writes a frame-major matrix as TSV (needs grid and vocabulary) or `SEDB`.
pub fn write_matrix_file(
    path: &Path,
    values: &Array2<f64>,
    grid: &FrameGrid,
    vocab: &ClassVocabulary,
    format: MatrixFormat,
) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Tsv => format_score_tsv(values, grid, vocab).into_bytes(),
        MatrixFormat::Binary => encode_sedb(values, MatrixLayout::FrameMajor),
    };
    write_atomic(path, &bytes)
}

/// Clip durations TSV `filename duration`, used when durations differ per clip.
pub fn parse_durations(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(parse_err(path, idx + 1, fields.len() + 1, "expected 'filename\\tduration'"));
        }
        let d: f64 =
            fields[1].trim().parse().map_err(|_| parse_err(path, idx + 1, 2, "duration is not a number"))?;
        if !(d > TIME_EPS) {
            return Err(parse_err(path, idx + 1, 2, "duration must be positive"));
        }
        out.insert(clip_id_from_filename(fields[0].trim()), d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn sedb_header_is_bit_exact() {
        let bytes = encode_sedb(&array![[1.0, 2.0]], MatrixLayout::FrameMajor);
        assert_eq!(&bytes[..4], b"SEDB");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn sedb_rejects_garbage() {
        let p = Path::new("x.sedb");
        assert!(decode_sedb(b"NOPE0000000000000000", p).is_err());
        let mut b = encode_sedb(&array![[1.0]], MatrixLayout::FrameMajor);
        b.pop();
        assert!(decode_sedb(&b, p).is_err());
    }

    #[test]
    fn spectrogram_layout_tag() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let b = encode_sedb(&m, MatrixLayout::FrequencyMajor);
        let (back, layout) = decode_sedb(&b, Path::new("s.sedb")).unwrap();
        assert_eq!(layout, MatrixLayout::FrequencyMajor);
        assert_eq!(back, m);
    }

    #[test]
    fn events_tsv_with_extra_columns() {
        let text = "filename\tconfidence\tonset\toffset\tevent_label\n\
                    clipA.wav\t1\t0.5\t1.5\tdog\n\
                    \n\
                    clipB.wav\t1\t0\t2\tcat\n";
        let rows = parse_event_rows(text, Path::new("e.tsv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].clip_id, "clipA");
        assert_eq!(rows[1].label, "cat");
        assert_eq!(rows[1].line, 4);
    }

    #[test]
    fn events_tsv_errors_locate_problem() {
        let text = "filename\tonset\toffset\tevent_label\na.wav\t-1\t2\tdog\n";
        match parse_event_rows(text, Path::new("e.tsv")) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        let text = "filename\tonset\toffset\tevent_label\na.wav\t1\tx\tdog\n";
        match parse_event_rows(text, Path::new("e.tsv")) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_label_names_class() {
        let rows =
            parse_event_rows("filename\tonset\toffset\tevent_label\na\t0\t1\tzebra\n", Path::new("e.tsv"))
                .unwrap();
        let vocab = ClassVocabulary::new(["dog"]).unwrap();
        let err = events_by_clip(&rows, &vocab, UnknownLabels::Reject, Path::new("e.tsv")).unwrap_err();
        assert!(err.to_string().contains("zebra"));
        assert!(events_by_clip(&rows, &vocab, UnknownLabels::Skip, Path::new("e.tsv")).unwrap().is_empty());
    }

    #[test]
    fn score_tsv_parse() {
        let vocab = ClassVocabulary::new(["a", "b"]).unwrap();
        let grid = FrameGrid::new(0.04, 3).unwrap();
        let m = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]];
        let text = format_score_tsv(&m, &grid, &vocab);
        assert!(text.starts_with("onset\toffset\ta\tb\n0\t0.04\t0.1\t0.2\n"));
        let (g, v, back) = parse_score_tsv(&text, Path::new("s.tsv")).unwrap();
        assert_eq!(v, vocab);
        assert_eq!(g.num_frames(), 3);
        assert_eq!(back, m);
        assert!(parse_score_tsv("onset\toffset\ta\n0\t0.04\n", Path::new("s.tsv")).is_err());
    }

    proptest! {
        #[test]
        fn sedb_round_trip_is_f32_exact(vals in proptest::collection::vec(-1e6f32..1e6, 1..64), cols in 1usize..4) {
            let rows = vals.len() / cols;
            prop_assume!(rows > 0);
            let m = Array2::from_shape_fn((rows, cols), |(r, c)| vals[r * cols + c] as f64);
            let (back, _) = decode_sedb(&encode_sedb(&m, MatrixLayout::FrameMajor), Path::new("p")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
