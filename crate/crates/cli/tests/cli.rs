mod support;

use std::fs;
use std::path::{Path, PathBuf};

use framesed::io::{self, MatrixLayout};
use framesed::timeline::sigmoid;
use ndarray::Array2;
use sha2::{Digest, Sha256};
use support::{framesed, framesed_ok, p};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/psds").join(name)
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_vocab(dir: &Path) -> PathBuf {
    let path = dir.join("vocab.txt");
    fs::write(&path, "dog\ncat\n").unwrap();
    path
}

#[test]
fn bundled_fixture_matches_frozen_oracle() {
    let expected: f64 = fs::read_to_string(fixture("expected_psds.txt")).unwrap().trim().parse().unwrap();
    let out = framesed_ok(&[
        "eval-psds",
        "--scores",
        p(&fixture("scores")),
        "--gt",
        p(&fixture("gt.tsv")),
        "--alpha-st",
        "0",
    ]);
    let report = json(&out);
    let got = report["psds"].as_f64().unwrap();
    assert!((got - expected).abs() <= 1e-12, "psds {got}, frozen {expected}");
    assert_eq!(report["num_clips"], 8);
    assert_eq!(report["classes"].as_array().unwrap().len(), 3);
    assert!(report["classes"][0]["staircase"].as_array().is_some());
}

#[test]
fn class_subset_skips_labels_outside_it() {
    let tmp = tempfile::tempdir().unwrap();
    let subset = tmp.path().join("subset.txt");
    fs::write(&subset, "speech\nalarm\n").unwrap();
    let out = framesed_ok(&[
        "eval-psds",
        "--scores",
        p(&fixture("scores")),
        "--gt",
        p(&fixture("gt.tsv")),
        "--classes",
        p(&subset),
    ]);
    let report = json(&out);
    let names: Vec<&str> =
        report["classes"].as_array().unwrap().iter().map(|c| c["class_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["speech", "alarm"]);

    // without a subset, ground-truth labels must exist in the score files
    let gt = tmp.path().join("gt.tsv");
    let mut text = fs::read_to_string(fixture("gt.tsv")).unwrap();
    text.push_str("clip0.wav\t1\t2\tcow\n");
    fs::write(&gt, text).unwrap();
    let out = framesed(&["eval-psds", "--scores", p(&fixture("scores")), "--gt", p(&gt)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("'cow'"), "{}", stderr(&out));
}

#[test]
fn report_file_and_manifest_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("psds.json");
    let out = framesed_ok(&[
        "eval-psds",
        "--scores",
        p(&fixture("scores")),
        "--gt",
        p(&fixture("gt.tsv")),
        "--report",
        p(&report),
    ]);
    assert_eq!(fs::read(&report).unwrap(), out.stdout);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("psds.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "eval-psds");
    assert_eq!(manifest["parameters"]["dtc"], 0.7);
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["wall_time_ms"].is_u64());
    let gt_bytes = fs::read(fixture("gt.tsv")).unwrap();
    let digest: String = Sha256::digest(&gt_bytes).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["input_digests"][p(&fixture("gt.tsv"))], digest);
}

#[test]
fn unknown_class_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = write_vocab(tmp.path());
    let events = tmp.path().join("events.tsv");
    fs::write(&events, "filename\tonset\toffset\tevent_label\na.wav\t0\t1\tdog\na.wav\t1\t2\tzebra\n")
        .unwrap();
    let out = framesed(&[
        "rasterize",
        "--events",
        p(&events),
        "--vocab",
        p(&vocab),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("'zebra'"), "{}", stderr(&out));
}

#[test]
fn malformed_row_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = write_vocab(tmp.path());
    let events = tmp.path().join("events.tsv");
    fs::write(&events, "filename\tonset\toffset\tevent_label\na.wav\t0\t1\tdog\na.wav\t1\tsoon\tcat\n")
        .unwrap();
    let out = framesed(&[
        "rasterize",
        "--events",
        p(&events),
        "--vocab",
        p(&vocab),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("events.tsv:3:3"), "{msg}");
}

#[test]
fn missing_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = write_vocab(tmp.path());
    let out = framesed(&[
        "rasterize",
        "--events",
        p(&tmp.path().join("absent.tsv")),
        "--vocab",
        p(&vocab),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn conflicting_flags_are_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = framesed(&[
        "rasterize",
        "--events",
        "e.tsv",
        "--vocab",
        "v.txt",
        "--clip-duration",
        "10",
        "--durations",
        "d.tsv",
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot be used with"));
    assert!(!tmp.path().join("t").exists());
}

#[test]
fn rasterize_writes_one_target_file_per_clip() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = write_vocab(tmp.path());
    let events = tmp.path().join("events.tsv");
    fs::write(&events, "filename\tonset\toffset\tevent_label\nb.wav\t0.1\t0.2\tcat\na.wav\t0\t1\tdog\n")
        .unwrap();
    let out_dir = tmp.path().join("targets");
    framesed_ok(&[
        "rasterize",
        "--events",
        p(&events),
        "--vocab",
        p(&vocab),
        "--resolution",
        "0.04",
        "--clip-duration",
        "10",
        "--format",
        "binary",
        "--out",
        p(&out_dir),
    ]);
    let (m, layout) = io::read_sedb(&out_dir.join("b.sedb")).unwrap();
    assert_eq!(layout, MatrixLayout::FrameMajor);
    assert_eq!(m.dim(), (250, 2));
    let active: Vec<usize> = (0..250).filter(|&t| m[[t, 1]] == 1.0).collect();
    assert_eq!(active, [2, 3, 4]);
    assert_eq!(
        fs::read_to_string(out_dir.join("manifest.tsv")).unwrap(),
        "clip_id\tframes\na\t250\nb\t250\n"
    );
    assert!(out_dir.join("run_manifest.json").is_file());
}

#[test]
fn empty_inputs_give_empty_outputs_with_warnings() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let vocab = write_vocab(d);
    let events = d.join("events.tsv");
    fs::write(&events, "filename\tonset\toffset\tevent_label\n").unwrap();

    let out =
        framesed_ok(&["rasterize", "--events", p(&events), "--vocab", p(&vocab), "--out", p(&d.join("t"))]);
    assert!(stderr(&out).contains("warning"));
    assert_eq!(fs::read_to_string(d.join("t/manifest.tsv")).unwrap(), "clip_id\tframes\n");

    let out =
        framesed_ok(&["weights", "--events", p(&events), "--vocab", p(&vocab), "--out", p(&d.join("w.tsv"))]);
    assert!(stderr(&out).contains("warning"));
    let out =
        framesed_ok(&["sample", "--weights", p(&d.join("w.tsv")), "--n", "10", "--out", p(&d.join("s.txt"))]);
    assert!(stderr(&out).contains("warning"));
    assert_eq!(fs::read_to_string(d.join("s.txt")).unwrap(), "");

    fs::create_dir(d.join("scores")).unwrap();
    let out = framesed_ok(&["eval-psds", "--scores", p(&d.join("scores")), "--gt", p(&events)]);
    assert!(stderr(&out).contains("warning"));
    assert!(json(&out)["psds"].is_null());
    let out = framesed_ok(&["postprocess", "--scores", p(&d.join("scores")), "--out", p(&d.join("post"))]);
    assert!(stderr(&out).contains("warning"));
    let out = framesed_ok(&["resample", "--input", p(&d.join("scores")), "--out", p(&d.join("res"))]);
    assert!(stderr(&out).contains("warning"));
    let out =
        framesed_ok(&["distill-targets", "--members", p(&d.join("scores")), "--out", p(&d.join("soft"))]);
    assert!(stderr(&out).contains("warning"));
    let out = framesed_ok(&["eval-onset-f", "--pred", p(&events), "--gt", p(&events)]);
    assert!(stderr(&out).contains("warning"));
    assert_eq!(json(&out)["tp"], 0);
}

#[test]
fn distill_targets_average_member_logits() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = Array2::from_shape_vec((2, 2), vec![0.0, 2.0, -4.0, 1.0]).unwrap();
    let b = Array2::from_shape_vec((2, 2), vec![2.0, 0.0, 4.0, -1.0]).unwrap();
    for (dir, m) in [("m1", &a), ("m2", &b)] {
        fs::create_dir(d.join(dir)).unwrap();
        fs::write(d.join(dir).join("x.sedb"), io::encode_sedb(m, MatrixLayout::FrameMajor)).unwrap();
    }
    fs::create_dir(d.join("m3")).unwrap();
    fs::write(d.join("m3").join("y.sedb"), io::encode_sedb(&a, MatrixLayout::FrameMajor)).unwrap();
    framesed_ok(&[
        "distill-targets",
        "--members",
        p(&d.join("m1")),
        p(&d.join("m2")),
        p(&d.join("m3")),
        "--out",
        p(&d.join("soft")),
    ]);
    assert_eq!(fs::read_to_string(d.join("soft/manifest.tsv")).unwrap(), "clip_id\tn_members\nx\t2\ny\t1\n");
    let (soft, _) = io::read_sedb(&d.join("soft/x.sedb")).unwrap();
    for (got, want) in soft.iter().zip([1.0, 1.0, 0.0, 0.0]) {
        assert!((got - sigmoid(want)).abs() < 1e-6, "{got} vs sigmoid({want})");
    }
}

#[test]
fn augment_writes_frequency_major_spectrogram() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = Array2::from_shape_fn((40, 30), |(f, t)| -((f * t) as f64) / 10.0);
    fs::write(d.join("s.sedb"), io::encode_sedb(&spec, MatrixLayout::FrequencyMajor)).unwrap();
    let out = framesed_ok(&[
        "augment",
        "--input",
        p(&d.join("s.sedb")),
        "--seed",
        "1",
        "--out",
        p(&d.join("o.sedb")),
    ]);
    let (m, layout) = io::read_sedb(&d.join("o.sedb")).unwrap();
    assert_eq!(layout, MatrixLayout::FrequencyMajor);
    assert_eq!(m.dim(), (40, 30));
    let trace = json(&out);
    assert!(trace.is_object());

    // every transform off: output equals input up to f32 storage
    framesed_ok(&[
        "augment",
        "--input",
        p(&d.join("s.sedb")),
        "--no-mixup",
        "--no-fms",
        "--no-filter",
        "--no-warp",
        "--out",
        p(&d.join("id.sedb")),
    ]);
    let (id, _) = io::read_sedb(&d.join("id.sedb")).unwrap();
    let (orig, _) = io::read_sedb(&d.join("s.sedb")).unwrap();
    assert_eq!(id, orig);
}

#[test]
fn onset_f_via_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("gt.tsv"), "filename\tonset\toffset\tevent_label\na.wav\t1.00\t2\tdog\n").unwrap();
    fs::write(d.join("pred.tsv"), "filename\tonset\toffset\tevent_label\na.wav\t1.04\t2\tdog\n").unwrap();
    let run = |tol: &str| {
        json(&framesed_ok(&[
            "eval-onset-f",
            "--pred",
            p(&d.join("pred.tsv")),
            "--gt",
            p(&d.join("gt.tsv")),
            "--tolerance",
            tol,
        ]))
    };
    assert_eq!(run("0.05")["f1"], 1.0);
    assert_eq!(run("0.03")["f1"], 0.0);
}

#[test]
fn postprocess_decodes_events_from_logits() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("logits")).unwrap();
    let mut m = Array2::from_elem((20, 2), -3.0);
    for t in 5..10 {
        m[[t, 1]] = 3.0;
    }
    m[[15, 1]] = 3.0;
    fs::write(d.join("logits/c.sedb"), io::encode_sedb(&m, MatrixLayout::FrameMajor)).unwrap();
    let vocab = write_vocab(d);
    framesed_ok(&[
        "postprocess",
        "--scores",
        p(&d.join("logits")),
        "--vocab",
        p(&vocab),
        "--logits",
        "--median-filter",
        "0.12",
        "--threshold",
        "0.5",
        "--events-out",
        p(&d.join("ev.tsv")),
        "--out",
        p(&d.join("post")),
    ]);
    // the isolated frame 15 is removed by the 3-frame median
    assert_eq!(
        fs::read_to_string(d.join("ev.tsv")).unwrap(),
        "filename\tonset\toffset\tevent_label\nc\t0.2\t0.4\tcat\n"
    );
}
