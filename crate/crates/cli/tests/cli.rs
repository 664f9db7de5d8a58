use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use epoch_emotion::features::read_epfm_file;
use epoch_emotion::FeatureMatrix;
use epoch_emotion_cli::config::{PipelineConfig, CONFIG_ENV};
use epoch_emotion_cli::wav::{read_wav_file, write_wav};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_epoch-emotion"));
    c.env_remove(CONFIG_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const DESK: [&str; 2] = ["--classifier.mlp.hidden", "[64, 64]"];

/// Four speakers with one utterance per emotion, extracted once.
fn corpus() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        let wav = d.path().join("wav");
        ok(&["synth", "--corpus", s(&wav), "--corpus.per-emotion", "1", "--corpus.duration-s", "0.6"]);
        ok(&["extract", s(&wav.join("manifest.csv")), "--out", s(&d.path().join("feat"))]);
        d
    })
    .path()
}

fn manifest(set: &str) -> PathBuf {
    corpus().join("feat").join(format!("manifest.{set}.csv"))
}

#[test]
fn synth_constant_counts_gcis() {
    let d = tempfile::tempdir().unwrap();
    let wav = d.path().join("a.wav");
    ok(&["synth", "--out", s(&wav), "--f0", "100", "--duration", "1.0", "--seed", "3"]);
    let rows = read_csv(&d.path().join("a.gci.csv"));
    assert_eq!(rows[0], ["sample_index", "time_sec", "f0_hz"]);
    assert!((rows.len() - 1).abs_diff(100) <= 1, "{} GCIs", rows.len() - 1);
    assert!(read_wav_file(&wav).unwrap().len() >= 16_000);
}

#[test]
fn synth_is_byte_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.wav"), d.path().join("b.wav"));
    for p in [&a, &b] {
        ok(&["synth", "--out", s(p), "--preset", "angry", "--seed", "9", "--duration", "0.5"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn angry_preset_median_f0_in_range() {
    let d = tempfile::tempdir().unwrap();
    let wav = d.path().join("angry.wav");
    ok(&["synth", "--out", s(&wav), "--preset", "angry", "--seed", "4"]);
    let mut f0: Vec<f64> = read_csv(&d.path().join("angry.gci.csv"))[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    f0.sort_by(f64::total_cmp);
    let median = f0[f0.len() / 2];
    assert!((250.0..=400.0).contains(&median), "{median}");
}

#[test]
fn synth_spec_file_and_bad_preset() {
    let d = tempfile::tempdir().unwrap();
    let spec = d.path().join("spec.toml");
    std::fs::write(&spec, "f0-start-hz = 180.0\nf0-end-hz = 180.0\nduration-s = 0.3\nseed = 2\n").unwrap();
    ok(&["synth", "--out", s(&d.path().join("x.wav")), "--spec", s(&spec)]);
    std::fs::write(&spec, "f0-start-hz = 180.0\nbogus = 1\n").unwrap();
    assert!(!run(&["synth", "--out", s(&d.path().join("y.wav")), "--spec", s(&spec)]).status.success());
    let out = run(&["synth", "--out", s(&d.path().join("z.wav")), "--preset", "bored"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bored"));
}

#[test]
fn extract_writes_all_views_on_one_grid() {
    let d = tempfile::tempdir().unwrap();
    let wav = d.path().join("v.wav");
    ok(&["synth", "--out", s(&wav), "--f0", "140", "--duration", "0.5"]);
    let out = d.path().join("out");
    ok(&["extract", s(&wav), "--out", s(&out), "--plots"]);
    let frames: Vec<usize> = ["mfcc39", "epoch30", "combined69"]
        .iter()
        .map(|k| read_epfm_file::<f64>(&out.join(format!("v.{k}.epfm"))).unwrap().frames())
        .collect();
    assert!(frames[0] > 0 && frames.iter().all(|&f| f == frames[0]), "{frames:?}");
    let csv = read_csv(&out.join("v.combined69.csv"));
    assert_eq!(csv.len(), frames[0] + 1);
    assert_eq!(csv[0].len(), 69);
    assert_eq!(read_csv(&out.join("v.epochs.csv"))[0], ["sample_index", "time_sec", "strength"]);
    assert!(read_csv(&out.join("v.epochs.csv")).len() > 50);
    assert_eq!(read_csv(&out.join("v.vad.csv"))[0], ["start_sample", "end_sample", "start_sec", "end_sec"]);
    for plot in ["sph", "evidence", "pitch"] {
        let rows = read_csv(&out.join(format!("v.{plot}.csv")));
        assert_eq!(rows[0], ["x", "y"]);
        assert!(rows.len() > 2, "{plot}");
    }
}

#[test]
fn extract_rejects_stereo_and_continues() {
    let d = tempfile::tempdir().unwrap();
    let input = d.path().join("in");
    std::fs::create_dir(&input).unwrap();
    ok(&["synth", "--out", s(&input.join("good.wav")), "--duration", "0.4"]);
    let mut stereo = Vec::new();
    write_wav(&epoch_emotion::Waveform::new(vec![0.0; 64], 16_000).unwrap(), &mut stereo).unwrap();
    stereo[22] = 2;
    std::fs::write(input.join("bad.wav"), stereo).unwrap();
    let out = run(&["extract", s(&input), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.wav") && err.contains("mono"), "{err}");
    let line = err.lines().find(|l| l.contains("bad.wav")).unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["level"], "error");
    assert!(d.path().join("o/good.combined69.epfm").exists());
}

#[test]
fn extract_empty_directory_warns() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["extract", s(d.path()), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn train_then_self_evaluate() {
    let d = tempfile::tempdir().unwrap();
    let model = d.path().join("m.emhm");
    let m = manifest("combined69");
    let mut args = vec!["train", "--manifest", s(&m), "--model", s(&model)];
    args.extend(DESK);
    ok(&args);
    let log = read_csv(&PathBuf::from(format!("{}.log.csv", model.display())));
    assert_eq!(log[0][0], "stage");
    assert!(log.iter().any(|r| r[0] == "gmm") && log.iter().filter(|r| r[0] == "mlp").count() == 45);

    let out = d.path().join("eval");
    ok(&["eval", "--manifest", s(&m), "--model", s(&model), "--out", s(&out)]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(out.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[0]["kind"], "utterance");
    assert_eq!(lines[0]["logliks"].as_object().unwrap().len(), 4);
    let summary = &lines[16];
    assert_eq!(summary["kind"], "summary");
    assert!(summary["wa"].as_f64().unwrap() >= 90.0, "{summary}");

    let conf = read_csv(&out.join("confusion.csv"));
    assert_eq!(conf[0], ["truth", "angry", "happy", "neutral", "sad"]);
    for row in &conf[1..] {
        let sum: f64 = row[1..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 100.0).abs() < 0.1, "{row:?}");
    }

    let wrong = run(&["eval", "--manifest", s(&manifest("mfcc39")), "--model", s(&model), "--out", s(&out)]);
    assert!(!wrong.status.success());
    let err = String::from_utf8_lossy(&wrong.stderr);
    assert!(err.contains("69") && err.contains("39"), "{err}");
}

#[test]
fn train_names_missing_file_and_class() {
    let d = tempfile::tempdir().unwrap();
    let m = d.path().join("m.csv");
    std::fs::write(&m, "path,emotion,speaker\nnowhere.epfm,angry,s1\n").unwrap();
    let out = run(&["train", "--manifest", s(&m), "--model", s(&d.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.epfm"));

    let feat = corpus().join("feat");
    let rows: Vec<String> = read_csv(&manifest("epoch30"))[1..]
        .iter()
        .filter(|r| r[1] != "happy")
        .map(|r| format!("{},{},{}", feat.join(&r[0]).display(), r[1], r[2]))
        .collect();
    std::fs::write(&m, format!("path,emotion,speaker\n{}\n", rows.join("\n"))).unwrap();
    let out = run(&["train", "--manifest", s(&m), "--model", s(&d.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("happy"));
}

#[test]
fn eval_rejects_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    let m = d.path().join("m.csv");
    std::fs::write(&m, "path,emotion,speaker\n").unwrap();
    let out = run(&["eval", "--manifest", s(&m), "--model", s(&d.path().join("x")), "--out", s(d.path())]);
    assert!(!out.status.success());
}

#[test]
fn xval_writes_one_row_per_speaker() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("xv");
    ok(&["xval", "--manifest", s(&manifest("epoch30")), "--out", s(&out), "--classifier.backend", "gmm"]);
    let rows = read_csv(&out.join("folds.csv"));
    assert_eq!(rows[0], ["speaker", "test_utterances", "train_utterances", "decoded", "wa", "uwa"]);
    let folds: Vec<&Vec<String>> = rows[1..].iter().filter(|r| r[0].starts_with("spk")).collect();
    assert_eq!(folds.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["spk1", "spk2", "spk3", "spk4"]);
    for r in &folds {
        assert_eq!((r[1].as_str(), r[2].as_str()), ("4", "12"));
    }
    let mean = rows.iter().find(|r| r[0] == "mean").unwrap();
    for col in [4, 5] {
        let avg = folds.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 4.0;
        assert!((mean[col].parse::<f64>().unwrap() - avg).abs() < 1e-9);
    }
}

#[test]
fn xval_needs_two_speakers() {
    let d = tempfile::tempdir().unwrap();
    let m = d.path().join("one.csv");
    let feat = corpus().join("feat");
    let rows: Vec<String> = read_csv(&manifest("epoch30"))[1..]
        .iter()
        .map(|r| format!("{},{},solo", feat.join(&r[0]).display(), r[1]))
        .collect();
    std::fs::write(&m, format!("path,emotion,speaker\n{}\n", rows.join("\n"))).unwrap();
    let out = run(&["xval", "--manifest", s(&m), "--out", s(d.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("speaker"));
}

#[test]
fn dump_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let first = ok(&["dump-config", "--classifier.lda-dim", "40", "--jobs", "2"]);
    let cfg = PipelineConfig::from_toml(&first).unwrap();
    assert_eq!((cfg.classifier.lda_dim, cfg.jobs), (40, 2));
    let path = d.path().join("c.toml");
    std::fs::write(&path, &first).unwrap();
    assert_eq!(ok(&["dump-config", "--config", s(&path)]), first);

    let env = bin().args(["dump-config"]).env(CONFIG_ENV, &path).output().unwrap();
    assert_eq!(String::from_utf8(env.stdout).unwrap(), first);
}

#[test]
fn bad_config_exits_with_usage_code() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("c.toml");
    std::fs::write(&path, "colour = \"blue\"\n").unwrap();
    assert_eq!(run(&["dump-config", "--config", s(&path)]).status.code(), Some(2));
    assert_eq!(run(&["dump-config", "--jobs", "0"]).status.code(), Some(2));
    assert_eq!(run(&["dump-config", "--classifier.lda-dim", "many"]).status.code(), Some(2));
}

#[test]
fn feature_files_read_back() {
    let feat = corpus().join("feat");
    let rows = read_csv(&manifest("mfcc39"));
    assert_eq!(rows.len(), 17);
    let m: FeatureMatrix = read_epfm_file(&feat.join(&rows[1][0])).unwrap();
    assert_eq!(m.dims(), 39);
}
