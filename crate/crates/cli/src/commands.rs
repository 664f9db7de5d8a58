use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use epoch_emotion::classifier::{
    cross_validate, evaluate, read_model_file, train_model, write_model_file, Decoded, TrainLog, Utterance,
};
use epoch_emotion::extract::{extract as extract_features, UtteranceFeatures};
use epoch_emotion::features::{read_epfm_file, write_epfm_file, write_matrix_csv};
use epoch_emotion::synth::{emotion_corpus, synthesize, ContourShape, EmotionPreset, SyntheticSpec};
use epoch_emotion::{FeatureMatrix, Waveform};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::{DumpConfigArgs, EvalArgs, ExtractArgs, SynthArgs, TrainArgs, XvalArgs};
use crate::config::PipelineConfig;
use crate::manifest::{self, Entry};
use crate::wav::{read_wav_file, write_wav_file};
use crate::{report, Outcome};

pub const FEATURE_SETS: [&str; 3] = ["mfcc39", "epoch30", "combined69"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

/// `a/b.wav` -> `a/b.gci.csv`
pub fn gci_path(wav: &Path) -> PathBuf {
    wav.with_extension("gci.csv")
}

// ---------------------------------------------------------------- synth

pub fn synth(a: &SynthArgs, cfg: &PipelineConfig) -> Result<Outcome> {
    if let Some(dir) = &a.corpus {
        return synth_corpus(dir, cfg);
    }
    let out = a.out.as_ref().context("--out is required without --corpus")?;
    write_synthesized(&single_spec(a)?, out)?;
    Ok(Outcome { processed: 1, failures: 0 })
}

fn single_spec(a: &SynthArgs) -> Result<SyntheticSpec> {
    let duration = a.duration.unwrap_or(1.0);
    let seed = a.seed.unwrap_or(0);
    let mut spec = if let Some(p) = &a.spec {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
    } else if let Some(name) = &a.preset {
        let preset = EmotionPreset::parse(name)
            .with_context(|| format!("unknown preset `{name}` (angry, happy, neutral, sad)"))?;
        SyntheticSpec::emotion(preset, duration, seed)
    } else {
        SyntheticSpec::constant(120.0, duration, seed)
    };
    if let Some(f) = a.f0 {
        spec.f0_start_hz = f;
        spec.f0_end_hz = a.f0_end.unwrap_or(f);
        spec.contour = if a.f0_end.is_some() { ContourShape::Linear } else { ContourShape::Constant };
    }
    if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(j) = a.jitter_pct {
        spec.jitter_pct = j;
    }
    if let Some(s) = a.shimmer_pct {
        spec.shimmer_pct = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_synthesized(spec: &SyntheticSpec, wav: &Path) -> Result<()> {
    let s = synthesize::<f64>(spec)?;
    write_wav_file(&s.waveform, wav)?;
    let fs = s.waveform.sample_rate() as f64;
    let path = gci_path(wav);
    let mut w = create(&path)?;
    writeln!(w, "sample_index,time_sec,f0_hz")?;
    for (&g, f0) in s.gcis.iter().zip(&s.f0_at_gci) {
        writeln!(w, "{g},{},{f0}", g as f64 / fs)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn synth_corpus(dir: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    create_dir(dir)?;
    let c = &cfg.corpus;
    let corpus = emotion_corpus(c.speakers, c.per_emotion, c.duration_s, c.seed);
    let entries: Vec<Entry> = corpus
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = i % c.per_emotion + 1;
            let path = dir.join(format!("{}_{}_{k:02}.wav", e.speaker, e.preset.name()));
            Entry { path, emotion: e.preset.name().to_string(), speaker: e.speaker.clone() }
        })
        .collect();
    corpus.par_iter().zip(&entries).try_for_each(|(c, e)| write_synthesized(&c.spec, &e.path))?;
    manifest::write_file(&entries, &dir.join("manifest.csv"))?;
    log::info!("wrote {} utterances to {}", entries.len(), dir.display());
    Ok(Outcome { processed: entries.len(), failures: 0 })
}

// ---------------------------------------------------------------- extract

struct Job {
    wav: PathBuf,
    stem: String,
    label: Option<(String, String)>,
}

fn extract_jobs(input: &Path) -> Result<(Vec<Job>, bool)> {
    let is_wav = |p: &Path| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let (list, from_manifest): (Vec<(PathBuf, Option<(String, String)>)>, bool) = if input.is_dir() {
        let mut wavs: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_wav(p))
            .collect();
        wavs.sort();
        (wavs.into_iter().map(|p| (p, None)).collect(), false)
    } else if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let entries = manifest::read(input)?;
        (entries.into_iter().map(|e| (e.path, Some((e.emotion, e.speaker)))).collect(), true)
    } else {
        (vec![(input.to_path_buf(), None)], false)
    };
    let mut seen = std::collections::BTreeMap::new();
    let mut jobs = Vec::with_capacity(list.len());
    for (wav, label) in list {
        let stem = wav.file_stem().and_then(|s| s.to_str()).with_context(|| format!("bad file name {}", wav.display()))?;
        if let Some(prev) = seen.insert(stem.to_string(), wav.clone()) {
            bail!("{} and {} would write the same outputs", prev.display(), wav.display());
        }
        jobs.push(Job { stem: stem.to_string(), wav, label });
    }
    Ok((jobs, from_manifest))
}

pub fn extract(a: &ExtractArgs, cfg: &PipelineConfig) -> Result<Outcome> {
    let (jobs, from_manifest) = extract_jobs(&a.input)?;
    if jobs.is_empty() {
        report::warning(&format!("no WAV files under {}", a.input.display()));
        return Ok(Outcome::default());
    }
    create_dir(&a.out)?;
    let results: Vec<Result<()>> = jobs
        .par_iter()
        .map(|j| {
            let w = read_wav_file(&j.wav)?;
            let f = extract_features(&w, &cfg.extract).with_context(|| format!("analysing {}", j.wav.display()))?;
            write_utterance(&a.out, &j.stem, &w, &f, a.plots)
        })
        .collect();
    let mut failures = 0;
    for (j, r) in jobs.iter().zip(&results) {
        if let Err(e) = r {
            report::item_error(&j.wav, e);
            failures += 1;
        }
    }
    if from_manifest {
        for set in FEATURE_SETS {
            let entries: Vec<Entry> = jobs
                .iter()
                .zip(&results)
                .filter(|(_, r)| r.is_ok())
                .filter_map(|(j, _)| {
                    let (emotion, speaker) = j.label.clone()?;
                    Some(Entry { path: a.out.join(format!("{}.{set}.epfm", j.stem)), emotion, speaker })
                })
                .collect();
            manifest::write_file(&entries, &a.out.join(format!("manifest.{set}.csv")))?;
        }
    }
    log::info!("extracted {} of {} files", jobs.len() - failures, jobs.len());
    Ok(Outcome { processed: jobs.len(), failures })
}

fn write_utterance(out: &Path, stem: &str, w: &Waveform, f: &UtteranceFeatures<f64>, plots: bool) -> Result<()> {
    let fs = w.sample_rate() as f64;
    for (set, m) in FEATURE_SETS.iter().zip([&f.mfcc39, &f.epoch30, &f.combined69]) {
        write_epfm_file(m, &out.join(format!("{stem}.{set}.epfm")))?;
        write_matrix_csv(m, create(&out.join(format!("{stem}.{set}.csv")))?)?;
    }

    let mut e = create(&out.join(format!("{stem}.epochs.csv")))?;
    writeln!(e, "sample_index,time_sec,strength")?;
    for a in &f.analyses {
        for (&loc, s) in a.train.locations.iter().zip(&a.train.strengths) {
            writeln!(e, "{loc},{},{s}", loc as f64 / fs)?;
        }
    }
    e.flush()?;

    let mut v = create(&out.join(format!("{stem}.vad.csv")))?;
    writeln!(v, "start_sample,end_sample,start_sec,end_sec")?;
    for r in &f.regions {
        writeln!(v, "{},{},{},{}", r.start_sample, r.end_sample, r.start_sample as f64 / fs, r.end_sample as f64 / fs)?;
    }
    v.flush()?;

    if plots {
        let sph = &f.sph;
        let centre = |k: usize| (k * sph.frame_shift) as f64 / fs + sph.frame_len as f64 / (2.0 * fs);
        write_xy(&out.join(format!("{stem}.sph.csv")), sph.values.iter().enumerate().map(|(k, &y)| (centre(k), y)))?;
        let evidence = f.analyses.iter().flat_map(|a| {
            let start = a.train.region.start_sample;
            a.evidence.values.iter().enumerate().map(move |(i, &y)| ((start + i) as f64 / fs, y))
        });
        write_xy(&out.join(format!("{stem}.evidence.csv")), evidence)?;
        let pitch = f.epochs.records.iter().filter_map(|r| r.pitch_hz.map(|p| (r.location as f64 / fs, p)));
        write_xy(&out.join(format!("{stem}.pitch.csv")), pitch)?;
    }
    Ok(())
}

fn write_xy(path: &Path, points: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y")?;
    for (x, y) in points {
        writeln!(w, "{x},{y}")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- corpora

struct Corpus {
    entries: Vec<Entry>,
    features: Vec<FeatureMatrix>,
}

impl Corpus {
    fn load(path: &Path) -> Result<Self> {
        let entries = manifest::read(path)?;
        ensure!(!entries.is_empty(), "manifest {} lists no utterances", path.display());
        let features = entries.par_iter().map(|e| Ok(read_epfm_file(&e.path)?)).collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, features })
    }

    fn utterances(&self, emotions: &[String]) -> Result<Vec<Utterance<'_, f64>>> {
        self.entries
            .iter()
            .zip(&self.features)
            .map(|(e, m)| {
                let k = emotions.iter().position(|x| *x == e.emotion).with_context(|| {
                    format!("{}: emotion `{}` is not one of {}", e.path.display(), e.emotion, emotions.join(", "))
                })?;
                Ok(Utterance::new(m, k).with_speaker(&e.speaker))
            })
            .collect()
    }
}

// ---------------------------------------------------------------- train

pub fn train(a: &TrainArgs, cfg: &PipelineConfig) -> Result<Outcome> {
    let corpus = Corpus::load(&a.manifest)?;
    let utts = corpus.utterances(&cfg.classifier.emotions)?;
    let (model, log) = train_model(&utts, &cfg.classifier)?;
    write_model_file(&model, &a.model)?;
    let log_path = PathBuf::from(format!("{}.log.csv", a.model.display()));
    write_train_log(&log, &cfg.classifier.emotions, &log_path)?;
    let unaligned = log.labels.iter().filter(|l| l.is_none()).count();
    if unaligned > 0 {
        report::warning(&format!("{unaligned} utterances could not be aligned and were left out of MLP training"));
    }
    println!("trained on {} utterances -> {}", utts.len(), a.model.display());
    Ok(Outcome { processed: utts.len(), failures: 0 })
}

fn write_train_log(log: &TrainLog, emotions: &[String], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "stage,emotion,iteration,loglik,frames,learning_rate,cross_entropy,frame_accuracy")?;
    for g in &log.gmm {
        writeln!(w, "gmm,{},{},{},{},,,", emotions[g.emotion], g.iteration, g.loglik, g.frames)?;
    }
    for m in &log.mlp {
        writeln!(w, "mlp,,{},,,{},{},{}", m.epoch, m.learning_rate, m.cross_entropy, m.frame_accuracy)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- eval

pub fn eval(a: &EvalArgs, _cfg: &PipelineConfig) -> Result<Outcome> {
    let model = read_model_file(&a.model)?;
    let corpus = Corpus::load(&a.manifest)?;
    let names = model.topology.emotions().to_vec();
    let utts = corpus.utterances(&names)?;
    let decoded: Vec<epoch_emotion::Result<Decoded>> = utts.par_iter().map(|u| model.decode(u.features)).collect();

    create_dir(&a.out)?;
    let mut lines = create(&a.out.join("metrics.jsonl"))?;
    let (mut predictions, mut truths) = (Vec::new(), Vec::new());
    let mut failures = 0;
    for ((e, u), d) in corpus.entries.iter().zip(&utts).zip(decoded) {
        match d {
            Ok(d) => {
                let logliks: Map<String, Value> = names.iter().cloned().zip(d.logliks.iter().map(|&l| json!(l))).collect();
                let rec = json!({
                    "kind": "utterance",
                    "path": e.path.display().to_string(),
                    "speaker": e.speaker,
                    "truth": e.emotion,
                    "predicted": names[d.emotion],
                    "logliks": logliks,
                });
                writeln!(lines, "{rec}")?;
                predictions.push(d.emotion);
                truths.push(u.emotion);
            }
            Err(err) => {
                report::item_error(&e.path, &err.into());
                failures += 1;
            }
        }
    }
    ensure!(!truths.is_empty(), "no utterance in {} could be decoded", a.manifest.display());
    let m = evaluate(&predictions, &truths, names.len())?;
    let recalls: Map<String, Value> = names.iter().cloned().zip(m.recalls.iter().map(|r| json!(r))).collect();
    let summary = json!({
        "kind": "summary",
        "utterances": utts.len(),
        "decoded": truths.len(),
        "wa": m.wa,
        "uwa": m.uwa,
        "recalls": recalls,
    });
    writeln!(lines, "{summary}")?;
    lines.flush()?;

    let mut c = create(&a.out.join("confusion.csv"))?;
    writeln!(c, "truth,{}", names.join(","))?;
    for (name, row) in names.iter().zip(&m.confusion) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(c, "{name},{}", cells.join(","))?;
    }
    c.flush()?;
    println!("WA {:.2}%  UWA {:.2}%  ({} utterances)", m.wa, m.uwa, truths.len());
    Ok(Outcome { processed: utts.len(), failures })
}

// ---------------------------------------------------------------- xval

pub fn xval(a: &XvalArgs, cfg: &PipelineConfig) -> Result<Outcome> {
    let corpus = Corpus::load(&a.manifest)?;
    let utts = corpus.utterances(&cfg.classifier.emotions)?;
    let cv = cross_validate(&utts, &cfg.classifier)?;
    create_dir(&a.out)?;
    let mut w = create(&a.out.join("folds.csv"))?;
    writeln!(w, "speaker,test_utterances,train_utterances,decoded,wa,uwa")?;
    for f in &cv.folds {
        writeln!(w, "{},{},{},{},{},{}", f.speaker, f.test.len(), f.train_count, f.metrics.total, f.metrics.wa, f.metrics.uwa)?;
        println!("{:<12} WA {:6.2}%  UWA {:6.2}%", f.speaker, f.metrics.wa, f.metrics.uwa);
    }
    writeln!(w, "mean,,,,{},{}", cv.mean_wa, cv.mean_uwa)?;
    writeln!(w, "std,,,,{},{}", cv.std_wa, cv.std_uwa)?;
    w.flush()?;
    println!("{:<12} WA {:6.2}%  UWA {:6.2}%  (std {:.2} / {:.2})", "mean", cv.mean_wa, cv.mean_uwa, cv.std_wa, cv.std_uwa);
    let skipped: usize = cv.folds.iter().map(|f| f.test.len() - f.metrics.total).sum();
    Ok(Outcome { processed: utts.len(), failures: skipped })
}

// ---------------------------------------------------------------- dump-config

pub fn dump_config(a: &DumpConfigArgs, cfg: &PipelineConfig) -> Result<Outcome> {
    let text = cfg.to_toml()?;
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(Outcome { processed: 1, failures: 0 })
}
