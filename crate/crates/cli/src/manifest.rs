//! Corpus manifests: header `path,emotion,speaker`, one utterance per row.
//! Relative paths resolve against the manifest's directory.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const HEADER: [&str; 3] = ["path", "emotion", "speaker"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub path: PathBuf,
    pub emotion: String,
    pub speaker: String,
}

pub fn parse<R: Read>(r: R, base: &Path) -> Result<Vec<Entry>> {
    let mut reader = csv::ReaderBuilder::new().quoting(false).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        bail!("manifest header must be `{}`, found `{}`", HEADER.join(","), header.join(","));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("manifest line {line}: expected 3 fields (paths may not contain commas)"))?;
        let (path, emotion, speaker) = (&row[0], &row[1], &row[2]);
        if path.is_empty() || emotion.is_empty() || speaker.is_empty() {
            bail!("manifest line {line}: empty field");
        }
        let p = Path::new(path);
        let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        out.push(Entry { path, emotion: emotion.to_string(), speaker: speaker.to_string() });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(f, base).with_context(|| format!("reading manifest {}", path.display()))
}

/// Paths are written relative to `base` when they live under it.
pub fn write<W: Write>(entries: &[Entry], base: &Path, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(w);
    out.write_record(HEADER)?;
    for e in entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        let s = p.to_str().with_context(|| format!("non UTF-8 path {}", p.display()))?;
        if s.contains(',') || e.emotion.contains(',') || e.speaker.contains(',') {
            bail!("manifest fields may not contain commas: {s}");
        }
        out.write_record([s, &e.emotion, &e.speaker])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_file(entries: &[Entry], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    write(entries, base, f)
}
