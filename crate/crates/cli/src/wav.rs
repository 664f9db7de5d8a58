//! 16-bit PCM mono WAV at 16 kHz, the only format the pipeline accepts.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use epoch_emotion::signal::DEFAULT_SAMPLE_RATE;
use epoch_emotion::Waveform;

const PCM: u16 = 1;
const EXTENSIBLE: u16 = 0xfffe;

pub fn read_wav<R: Read>(mut r: R) -> Result<Waveform> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    ensure!(bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WAVE", "not a RIFF/WAVE file");
    let mut pos = 12;
    let mut format = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        let end = body.checked_add(len).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.context("truncated fmt chunk")?;
                ensure!(len >= 16, "fmt chunk too short");
                format = Some(&bytes[body..end]);
            }
            // Some writers leave the data length unset; take what is there.
            b"data" => data = Some(&bytes[body..end.unwrap_or(bytes.len())]),
            _ => {}
        }
        if end.is_none() {
            break;
        }
        pos = body + len + (len & 1);
    }
    let fmt = format.context("missing fmt chunk")?;
    let data = data.context("missing data chunk")?;
    let u16_at = |i: usize| u16::from_le_bytes([fmt[i], fmt[i + 1]]);
    let tag = u16_at(0);
    let channels = u16_at(2);
    let rate = u32::from_le_bytes(fmt[4..8].try_into().unwrap());
    let bits = u16_at(14);
    if tag != PCM && tag != EXTENSIBLE {
        bail!("unsupported WAV encoding (format tag {tag}); only 16-bit PCM is read");
    }
    if channels != 1 {
        bail!("{channels}-channel WAV rejected; convert to mono first");
    }
    if rate != DEFAULT_SAMPLE_RATE {
        bail!("{rate} Hz WAV rejected; resample to {DEFAULT_SAMPLE_RATE} Hz first");
    }
    if bits != 16 {
        bail!("{bits}-bit WAV rejected; only 16-bit PCM is read");
    }
    let samples = data.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0).collect();
    Ok(Waveform::new(samples, rate)?)
}

/// Samples are clipped to [-1, 1] and rounded to 16 bits.
pub fn write_wav<W: Write>(w: &Waveform, mut out: W) -> Result<()> {
    let n = w.len();
    let data_len = u32::try_from(2 * n).context("signal too long for WAV")?;
    let rate = w.sample_rate();
    let mut buf = Vec::with_capacity(44 + 2 * n);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVEfmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&PCM.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes());
    buf.extend_from_slice(&rate.to_le_bytes());
    buf.extend_from_slice(&(rate * 2).to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes());
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_wav_file(path: &Path) -> Result<Waveform> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_wav(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn write_wav_file(w: &Waveform, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_wav(w, std::io::BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))
}
