//! `EMHM` model files.
//!
//! Layout (all integers u32 and all reals f64, little-endian):
//! magic `EMHM`, version, then the sections in order
//!
//! * topology: emotion count, states, each label as byte length + UTF-8,
//!   one `states x states` transition matrix per emotion;
//! * front end: feature layout tag, input dims, splice context;
//! * CMVN: presence flag, dims, means, standard deviations;
//! * LDA: presence flag, input dim, output dim, class count, mean,
//!   matrix, eigenvalues;
//! * scorer: kind (1 GMM, 2 MLP). GMM: state count, then per state the
//!   component count, dims, weights, means, variances. MLP: layer count,
//!   sizes, per layer row-major weights and biases, then the prior count
//!   and priors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::gmm::GmmState;
use super::hmm::HmmTopology;
use super::mlp::MlpModel;
use super::model::{EmotionModel, Scorer};
use super::scoring::StatePriors;
use crate::error::{Error, Result};
use crate::features::{CmvnStats, FeatureLayout, LdaTransform};

pub const EMHM_MAGIC: &[u8; 4] = b"EMHM";
pub const EMHM_VERSION: u32 = 1;

/// Hard cap on any count read from a file, against corrupt headers.
const MAX_COUNT: u32 = 1 << 28;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("count {v} does not fit in u32")))?;
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn flag(&mut self, b: bool) -> Result<()> {
        self.u32(usize::from(b))
    }

    fn reals<'a>(&mut self, v: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for x in v {
            self.0.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    fn text(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.write_all(s.as_bytes())?;
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of model file".into()))?;
        let v = u32::from_le_bytes(b);
        if v > MAX_COUNT {
            return Err(Error::Format(format!("implausible count {v}")));
        }
        Ok(v as usize)
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u32()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("bad flag {v}"))),
        }
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n.min(1 << 20));
        let mut b = [0u8; 8];
        for _ in 0..n {
            self.0.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of model file".into()))?;
            let v = f64::from_le_bytes(b);
            if !v.is_finite() {
                return Err(Error::Format("non-finite parameter".into()));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn text(&mut self) -> Result<String> {
        let n = self.u32()?;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of model file".into()))?;
        String::from_utf8(b).map_err(|_| Error::Format("label is not UTF-8".into()))
    }
}

pub fn write_model<W: Write>(m: &EmotionModel, w: W) -> Result<()> {
    let mut o = Out(w);
    o.0.write_all(EMHM_MAGIC)?;
    o.u32(EMHM_VERSION as usize)?;
    let t = &m.topology;
    o.u32(t.emotion_count())?;
    o.u32(t.states())?;
    for e in t.emotions() {
        o.text(e)?;
    }
    for e in 0..t.emotion_count() {
        o.reals(t.transition(e))?;
    }
    o.u32(m.layout.tag() as usize)?;
    o.u32(m.input_dims)?;
    o.u32(m.splice_context)?;
    o.flag(m.cmvn.is_some())?;
    if let Some(c) = &m.cmvn {
        o.u32(c.dims())?;
        o.reals(&c.mean)?;
        o.reals(&c.std)?;
    }
    o.flag(m.lda.is_some())?;
    if let Some(l) = &m.lda {
        o.u32(l.input_dim)?;
        o.u32(l.lda_dim)?;
        o.u32(l.class_count)?;
        o.reals(&l.mean)?;
        o.reals(&l.matrix)?;
        o.reals(&l.eigenvalues)?;
    }
    match &m.scorer {
        Scorer::Gmm(states) => {
            o.u32(1)?;
            o.u32(states.len())?;
            for g in states {
                o.u32(g.components())?;
                o.u32(g.dims())?;
                o.reals(&g.weights)?;
                for v in &g.means {
                    o.reals(v)?;
                }
                for v in &g.variances {
                    o.reals(v)?;
                }
            }
        }
        Scorer::Mlp { network, priors } => {
            o.u32(2)?;
            let sizes = network.sizes();
            o.u32(sizes.len())?;
            for s in &sizes {
                o.u32(*s)?;
            }
            for (w, b) in network.weights.iter().zip(&network.biases) {
                for r in 0..w.nrows() {
                    for c in 0..w.ncols() {
                        o.reals([&w[(r, c)]])?;
                    }
                }
                o.reals(b.iter())?;
            }
            o.u32(priors.len())?;
            o.reals(priors.values())?;
        }
    }
    o.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<EmotionModel> {
    let mut i = In(r);
    let mut magic = [0u8; 4];
    i.0.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a model header".into()))?;
    if &magic != EMHM_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected EMHM")));
    }
    let version = i.u32()?;
    if version != EMHM_VERSION as usize {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let (emotions, states) = (i.u32()?, i.u32()?);
    let names = (0..emotions).map(|_| i.text()).collect::<Result<Vec<_>>>()?;
    let mut topology = HmmTopology::new(names, states)?;
    for e in 0..emotions {
        topology.set_transition(e, i.reals(states * states)?)?;
    }
    let tag = i.u32()? as u32;
    let layout = FeatureLayout::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown layout tag {tag}")))?;
    let input_dims = i.u32()?;
    let splice_context = i.u32()?;
    let cmvn = if i.flag()? {
        let d = i.u32()?;
        Some(CmvnStats { mean: i.reals(d)?, std: i.reals(d)? })
    } else {
        None
    };
    let lda = if i.flag()? {
        let (input_dim, lda_dim, class_count) = (i.u32()?, i.u32()?, i.u32()?);
        let mean = i.reals(input_dim)?;
        let matrix = i.reals(input_dim * lda_dim)?;
        let eigenvalues = i.reals(lda_dim)?;
        Some(LdaTransform { matrix, mean, class_count, input_dim, lda_dim, eigenvalues })
    } else {
        None
    };
    let scorer = match i.u32()? {
        1 => {
            let n = i.u32()?;
            let mut gmms = Vec::with_capacity(n);
            for _ in 0..n {
                let (k, d) = (i.u32()?, i.u32()?);
                let weights = i.reals(k)?;
                let means = (0..k).map(|_| i.reals(d)).collect::<Result<Vec<_>>>()?;
                let vars = (0..k).map(|_| i.reals(d)).collect::<Result<Vec<_>>>()?;
                gmms.push(GmmState::new(weights, means, vars)?);
            }
            if n != topology.classes() {
                return Err(Error::Format(format!("{n} state models for {} labels", topology.classes())));
            }
            Scorer::Gmm(gmms)
        }
        2 => {
            let layers = i.u32()?;
            let sizes = (0..layers).map(|_| i.u32()).collect::<Result<Vec<_>>>()?;
            if sizes.len() < 2 {
                return Err(Error::Format("network needs at least two layer sizes".into()));
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for w in sizes.windows(2) {
                weights.push(DMatrix::from_row_slice(w[1], w[0], &i.reals(w[0] * w[1])?));
                biases.push(DVector::from_vec(i.reals(w[1])?));
            }
            let n = i.u32()?;
            let priors = StatePriors::from_normalized(i.reals(n)?).map_err(|e| Error::Format(e.to_string()))?;
            if n != topology.classes() || *sizes.last().expect("checked") != n {
                return Err(Error::Format("network outputs, priors and state labels disagree".into()));
            }
            Scorer::Mlp { network: MlpModel { weights, biases }, priors }
        }
        k => return Err(Error::Format(format!("unknown scorer kind {k}"))),
    };
    let mut rest = [0u8; 1];
    if i.0.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(EmotionModel { topology, layout, input_dims, cmvn, splice_context, lda, scorer })
}

pub fn write_model_file(m: &EmotionModel, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_model(m, BufWriter::new(f))
}

pub fn read_model_file(path: &Path) -> Result<EmotionModel> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_model(BufReader::new(f))
}
