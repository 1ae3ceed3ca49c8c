//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `NFTP`, `u32` version, then five sections
//! (pca, norm, contexts, model, config), each a `u64` byte length followed
//! by its payload, and finally a `u64` checksum: the first eight bytes of
//! the SHA-256 of everything before it. Floats are stored as their bit
//! patterns. The model and config sections are empty for a context-only
//! checkpoint.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::train::{AdamConfig, TrainConfig};
use super::{LstmLayerParams, ModelParams, NnError, Tensor};
use crate::context::{ContextModel, ContextTable, ContextVector, NormalizationParams, PcaModel, CONTEXT_DIM};

pub const MAGIC: &[u8; 4] = b"NFTP";
pub const FORMAT_VERSION: u32 = 1;

/// Everything a run needs to embed collections and generate.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub context: ContextModel,
    pub model: Option<ModelParams>,
    pub config: Option<TrainConfig>,
}

#[derive(Default)]
struct Out(Vec<u8>);

impl Out {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn section(&mut self, body: Out) {
        self.usize(body.0.len());
        self.0.extend_from_slice(&body.0);
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> NnError {
    NnError::CorruptCheckpoint(msg.into())
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, NnError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    /// A length that must fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize, NnError> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(corrupt("truncated"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, NnError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn section(&mut self) -> Result<In<'a>, NnError> {
        let n = self.len(1)?;
        Ok(In { buf: self.take(n)?, pos: 0 })
    }
    fn finish(&self, what: &str) -> Result<(), NnError> {
        if self.pos != self.buf.len() {
            return Err(corrupt(format!("trailing bytes in {what} section")));
        }
        Ok(())
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn write_pca(p: &PcaModel) -> Out {
    let mut o = Out::default();
    o.f64s(&p.mean);
    o.usize(p.components.len());
    p.components.iter().for_each(|c| o.f64s(c));
    o.f64s(&p.explained_variance);
    o
}

fn read_pca(mut r: In) -> Result<PcaModel, NnError> {
    let mean = r.f64s()?;
    let n = r.len(8)?;
    let components = (0..n).map(|_| r.f64s()).collect::<Result<Vec<_>, _>>()?;
    let explained_variance = r.f64s()?;
    r.finish("pca")?;
    if components.len() != CONTEXT_DIM || components.iter().any(|c| c.len() != mean.len()) {
        return Err(corrupt("pca shape"));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

fn write_norm(n: &NormalizationParams) -> Out {
    let mut o = Out::default();
    for v in [n.abs_min_offset, n.global_min, n.global_max, n.low, n.high] {
        o.f64(v);
    }
    o
}

fn read_norm(mut r: In) -> Result<NormalizationParams, NnError> {
    let n = NormalizationParams {
        abs_min_offset: r.f64()?,
        global_min: r.f64()?,
        global_max: r.f64()?,
        low: r.f64()?,
        high: r.f64()?,
    };
    r.finish("norm")?;
    Ok(n)
}

fn write_contexts(t: &ContextTable) -> Out {
    let mut o = Out::default();
    o.usize(t.len());
    for (id, c) in t.iter() {
        o.usize(id.len());
        o.0.extend_from_slice(id.as_bytes());
        c.values().iter().for_each(|v| o.f64(*v));
    }
    o
}

fn read_contexts(mut r: In) -> Result<ContextTable, NnError> {
    let n = r.len(8)?;
    let mut map = BTreeMap::new();
    for _ in 0..n {
        let len = r.len(1)?;
        let id = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("collection id is not utf-8"))?;
        let mut v = [0.0; CONTEXT_DIM];
        for x in &mut v {
            *x = r.f64()?;
        }
        let ctx = ContextVector::new(v).map_err(|e| corrupt(e.to_string()))?;
        map.insert(id.to_string(), ctx);
    }
    r.finish("contexts")?;
    Ok(ContextTable(map))
}

fn read_flag(r: &mut In<'_>) -> Result<bool, NnError> {
    match r.u64()? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(corrupt(format!("flag value {v}"))),
    }
}

fn write_model(m: &ModelParams) -> Out {
    let mut o = Out::default();
    o.usize(m.layer1.input_dim);
    o.usize(m.hidden());
    o.f64(m.dropout_rate);
    o.f64(m.feature_scale[0]);
    o.f64(m.feature_scale[1]);
    o.u64(m.log_value as u64);
    for t in m.tensors() {
        o.usize(t.shape().len());
        t.shape().iter().for_each(|d| o.usize(*d));
        t.data().iter().for_each(|x| o.f64(*x));
    }
    o
}

fn read_model(mut r: In) -> Result<ModelParams, NnError> {
    let input_dim = r.usize()?;
    let hidden = r.len(1)?;
    if hidden == 0 || input_dim != super::INPUT_DIM {
        return Err(corrupt("model dimensions"));
    }
    let mut m = ModelParams::zeros(hidden);
    m.layer1 = LstmLayerParams::zeros(input_dim, hidden);
    m.dropout_rate = r.f64()?;
    m.feature_scale = [r.f64()?, r.f64()?];
    m.log_value = read_flag(&mut r)?;
    for t in m.tensors_mut() {
        let ndims = r.len(8)?;
        let shape = (0..ndims).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        if shape != t.shape() {
            return Err(corrupt(format!("tensor shape {shape:?}, expected {:?}", t.shape())));
        }
        let data = (0..t.len()).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        *t = Tensor::from_vec(&shape, data)?;
    }
    r.finish("model")?;
    Ok(m)
}

fn write_config(c: &TrainConfig) -> Out {
    let mut o = Out::default();
    for v in [c.epochs, c.batch_size, c.window, c.hidden] {
        o.usize(v);
    }
    o.f64(c.dropout_rate);
    for v in [c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.epsilon] {
        o.f64(v);
    }
    o.u64(c.seed);
    o.f64(c.feature_scale[0]);
    o.f64(c.feature_scale[1]);
    o.u64(c.log_value as u64);
    o
}

fn read_config(mut r: In) -> Result<TrainConfig, NnError> {
    let c = TrainConfig {
        epochs: r.usize()?,
        batch_size: r.usize()?,
        window: r.usize()?,
        hidden: r.usize()?,
        dropout_rate: r.f64()?,
        adam: AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        },
        seed: r.u64()?,
        feature_scale: [r.f64()?, r.f64()?],
        log_value: read_flag(&mut r)?,
    };
    r.finish("config")?;
    Ok(c)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut o = Out::default();
        o.0.extend_from_slice(MAGIC);
        o.u32(FORMAT_VERSION);
        o.section(write_pca(&self.context.pca));
        o.section(write_norm(&self.context.norm));
        o.section(write_contexts(&self.context.table));
        o.section(self.model.as_ref().map(write_model).unwrap_or_default());
        o.section(self.config.as_ref().map(write_config).unwrap_or_default());
        let sum = checksum(&o.0);
        o.u64(sum);
        o.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version > FORMAT_VERSION {
            return Err(corrupt(format!("format version {version} is newer than supported version {FORMAT_VERSION}")));
        }
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if checksum(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = In { buf: body, pos: 8 };
        let pca = read_pca(r.section()?)?;
        let norm = read_norm(r.section()?)?;
        let table = read_contexts(r.section()?)?;
        let model = r.section()?;
        let model = if model.buf.is_empty() { None } else { Some(read_model(model)?) };
        let config = r.section()?;
        let config = if config.buf.is_empty() { None } else { Some(read_config(config)?) };
        r.finish("container")?;
        Ok(Checkpoint {
            context: ContextModel { pca, norm, table },
            model,
            config,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 10;
        let pca = PcaModel {
            mean: (0..dim).map(|_| rng.random()).collect(),
            components: (0..CONTEXT_DIM).map(|_| (0..dim).map(|_| rng.random()).collect()).collect(),
            explained_variance: (0..CONTEXT_DIM).map(|_| rng.random()).collect(),
        };
        let norm = NormalizationParams {
            abs_min_offset: 0.1,
            global_min: -1.0 / 3.0,
            global_max: std::f64::consts::PI,
            low: 1.0,
            high: 3.0,
        };
        let table = ContextTable(
            [("a", 1.0), ("β-coll", 2.5)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), ContextVector::new([v, 1.1, 1.2, 2.9, 3.0, 1.0 + 1e-15]).unwrap()))
                .collect(),
        );
        let mut model = ModelParams::init(3, 0.2, &mut rng);
        model.feature_scale = [10.0, 0.1];
        Checkpoint {
            context: ContextModel { pca, norm, table },
            model: Some(model),
            config: Some(TrainConfig {
                hidden: 3,
                seed: u64::MAX,
                ..TrainConfig::default()
            }),
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.nftp");
        let p2 = dir.path().join("b.nftp");
        let ck = sample();
        save_checkpoint(&ck, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded, ck);
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn context_only_round_trip() {
        let mut ck = sample();
        ck.model = None;
        ck.config = None;
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 8, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(NnError::CorruptCheckpoint(_))));
        }
    }

    #[test]
    fn flipped_bit_rejected() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        match Checkpoint::from_bytes(&bytes) {
            Err(NnError::CorruptCheckpoint(m)) => assert!(m.contains("checksum")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn newer_version_rejected_with_message() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        match Checkpoint::from_bytes(&bytes) {
            Err(NnError::CorruptCheckpoint(m)) => assert!(m.contains("version 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_checkpoint(Path::new("/nonexistent/x.nftp")), Err(NnError::Io { .. })));
    }
}
