//! On-disk checkpoints: a directory holding `manifest.json` and
//! `params.bin`.
//!
//! `params.bin` is a flat name → tensor container, little-endian:
//! the magic `PVTENSR1`, a `u32` entry count, then per entry a `u32` name
//! length, the UTF-8 name, `u32` rows, `u32` cols and `rows * cols` `f64`
//! values in row-major order.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::featurizer::LEXICON_VERSION;
use crate::params::{Matrix, ParamStore};

use super::{ModelConfig, PromiseModel};

pub const FORMAT_VERSION: u32 = 1;
pub const TENSOR_MAGIC: &[u8; 8] = b"PVTENSR1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub class_names: BTreeMap<String, Vec<String>>,
    pub seed: u64,
    pub lexicon_version: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub training: serde_json::Value,
    pub vocab: Vec<String>,
}

pub fn write_tensors<W: Write>(mut w: W, store: &ParamStore) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let (rows, cols) = p.value.dim();
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for v in p.value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Matrix)>> {
    let corrupt = |e: std::io::Error| Error::Checkpoint(format!("truncated tensor file: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Checkpoint("bad tensor file magic".into()));
    }
    let count = read_u32(&mut r).map_err(corrupt)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r).map_err(corrupt)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(corrupt)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = read_u32(&mut r).map_err(corrupt)? as usize;
        let cols = read_u32(&mut r).map_err(corrupt)? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(corrupt)?;
            values.push(f64::from_le_bytes(buf));
        }
        let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        out.push((name, m));
    }
    Ok(out)
}

impl PromiseModel {
    pub fn manifest(&self, metrics: BTreeMap<String, f64>, training: serde_json::Value) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            model: self.config().clone(),
            class_names: self
                .tasks()
                .iter()
                .map(|t| {
                    (
                        t.key().to_string(),
                        t.class_names().iter().map(|s| s.to_string()).collect(),
                    )
                })
                .collect(),
            seed: self.seed(),
            lexicon_version: LEXICON_VERSION.to_string(),
            metrics,
            training,
            vocab: self.vocab().tokens().to_vec(),
        }
    }

    pub fn save(
        &self,
        dir: impl AsRef<Path>,
        metrics: BTreeMap<String, f64>,
        training: serde_json::Value,
    ) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let file = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.manifest(metrics, training))?;
        let params_path = dir.join(PARAMS_FILE);
        let file = File::create(&params_path).map_err(|e| Error::io(&params_path, e))?;
        write_tensors(BufWriter::new(file), self.store()).map_err(|e| Error::io(&params_path, e))
    }

    /// Rebuilds the model from its manifest and restores every parameter.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Manifest)> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let file = File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        if manifest.lexicon_version != LEXICON_VERSION {
            log::warn!(
                "checkpoint was trained with lexicons {}, running {}",
                manifest.lexicon_version,
                LEXICON_VERSION
            );
        }
        let vocab = Vocab::from_tokens(manifest.vocab.clone())?;
        let mut model = PromiseModel::new(manifest.model.clone(), vocab, manifest.seed)?;
        let params_path = dir.join(PARAMS_FILE);
        let file = File::open(&params_path).map_err(|e| Error::io(&params_path, e))?;
        let tensors = read_tensors(BufReader::new(file))?;
        if tensors.len() != model.store().len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.store().len(),
                tensors.len()
            )));
        }
        for (name, value) in tensors {
            let store = model.store_mut();
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
            let param = store.get_mut(id);
            if param.value.dim() != value.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    value.dim(),
                    param.value.dim()
                )));
            }
            param.value = value;
        }
        Ok((model, manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mut config = ModelConfig::combined();
        config.encoder.hidden_size = 8;
        config.encoder.ffn_size = 8;
        config.encoder.max_len = 16;
        let vocab = Vocab::build(["we will reduce waste"], 1);
        let mut model = PromiseModel::new(config, vocab, 11).unwrap();
        // Move away from the seeded initialization so loading must restore.
        let id = model.store().id("head.promise.outer.weight").unwrap();
        model.store_mut().get_mut(id).value[[0, 0]] = 0.123456789;

        let dir = tempfile::tempdir().unwrap();
        let mut metrics = BTreeMap::new();
        metrics.insert("promise_f1".to_string(), 0.75);
        model.save(dir.path(), metrics, serde_json::json!({"epochs": 3})).unwrap();
        let (loaded, manifest) = PromiseModel::load(dir.path()).unwrap();
        assert_eq!(manifest.metrics["promise_f1"], 0.75);
        assert_eq!(manifest.class_names["evidence"], vec!["No", "Yes"]);
        assert_eq!(loaded.store().checksum(|_| true), model.store().checksum(|_| true));
        let text = "we will reduce";
        assert_eq!(loaded.predict_text(text).unwrap(), model.predict_text(text).unwrap());
    }

    #[test]
    fn rejects_corrupt_tensor_file() {
        assert!(matches!(read_tensors(&b"NOTMAGIC"[..]), Err(Error::Checkpoint(_))));
        let mut bytes = TENSOR_MAGIC.to_vec();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        assert!(matches!(read_tensors(&bytes[..]), Err(Error::Checkpoint(_))));
    }
}
