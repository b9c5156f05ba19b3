//! Indicator embedding files consumed by the representation transformer.
//!
//! Layout (little-endian), framed like the parameter store:
//!
//! ```text
//! "NNEMBEDS" | version u32 = 1 | count u64
//! count x { id: u32 len + UTF-8 | key: u32 len + UTF-8 | rank u32 = 1 | E u64 | E x f64 }
//! ```
//!
//! `key` is either `"static"` (one vector per indicator) or an observation
//! key `"<COUNTRY>:<PERIOD>"`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::store::{read_header, read_str, read_tensor, read_u64, write_str, write_tensor, STORE_VERSION};
use crate::nn::{StoreError, Tensor};
use crate::panel::Period;

pub const EMBED_MAGIC: &[u8; 8] = b"NNEMBEDS";
pub const STATIC_KEY: &str = "static";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{0}")]
    Store(#[from] StoreError),
    #[error("{0}: {1}")]
    Path(String, #[source] std::io::Error),
    #[error("record {id}/{key}: {detail}")]
    Record { id: String, key: String, detail: String },
    #[error("no embedding for indicator {0:?}")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub key: String,
    pub vector: Vec<f64>,
}

pub fn observation_key(country: &str, period: Period) -> String {
    format!("{country}:{period}")
}

/// Validated records with a common dimension, indexed by (id, key).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    dim: usize,
    records: BTreeMap<(String, String), Arc<Vec<f64>>>,
}

impl EmbeddingSet {
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, EmbeddingError> {
        let mut set = EmbeddingSet::default();
        for r in records {
            let bad = |detail: String| EmbeddingError::Record {
                id: r.id.clone(),
                key: r.key.clone(),
                detail,
            };
            if r.vector.is_empty() {
                return Err(bad("empty vector".into()));
            }
            if set.records.is_empty() {
                set.dim = r.vector.len();
            } else if r.vector.len() != set.dim {
                return Err(bad(format!("dimension {} differs from {}", r.vector.len(), set.dim)));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite component".into()));
            }
            if set.records.contains_key(&(r.id.clone(), r.key.clone())) {
                return Err(bad("duplicate record".into()));
            }
            set.records.insert((r.id, r.key), Arc::new(r.vector));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The observation-specific vector if present, otherwise the static one.
    /// Returned vectors are shared, so repeated lookups are cheap.
    pub fn lookup(&self, id: &str, key: Option<&str>) -> Result<Arc<Vec<f64>>, EmbeddingError> {
        key.and_then(|k| self.records.get(&(id.to_string(), k.to_string())))
            .or_else(|| self.records.get(&(id.to_string(), STATIC_KEY.to_string())))
            .cloned()
            .ok_or_else(|| EmbeddingError::Missing(id.to_string()))
    }

    pub fn records(&self) -> Vec<EmbeddingRecord> {
        self.records
            .iter()
            .map(|((id, key), v)| EmbeddingRecord {
                id: id.clone(),
                key: key.clone(),
                vector: v.as_ref().clone(),
            })
            .collect()
    }
}

pub fn write_embeddings(w: &mut impl Write, records: &[EmbeddingRecord]) -> std::io::Result<()> {
    w.write_all(EMBED_MAGIC)?;
    w.write_all(&STORE_VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        write_str(w, &r.id)?;
        write_str(w, &r.key)?;
        write_tensor(w, &Tensor::vector(r.vector.clone()))?;
    }
    Ok(())
}

pub fn read_embeddings(r: &mut impl Read) -> Result<Vec<EmbeddingRecord>, EmbeddingError> {
    read_header(r, EMBED_MAGIC)?;
    let count = read_u64(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let id = read_str(r)?;
        let key = read_str(r)?;
        let t: Tensor<f64> = read_tensor(r)?;
        if t.rank() != 1 {
            return Err(EmbeddingError::Record {
                id,
                key,
                detail: format!("rank {} vector", t.rank()),
            });
        }
        out.push(EmbeddingRecord {
            id,
            key,
            vector: t.into_data(),
        });
    }
    Ok(out)
}

pub fn save_embeddings(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_embeddings(&mut buf, records).expect("writing to a Vec cannot fail");
    std::fs::write(path, buf).map_err(|e| EmbeddingError::Path(path.display().to_string(), e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| EmbeddingError::Path(path.display().to_string(), e))?;
    EmbeddingSet::from_records(read_embeddings(&mut bytes.as_slice())?)
}

/// Debug form: `id,key,v0,...,v{E-1}` with shortest round-trip decimals.
pub fn write_embeddings_csv(w: impl Write, records: &[EmbeddingRecord]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut header = vec!["id".to_string(), "key".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.key.clone()];
        row.extend(r.vector.iter().map(|v| format!("{v:?}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Deterministic unit-norm pseudo-embedding of `text`, for fixtures and
/// offline runs.
pub fn stub_embedding(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}
