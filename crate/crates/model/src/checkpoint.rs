//! Checkpoint container, little-endian throughout:
//!
//! ```text
//! magic "DSLNCKPT" | u32 version | 32-byte SHA-256 of the config JSON
//! u32 len | config JSON
//! u32 count | count × record            (model parameters)
//! u32 len | metadata (UTF-8, empty = none)
//! u32 count | count × record            (auxiliary arrays, e.g. optimizer moments)
//! record = u32 len | path | 4 × u32 extents | f32 values
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use hdrtv_tensor::{numel, Tensor};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::net::DslNet;
use crate::ModelError;

pub const MAGIC: &[u8; 8] = b"DSLNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
    pub metadata: Option<String>,
    pub aux: BTreeMap<String, Tensor>,
}

pub fn config_digest(config: &ModelConfig) -> [u8; 32] {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&json).into()
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), ModelError> {
    let v = u32::try_from(v).map_err(|_| ModelError::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_records(out: &mut Vec<u8>, records: &BTreeMap<String, Tensor>) -> Result<(), ModelError> {
    put_u32(out, records.len())?;
    for (path, t) in records {
        put_u32(out, path.len())?;
        out.extend_from_slice(path.as_bytes());
        for d in t.shape() {
            put_u32(out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(ModelError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Checkpoint("non-UTF-8 string".into()))
    }

    fn records(&mut self) -> Result<BTreeMap<String, Tensor>, ModelError> {
        let count = self.u32()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let path = self.string()?;
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = self.u32()?;
            }
            let bytes = self
                .take(numel(&shape).checked_mul(4).ok_or_else(|| ModelError::Checkpoint("extents overflow".into()))?)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::from_vec(shape, data).map_err(|e| ModelError::Checkpoint(format!("{path}: {e}")))?;
            if out.insert(path.clone(), t).is_some() {
                return Err(ModelError::Checkpoint(format!("duplicate record {path}")));
            }
        }
        Ok(out)
    }
}

impl Checkpoint {
    pub fn of_model(model: &DslNet) -> Self {
        Checkpoint {
            config: model.config().clone(),
            params: model.params().snapshot(),
            metadata: None,
            aux: BTreeMap::new(),
        }
    }

    pub fn into_model(self) -> Result<DslNet, ModelError> {
        DslNet::from_params(self.config, self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&json));
        put_u32(&mut out, json.len())?;
        out.extend_from_slice(&json);
        put_records(&mut out, &self.params)?;
        let meta = self.metadata.as_deref().unwrap_or("");
        put_u32(&mut out, meta.len())?;
        out.extend_from_slice(meta.as_bytes());
        put_records(&mut out, &self.aux)?;
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic, not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let len = r.u32()?;
        let json = r.take(len)?;
        if <[u8; 32]>::from(Sha256::digest(json)) != digest {
            return Err(ModelError::Checkpoint("config digest mismatch".into()));
        }
        let config: ModelConfig =
            serde_json::from_slice(json).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let params = r.records()?;
        let meta = r.string()?;
        let aux = r.records()?;
        if r.pos != buf.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint { config, params, metadata: (!meta.is_empty()).then_some(meta), aux })
    }

    /// Writes to a sibling temporary file, syncs, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let name =
        path.file_name().ok_or_else(|| ModelError::Checkpoint(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
