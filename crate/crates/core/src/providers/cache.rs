//! Append-only embedding cache.
//!
//! One file per model. Each record is
//! `u32 payload_len | [u8; 32] key | u32 dim | dim x f32`, little endian,
//! where `payload_len = 36 + 4 * dim`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type CacheKey = [u8; 32];

pub fn cache_key(model_id: &str, text: &str) -> CacheKey {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    h.finalize().into()
}

pub struct EmbeddingCache {
    model_id: String,
    entries: RwLock<HashMap<CacheKey, Arc<[f32]>>>,
    dim: Mutex<Option<usize>>,
    writer: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory(model_id: &str) -> Self {
        EmbeddingCache {
            model_id: model_id.to_string(),
            entries: RwLock::new(HashMap::new()),
            dim: Mutex::new(None),
            writer: None,
            path: None,
        }
    }

    /// Opens (or creates) the cache file for `model_id` inside `dir`.
    pub fn open(dir: impl AsRef<Path>, model_id: &str) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.emb", file_stem(model_id)));
        let mut entries = HashMap::new();
        let mut dim = None;
        let mut valid_len = 0u64;
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(&path, e))?;
            let mut pos = 0usize;
            while pos + 4 <= bytes.len() {
                let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                if pos + 4 + len > bytes.len() {
                    break;
                }
                let rec = &bytes[pos + 4..pos + 4 + len];
                if len < 36 {
                    return Err(corrupt(&path, "record shorter than header"));
                }
                let key: CacheKey = rec[..32].try_into().unwrap();
                let d = u32::from_le_bytes(rec[32..36].try_into().unwrap()) as usize;
                if len != 36 + 4 * d {
                    return Err(corrupt(&path, "record length does not match dimension"));
                }
                match dim {
                    None => dim = Some(d),
                    Some(prev) if prev != d => {
                        return Err(Error::DimensionMismatch {
                            model_id: model_id.to_string(),
                            expected: prev,
                            actual: d,
                        })
                    }
                    _ => {}
                }
                let values: Vec<f32> = rec[36..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                entries.insert(key, Arc::from(values));
                pos += 4 + len;
                valid_len = pos as u64;
            }
            if valid_len < bytes.len() as u64 {
                tracing::warn!(
                    "dropping truncated trailing record in {}",
                    path.display()
                );
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.set_len(valid_len).map_err(|e| Error::io(&path, e))?;
        Ok(EmbeddingCache {
            model_id: model_id.to_string(),
            entries: RwLock::new(entries),
            dim: Mutex::new(dim),
            writer: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<[f32]>> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().unwrap()
    }

    /// Checks `d` against the dimension recorded for this model.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        let mut dim = self.dim.lock().unwrap();
        match *dim {
            None => {
                *dim = Some(d);
                Ok(())
            }
            Some(prev) if prev == d => Ok(()),
            Some(prev) => Err(Error::DimensionMismatch {
                model_id: self.model_id.clone(),
                expected: prev,
                actual: d,
            }),
        }
    }

    /// Inserts a batch and appends it to disk through the single writer.
    pub fn insert_batch(&self, items: Vec<(CacheKey, Arc<[f32]>)>) -> Result<()> {
        for (_, v) in &items {
            self.check_dim(v.len())?;
        }
        if let (Some(writer), Some(path)) = (&self.writer, &self.path) {
            let mut w = writer.lock().unwrap();
            for (key, values) in &items {
                let len = 36 + 4 * values.len();
                let mut buf = Vec::with_capacity(4 + len);
                buf.extend_from_slice(&(len as u32).to_le_bytes());
                buf.extend_from_slice(key);
                buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
                for v in values.iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        let mut entries = self.entries.write().unwrap();
        for (key, values) in items {
            entries.insert(key, values);
        }
        Ok(())
    }
}

fn file_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn corrupt(path: &Path, message: &str) -> Error {
    Error::CorruptCache {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}
