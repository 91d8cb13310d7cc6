//! Frozen initial sentence vectors.
//!
//! Two providers: a feature-hashing embedder over word unigrams and bigrams,
//! and a lookup into precomputed vectors stored in a `DSEMB1` cache file.
//!
//! `DSEMB1` layout, all integers `u32` little-endian:
//!
//! ```text
//! b"DSEMB1" | record_count | d_init |
//!   record_count × ( id_len | id (UTF-8) | rows | rows·d_init × f32 LE )
//! ```
//!
//! Document sentences are stored under the document id. Reference-summary
//! sentences, when needed, are stored under `"{id}::summary"`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{DocumentRecord, Sentence};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_EMBED_DIM: usize = 768;
pub const DEFAULT_HASH_SEED: u64 = 101;
const CACHE_MAGIC: &[u8; 6] = b"DSEMB1";

/// Row-major `f32` matrix of initial sentence vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialEmbeddings {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl InitialEmbeddings {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.dim, self.data.iter().map(|&v| f64::from(v)).collect())
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // final avalanche (splitmix64 finalizer)
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Signed feature hashing of word unigrams and bigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_EMBED_DIM,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    /// Bucket and sign for one feature string.
    pub fn feature_slot(&self, feature: &str) -> (usize, f32) {
        let h = fnv1a(self.seed, feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if fnv1a(self.seed ^ 0x5bd1_e995, feature.as_bytes()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        (bucket, sign)
    }

    /// Feature strings for a sentence: every unigram and every adjacent pair.
    pub fn features(sentence: &[String]) -> Vec<String> {
        let mut feats: Vec<String> = sentence.iter().map(|w| format!("u\u{1f}{w}")).collect();
        feats.extend(sentence.windows(2).map(|p| format!("b\u{1f}{}\u{1f}{}", p[0], p[1])));
        feats
    }

    pub fn embed_one(&self, sentence: &[String]) -> Result<Vec<f32>> {
        let mut acc = vec![0.0f64; self.dim];
        for feat in Self::features(sentence) {
            let (bucket, sign) = self.feature_slot(&feat);
            acc[bucket] += f64::from(sign);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid(format!(
                "hashed features cancel to a zero vector for sentence {:?}",
                sentence.join(" ")
            )));
        }
        Ok(acc.iter().map(|v| (v / norm) as f32).collect())
    }
}

/// Precomputed vectors keyed by record id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub dim: usize,
    entries: Vec<(String, InitialEmbeddings)>,
    index: HashMap<String, usize>,
    pub source: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
            source: None,
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, rows: InitialEmbeddings) -> Result<()> {
        let id = id.into();
        if rows.dim != self.dim {
            return Err(Error::CacheFormat(format!(
                "entry {id:?} has width {} but cache width is {}",
                rows.dim, self.dim
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::CacheFormat(format!("duplicate entry for id {id:?}")));
        }
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push((id, rows));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InitialEmbeddings> {
        self.index.get(id).map(|&i| &self.entries[i].1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, rows) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(rows.rows as u32).to_le_bytes());
            for v in &rows.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(Error::CacheFormat("bad magic, expected DSEMB1".into()));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::CacheFormat("d_init is zero".into()));
        }
        let mut cache = Self::new(dim);
        for _ in 0..count {
            let id_len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::CacheFormat("id is not UTF-8".into()))?
                .to_owned();
            let rows = r.u32()? as usize;
            let payload = r.take(rows * dim * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            cache.insert(id, InitialEmbeddings { rows, dim, data })?;
        }
        if r.pos != bytes.len() {
            return Err(Error::CacheFormat(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - r.pos
            )));
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cache = Self::from_bytes(&bytes)?;
        cache.source = Some(path.to_path_buf());
        Ok(cache)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CacheFormat(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn summary_key(id: &str) -> String {
    format!("{id}::summary")
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingProvider {
    Hashing(HashingEmbedder),
    Precomputed(EmbeddingCache),
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        Self::Hashing(HashingEmbedder::default())
    }
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            Self::Hashing(h) => h.dim,
            Self::Precomputed(c) => c.dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Hashing(_) => "hashing",
            Self::Precomputed(_) => "precomputed",
        }
    }

    /// Embeds `sentences`, which are the sentences stored under `key` for the
    /// precomputed provider (the hashing provider ignores the key).
    pub fn embed_sentences(&self, key: &str, sentences: &[Sentence]) -> Result<InitialEmbeddings> {
        if sentences.is_empty() {
            return Err(Error::invalid("embed_sentences needs at least one sentence"));
        }
        match self {
            Self::Hashing(h) => {
                let mut data = Vec::with_capacity(sentences.len() * h.dim);
                for s in sentences {
                    data.extend(h.embed_one(s)?);
                }
                Ok(InitialEmbeddings {
                    rows: sentences.len(),
                    dim: h.dim,
                    data,
                })
            }
            Self::Precomputed(cache) => {
                let stored = cache.get(key).ok_or_else(|| Error::MissingEmbedding {
                    id: key.to_owned(),
                    index: 0,
                })?;
                if stored.rows < sentences.len() {
                    return Err(Error::MissingEmbedding {
                        id: key.to_owned(),
                        index: stored.rows,
                    });
                }
                let idx: Vec<usize> = (0..sentences.len()).collect();
                Ok(stored.select_rows(&idx))
            }
        }
    }

    pub fn embed_document(&self, record: &DocumentRecord) -> Result<InitialEmbeddings> {
        self.embed_sentences(&record.id, &record.doc_sentences)
    }

    pub fn embed_reference(&self, record: &DocumentRecord) -> Result<InitialEmbeddings> {
        self.embed_sentences(&summary_key(&record.id), &record.summary_sentences)
    }

    /// Digest of everything that determines this provider's output.
    pub fn fingerprint(&self) -> u64 {
        match self {
            Self::Hashing(h) => fnv1a(h.seed, format!("hashing:{}", h.dim).as_bytes()),
            Self::Precomputed(c) => fnv1a(0, &c.to_bytes()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn hashing_is_deterministic_and_unit_norm() {
        let p = EmbeddingProvider::default();
        let s = vec![tokenize("the cat sat on the mat"), tokenize("the cat sat on the mat")];
        let e = p.embed_sentences("x", &s).unwrap();
        assert_eq!(e.rows, 2);
        assert_eq!(e.dim, 768);
        assert_eq!(e.row(0), e.row(1));
        let again = p.embed_sentences("y", &s[..1]).unwrap();
        assert_eq!(again.row(0), e.row(0));
        let norm: f64 = e
            .row(0)
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_features_are_orthogonal() {
        let h = HashingEmbedder::new(1 << 16, 101);
        let a = tokenize("alpha beta");
        let b = tokenize("gamma delta");
        let buckets = |s: &[String]| -> Vec<usize> {
            HashingEmbedder::features(s)
                .iter()
                .map(|f| h.feature_slot(f).0)
                .collect()
        };
        let (ba, bb) = (buckets(&a), buckets(&b));
        assert!(ba.iter().all(|x| !bb.contains(x)), "toy vocabulary collides");
        let ea = h.embed_one(&a).unwrap();
        let eb = h.embed_one(&b).unwrap();
        let dot: f32 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
        assert_eq!(dot, 0.0);
    }

    fn sample_cache() -> EmbeddingCache {
        let mut c = EmbeddingCache::new(768);
        let data: Vec<f32> = (0..3 * 768).map(|i| (i as f32 * 0.37).sin()).collect();
        c.insert(
            "doc",
            InitialEmbeddings {
                rows: 3,
                dim: 768,
                data,
            },
        )
        .unwrap();
        c
    }

    #[test]
    fn cache_round_trip_and_lookup() {
        let c = sample_cache();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.dsemb");
        c.save(&path).unwrap();
        let loaded = EmbeddingCache::load(&path).unwrap();
        assert_eq!(loaded.to_bytes(), c.to_bytes());
        let p = EmbeddingProvider::Precomputed(loaded);
        assert_eq!(p.dim(), 768);
        let sents = vec![vec!["a".to_string()]; 3];
        let e = p.embed_sentences("doc", &sents).unwrap();
        assert_eq!((e.rows, e.dim), (3, 768));
        assert_eq!(e.data, c.get("doc").unwrap().data);
        assert!(matches!(
            p.embed_sentences("nope", &sents),
            Err(Error::MissingEmbedding { .. })
        ));
        let four = vec![vec!["a".to_string()]; 4];
        assert!(matches!(
            p.embed_sentences("doc", &four),
            Err(Error::MissingEmbedding { index: 3, .. })
        ));
    }

    #[test]
    fn cache_rejects_bad_containers() {
        let bytes = sample_cache().to_bytes();
        assert!(EmbeddingCache::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(EmbeddingCache::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(EmbeddingCache::from_bytes(&bad).is_err());

        let mut c = sample_cache();
        let dup = c.get("doc").unwrap().clone();
        assert!(c.insert("doc", dup).is_err());
        // Duplicate ids written to disk are rejected on read.
        let mut twice = EmbeddingCache::new(2);
        twice
            .insert(
                "a",
                InitialEmbeddings {
                    rows: 1,
                    dim: 2,
                    data: vec![1.0, 0.0],
                },
            )
            .unwrap();
        let mut raw = twice.to_bytes();
        let rec = raw[14..].to_vec();
        raw.extend_from_slice(&rec);
        raw[6..10].copy_from_slice(&2u32.to_le_bytes());
        assert!(EmbeddingCache::from_bytes(&raw).is_err());
    }
}
