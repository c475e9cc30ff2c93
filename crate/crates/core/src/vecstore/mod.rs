//! Per-layer exact cosine vector databases over bonafide embeddings.
//!
//! Layer `l` of every stored segment's embedding goes into store `l`, and
//! queries are answered layer by layer: the hits for layer `l` come only
//! from store `l`, so different layers may return different segments.
//! Each record links back to the segment's cached short feature.

mod persist;

pub use persist::{load_stores, persist_stores};

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use crate::corpus::{Label, ManifestRecord, Split};
use crate::encoder::{CacheIndex, LayerEmbedding};
use crate::error::{Error, Result};

/// Identity shared by a segment's vectors across all layer stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub short_feature_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreMeta {
    pub layers: usize,
    pub dim: usize,
    pub tau: usize,
    pub fingerprint: String,
    /// Seconds since the Unix epoch.
    pub built_at: u64,
}

/// Contiguous `N × F` vectors of one layer plus their norms.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStore {
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

impl LayerStore {
    fn new() -> Self {
        Self {
            vectors: Vec::new(),
            norms: Vec::new(),
        }
    }

    fn push(&mut self, v: &[f32]) {
        self.vectors.extend_from_slice(v);
        self.norms.push(norm(v));
    }

    pub(crate) fn from_vectors(vectors: Vec<f32>, dim: usize) -> Self {
        let norms = vectors.chunks(dim.max(1)).map(norm).collect();
        Self { vectors, norms }
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub layer: usize,
    /// 1-based.
    pub rank: usize,
    pub similarity: f64,
    pub insertion_index: usize,
    pub utt_id: String,
    pub speaker_id: String,
    pub short_feature_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// `layers[l]` holds the hits from store `l`, best first.
    pub layers: Vec<Vec<RetrievalHit>>,
    /// Fewer than K candidates were available in at least one layer.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreFilter {
    pub bonafide_only: bool,
    pub splits: BTreeSet<Split>,
}

impl Default for StoreFilter {
    fn default() -> Self {
        Self {
            bonafide_only: true,
            splits: [Split::Train, Split::Dev, Split::RetrievalExtra].into_iter().collect(),
        }
    }
}

impl StoreFilter {
    pub fn splits(splits: &[Split]) -> Self {
        Self {
            bonafide_only: true,
            splits: splits.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub inserted: usize,
    /// Spoofed records in a selected split, dropped by the bonafide-only filter.
    pub skipped_spoof: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreSet {
    pub meta: StoreMeta,
    records: Vec<StoreRecord>,
    stores: Vec<LayerStore>,
}

impl StoreSet {
    pub fn empty(meta: StoreMeta) -> Self {
        let stores = (0..meta.layers).map(|_| LayerStore::new()).collect();
        Self {
            meta,
            records: Vec::new(),
            stores,
        }
    }

    pub(crate) fn from_parts(meta: StoreMeta, records: Vec<StoreRecord>, stores: Vec<LayerStore>) -> Self {
        Self { meta, records, stores }
    }

    /// Records per layer (identical across layers).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn layer(&self, l: usize) -> &LayerStore {
        &self.stores[l]
    }

    pub fn insert(&mut self, record: StoreRecord, embedding: &LayerEmbedding) -> Result<()> {
        if embedding.layers != self.meta.layers || embedding.dim != self.meta.dim {
            return Err(Error::Build(format!(
                "{}: embedding {}x{} does not match store {}x{}",
                record.utt_id, embedding.layers, embedding.dim, self.meta.layers, self.meta.dim
            )));
        }
        if embedding.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Build(format!("{}: non-finite embedding", record.utt_id)));
        }
        for (l, store) in self.stores.iter_mut().enumerate() {
            store.push(embedding.row(l));
        }
        self.records.push(record);
        Ok(())
    }

    /// Exact top-K per layer by cosine similarity, ties broken by insertion order.
    /// Zero-norm vectors (in the store or the query) are never returned.
    pub fn query_topk(&self, q: &LayerEmbedding, k: usize, exclude: &HashSet<String>) -> Result<QueryResult> {
        if q.layers != self.meta.layers || q.dim != self.meta.dim {
            return Err(Error::Query(format!(
                "query is {}x{}, store is {}x{}",
                q.layers, q.dim, self.meta.layers, self.meta.dim
            )));
        }
        if k < 1 {
            return Err(Error::Query("K must be at least 1".into()));
        }
        let dim = self.meta.dim;
        let mut truncated = false;
        let mut layers = Vec::with_capacity(self.meta.layers);
        for (l, store) in self.stores.iter().enumerate() {
            let qv = q.row(l);
            let qn = norm(qv);
            let mut scored: Vec<(f64, usize)> = Vec::new();
            if qn > 0.0 {
                scored.reserve(self.records.len());
                for (i, rec) in self.records.iter().enumerate() {
                    if store.norms[i] == 0.0 || exclude.contains(&rec.utt_id) {
                        continue;
                    }
                    let v = &store.vectors[i * dim..(i + 1) * dim];
                    let dot: f64 = v.iter().zip(qv).map(|(&a, &b)| a as f64 * b as f64).sum();
                    scored.push(((dot / (qn * store.norms[i])).clamp(-1.0, 1.0), i));
                }
            }
            let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
            };
            if scored.len() > k {
                scored.select_nth_unstable_by(k - 1, by_rank);
                scored.truncate(k);
            } else if scored.len() < k {
                truncated = true;
            }
            scored.sort_unstable_by(by_rank);
            layers.push(
                scored
                    .into_iter()
                    .enumerate()
                    .map(|(r, (similarity, i))| {
                        let rec = &self.records[i];
                        RetrievalHit {
                            layer: l,
                            rank: r + 1,
                            similarity,
                            insertion_index: i,
                            utt_id: rec.utt_id.clone(),
                            speaker_id: rec.speaker_id.clone(),
                            short_feature_path: rec.short_feature_path.clone(),
                        }
                    })
                    .collect(),
            );
        }
        Ok(QueryResult { layers, truncated })
    }
}

/// Insert the cached embedding of every record the filter selects.
pub fn build_stores(
    records: &[ManifestRecord],
    cache: &CacheIndex,
    filter: &StoreFilter,
) -> Result<(StoreSet, BuildReport)> {
    let built_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut set = StoreSet::empty(StoreMeta {
        layers: cache.layers,
        dim: cache.dim,
        tau: cache.tau,
        fingerprint: cache.fingerprint.clone(),
        built_at,
    });
    let mut report = BuildReport::default();
    for rec in records.iter().filter(|r| filter.splits.contains(&r.split)) {
        if filter.bonafide_only && rec.label == Label::Spoof {
            report.skipped_spoof += 1;
            continue;
        }
        let entry = cache
            .get(&rec.utt_id)
            .ok_or_else(|| Error::Build(format!("no cache entry for {}", rec.utt_id)))?;
        let emb = cache
            .load_embedding(&rec.utt_id)
            .map_err(|e| Error::Build(format!("{}: {e}", rec.utt_id)))?;
        set.insert(
            StoreRecord {
                utt_id: rec.utt_id.clone(),
                speaker_id: rec.speaker_id.clone(),
                short_feature_path: entry.short_path.display().to_string(),
            },
            &emb,
        )?;
        report.inserted += 1;
    }
    Ok((set, report))
}

/// Fraction of each layer's hits that share the query's speaker; `None` for a layer with no hits.
pub fn speaker_consistency(result: &QueryResult, query_speaker: &str) -> Vec<Option<f64>> {
    result
        .layers
        .iter()
        .map(|hits| {
            (!hits.is_empty()).then(|| {
                hits.iter().filter(|h| h.speaker_id == query_speaker).count() as f64 / hits.len() as f64
            })
        })
        .collect()
}

/// Median of the present values; `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
