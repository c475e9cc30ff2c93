//! Per-query retrieval listings and per-layer speaker consistency.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::data::{retrieve_for, FeatureBank};
use crate::corpus::{Label, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::vecstore::{median, speaker_consistency, QueryResult, StoreSet};

#[derive(Debug, Clone)]
pub struct QueryReport {
    pub utt_id: String,
    pub speaker_id: String,
    pub result: QueryResult,
    /// Same-speaker fraction of each layer's hits.
    pub consistency: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct RetrievalReport {
    pub k: usize,
    /// `1 / number of speakers in the store`.
    pub chance: f64,
    pub queries: Vec<QueryReport>,
}

impl RetrievalReport {
    pub fn layers(&self) -> usize {
        self.queries.first().map(|q| q.consistency.len()).unwrap_or(0)
    }

    /// Median same-speaker fraction per layer.
    pub fn median_consistency(&self) -> Vec<Option<f64>> {
        (0..self.layers())
            .map(|l| median(self.queries.iter().filter_map(|q| q.consistency[l])))
            .collect()
    }

    /// One row per hit.
    pub fn render_hits(&self) -> String {
        let mut out = String::from("query\tquery_speaker\tlayer\trank\tutt_id\tspeaker_id\tsimilarity\tsame_speaker\n");
        for q in &self.queries {
            for hits in &q.result.layers {
                for h in hits {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{:.8e}\t{}",
                        q.utt_id,
                        q.speaker_id,
                        h.layer,
                        h.rank,
                        h.utt_id,
                        h.speaker_id,
                        h.similarity,
                        (h.speaker_id == q.speaker_id) as u8
                    )
                    .unwrap();
                }
            }
        }
        out
    }

    /// One row per layer: median same-speaker fraction, chance rate, and their ratio.
    pub fn render_summary(&self) -> String {
        let mut out = String::from("layer\tmedian_same_speaker\tchance\tratio\n");
        for (l, m) in self.median_consistency().iter().enumerate() {
            let m = m.unwrap_or(f64::NAN);
            writeln!(out, "{l}\t{m:.6}\t{:.6}\t{:.3}", self.chance, m / self.chance).unwrap();
        }
        out
    }
}

/// The first `n_queries` bonafide records of `split`, in manifest order, each queried for its top-`k`.
pub fn retrieval_report(
    records: &[ManifestRecord],
    split: Split,
    n_queries: usize,
    bank: &FeatureBank,
    store: &StoreSet,
    k: usize,
) -> Result<RetrievalReport> {
    let speakers: BTreeSet<&str> = store.records().iter().map(|r| r.speaker_id.as_str()).collect();
    if speakers.is_empty() {
        return Err(Error::Query("the store is empty".into()));
    }
    let queries = records
        .iter()
        .filter(|r| r.split == split && r.label == Label::Bonafide)
        .take(n_queries)
        .map(|rec| {
            let result = retrieve_for(bank, store, &rec.utt_id, k)?;
            let consistency = speaker_consistency(&result, &rec.speaker_id);
            Ok(QueryReport {
                utt_id: rec.utt_id.clone(),
                speaker_id: rec.speaker_id.clone(),
                result,
                consistency,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        k,
        chance: 1.0 / speakers.len() as f64,
        queries,
    })
}
