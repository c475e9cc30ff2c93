//! Turning manifests, caches and stores into model inputs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_wav, resolve_audio_path, segment_clip, AudioClip, ManifestRecord, Split};
use crate::encoder::{load_feature, CacheIndex, Encoder, Feature, LayerEmbedding};
use crate::error::{Error, Result};
use crate::model::{BaselineParams, Example, ModelKind, RadInput, RadMfaParams};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::Parameters;
use crate::seed;
use crate::vecstore::{QueryResult, StoreSet};

/// Short features and embeddings of a cache, held in memory as `f64`.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    pub layers: usize,
    pub frames: usize,
    pub dim: usize,
    pub tau: usize,
    pub fingerprint: String,
    short: HashMap<String, Vec<f64>>,
    emb: HashMap<String, LayerEmbedding>,
}

impl FeatureBank {
    pub fn load(cache: &CacheIndex) -> Result<Self> {
        let ids: Vec<&str> = cache.iter().map(|(id, _)| id).collect();
        let loaded: Vec<(String, Vec<f64>, usize, LayerEmbedding)> = ids
            .par_iter()
            .map(|id| {
                let s = cache.load_short(id)?;
                let e = cache.load_embedding(id)?;
                let frames = s.frames;
                Ok((id.to_string(), s.values.iter().map(|&v| v as f64).collect(), frames, e))
            })
            .collect::<Result<_>>()?;
        let frames = loaded.first().map(|l| l.2).unwrap_or(0);
        let mut short = HashMap::with_capacity(loaded.len());
        let mut emb = HashMap::with_capacity(loaded.len());
        for (id, s, _, e) in loaded {
            short.insert(id.clone(), s);
            emb.insert(id, e);
        }
        Ok(Self {
            layers: cache.layers,
            frames,
            dim: cache.dim,
            tau: cache.tau,
            fingerprint: cache.fingerprint.clone(),
            short,
            emb,
        })
    }

    pub fn short(&self, utt_id: &str) -> Option<&[f64]> {
        self.short.get(utt_id).map(|v| v.as_slice())
    }

    pub fn embedding(&self, utt_id: &str) -> Option<&LayerEmbedding> {
        self.emb.get(utt_id)
    }

    fn short_or_load(&self, utt_id: &str, path: &str) -> Result<std::borrow::Cow<'_, [f64]>> {
        if let Some(s) = self.short(utt_id) {
            return Ok(s.into());
        }
        match load_feature(Path::new(path))? {
            Feature::Short(s) if s.layers == self.layers && s.frames == self.frames && s.dim == self.dim => {
                Ok(s.values.iter().map(|&v| v as f64).collect::<Vec<_>>().into())
            }
            _ => Err(Error::FeatureLoad(format!("{path}: not a matching short feature"))),
        }
    }
}

/// Top-`k` per layer for a cached item, never retrieving the item itself.
pub fn retrieve_for(bank: &FeatureBank, store: &StoreSet, utt_id: &str, k: usize) -> Result<QueryResult> {
    let emb = bank
        .embedding(utt_id)
        .ok_or_else(|| Error::Query(format!("{utt_id} is not in the feature cache")))?;
    let exclude: HashSet<String> = [utt_id.to_string()].into();
    store.query_topk(emb, k, &exclude)
}

/// Reference `r` takes its layer-`l` slice from layer `l`'s rank-`r` hit.
/// Uses as many ranks as every layer can supply.
pub fn assemble_references(bank: &FeatureBank, hits: &QueryResult) -> Result<(Vec<f64>, usize)> {
    let k = hits.layers.iter().map(|h| h.len()).min().unwrap_or(0);
    if k == 0 {
        return Err(Error::RetrievalEmpty);
    }
    let stride = bank.frames * bank.dim;
    let mut refs = vec![0.0; k * bank.layers * stride];
    for (l, layer_hits) in hits.layers.iter().enumerate() {
        for (r, hit) in layer_hits.iter().take(k).enumerate() {
            let feat = bank.short_or_load(&hit.utt_id, &hit.short_feature_path)?;
            let dst = (r * bank.layers + l) * stride;
            refs[dst..dst + stride].copy_from_slice(&feat[l * stride..(l + 1) * stride]);
        }
    }
    Ok((refs, k))
}

pub fn rad_examples(
    records: &[ManifestRecord],
    split: Split,
    bank: &FeatureBank,
    store: &StoreSet,
    k: usize,
) -> Result<Vec<Example<RadInput>>> {
    records
        .par_iter()
        .filter(|r| r.split == split)
        .map(|rec| {
            let query = bank
                .short(&rec.utt_id)
                .ok_or_else(|| Error::Query(format!("{} is not in the feature cache", rec.utt_id)))?
                .to_vec();
            let hits = retrieve_for(bank, store, &rec.utt_id, k)?;
            let (refs, k) = assemble_references(bank, &hits)?;
            Ok(Example {
                utt_id: rec.utt_id.clone(),
                label: rec.label,
                input: RadInput { query, refs, k },
            })
        })
        .collect()
}

/// Layer-0 encoder input of every record in `split`.
pub fn mel_examples(
    records: &[ManifestRecord],
    manifest_path: &Path,
    encoder: &Encoder,
    split: Split,
) -> Result<Vec<Example<Vec<f64>>>> {
    records
        .par_iter()
        .filter(|r| r.split == split)
        .map(|rec| {
            let samples = read_wav(&resolve_audio_path(manifest_path, rec))?;
            let clip = AudioClip::new(
                rec.utt_id.clone(),
                rec.speaker_id.clone(),
                rec.label,
                rec.spoof_method.clone(),
                samples,
            )?;
            Ok(Example {
                utt_id: rec.utt_id.clone(),
                label: rec.label,
                input: encoder.layer0(&segment_clip(&clip)?),
            })
        })
        .collect()
}

pub fn init_baseline(layers: usize, dim: usize, seed_value: u64) -> BaselineParams {
    BaselineParams::init(layers, dim, &mut seed::rng(seed_value, &[0x1a17, 0]))
}

pub fn init_rad(kind: ModelKind, layers: usize, dim: usize, seed_value: u64) -> RadMfaParams {
    let with_query = kind != ModelKind::JustDifference;
    RadMfaParams::init(layers, dim, with_query, &mut seed::rng(seed_value, &[0x1a17, 1]))
}

/// Write a checkpoint; values are stored as `f32`.
pub fn save_model<P: Parameters>(path: &Path, kind: ModelKind, params: &P, meta: &[(&str, String)]) -> Result<()> {
    let mut map: BTreeMap<String, String> = super::config::meta_map(meta);
    map.insert("kind".into(), kind.as_str().into());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Checkpoint::from_params(map, params).write(path)
}

fn expect_kind(ck: &Checkpoint, allowed: &[ModelKind]) -> Result<ModelKind> {
    let kind: String = ck.meta_get("kind")?;
    let kind: ModelKind = kind.parse()?;
    if !allowed.contains(&kind) {
        return Err(Error::Incompatible(format!("checkpoint holds a {kind} model")));
    }
    Ok(kind)
}

pub fn load_baseline(path: &Path) -> Result<(BaselineParams, Checkpoint)> {
    let ck = Checkpoint::read(path)?;
    expect_kind(&ck, &[ModelKind::Baseline])?;
    let mut p = init_baseline(ck.meta_get("layers")?, ck.meta_get("dim")?, 0);
    ck.load_into(&mut p)?;
    Ok((p, ck))
}

pub fn load_rad(path: &Path) -> Result<(ModelKind, RadMfaParams, Checkpoint)> {
    let ck = Checkpoint::read(path)?;
    let kind = expect_kind(&ck, &[ModelKind::RadMfa, ModelKind::JustDifference])?;
    let mut p = init_rad(kind, ck.meta_get("layers")?, ck.meta_get("dim")?, 0);
    ck.load_into(&mut p)?;
    Ok((kind, p, ck))
}
