//! End-to-end stages shared by the command line and the acceptance suite.
//!
//! Every stage writes its artifacts plus `config.txt` and `run_manifest.txt`
//! into its output directory.

mod ablate;
mod config;
mod data;
mod report;

pub use ablate::{ablation_csv, run_ablation, AblationRow};
pub use config::{read_run_config, write_run_manifest, RunConfig};
pub use data::{
    assemble_references, init_baseline, init_rad, load_baseline, load_rad, mel_examples, rad_examples, retrieve_for,
    save_model, FeatureBank,
};
pub use report::{retrieval_report, QueryReport, RetrievalReport};

use std::path::{Path, PathBuf};

use crate::corpus::{read_manifest, synthesize_corpus, write_corpus, ManifestRecord, Split};
use crate::encoder::{extract_and_cache, CacheIndex, Cascade, Encoder, EncoderKind, ExtractReport, LayerAffine};
use crate::error::{Error, Result};
use crate::metrics::{det_csv, pooled_eer, write_scores, ScoreRecord};
use crate::model::{
    render_log, render_log_line, score_examples, train, BaselineContext, BaselineParams, Example, ModelKind,
    RadMfaParams, Trained,
};
use crate::vecstore::{build_stores, persist_stores, BuildReport, StoreSet};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log";
pub const SCORES_FILE: &str = "scores.tsv";
pub const DET_FILE: &str = "det.csv";

/// Generate the synthetic corpus under `<workdir>/corpus`; returns the manifest path.
pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    let corpus = synthesize_corpus(&cfg.corpus_config())?;
    let dir = cfg.workdir.join("corpus");
    let manifest = write_corpus(&corpus, &dir)?;
    write_run_manifest(&dir, cfg, "synth", &[("clips", corpus.clips.len().to_string())])?;
    Ok(manifest)
}

/// Read the configured manifest, synthesizing the default corpus first if there is none.
pub fn ensure_corpus(cfg: &RunConfig) -> Result<(PathBuf, Vec<ManifestRecord>)> {
    let path = cfg.manifest_path();
    if cfg.manifest.is_none() && !path.exists() {
        synth(cfg)?;
    }
    let records = read_manifest(&path)?;
    Ok((path, records))
}

pub fn extract(
    cfg: &RunConfig,
    records: &[ManifestRecord],
    manifest: &Path,
    tuned: Option<LayerAffine>,
    tau: usize,
    dir: &Path,
) -> Result<(CacheIndex, ExtractReport)> {
    let encoder = Encoder::new(cfg.encoder_config(tuned))?;
    let (index, report) = extract_and_cache(records, manifest, &encoder, tau, dir)?;
    write_run_manifest(
        dir,
        cfg,
        "extract",
        &[
            ("manifest", manifest.display().to_string()),
            ("tau", tau.to_string()),
            ("fingerprint", index.fingerprint.clone()),
        ],
    )?;
    Ok((index, report))
}

/// Build and persist the per-layer stores with the configured filter.
pub fn build_db(cfg: &RunConfig, records: &[ManifestRecord], cache: &CacheIndex, dir: &Path) -> Result<(StoreSet, BuildReport)> {
    let (store, report) = build_stores(records, cache, &cfg.store_filter())?;
    persist_stores(&store, dir)?;
    write_run_manifest(
        dir,
        cfg,
        "build-db",
        &[
            ("cache", cache.dir.display().to_string()),
            ("inserted", report.inserted.to_string()),
        ],
    )?;
    Ok((store, report))
}

/// Layer-0 inputs of the train, dev and eval splits.
#[derive(Debug, Clone)]
pub struct MelSets {
    pub train: Vec<Example<Vec<f64>>>,
    pub dev: Vec<Example<Vec<f64>>>,
    pub eval: Vec<Example<Vec<f64>>>,
}

impl MelSets {
    pub fn load(cfg: &RunConfig, records: &[ManifestRecord], manifest: &Path) -> Result<Self> {
        let encoder = Encoder::new(cfg.encoder_config(None))?;
        Ok(Self {
            train: mel_examples(records, manifest, &encoder, Split::Train)?,
            dev: mel_examples(records, manifest, &encoder, Split::Dev)?,
            eval: mel_examples(records, manifest, &encoder, Split::Eval)?,
        })
    }

    pub fn split(&self, split: Split) -> Result<&[Example<Vec<f64>>]> {
        match split {
            Split::Train => Ok(&self.train),
            Split::Dev => Ok(&self.dev),
            Split::Eval => Ok(&self.eval),
            Split::RetrievalExtra => Err(Error::Config("retrieval_extra is not a scoring split".into())),
        }
    }
}

pub fn baseline_context(cfg: &RunConfig) -> Result<BaselineContext> {
    if cfg.encoder != EncoderKind::PseudoTrainable {
        return Err(Error::Config(format!(
            "the baseline fine-tunes the encoder and needs encoder=pseudo_trainable, got {}",
            cfg.encoder
        )));
    }
    Ok(BaselineContext {
        cascade: Cascade::new(cfg.layers, cfg.dim, cfg.encoder_seed),
        tau: cfg.tau,
    })
}

fn finish_training<P: crate::nn::Parameters>(
    cfg: &RunConfig,
    kind: ModelKind,
    trained: &Trained<P>,
    out: &Path,
    meta: &[(&str, String)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(LOG_FILE), render_log(&trained.log))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut all = vec![
        ("layers", cfg.layers.to_string()),
        ("dim", cfg.dim.to_string()),
        ("tau", cfg.tau.to_string()),
        ("k", cfg.k.to_string()),
        ("encoder_seed", cfg.encoder_seed.to_string()),
        ("seed", cfg.seed.to_string()),
        ("config_hash", cfg.hash()),
        ("best_epoch", trained.best_epoch.to_string()),
    ];
    all.extend(meta.iter().cloned());
    save_model(&ckpt, kind, &trained.params, &all)?;
    write_run_manifest(out, cfg, &format!("train {kind}"), meta)?;
    Ok(ckpt)
}

/// Train the fine-tuning baseline; returns the checkpoint path and the model as reloaded from it.
pub fn train_baseline(cfg: &RunConfig, sets: &MelSets, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<(PathBuf, BaselineParams)> {
    let ctx = baseline_context(cfg)?;
    let init = init_baseline(cfg.layers, cfg.dim, cfg.seed);
    let trained = train(init, &ctx, &sets.train, &sets.dev, &cfg.hyper(), |s| progress(&render_log_line(s)))?;
    let fp = cfg.encoder_config(None).fingerprint();
    let ckpt = finish_training(cfg, ModelKind::Baseline, &trained, out, &[("base_fingerprint", fp)])?;
    let (params, _) = load_baseline(&ckpt)?;
    Ok((ckpt, params))
}

/// Features and retrieval database for a retrieval-augmented model.
#[derive(Debug, Clone)]
pub struct RadData {
    pub bank: FeatureBank,
    pub store: StoreSet,
}

impl RadData {
    pub fn check(&self, tau: usize) -> Result<()> {
        if self.store.meta.fingerprint != self.bank.fingerprint {
            return Err(Error::Incompatible("store and feature cache come from different encoders".into()));
        }
        if self.bank.tau != tau {
            return Err(Error::Incompatible(format!(
                "features were cached with tau={}, config has tau={tau}",
                self.bank.tau
            )));
        }
        Ok(())
    }
}

pub fn load_rad_data(cache_dir: &Path, store_dir: &Path) -> Result<RadData> {
    let cache = CacheIndex::load(cache_dir)?;
    let store = crate::vecstore::load_stores(store_dir, Some(&cache.fingerprint)).map_err(|e| match e {
        Error::NotFound(p) => Error::Config(format!(
            "retrieval models need a store, none at {} (run build-db first)",
            p.display()
        )),
        other => other,
    })?;
    Ok(RadData {
        bank: FeatureBank::load(&cache)?,
        store,
    })
}

pub fn train_rad(
    cfg: &RunConfig,
    kind: ModelKind,
    records: &[ManifestRecord],
    data: &RadData,
    out: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<(PathBuf, RadMfaParams)> {
    if !kind.uses_retrieval() {
        return Err(Error::Config(format!("{kind} does not use retrieval")));
    }
    data.check(cfg.tau)?;
    let train_set = rad_examples(records, Split::Train, &data.bank, &data.store, cfg.k)?;
    let dev_set = rad_examples(records, Split::Dev, &data.bank, &data.store, cfg.k)?;
    let init = init_rad(kind, cfg.layers, cfg.dim, cfg.seed);
    let trained = train(init, &(), &train_set, &dev_set, &cfg.hyper(), |s| progress(&render_log_line(s)))?;
    let meta = [
        ("fingerprint", data.store.meta.fingerprint.clone()),
        ("store_size", data.store.len().to_string()),
    ];
    let ckpt = finish_training(cfg, kind, &trained, out, &meta)?;
    let (_, params, _) = load_rad(&ckpt)?;
    Ok((ckpt, params))
}

pub fn score_baseline(cfg: &RunConfig, params: &BaselineParams, examples: &[Example<Vec<f64>>]) -> Result<Vec<ScoreRecord>> {
    score_examples(params, &baseline_context(cfg)?, examples)
}

pub fn score_rad(
    cfg: &RunConfig,
    params: &RadMfaParams,
    records: &[ManifestRecord],
    split: Split,
    data: &RadData,
) -> Result<Vec<ScoreRecord>> {
    data.check(cfg.tau)?;
    let examples = rad_examples(records, split, &data.bank, &data.store, cfg.k)?;
    score_examples(params, &(), &examples)
}

/// Write `scores.tsv` and `det.csv`; returns the pooled EER.
pub fn write_eval(dir: &Path, scores: &[ScoreRecord]) -> Result<f64> {
    std::fs::create_dir_all(dir)?;
    write_scores(&dir.join(SCORES_FILE), scores)?;
    std::fs::write(dir.join(DET_FILE), det_csv(scores)?)?;
    Ok(pooled_eer(scores)?.eer)
}
