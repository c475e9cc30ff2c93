//! Run configuration: a `key=value` file plus overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::{CorpusConfig, Split};
use crate::encoder::{EncoderConfig, EncoderKind, LayerAffine};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::TrainHyper;
use crate::vecstore::StoreFilter;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workdir: PathBuf,
    /// Defaults to `<workdir>/corpus/manifest.tsv`.
    pub manifest: Option<PathBuf>,

    pub n_speakers: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_eval: usize,
    pub n_extra: usize,
    pub spoof_fraction: f64,
    pub spoof_methods: Vec<String>,
    pub corpus_seed: u64,

    pub encoder: EncoderKind,
    pub layers: usize,
    pub dim: usize,
    pub encoder_seed: u64,
    pub external_dir: Option<PathBuf>,

    pub tau: usize,
    pub k: usize,

    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,

    pub with_rad: bool,
    pub with_extra_db: bool,
    /// Also put eval-split bonafide into the retrieval database.
    pub include_eval_bonafide: bool,
    pub taus: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("run"),
            manifest: None,
            n_speakers: 8,
            n_train: 400,
            n_dev: 100,
            n_eval: 200,
            n_extra: 100,
            spoof_fraction: 0.5,
            spoof_methods: vec!["phase_reset".into(), "envelope_smoothing".into(), "quantize8".into()],
            corpus_seed: 7,
            encoder: EncoderKind::PseudoTrainable,
            layers: 5,
            dim: 32,
            encoder_seed: 11,
            external_dir: None,
            tau: 10,
            k: 10,
            lr: 3e-4,
            batch: 32,
            epochs: 30,
            seed: 1,
            with_rad: true,
            with_extra_db: true,
            include_eval_bonafide: false,
            taus: vec![5, 10, 20],
            seeds: vec![1, 2, 3],
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad list item `{s}` for `{key}`")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

impl RunConfig {
    /// Parse a config file; unknown keys are an error.
    pub fn read(path: &Path) -> Result<Self> {
        let map = kv::read(path)?;
        let mut cfg = Self::default();
        for (k, v) in &map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "workdir" => self.workdir = PathBuf::from(raw),
            "manifest" => self.manifest = opt_path(raw),
            "n_speakers" => self.n_speakers = parse_one(key, raw)?,
            "n_train" => self.n_train = parse_one(key, raw)?,
            "n_dev" => self.n_dev = parse_one(key, raw)?,
            "n_eval" => self.n_eval = parse_one(key, raw)?,
            "n_extra" => self.n_extra = parse_one(key, raw)?,
            "spoof_fraction" => self.spoof_fraction = parse_one(key, raw)?,
            "spoof_methods" => self.spoof_methods = parse_list(key, raw)?,
            "corpus_seed" => self.corpus_seed = parse_one(key, raw)?,
            "encoder" => self.encoder = raw.parse()?,
            "layers" => self.layers = parse_one(key, raw)?,
            "dim" => self.dim = parse_one(key, raw)?,
            "encoder_seed" => self.encoder_seed = parse_one(key, raw)?,
            "external_dir" => self.external_dir = opt_path(raw),
            "tau" => self.tau = parse_one(key, raw)?,
            "k" => self.k = parse_one(key, raw)?,
            "lr" => self.lr = parse_one(key, raw)?,
            "batch" => self.batch = parse_one(key, raw)?,
            "epochs" => self.epochs = parse_one(key, raw)?,
            "seed" => self.seed = parse_one(key, raw)?,
            "with_rad" => self.with_rad = parse_one(key, raw)?,
            "with_extra_db" => self.with_extra_db = parse_one(key, raw)?,
            "include_eval_bonafide" => self.include_eval_bonafide = parse_one(key, raw)?,
            "taus" => self.taus = parse_list(key, raw)?,
            "seeds" => self.seeds = parse_list(key, raw)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 || self.taus.iter().any(|&t| t < 1) {
            return Err(Error::Config("tau must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.batch < 1 || !(self.lr > 0.0) {
            return Err(Error::Config("batch and lr must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.encoder_config(None).validate()
    }

    /// Every key with its value, paths included, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut v = vec![
            ("workdir", self.workdir.display().to_string()),
            ("manifest", path(&self.manifest)),
            ("external_dir", path(&self.external_dir)),
        ];
        v.extend(self.experiment_pairs());
        v
    }

    /// The keys that change results (everything but paths).
    fn experiment_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_speakers", self.n_speakers.to_string()),
            ("n_train", self.n_train.to_string()),
            ("n_dev", self.n_dev.to_string()),
            ("n_eval", self.n_eval.to_string()),
            ("n_extra", self.n_extra.to_string()),
            ("spoof_fraction", self.spoof_fraction.to_string()),
            ("spoof_methods", list(&self.spoof_methods)),
            ("corpus_seed", self.corpus_seed.to_string()),
            ("encoder", self.encoder.to_string()),
            ("layers", self.layers.to_string()),
            ("dim", self.dim.to_string()),
            ("encoder_seed", self.encoder_seed.to_string()),
            ("tau", self.tau.to_string()),
            ("k", self.k.to_string()),
            ("lr", self.lr.to_string()),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("with_rad", self.with_rad.to_string()),
            ("with_extra_db", self.with_extra_db.to_string()),
            ("include_eval_bonafide", self.include_eval_bonafide.to_string()),
            ("taus", list(&self.taus)),
            ("seeds", list(&self.seeds)),
        ]
    }

    pub fn render(&self) -> String {
        kv::render(self.pairs())
    }

    /// First 16 hex digits of the SHA-256 of the path-free settings.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(kv::render(self.experiment_pairs()).as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.workdir.join("corpus").join("manifest.tsv"))
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        let mut c = CorpusConfig::with_splits(
            self.n_speakers,
            self.n_train,
            self.n_dev,
            self.n_eval,
            self.n_extra,
            self.spoof_fraction,
            self.corpus_seed,
        );
        c.spoof_methods = self.spoof_methods.clone();
        c
    }

    pub fn encoder_config(&self, tuned: Option<LayerAffine>) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder,
            layers: self.layers,
            dim: self.dim,
            seed: self.encoder_seed,
            trainable: tuned,
            external_dir: self.external_dir.clone(),
        }
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.lr,
            batch: self.batch,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    /// Bonafide from train, plus retrieval_extra when enabled, plus eval when enabled.
    pub fn store_filter(&self) -> StoreFilter {
        let mut splits = vec![Split::Train];
        if self.with_extra_db {
            splits.push(Split::RetrievalExtra);
        }
        if self.include_eval_bonafide {
            splits.push(Split::Eval);
        }
        StoreFilter::splits(&splits)
    }
}

/// Write `config.txt` and `run_manifest.txt` into an artifact directory.
pub fn write_run_manifest(dir: &Path, cfg: &RunConfig, command: &str, inputs: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.render())?;
    let mut pairs = vec![
        ("command", command.to_string()),
        ("config_hash", cfg.hash()),
        ("seed", cfg.seed.to_string()),
    ];
    pairs.extend(inputs.iter().map(|(k, v)| (*k, v.clone())));
    std::fs::write(dir.join("run_manifest.txt"), kv::render(pairs))?;
    Ok(())
}

/// Parse the `config.txt` of an artifact directory.
pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::read(&dir.join("config.txt"))
}

pub(crate) fn meta_map(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_read_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["tau=5", "seeds=4,5", "manifest=/x/m.tsv", "lr=1e-3"]).unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, cfg.render()).unwrap();
        assert_eq!(RunConfig::read(&path).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.workdir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.k = 5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.apply_overrides(&["tau=0"]).is_err());
        let mut c = RunConfig::default();
        assert!(c.apply_overrides(&["k=0"]).is_err());
        let mut c = RunConfig::default();
        assert!(c.apply_overrides(&["nope=1"]).is_err());
        let mut c = RunConfig::default();
        assert!(c.apply_overrides(&["tau"]).is_err());
    }
}
