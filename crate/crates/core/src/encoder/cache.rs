//! On-disk cache of short features and retrieval embeddings.
//!
//! ```text
//! <cache>/cache_meta.txt     tau, layers, dim, encoder fingerprint
//! <cache>/index.tsv          utt_id \t short path \t embedding path
//! <cache>/short/<utt>.radf
//! <cache>/emb/<utt>.radf
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::radf::{RadfKind, RadfTensor};
use super::{short_frames, temporal_embed, time_speedup, Encoder, EncoderKind, LayerEmbedding, ShortFeature, SEGMENT_FRAMES};
use crate::corpus::{read_wav, resolve_audio_path, segment_clip, AudioClip, ManifestRecord};
use crate::error::{Error, Result};
use crate::kv;

const META_FILE: &str = "cache_meta.txt";
const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub short_path: PathBuf,
    pub embedding_path: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractReport {
    pub written: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct CacheIndex {
    pub dir: PathBuf,
    pub tau: usize,
    pub layers: usize,
    pub dim: usize,
    pub fingerprint: String,
    entries: Vec<(String, CacheEntry)>,
    lookup: HashMap<String, usize>,
}

impl CacheIndex {
    fn new(dir: &Path, tau: usize, layers: usize, dim: usize, fingerprint: String) -> Self {
        Self {
            dir: dir.to_path_buf(),
            tau,
            layers,
            dim,
            fingerprint,
            entries: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn push(&mut self, utt_id: String, entry: CacheEntry) {
        self.lookup.insert(utt_id.clone(), self.entries.len());
        self.entries.push((utt_id, entry));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, utt_id: &str) -> Option<&CacheEntry> {
        self.lookup.get(utt_id).map(|&i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CacheEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn entry(&self, utt_id: &str) -> Result<&CacheEntry> {
        self.get(utt_id)
            .ok_or_else(|| Error::NotFound(self.dir.join(format!("<index entry {utt_id}>"))))
    }

    pub fn load_short(&self, utt_id: &str) -> Result<ShortFeature> {
        let path = &self.entry(utt_id)?.short_path;
        let t = read_checked(path, RadfKind::Short, [self.layers, short_frames(SEGMENT_FRAMES, self.tau), self.dim])?;
        Ok(ShortFeature {
            layers: t.dims[0],
            frames: t.dims[1],
            dim: t.dims[2],
            values: t.data,
            tau: Some(self.tau),
            segment_ref: utt_id.to_string(),
        })
    }

    pub fn load_embedding(&self, utt_id: &str) -> Result<LayerEmbedding> {
        let path = &self.entry(utt_id)?.embedding_path;
        let t = read_checked(path, RadfKind::Embedding, [self.layers, 1, self.dim])?;
        Ok(LayerEmbedding {
            layers: self.layers,
            dim: self.dim,
            values: t.data,
            segment_ref: utt_id.to_string(),
        })
    }

    fn write(&self) -> Result<()> {
        let meta = kv::render([
            ("tau", self.tau.to_string()),
            ("layers", self.layers.to_string()),
            ("dim", self.dim.to_string()),
            ("fingerprint", self.fingerprint.clone()),
        ]);
        std::fs::write(self.dir.join(META_FILE), meta)?;
        let mut index = String::new();
        for (utt, e) in &self.entries {
            writeln!(
                index,
                "{utt}\t{}\t{}",
                rel(&self.dir, &e.short_path),
                rel(&self.dir, &e.embedding_path)
            )
            .unwrap();
        }
        std::fs::write(self.dir.join(INDEX_FILE), index)?;
        Ok(())
    }

    /// Load an index written by [`extract_and_cache`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta = kv::read(&meta_path)?;
        let origin = meta_path.display().to_string();
        let mut index = Self::new(
            dir,
            kv::get(&meta, "tau", &origin)?,
            kv::get(&meta, "layers", &origin)?,
            kv::get(&meta, "dim", &origin)?,
            kv::get(&meta, "fingerprint", &origin)?,
        );
        let index_path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&index_path)?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: index_path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            index.push(
                fields[0].to_string(),
                CacheEntry {
                    short_path: dir.join(fields[1]),
                    embedding_path: dir.join(fields[2]),
                },
            );
        }
        Ok(index)
    }
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn read_checked(path: &Path, kind: RadfKind, dims: [usize; 3]) -> Result<RadfTensor> {
    let t = RadfTensor::read(path)?;
    if t.kind != kind || t.dims != dims {
        return Err(Error::Format {
            path: path.display().to_string(),
            msg: format!("expected {kind:?} {dims:?}, found {:?} {:?}", t.kind, t.dims),
        });
    }
    Ok(t)
}

/// Encode every record, reduce with the speedup operator, and cache the
/// short feature and embedding. Entries already present with a valid
/// checksum are left alone; a present but damaged file is an error.
pub fn extract_and_cache(
    records: &[ManifestRecord],
    manifest_path: &Path,
    encoder: &Encoder,
    tau: usize,
    cache_dir: &Path,
) -> Result<(CacheIndex, ExtractReport)> {
    if tau < 1 {
        return Err(Error::Config("speedup factor must be at least 1".into()));
    }
    let cfg = encoder.config();
    let fingerprint = cfg.fingerprint();
    if let Ok(existing) = CacheIndex::load(cache_dir) {
        if existing.tau != tau || existing.fingerprint != fingerprint {
            return Err(Error::Config(format!(
                "{} holds features for tau={} encoder {}, requested tau={tau} encoder {fingerprint}",
                cache_dir.display(),
                existing.tau,
                existing.fingerprint
            )));
        }
    }
    std::fs::create_dir_all(cache_dir.join("short"))?;
    std::fs::create_dir_all(cache_dir.join("emb"))?;

    let mut index = CacheIndex::new(cache_dir, tau, cfg.layers, cfg.dim, fingerprint);
    let short_dims = [cfg.layers, short_frames(SEGMENT_FRAMES, tau), cfg.dim];
    let emb_dims = [cfg.layers, 1, cfg.dim];

    let outcomes: Vec<Result<bool>> = records
        .par_iter()
        .map(|rec| {
            let entry = entry_paths(cache_dir, &rec.utt_id);
            let short_ok = verify(&entry.short_path, RadfKind::Short, short_dims)?;
            let emb_ok = verify(&entry.embedding_path, RadfKind::Embedding, emb_dims)?;
            if short_ok && emb_ok {
                return Ok(false);
            }
            let samples = if cfg.kind == EncoderKind::External {
                vec![0.0]
            } else {
                read_wav(&resolve_audio_path(manifest_path, rec))?
            };
            let clip = AudioClip::new(
                rec.utt_id.clone(),
                rec.speaker_id.clone(),
                rec.label,
                rec.spoof_method.clone(),
                samples,
            )?;
            let long = encoder.encode_long(&segment_clip(&clip)?)?;
            time_speedup(&long, tau)?.to_radf().write(&entry.short_path)?;
            temporal_embed(&long)?.to_radf().write(&entry.embedding_path)?;
            Ok(true)
        })
        .collect();

    let mut report = ExtractReport::default();
    for (rec, outcome) in records.iter().zip(outcomes) {
        if outcome? {
            report.written += 1;
        } else {
            report.skipped += 1;
        }
        index.push(rec.utt_id.clone(), entry_paths(cache_dir, &rec.utt_id));
    }
    index.write()?;
    Ok((index, report))
}

fn entry_paths(dir: &Path, utt_id: &str) -> CacheEntry {
    CacheEntry {
        short_path: dir.join("short").join(format!("{utt_id}.radf")),
        embedding_path: dir.join("emb").join(format!("{utt_id}.radf")),
    }
}

/// `Ok(false)` if absent, `Ok(true)` if present and valid.
fn verify(path: &Path, kind: RadfKind, dims: [usize; 3]) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    match read_checked(path, kind, dims) {
        Ok(_) => Ok(true),
        Err(Error::Format { .. }) => Err(Error::CacheCorruption(path.to_path_buf())),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, write_corpus, CorpusConfig};
    use crate::encoder::EncoderConfig;

    fn setup(dir: &Path) -> (Vec<ManifestRecord>, PathBuf) {
        let mut cfg = CorpusConfig::new(4, 10, 0.5, 7);
        cfg.params.min_duration = 0.5;
        cfg.params.max_duration = 1.0;
        let corpus = synthesize_corpus(&cfg).unwrap();
        let manifest = write_corpus(&corpus, &dir.join("corpus")).unwrap();
        (corpus.records, manifest)
    }

    #[test]
    fn extract_counts_idempotence_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let (records, manifest) = setup(dir.path());
        let enc = Encoder::new(EncoderConfig { layers: 3, dim: 16, ..Default::default() }).unwrap();
        let cache = dir.path().join("cache");

        let (index, report) = extract_and_cache(&records, &manifest, &enc, 10, &cache).unwrap();
        assert_eq!(index.len(), 40);
        assert_eq!(report, ExtractReport { written: 40, skipped: 0 });
        assert_eq!(std::fs::read_dir(cache.join("short")).unwrap().count(), 40);
        assert_eq!(std::fs::read_dir(cache.join("emb")).unwrap().count(), 40);

        let short = index.load_short(&records[0].utt_id).unwrap();
        assert_eq!((short.layers, short.frames, short.dim), (3, 20, 16));

        let (_, again) = extract_and_cache(&records, &manifest, &enc, 10, &cache).unwrap();
        assert_eq!(again, ExtractReport { written: 0, skipped: 40 });

        let reloaded = CacheIndex::load(&cache).unwrap();
        assert_eq!(reloaded.len(), 40);
        assert_eq!(reloaded.get("utt00003"), index.get("utt00003"));

        // truncate one feature file
        let victim = index.get(&records[5].utt_id).unwrap().short_path.clone();
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        match extract_and_cache(&records, &manifest, &enc, 10, &cache) {
            Err(Error::CacheCorruption(p)) => assert_eq!(p, victim),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_cache_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let (records, manifest) = setup(dir.path());
        let records = &records[..4];
        let enc = Encoder::new(EncoderConfig { layers: 2, dim: 8, ..Default::default() }).unwrap();
        let cache = dir.path().join("cache");
        extract_and_cache(records, &manifest, &enc, 10, &cache).unwrap();
        assert!(matches!(
            extract_and_cache(records, &manifest, &enc, 5, &cache),
            Err(Error::Config(_))
        ));
    }
}
