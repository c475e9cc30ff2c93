//! Store directory layout:
//!
//! ```text
//! metadata.txt      key=value: layers, dim, tau, fingerprint, built_at, records
//! records.tsv       insertion order: utt_id \t speaker_id \t short feature path
//! layer_<l>.radf    RADF kind Vectors, dims 1 × N × F
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{LayerStore, StoreMeta, StoreRecord, StoreSet};
use crate::encoder::radf::{RadfKind, RadfTensor};
use crate::error::{Error, Result};
use crate::kv;

const META_FILE: &str = "metadata.txt";
const RECORDS_FILE: &str = "records.tsv";

fn layer_file(l: usize) -> String {
    format!("layer_{l:02}.radf")
}

pub fn persist_stores(store: &StoreSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let m = &store.meta;
    let meta = kv::render([
        ("layers", m.layers.to_string()),
        ("dim", m.dim.to_string()),
        ("tau", m.tau.to_string()),
        ("fingerprint", m.fingerprint.clone()),
        ("built_at", m.built_at.to_string()),
        ("records", store.len().to_string()),
    ]);
    let mut records = String::new();
    for r in store.records() {
        writeln!(records, "{}\t{}\t{}", r.utt_id, r.speaker_id, r.short_feature_path).unwrap();
    }
    for l in 0..m.layers {
        RadfTensor::new(
            RadfKind::Vectors,
            [1, store.len(), m.dim],
            store.layer(l).vectors().to_vec(),
        )?
        .write(&dir.join(layer_file(l)))?;
    }
    std::fs::write(dir.join(RECORDS_FILE), records)?;
    // metadata last: its presence marks a complete store
    std::fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

/// Load a persisted store. When `expected_fingerprint` is given, a store
/// built with a different encoder is refused.
pub fn load_stores(dir: &Path, expected_fingerprint: Option<&str>) -> Result<StoreSet> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Error::NotFound(meta_path));
    }
    let map = kv::read(&meta_path)?;
    let origin = meta_path.display().to_string();
    let meta = StoreMeta {
        layers: kv::get(&map, "layers", &origin)?,
        dim: kv::get(&map, "dim", &origin)?,
        tau: kv::get(&map, "tau", &origin)?,
        fingerprint: kv::get(&map, "fingerprint", &origin)?,
        built_at: kv::get(&map, "built_at", &origin)?,
    };
    let n: usize = kv::get(&map, "records", &origin)?;
    if let Some(fp) = expected_fingerprint {
        if fp != meta.fingerprint {
            return Err(Error::Incompatible(format!(
                "store {} was built with encoder {}, configured encoder is {fp}",
                dir.display(),
                meta.fingerprint
            )));
        }
    }

    let records_path = dir.join(RECORDS_FILE);
    let text = std::fs::read_to_string(&records_path)?;
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    path: records_path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected 3 fields, found {}", f.len()),
                });
            }
            Ok(StoreRecord {
                utt_id: f[0].into(),
                speaker_id: f[1].into(),
                short_feature_path: f[2].into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if records.len() != n {
        return Err(Error::Format {
            path: records_path.display().to_string(),
            msg: format!("metadata says {n} records, found {}", records.len()),
        });
    }

    let stores = (0..meta.layers)
        .map(|l| {
            let path = dir.join(layer_file(l));
            let t = RadfTensor::read(&path)?;
            if t.kind != RadfKind::Vectors || t.dims != [1, n, meta.dim] {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    msg: format!("expected vectors [1, {n}, {}], found {:?} {:?}", meta.dim, t.kind, t.dims),
                });
            }
            Ok(LayerStore::from_vectors(t.data, meta.dim))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StoreSet::from_parts(meta, records, stores))
}
