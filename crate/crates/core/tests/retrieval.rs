use std::collections::HashSet;

use rand::Rng;
use raddet::corpus::Split;
use raddet::encoder::LayerEmbedding;
use raddet::pipeline::{self, RunConfig};
use raddet::seed;
use raddet::vecstore::{load_stores, persist_stores, StoreMeta, StoreRecord, StoreSet};

fn small_config(dir: &std::path::Path) -> RunConfig {
    RunConfig {
        workdir: dir.to_path_buf(),
        n_speakers: 4,
        n_train: 40,
        n_dev: 4,
        n_eval: 4,
        n_extra: 10,
        layers: 3,
        dim: 8,
        ..RunConfig::default()
    }
}

#[test]
fn store_holds_train_bonafide_plus_extra() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (manifest, records) = pipeline::ensure_corpus(&cfg).unwrap();
    let (cache, _) = pipeline::extract(&cfg, &records, &manifest, None, cfg.tau, &tmp.path().join("cache")).unwrap();

    let no_extra = RunConfig { with_extra_db: false, ..cfg.clone() };
    let (store, report) = pipeline::build_db(&no_extra, &records, &cache, &tmp.path().join("s20")).unwrap();
    assert_eq!(store.len(), 20);
    assert_eq!(report.skipped_spoof, 20);

    let (store, _) = pipeline::build_db(&cfg, &records, &cache, &tmp.path().join("s30")).unwrap();
    assert_eq!(store.len(), 30);
    let extra = records.iter().filter(|r| r.split == Split::RetrievalExtra).count();
    assert_eq!(extra, 10);

    // persisted copy answers every query identically
    let loaded = load_stores(&tmp.path().join("s30"), Some(&cache.fingerprint)).unwrap();
    let none = HashSet::new();
    for rec in records.iter().filter(|r| r.split == Split::Eval) {
        let q = cache.load_embedding(&rec.utt_id).unwrap();
        assert_eq!(
            store.query_topk(&q, 10, &none).unwrap(),
            loaded.query_topk(&q, 10, &none).unwrap()
        );
    }
}

/// Full scan in f64 with an explicit comparator, kept apart from the store's
/// partial selection.
fn brute_force(vectors: &[Vec<f32>], q: &[f32], k: usize) -> Vec<usize> {
    let norm = |v: &[f32]| v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            (i, (dot / (qn * norm(v))).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(i, _)| i).collect()
}

#[test]
fn topk_matches_full_scan_on_2000_records() {
    let (n, layers, dim) = (2000, 4, 32);
    let mut rng = seed::rng(2024, &[]);
    let mut store = StoreSet::empty(StoreMeta {
        layers,
        dim,
        tau: 10,
        fingerprint: "test".into(),
        built_at: 0,
    });
    let mut per_layer: Vec<Vec<Vec<f32>>> = vec![Vec::new(); layers];
    for i in 0..n {
        let mut values: Vec<f32> = (0..layers * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        // exact duplicates exercise the insertion-order tie-break
        if i % 97 == 5 {
            values = per_layer.iter().flat_map(|l| l[i - 5].clone()).collect();
        }
        for (l, rows) in per_layer.iter_mut().enumerate() {
            rows.push(values[l * dim..(l + 1) * dim].to_vec());
        }
        let emb = LayerEmbedding {
            layers,
            dim,
            values,
            segment_ref: format!("u{i}"),
        };
        let rec = StoreRecord {
            utt_id: format!("u{i}"),
            speaker_id: format!("spk{}", i % 8),
            short_feature_path: String::new(),
        };
        store.insert(rec, &emb).unwrap();
    }

    let none = HashSet::new();
    for qi in 0..100 {
        let values: Vec<f32> = if qi % 10 == 0 {
            // a stored vector and its duplicate must come back in insertion order
            per_layer.iter().flat_map(|l| l[5 + 97 * qi / 10].clone()).collect()
        } else {
            (0..layers * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
        };
        let q = LayerEmbedding {
            layers,
            dim,
            values,
            segment_ref: "q".into(),
        };
        let got = store.query_topk(&q, 10, &none).unwrap();
        assert!(!got.truncated);
        for l in 0..layers {
            let expect = brute_force(&per_layer[l], q.row(l), 10);
            let ids: Vec<usize> = got.layers[l].iter().map(|h| h.insertion_index).collect();
            assert_eq!(ids, expect, "query {qi} layer {l}");
            let ranks: Vec<usize> = got.layers[l].iter().map(|h| h.rank).collect();
            assert_eq!(ranks, (1..=10).collect::<Vec<_>>());
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    persist_stores(&store, tmp.path()).unwrap();
    let back = load_stores(tmp.path(), Some("test")).unwrap();
    assert_eq!(back.records(), store.records());
    for l in 0..layers {
        let a: Vec<u32> = back.layer(l).vectors().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = store.layer(l).vectors().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}
