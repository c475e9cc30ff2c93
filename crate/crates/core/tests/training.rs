//! Training and scoring on a small synthetic corpus.

use std::path::PathBuf;
use std::sync::OnceLock;

use raddet::corpus::{ManifestRecord, Split};
use raddet::encoder::Encoder;
use raddet::metrics::pooled_eer;
use raddet::model::{score_examples, train, Example, ModelKind, TrainHyper};
use raddet::pipeline::{self, init_baseline, init_rad, mel_examples, RadData, RunConfig};

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: RunConfig,
    manifest: PathBuf,
    records: Vec<ManifestRecord>,
    data: RadData,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = RunConfig {
            workdir: root.clone(),
            n_speakers: 4,
            n_train: 96,
            n_dev: 40,
            n_eval: 60,
            n_extra: 20,
            layers: 3,
            dim: 8,
            epochs: 2,
            batch: 16,
            ..RunConfig::default()
        };
        let (manifest, records) = pipeline::ensure_corpus(&cfg).unwrap();
        let (cache, _) = pipeline::extract(&cfg, &records, &manifest, None, cfg.tau, &root.join("cache")).unwrap();
        let (store, _) = pipeline::build_db(&cfg, &records, &cache, &root.join("store")).unwrap();
        let bank = pipeline::FeatureBank::load(&cache).unwrap();
        Fixture {
            _dir: dir,
            root,
            cfg,
            manifest,
            records,
            data: RadData { bank, store },
        }
    })
}

#[test]
fn same_seed_gives_identical_logs_and_scores() {
    let f = fixture();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = f.root.join(format!("det{run}"));
        let (_, params) = pipeline::train_rad(&f.cfg, ModelKind::RadMfa, &f.records, &f.data, &out, &mut |_| {}).unwrap();
        let scores = pipeline::score_rad(&f.cfg, &params, &f.records, Split::Eval, &f.data).unwrap();
        pipeline::write_eval(&out, &scores).unwrap();
        outputs.push([
            std::fs::read(out.join(pipeline::LOG_FILE)).unwrap(),
            std::fs::read(out.join(pipeline::SCORES_FILE)).unwrap(),
            std::fs::read(out.join(pipeline::CHECKPOINT_FILE)).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);

    let other = RunConfig { seed: 2, ..f.cfg.clone() };
    let out = f.root.join("det_seed2");
    pipeline::train_rad(&other, ModelKind::RadMfa, &f.records, &f.data, &out, &mut |_| {}).unwrap();
    assert_ne!(std::fs::read(out.join(pipeline::LOG_FILE)).unwrap(), outputs[0][0]);
}

#[test]
fn one_epoch_lowers_the_loss() {
    let f = fixture();
    let rad = |split| pipeline::rad_examples(&f.records, split, &f.data.bank, &f.data.store, f.cfg.k).unwrap();
    let hyper = TrainHyper {
        epochs: 1,
        ..f.cfg.hyper()
    };
    let trained = train(
        init_rad(ModelKind::RadMfa, 3, 8, 1),
        &(),
        &rad(Split::Train),
        &rad(Split::Dev),
        &hyper,
        |_| {},
    )
    .unwrap();
    let log = &trained.log;
    assert_eq!(log.len(), 2);
    assert!(log[1].train_loss < log[0].train_loss, "{log:?}");
    assert!(log[1].dev_loss < log[0].dev_loss, "{log:?}");
}

fn eval_mels(f: &Fixture) -> Vec<Example<Vec<f64>>> {
    let encoder = Encoder::new(f.cfg.encoder_config(None)).unwrap();
    mel_examples(&f.records, &f.manifest, &encoder, Split::Eval).unwrap()
}

#[test]
fn untrained_baseline_is_near_chance() {
    let f = fixture();
    let ctx = pipeline::baseline_context(&f.cfg).unwrap();
    let eval = eval_mels(f);
    let eers: Vec<f64> = (1..=3)
        .map(|s| {
            let scores = score_examples(&init_baseline(3, 8, s), &ctx, &eval).unwrap();
            assert_eq!(scores.len(), 60);
            pooled_eer(&scores).unwrap().eer
        })
        .collect();
    let mean = eers.iter().sum::<f64>() / 3.0;
    assert!((mean - 0.5).abs() <= 0.15, "{eers:?}");
}

#[test]
fn baseline_trains_and_scores_every_eval_segment() {
    let f = fixture();
    let sets = pipeline::MelSets::load(&f.cfg, &f.records, &f.manifest).unwrap();
    let out = f.root.join("baseline");
    let (ckpt, params) = pipeline::train_baseline(&f.cfg, &sets, &out, &mut |_| {}).unwrap();
    let log = std::fs::read_to_string(out.join(pipeline::LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 1 + 1 + f.cfg.epochs);
    let scores = pipeline::score_baseline(&f.cfg, &params, &sets.eval).unwrap();
    assert_eq!(scores.len(), f.records.iter().filter(|r| r.split == Split::Eval).count());
    // reloading the checkpoint gives the same scores
    let (again, _) = pipeline::load_baseline(&ckpt).unwrap();
    assert_eq!(pipeline::score_baseline(&f.cfg, &again, &sets.eval).unwrap(), scores);
}

#[test]
fn fewer_references_change_the_scores() {
    let f = fixture();
    let out = f.root.join("k_sensitivity");
    let (_, params) = pipeline::train_rad(&f.cfg, ModelKind::RadMfa, &f.records, &f.data, &out, &mut |_| {}).unwrap();
    let with_k = |k| {
        let c = RunConfig { k, ..f.cfg.clone() };
        pipeline::score_rad(&c, &params, &f.records, Split::Eval, &f.data).unwrap()
    };
    let (ten, five) = (with_k(10), with_k(5));
    assert_eq!(ten.len(), five.len());
    let differing = ten.iter().zip(&five).filter(|(a, b)| a.score != b.score).count();
    assert!(differing > ten.len() / 2, "{differing} of {} differ", ten.len());
}

#[test]
fn just_difference_trains_through_the_same_path() {
    let f = fixture();
    let out = f.root.join("jd");
    let (_, params) =
        pipeline::train_rad(&f.cfg, ModelKind::JustDifference, &f.records, &f.data, &out, &mut |_| {}).unwrap();
    assert!(!params.with_query());
    let (kind, _, _) = pipeline::load_rad(&out.join(pipeline::CHECKPOINT_FILE)).unwrap();
    assert_eq!(kind, ModelKind::JustDifference);
}

#[test]
fn retrieval_model_without_store_is_a_config_error() {
    let f = fixture();
    let err = pipeline::load_rad_data(&f.root.join("cache"), &f.root.join("no_store")).unwrap_err();
    assert!(matches!(err, raddet::Error::Config(_)), "{err}");
}

#[test]
fn baseline_rejects_a_fixed_encoder() {
    let f = fixture();
    let cfg = RunConfig {
        encoder: raddet::encoder::EncoderKind::Pseudo,
        ..f.cfg.clone()
    };
    assert!(matches!(pipeline::baseline_context(&cfg), Err(raddet::Error::Config(_))));
}
