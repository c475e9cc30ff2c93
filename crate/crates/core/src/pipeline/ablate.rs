//! The ablation grid: baseline vs. retrieval-augmented variants, and a sweep over `τ`.
//!
//! Per seed, under `<out>/seed<s>/`:
//!
//! ```text
//! no_rad/                 fine-tuning baseline (its tuned encoder feeds everything below)
//! cache_tau<τ>/           features from the tuned encoder
//! store_tau<τ>_full/      train + retrieval_extra bonafide
//! store_tau<τ>_noextra/   train bonafide only
//! full/ no_extra_db/ just_difference/ tau<τ>/
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{
    build_db, ensure_corpus, extract, score_baseline, score_rad, train_baseline, train_rad, write_eval,
    write_run_manifest, FeatureBank, MelSets, RadData, RunConfig,
};
use crate::corpus::Split;
use crate::error::Result;
use crate::model::ModelKind;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub tau: usize,
    pub eer: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,seed,tau,eer\n");
    for r in rows {
        writeln!(out, "{},{},{},{:.8e}", r.variant, r.seed, r.tau, r.eer).unwrap();
    }
    out
}

/// Run the grid for every configured seed and write `<out>/ablation.csv`.
///
/// Rows: `no_rad`, `full`, `no_extra_db`, `just_difference` at the configured
/// `τ`, then `tau_sweep` for each `τ` in `taus` (the configured `τ` repeats `full`).
pub fn run_ablation(cfg: &RunConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<Vec<AblationRow>> {
    let (manifest, records) = ensure_corpus(cfg)?;
    let mels = MelSets::load(cfg, &records, &manifest)?;
    let mut rows = Vec::new();
    let mut taus = cfg.taus.clone();
    if !taus.contains(&cfg.tau) {
        taus.push(cfg.tau);
    }

    for &seed in &cfg.seeds {
        let base = RunConfig { seed, ..cfg.clone() };
        let dir = out.join(format!("seed{seed}"));
        let mut row = |variant: &str, tau: usize, eer: f64| {
            progress(&format!("seed {seed} {variant} tau={tau}: eer {eer:.4}"));
            rows.push(AblationRow {
                variant: variant.to_string(),
                seed,
                tau,
                eer,
            });
        };

        let (_, baseline) = train_baseline(&base, &mels, &dir.join("no_rad"), &mut |_| {})?;
        let eer = write_eval(&dir.join("no_rad"), &score_baseline(&base, &baseline, &mels.eval)?)?;
        row("no_rad", base.tau, eer);
        if !cfg.with_rad {
            continue;
        }

        let tuned = baseline.layer_affine();
        let data_for = |tau: usize, with_extra: bool| -> Result<RadData> {
            let c = RunConfig { tau, with_extra_db: with_extra, ..base.clone() };
            let (cache, _) = extract(&c, &records, &manifest, Some(tuned.clone()), tau, &dir.join(format!("cache_tau{tau}")))?;
            let tag = if with_extra { "full" } else { "noextra" };
            let (store, _) = build_db(&c, &records, &cache, &dir.join(format!("store_tau{tau}_{tag}")))?;
            Ok(RadData {
                bank: FeatureBank::load(&cache)?,
                store,
            })
        };
        let run = |c: &RunConfig, kind: ModelKind, data: &RadData, name: &str| -> Result<f64> {
            let row_dir = dir.join(name);
            let (_, params) = train_rad(c, kind, &records, data, &row_dir, &mut |_| {})?;
            let eer = write_eval(&row_dir, &score_rad(c, &params, &records, Split::Eval, data)?)?;
            write_run_manifest(
                &row_dir,
                c,
                &format!("train {kind}"),
                &[
                    ("cache", dir.join(format!("cache_tau{}", c.tau)).display().to_string()),
                    ("store_size", data.store.len().to_string()),
                    ("eval_eer", format!("{eer:.8e}")),
                ],
            )?;
            Ok(eer)
        };

        let full_cfg = RunConfig {
            with_extra_db: cfg.with_extra_db,
            ..base.clone()
        };
        let full_data = data_for(cfg.tau, cfg.with_extra_db)?;
        let full = run(&full_cfg, ModelKind::RadMfa, &full_data, "full")?;
        row("full", cfg.tau, full);

        let noextra_cfg = RunConfig {
            with_extra_db: false,
            ..base.clone()
        };
        let noextra = run(&noextra_cfg, ModelKind::RadMfa, &data_for(cfg.tau, false)?, "no_extra_db")?;
        row("no_extra_db", cfg.tau, noextra);

        let jd = run(&full_cfg, ModelKind::JustDifference, &full_data, "just_difference")?;
        row("just_difference", cfg.tau, jd);

        for &tau in &taus {
            let eer = if tau == cfg.tau {
                full
            } else {
                let c = RunConfig { tau, ..full_cfg.clone() };
                run(&c, ModelKind::RadMfa, &data_for(tau, cfg.with_extra_db)?, &format!("tau{tau}"))?
            };
            row("tau_sweep", tau, eer);
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("ablation.csv"), ablation_csv(&rows))?;
    write_run_manifest(out, cfg, "ablate", &[("manifest", manifest.display().to_string())])?;
    Ok(rows)
}
