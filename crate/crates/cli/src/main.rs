use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use raddet::corpus::Split;
use raddet::encoder::CacheIndex;
use raddet::metrics::pooled_eer;
use raddet::model::{check_baseline, check_mfa, check_radmfa, ModelKind};
use raddet::nn::{check_affine, check_asp, check_softmax_xent, GradCheckReport, DEFAULT_EPS};
use raddet::pipeline::{
    self, ablation_csv, load_baseline, load_rad, mel_examples, retrieval_report, write_run_manifest, FeatureBank,
    RunConfig,
};
use raddet::vecstore::load_stores;

#[derive(Parser)]
#[command(name = "raddet", version, about = "Retrieval-augmented audio deepfake detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key=value config file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set tau=5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set workdir=DIR`
    #[arg(short, long)]
    workdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest
    Synth(Common),
    /// Encode every manifest record into the feature cache
    Extract {
        #[command(flatten)]
        common: Common,
        /// Baseline checkpoint whose fine-tuned encoder to use
        #[arg(long)]
        tuned: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the per-layer retrieval databases from cached embeddings
    BuildDb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List top-K hits per layer for bonafide queries, with speaker consistency
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        split: Split,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint and training log
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: ModelKind,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a split with a checkpoint and report the pooled EER
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ablation grid and the speedup sweep over all configured seeds
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every reverse pass
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

/// Failures that map to exit status 1 rather than 2.
struct CheckFailed;

fn load_config(common: &Common) -> raddet::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = &common.workdir {
        cfg.workdir = w.clone();
    }
    cfg.apply_overrides(&common.overrides)?;
    Ok(cfg)
}

fn cache_dir(cfg: &RunConfig, given: &Option<PathBuf>) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| cfg.workdir.join("cache").join(format!("tau{}", cfg.tau)))
}

fn store_dir(cfg: &RunConfig, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.workdir.join("store"))
}

fn print_report(name: &str, r: &GradCheckReport, tol: f64) -> bool {
    let ok = r.passes(tol);
    println!(
        "{:<16} max_rel_error={:.3e} tol={tol:.0e} probes={} {}",
        name,
        r.max_rel_error,
        r.probes,
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn gradcheck(seeds: u64) -> anyhow::Result<bool> {
    const STEP: f64 = 1e-5;
    let mut ok = true;
    for s in 0..seeds {
        ok &= print_report("affine", &check_affine(s, STEP)?, 1e-5);
        ok &= print_report("softmax_xent", &check_softmax_xent(s, STEP)?, 1e-5);
        ok &= print_report("asp", &check_asp(s, STEP)?, 1e-5);
        ok &= print_report("mfa", &check_mfa(s, STEP)?, 1e-4);
        ok &= print_report("radmfa", &check_radmfa(s, STEP, true)?, 1e-4);
        ok &= print_report("just_difference", &check_radmfa(s, STEP, false)?, 1e-4);
        ok &= print_report("baseline", &check_baseline(s, STEP)?, 1e-4);
    }
    Ok(ok)
}

fn run(cli: Cli) -> anyhow::Result<Result<(), CheckFailed>> {
    let progress = &mut |line: &str| eprintln!("{line}");
    match cli.command {
        Command::Synth(common) => {
            let cfg = load_config(&common)?;
            let manifest = pipeline::synth(&cfg)?;
            println!("wrote {}", manifest.display());
        }
        Command::Extract { common, tuned, out } => {
            let cfg = load_config(&common)?;
            let (manifest, records) = pipeline::ensure_corpus(&cfg)?;
            let affine = match &tuned {
                Some(path) => Some(load_baseline(path)?.0.layer_affine()),
                None => None,
            };
            let dir = cache_dir(&cfg, &out);
            let (index, report) = pipeline::extract(&cfg, &records, &manifest, affine, cfg.tau, &dir)?;
            println!(
                "{}: {} written, {} reused, encoder {}",
                dir.display(),
                report.written,
                report.skipped,
                index.fingerprint
            );
        }
        Command::BuildDb { common, cache, out } => {
            let cfg = load_config(&common)?;
            let (_, records) = pipeline::ensure_corpus(&cfg)?;
            let cache = CacheIndex::load(&cache_dir(&cfg, &cache)).context("loading feature cache")?;
            let dir = store_dir(&cfg, &out);
            let (store, report) = pipeline::build_db(&cfg, &records, &cache, &dir)?;
            println!(
                "{}: {} vectors per layer over {} layers ({} spoof records skipped)",
                dir.display(),
                store.len(),
                store.meta.layers,
                report.skipped_spoof
            );
        }
        Command::Retrieve {
            common,
            cache,
            store,
            split,
            queries,
            out,
        } => {
            let cfg = load_config(&common)?;
            let (_, records) = pipeline::ensure_corpus(&cfg)?;
            let cache = CacheIndex::load(&cache_dir(&cfg, &cache))?;
            let store = load_stores(&store_dir(&cfg, &store), Some(&cache.fingerprint))?;
            let bank = FeatureBank::load(&cache)?;
            let report = retrieval_report(&records, split, queries, &bank, &store, cfg.k)?;
            let dir = out.unwrap_or_else(|| cfg.workdir.join("retrieve"));
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("hits.tsv"), report.render_hits())?;
            std::fs::write(dir.join("summary.tsv"), report.render_summary())?;
            write_run_manifest(&dir, &cfg, "retrieve", &[("queries", report.queries.len().to_string())])?;
            print!("{}", report.render_summary());
        }
        Command::Train {
            common,
            kind,
            cache,
            store,
            out,
        } => {
            let cfg = load_config(&common)?;
            let (manifest, records) = pipeline::ensure_corpus(&cfg)?;
            let dir = out.unwrap_or_else(|| cfg.workdir.join("train").join(format!("{kind}-seed{}", cfg.seed)));
            let ckpt = if kind == ModelKind::Baseline {
                let sets = pipeline::MelSets::load(&cfg, &records, &manifest)?;
                pipeline::train_baseline(&cfg, &sets, &dir, progress)?.0
            } else {
                let data = pipeline::load_rad_data(&cache_dir(&cfg, &cache), &store_dir(&cfg, &store))?;
                pipeline::train_rad(&cfg, kind, &records, &data, &dir, progress)?.0
            };
            println!("wrote {}", ckpt.display());
        }
        Command::Eval {
            common,
            checkpoint,
            cache,
            store,
            split,
            out,
        } => {
            let cfg = load_config(&common)?;
            let (manifest, records) = pipeline::ensure_corpus(&cfg)?;
            let ck = raddet::nn::checkpoint::Checkpoint::read(&checkpoint)?;
            let kind: ModelKind = ck.meta_get::<String>("kind")?.parse()?;
            let scores = if kind == ModelKind::Baseline {
                let (params, _) = load_baseline(&checkpoint)?;
                let encoder = raddet::encoder::Encoder::new(cfg.encoder_config(None))?;
                let examples = mel_examples(&records, &manifest, &encoder, split)?;
                pipeline::score_baseline(&cfg, &params, &examples)?
            } else {
                let (_, params, _) = load_rad(&checkpoint)?;
                let data = pipeline::load_rad_data(&cache_dir(&cfg, &cache), &store_dir(&cfg, &store))?;
                pipeline::score_rad(&cfg, &params, &records, split, &data)?
            };
            let dir = out.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(format!("eval-{}", split.as_str()))
            });
            let eer = pipeline::write_eval(&dir, &scores)?;
            write_run_manifest(
                &dir,
                &cfg,
                "eval",
                &[
                    ("checkpoint", checkpoint.display().to_string()),
                    ("split", split.as_str().to_string()),
                    ("eer", format!("{eer:.8e}")),
                ],
            )?;
            let threshold = pooled_eer(&scores)?.threshold;
            println!(
                "{} {}: {} scores, pooled EER {:.4} at threshold {threshold:.6}",
                kind,
                split.as_str(),
                scores.len(),
                eer
            );
        }
        Command::Ablate { common, out } => {
            let cfg = load_config(&common)?;
            let dir = out.unwrap_or_else(|| cfg.workdir.join("ablate"));
            let rows = pipeline::run_ablation(&cfg, &dir, progress)?;
            print!("{}", ablation_csv(&rows));
        }
        Command::Gradcheck { seeds } => {
            if seeds == 0 {
                bail!("need at least one seed");
            }
            println!("central differences, step 1e-5, eps {DEFAULT_EPS:.0e}");
            if !gradcheck(seeds)? {
                return Ok(Err(CheckFailed));
            }
        }
    }
    Ok(Ok(()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CheckFailed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<raddet::Error>(), Some(raddet::Error::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
