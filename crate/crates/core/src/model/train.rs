//! Minibatch training with best-on-dev selection, and batch scoring.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::baseline::{BaselineContext, BaselineParams};
use super::rad::RadMfaParams;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::metrics::{pooled_eer, ScoreRecord};
use crate::nn::{softmax_xent, Adam, AdamHyper, Parameters};
use crate::seed;

const TAG_SHUFFLE: u64 = 0x5f1e;

/// A two-class model trainable by [`train`].
pub trait Classifier: Parameters + Send + Sync {
    type Input: Sync;
    /// Frozen state shared by every example.
    type Context: Sync;

    fn logits(&self, ctx: &Self::Context, x: &Self::Input) -> Result<[f64; 2]>;

    /// Cross-entropy of one example and its parameter gradient.
    fn loss_grad(&self, ctx: &Self::Context, x: &Self::Input, label: Label) -> Result<(f64, Self)>;
}

/// Score is `logit(bonafide) − logit(spoof)`.
pub fn score_of(logits: &[f64; 2]) -> f64 {
    logits[0] - logits[1]
}

#[derive(Debug, Clone)]
pub struct Example<I> {
    pub utt_id: String,
    pub label: Label,
    pub input: I,
}

/// A query's short feature and its `k` references, layer-major and back to back.
#[derive(Debug, Clone)]
pub struct RadInput {
    pub query: Vec<f64>,
    pub refs: Vec<f64>,
    pub k: usize,
}

impl Classifier for RadMfaParams {
    type Input = RadInput;
    type Context = ();

    fn logits(&self, _: &(), x: &RadInput) -> Result<[f64; 2]> {
        RadMfaParams::logits(self, &x.query, &x.refs, x.k)
    }

    fn loss_grad(&self, _: &(), x: &RadInput, label: Label) -> Result<(f64, Self)> {
        let (z, cache) = self.forward(&x.query, &x.refs, x.k)?;
        let (loss, g) = softmax_xent(&z, 2, &[label.class_index()])?;
        let mut grads = self.zeros_like();
        self.backward(&cache, &[g[0], g[1]], &mut grads);
        Ok((loss, grads))
    }
}

impl Classifier for BaselineParams {
    /// Frame-major layer-0 input.
    type Input = Vec<f64>;
    type Context = BaselineContext;

    fn logits(&self, ctx: &BaselineContext, mel: &Vec<f64>) -> Result<[f64; 2]> {
        Ok(self.forward(ctx, mel)?.0)
    }

    fn loss_grad(&self, ctx: &BaselineContext, mel: &Vec<f64>, label: Label) -> Result<(f64, Self)> {
        let (z, cache) = self.forward(ctx, mel)?;
        let (loss, g) = softmax_xent(&z, 2, &[label.class_index()])?;
        let mut grads = self.zeros_like();
        self.backward(ctx, &cache, &[g[0], g[1]], &mut grads);
        Ok((loss, grads))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 32,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean minibatch loss over the epoch; for epoch 0, the loss of the untrained model.
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_eer: f64,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub params: M,
    pub best_epoch: usize,
    pub log: Vec<EpochStats>,
}

pub const LOG_HEADER: &str = "epoch\ttrain_loss\tdev_loss\tdev_eer";

pub fn render_log_line(s: &EpochStats) -> String {
    format!("{}\t{:.8e}\t{:.8e}\t{:.8e}", s.epoch, s.train_loss, s.dev_loss, s.dev_eer)
}

pub fn render_log(log: &[EpochStats]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for s in log {
        out.push_str(&render_log_line(s));
        out.push('\n');
    }
    out
}

/// Scores in input order; runs in parallel.
pub fn score_examples<M: Classifier>(model: &M, ctx: &M::Context, examples: &[Example<M::Input>]) -> Result<Vec<ScoreRecord>> {
    examples
        .par_iter()
        .map(|ex| {
            let z = model.logits(ctx, &ex.input)?;
            Ok(ScoreRecord::new(ex.utt_id.clone(), score_of(&z), ex.label))
        })
        .collect()
}

/// Mean cross-entropy and scores.
pub fn evaluate<M: Classifier>(model: &M, ctx: &M::Context, examples: &[Example<M::Input>]) -> Result<(f64, Vec<ScoreRecord>)> {
    let parts: Vec<(f64, ScoreRecord)> = examples
        .par_iter()
        .map(|ex| {
            let z = model.logits(ctx, &ex.input)?;
            let (loss, _) = softmax_xent(&z, 2, &[ex.label.class_index()])?;
            Ok((loss, ScoreRecord::new(ex.utt_id.clone(), score_of(&z), ex.label)))
        })
        .collect::<Result<_>>()?;
    let loss = parts.iter().map(|p| p.0).sum::<f64>() / parts.len().max(1) as f64;
    Ok((loss, parts.into_iter().map(|p| p.1).collect()))
}

/// Adam on mean minibatch cross-entropy; keeps the epoch with the lowest dev EER
/// (ties: lower dev loss, then earlier epoch). `on_epoch` sees every log line as it is produced.
pub fn train<M: Classifier>(
    init: M,
    ctx: &M::Context,
    train_set: &[Example<M::Input>],
    dev_set: &[Example<M::Input>],
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Trained<M>> {
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if hyper.batch == 0 || !(hyper.lr > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let dev_stats = |model: &M| -> Result<(f64, f64)> {
        let (dev_loss, scores) = evaluate(model, ctx, dev_set)?;
        Ok((dev_loss, pooled_eer(&scores)?.eer))
    };

    let mut model = init;
    let mut adam = Adam::new(&model, AdamHyper::with_lr(hyper.lr));
    let (dev_loss, dev_eer) = dev_stats(&model)?;
    let first = EpochStats {
        epoch: 0,
        train_loss: evaluate(&model, ctx, train_set)?.0,
        dev_loss,
        dev_eer,
    };
    on_epoch(&first);
    let mut log = vec![first];
    let mut best = (model.clone(), first);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut seed::rng(hyper.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(hyper.batch) {
            let parts: Vec<(f64, M)> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train_set[i];
                    model.loss_grad(ctx, &ex.input, ex.label)
                })
                .collect::<Result<_>>()?;
            let mut total = model.zeros_like();
            for (loss, g) in &parts {
                loss_sum += loss;
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            adam.step(&mut model, &total)?;
        }
        let (dev_loss, dev_eer) = dev_stats(&model)?;
        let s = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_loss,
            dev_eer,
        };
        on_epoch(&s);
        log.push(s);
        let better = s.dev_eer < best.1.dev_eer || (s.dev_eer == best.1.dev_eer && s.dev_loss < best.1.dev_loss);
        if better {
            best = (model.clone(), s);
        }
    }
    Ok(Trained {
        params: best.0,
        best_epoch: best.1.epoch,
        log,
    })
}
