use std::fmt::Write as _;

use super::evaluate::{evaluate, example_mode};
use super::{Checkpoint, Example, HarnessError, Network, RunConfig, Vocabularies};
use crate::model::AlphaKind;
use crate::rng::SplitMix64;
use crate::tensor::{clip_global_norm, Adam, AdamConfig, Tape, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example training loss.
    pub train_loss: f64,
    /// Largest pre-clipping gradient norm of the epoch.
    pub max_grad_norm: f64,
    pub valid_metric: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "epoch={} train_loss={} max_grad_norm={} valid_metric={}",
            self.epoch, self.train_loss, self.max_grad_norm, self.valid_metric
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint of the epoch with the best validation metric (earliest on ties).
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.log {
            writeln!(s, "{}", e.line()).expect("write to string");
        }
        writeln!(
            s,
            "best_epoch={} best_metric={}",
            self.best_epoch, self.best.best_metric
        )
        .expect("write to string");
        s
    }
}

fn numeric(epoch: usize, batch: usize, what: impl std::fmt::Display) -> HarnessError {
    HarnessError::Numeric(format!("epoch {epoch}, batch {batch}: {what}"))
}

/// Mini-batch Adam on mean per-example loss with global-norm clipping.
///
/// Parameters are drawn from a generator seeded with `cfg.seed`; the same
/// generator then shuffles the training order each epoch, so a fixed seed
/// and corpus give an identical log and identical checkpoints.
pub fn train(
    cfg: &RunConfig,
    vocabs: &Vocabularies,
    train_set: &[Example],
    valid_set: &[Example],
) -> Result<TrainOutcome, HarnessError> {
    if train_set.is_empty() {
        return Err(HarnessError::Data("no training examples".into()));
    }
    if valid_set.is_empty() {
        return Err(HarnessError::Data("no validation examples".into()));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut net = Network::new(cfg, vocabs, &mut rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &net.store,
    );
    let probe = &valid_set[0];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut loss_sum, mut loss_n, mut max_norm) = (0.0, 0usize, 0.0f64);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Option<Vec<Tensor>> = None;
            let mut used = 0usize;
            for &i in batch {
                let ex = &train_set[i];
                let mut tape = Tape::new();
                let loss = net
                    .loss(
                        &mut tape,
                        &ex.ids,
                        &ex.kinds,
                        ex.label,
                        ex.summary.as_deref(),
                        example_mode(cfg.mode, ex),
                    )
                    .map_err(|e| match HarnessError::from(e) {
                        HarnessError::Numeric(m) => numeric(epoch, b, m),
                        other => other,
                    })?;
                let Some(loss) = loss else { continue };
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(numeric(epoch, b, format!("loss {value}")));
                }
                let grads = tape
                    .backward(loss)
                    .map_err(|e| numeric(epoch, b, e))?
                    .for_store(&net.store);
                match &mut acc {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (x, g) in a.iter_mut().zip(&grads) {
                            for (p, q) in x.data_mut().iter_mut().zip(g.data()) {
                                *p += q;
                            }
                        }
                    }
                }
                loss_sum += value;
                loss_n += 1;
                used += 1;
            }
            let Some(mut grads) = acc else { continue };
            let inv = 1.0 / used as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            let norm = clip_global_norm(&mut grads, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(numeric(epoch, b, format!("gradient norm {norm}")));
            }
            max_norm = max_norm.max(norm);
            adam.step(&mut net.store, &grads)
                .map_err(|e: TensorError| numeric(epoch, b, e))?;
        }
        let valid = evaluate(&net, cfg, vocabs, valid_set)?;
        let entry = EpochLog {
            epoch,
            train_loss: if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 },
            max_grad_norm: max_norm,
            valid_metric: valid.headline,
        };
        log.push(entry);
        if best.as_ref().is_none_or(|(_, c)| valid.headline > c.best_metric) {
            let ck = Checkpoint::capture(
                cfg,
                vocabs,
                &net,
                &adam,
                rng.state(),
                epoch,
                valid.headline,
                &probe.ids,
                &probe.kinds,
            )?;
            best = Some((epoch, ck));
        }
        if cfg.stop_at_metric.is_some_and(|t| valid.headline >= t) {
            break;
        }
    }
    let (best_epoch, best) = best.ok_or_else(|| HarnessError::Config("epochs must be at least 1".into()))?;
    Ok(TrainOutcome { best, best_epoch, log })
}

/// Best validation metric of each combiner, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRanking {
    pub entries: Vec<(AlphaKind, f64, usize)>,
}

impl AlphaRanking {
    pub fn to_text(&self) -> String {
        let mut s = String::from("rank\talpha\tbest_metric\tbest_epoch\n");
        for (i, (a, m, e)) in self.entries.iter().enumerate() {
            writeln!(s, "{}\t{a}\t{m}\t{e}", i + 1).expect("write to string");
        }
        s
    }
}

/// Trains one model per combiner with everything else fixed, on separate
/// threads, and ranks them by best validation metric. Equal metrics keep
/// the fixed order fc, maxpool, summarization.
pub fn compare_alphas(
    cfg: &RunConfig,
    vocabs: &Vocabularies,
    train_set: &[Example],
    valid_set: &[Example],
) -> Result<(AlphaRanking, Vec<(AlphaKind, TrainOutcome)>), HarnessError> {
    let runs: Vec<(AlphaKind, Result<TrainOutcome, HarnessError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = AlphaKind::ALL
            .into_iter()
            .map(|alpha| {
                let run_cfg = RunConfig { alpha, ..cfg.clone() };
                (
                    alpha,
                    s.spawn(move || {
                        run_cfg.validate()?;
                        train(&run_cfg, vocabs, train_set, valid_set)
                    }),
                )
            })
            .collect();
        handles
            .into_iter()
            .map(|(a, h)| (a, h.join().expect("training thread panicked")))
            .collect()
    });
    let mut outcomes = Vec::new();
    for (a, r) in runs {
        outcomes.push((a, r?));
    }
    let mut entries: Vec<(AlphaKind, f64, usize)> = outcomes
        .iter()
        .map(|(a, o)| (*a, o.best.best_metric, o.best_epoch))
        .collect();
    entries.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok((AlphaRanking { entries }, outcomes))
}
