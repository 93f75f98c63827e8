use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::eval::{base_listener_accuracy, base_speaker_bleu};
use super::{Role, TrainConfig};
use crate::error::{Error, Result};
use crate::listener::Listener;
use crate::neural::adam::{adam_step, clip_global_norm, AdamState};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::ParamStore;
use crate::speaker::{segmenter_example, Segmenter, Speaker, SPECIALS};
use crate::vocab::{Vocab, UNK};
use crate::world::Instance;

/// Separates the shuffling and dropout stream from the initialisation seed.
const TRAIN_STREAM: u64 = 0x7261_696e;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev: f64,
}

/// A model restored to its best dev epoch, with its training history.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub log: TrainLog,
    pub config: TrainConfig,
}

trait HasStore {
    fn store_mut(&mut self) -> &mut ParamStore;
}

impl HasStore for Listener {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl HasStore for Speaker {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl HasStore for Segmenter {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Words seen at least twice; the rest map to UNK.
pub fn listener_vocab(train: &[Instance]) -> Vocab {
    let sents: Vec<Vec<String>> = train.iter().flat_map(Instance::sentences).collect();
    Vocab::build(sents.iter().map(Vec::as_slice), 2, &[UNK])
}

pub fn speaker_vocab(train: &[Instance]) -> Vocab {
    let sents: Vec<Vec<String>> = train.iter().flat_map(Instance::sentences).collect();
    Vocab::build(sents.iter().map(Vec::as_slice), 1, &SPECIALS)
}

/// Per-example Adam updates in a seeded shuffled order, keeping the
/// parameters of the best dev epoch.
fn fit<M, L, D>(cfg: &TrainConfig, model: &mut M, n: usize, mut loss: L, mut dev: D) -> Result<TrainLog>
where
    M: HasStore,
    L: FnMut(&M, &[f64], &mut [f64], usize, &mut ChaCha8Rng) -> Result<f64>,
    D: FnMut(&M) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::Config("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_STREAM);
    let mut w = model.store_mut().data.clone();
    let mut grad = vec![0.0; w.len()];
    let mut adam = AdamState::new(w.len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut best_w = w.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev: f64::NEG_INFINITY,
    };
    let mut bad = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = loss(model, &w, &mut grad, k, &mut rng)?;
            if !l.is_finite() {
                return Err(Error::Config(format!("non-finite loss at epoch {epoch}")));
            }
            total += l;
            clip_global_norm(&mut grad, cfg.clip);
            adam_step(&mut w, &grad, &mut adam, cfg.learning_rate)?;
        }
        model.store_mut().data.copy_from_slice(&w);
        let metric = dev(model)?;
        log::info!(
            "{:?} seed {} epoch {epoch}: loss {:.4} dev {metric:.2}",
            cfg.role,
            cfg.seed,
            total / n as f64
        );
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / n as f64,
            dev_metric: metric,
        });
        if metric > log.best_dev {
            log.best_dev = metric;
            log.best_epoch = epoch;
            best_w.copy_from_slice(&w);
            bad = 0;
        } else {
            bad += 1;
            if bad > cfg.patience {
                break;
            }
        }
    }
    model.store_mut().data = best_w;
    Ok(log)
}

fn check_role(cfg: &TrainConfig, role: Role) -> Result<()> {
    cfg.validate()?;
    if cfg.role != role {
        return Err(Error::Config(format!("config is for {:?}, not {role:?}", cfg.role)));
    }
    Ok(())
}

fn dev_slice<'a>(cfg: &TrainConfig, dev: &'a [Instance]) -> &'a [Instance] {
    &dev[..cfg.dev_limit.unwrap_or(dev.len()).min(dev.len())]
}

fn check_domain(cfg: &TrainConfig, data: &[Instance]) -> Result<()> {
    match data.iter().find(|i| i.domain != cfg.domain) {
        Some(i) => Err(Error::Config(format!("instance {} is not {}", i.id, cfg.domain))),
        None => Ok(()),
    }
}

/// Early stopping on dev end-state accuracy.
pub fn train_listener(cfg: &TrainConfig, train: &[Instance], dev: &[Instance]) -> Result<Trained<Listener>> {
    check_role(cfg, Role::Listener)?;
    check_domain(cfg, train)?;
    check_domain(cfg, dev)?;
    let mut model = Listener::new(cfg.domain, listener_vocab(train), cfg.dims, cfg.seed);
    let dev = dev_slice(cfg, dev);
    let log = fit(
        cfg,
        &mut model,
        train.len(),
        |m, w, g, k, rng| m.instance_loss(w, g, &train[k], rng),
        |m| base_listener_accuracy(m, dev, cfg.dev_beam),
    )?;
    Ok(Trained {
        model,
        log,
        config: cfg.clone(),
    })
}

/// Early stopping on dev BLEU.
pub fn train_speaker(cfg: &TrainConfig, train: &[Instance], dev: &[Instance]) -> Result<Trained<Speaker>> {
    check_role(cfg, Role::Speaker)?;
    check_domain(cfg, train)?;
    check_domain(cfg, dev)?;
    let mut model = Speaker::new(cfg.domain, speaker_vocab(train), cfg.dims, cfg.seed);
    let dev = dev_slice(cfg, dev);
    let log = fit(
        cfg,
        &mut model,
        train.len(),
        |m, w, g, k, rng| m.instance_loss(w, g, &train[k], rng),
        |m| base_speaker_bleu(m, dev, cfg.dev_beam),
    )?;
    Ok(Trained {
        model,
        log,
        config: cfg.clone(),
    })
}

/// Boundary F1 at threshold 0.5 against gold segmentations.
fn boundary_f1(model: &Segmenter, examples: &[(Vec<Vec<f64>>, Vec<f64>)]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (xs, ys) in examples {
        for (p, y) in model.boundary_probs(xs).iter().zip(ys) {
            match (*p >= 0.5, *y > 0.5) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
    }
    if tp == 0 {
        return if fp == 0 && fneg == 0 { 100.0 } else { 0.0 };
    }
    200.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Early stopping on dev boundary F1.
pub fn train_segmenter(cfg: &TrainConfig, train: &[Instance], dev: &[Instance]) -> Result<Trained<Segmenter>> {
    check_role(cfg, Role::Segmenter)?;
    check_domain(cfg, train)?;
    check_domain(cfg, dev)?;
    let tr: Vec<_> = train.iter().map(segmenter_example).collect::<Result<_>>()?;
    let dv: Vec<_> = dev_slice(cfg, dev).iter().map(segmenter_example).collect::<Result<_>>()?;
    let mut model = Segmenter::new(cfg.dims, cfg.seed);
    let log = fit(
        cfg,
        &mut model,
        tr.len(),
        |m, w, g, k, rng| {
            let masks = m.sample_masks(rng);
            Ok(m.loss(w, Some(g), &tr[k].0, &tr[k].1, &masks))
        },
        |m| Ok(boundary_f1(m, &dv)),
    )?;
    Ok(Trained {
        model,
        log,
        config: cfg.clone(),
    })
}

/// Train one member per seed, concurrently. Results come back in seed order.
pub fn train_ensemble<M, F>(cfg: &TrainConfig, seeds: &[u64], train_one: F) -> Result<Vec<Trained<M>>>
where
    M: Send,
    F: Fn(&TrainConfig) -> Result<Trained<M>> + Sync,
{
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let c = TrainConfig { seed, ..cfg.clone() };
                let f = &train_one;
                s.spawn(move || f(&c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

impl<M> Trained<M> {
    /// Checkpoint with the training config and history in its header.
    pub fn checkpoint_with(&self, mut ckpt: Checkpoint) -> Result<Checkpoint> {
        if let serde_json::Value::Object(h) = &mut ckpt.header {
            h.insert("train".into(), serde_json::to_value(&self.config)?);
            h.insert("log".into(), serde_json::to_value(&self.log)?);
        }
        Ok(ckpt)
    }
}
