//! Training, evaluation and experiment plumbing around the base and
//! rational models.

mod eval;
mod experiment;
mod metrics;
mod train;
pub mod session;

pub use eval::{
    eval_listener, eval_speaker_bleu, follow, instance_segments, listener_lambda_curve, proxy_follow_accuracy,
    proxy_speaker_eval, speaker_lambda_curve, teacher_forced_accuracy, tune_lambda, EvalReport, InstanceOutcome,
    LambdaCurve,
};
pub use experiment::{run_experiment, ExperimentReport, ExperimentSpec, ModelSpec, SeedReport, SystemRow};
pub use metrics::{accuracy, corpus_bleu, join_sentences, sign_test, SignTest};
pub use train::{
    listener_vocab, speaker_vocab, train_ensemble, train_listener, train_segmenter, train_speaker, EpochLog, TrainLog,
    Trained,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Dims;
use crate::scone::synth::{synth_with, SynthConfig};
use crate::world::{Domain, Instance, Split};

/// Identifies the crate build inside reports.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Default lambda grid: 0, 0.1, ..., 1.
pub fn lambda_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Listener,
    Speaker,
    Segmenter,
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Role> {
        match s {
            "listener" => Ok(Role::Listener),
            "speaker" => Ok(Role::Speaker),
            "segmenter" => Ok(Role::Segmenter),
            _ => Err(Error::Config(format!("unknown role {s:?}"))),
        }
    }
}

/// Published widths and dropout per model and domain. Speakers on SCONE
/// have no attention; their attention width is unused.
pub fn default_dims(domain: Domain, role: Role) -> Dims {
    match (role, domain) {
        (Role::Listener, Domain::Sail) => Dims::new(100, 100, 0.25),
        (Role::Listener, Domain::Alchemy) => Dims::new(50, 50, 0.1),
        (Role::Listener, Domain::Scene) => Dims::new(100, 100, 0.1),
        (Role::Listener, Domain::Tangrams) => Dims::new(50, 100, 0.3),
        (Role::Speaker, Domain::Sail) => Dims::new(100, 100, 0.25),
        (Role::Speaker, Domain::Alchemy) => Dims::new(100, 100, 0.3),
        (Role::Speaker, Domain::Scene) => Dims::new(100, 100, 0.3),
        (Role::Speaker, Domain::Tangrams) => Dims::new(50, 50, 0.3),
        (Role::Segmenter, _) => Dims::new(50, 50, 0.25),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub domain: Domain,
    pub role: Role,
    pub dims: Dims,
    pub seed: u64,
    pub epochs: usize,
    /// Non-improving dev evaluations tolerated before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub clip: f64,
    /// Beam width used for the per-epoch dev metric.
    pub dev_beam: usize,
    /// Evaluate early stopping on at most this many dev instances.
    pub dev_limit: Option<usize>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(domain: Domain, role: Role) -> TrainConfig {
        TrainConfig {
            domain,
            role,
            dims: default_dims(domain, role),
            seed: 0,
            epochs: 100,
            patience: 5,
            learning_rate: 1e-3,
            clip: 5.0,
            dev_beam: match role {
                Role::Speaker => 20,
                _ => 40,
            },
            dev_limit: None,
            train_path: None,
            dev_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.embed == 0 || d.hidden == 0 || d.attention == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&d.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", d.dropout)));
        }
        if self.epochs == 0 || self.dev_beam == 0 {
            return Err(Error::Config("epochs and dev beam must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip > 0.0) {
            return Err(Error::Config("learning rate and clip must be positive".into()));
        }
        match (self.role, self.domain) {
            (Role::Segmenter, d) if d != Domain::Sail => Err(Error::Config("the segmenter is SAIL only".into())),
            _ => Ok(()),
        }
    }
}

/// A synthetic corpus split three ways.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<Instance>,
    pub dev: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Corpus {
    /// Partition by each instance's recorded split.
    pub fn from_instances(insts: Vec<Instance>) -> Corpus {
        let mut c = Corpus {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        };
        for i in insts {
            match i.split {
                Split::Train => c.train.push(i),
                Split::Dev => c.dev.push(i),
                Split::Test => c.test.push(i),
            }
        }
        c
    }
}

/// Generate SCONE episodes until each split holds its quota. Splits come
/// from the id hash, so the overflow of a full split is dropped.
pub fn synthetic_corpus(domain: Domain, sizes: [usize; 3], cfg: &SynthConfig, seed: u64) -> Result<Corpus> {
    let mut c = Corpus {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    let mut round = 0u64;
    while c.train.len() < sizes[0] || c.dev.len() < sizes[1] || c.test.len() < sizes[2] {
        let batch = synth_with(domain, sizes.iter().sum::<usize>().max(1), cfg, seed.wrapping_mul(1_000_003).wrapping_add(round))?;
        for i in batch {
            let (bucket, cap) = match i.split {
                Split::Train => (&mut c.train, sizes[0]),
                Split::Dev => (&mut c.dev, sizes[1]),
                Split::Test => (&mut c.test, sizes[2]),
            };
            if bucket.len() < cap {
                bucket.push(i);
            }
        }
        round += 1;
    }
    Ok(c)
}
