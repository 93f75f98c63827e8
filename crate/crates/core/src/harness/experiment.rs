use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::{bleu_of, listener_lambda_curve, proxy_follow_accuracy, speaker_lambda_curve, tune_lambda, LambdaCurve};
use super::metrics::{accuracy, sign_test, SignTest};
use super::train::{train_ensemble, train_listener, train_speaker, TrainLog, Trained};
use super::{lambda_grid, synthetic_corpus, Role, TrainConfig, VERSION};
use crate::error::{Error, Result};
use crate::listener::Listener;
use crate::neural::Dims;
use crate::pragmatics::PragmaticsConfig;
use crate::scone::synth::{is_ambiguous, SynthConfig};
use crate::speaker::Speaker;
use crate::world::{Domain, Instance};

/// Width, regularisation and schedule of one model family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: usize,
    pub attention: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub dev_beam: usize,
    pub dev_limit: Option<usize>,
}

impl ModelSpec {
    fn config(&self, domain: Domain, role: Role) -> TrainConfig {
        TrainConfig {
            dims: Dims::new(self.hidden, self.attention, self.dropout),
            epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            dev_beam: self.dev_beam,
            dev_limit: self.dev_limit,
            ..TrainConfig::new(domain, role)
        }
    }
}

/// Listener and speaker systems compared under a fixed model budget: the
/// rational listener spends half the budget on listeners and half on
/// speakers, the plain ensemble spends all of it on listeners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub domain: Domain,
    /// Train, dev and test instances.
    pub sizes: [usize; 3],
    pub steps: usize,
    pub ambiguity: f64,
    pub rationality: f64,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub listener: ModelSpec,
    pub speaker: ModelSpec,
    pub lambda_grid: Vec<f64>,
    pub listener_beam: usize,
    pub speaker_beam: usize,
    /// Also evaluate generated directions with a held-out listener.
    pub speaker_eval: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            domain: Domain::Alchemy,
            sizes: [2000, 250, 250],
            steps: 5,
            ambiguity: 0.5,
            rationality: 1.0,
            seeds: vec![1, 2, 3, 4, 5],
            budget: 4,
            listener: ModelSpec {
                hidden: 50,
                attention: 50,
                dropout: 0.1,
                epochs: 100,
                patience: 5,
                learning_rate: 1e-3,
                dev_beam: 40,
                dev_limit: None,
            },
            speaker: ModelSpec {
                hidden: 100,
                attention: 100,
                dropout: 0.3,
                epochs: 100,
                patience: 5,
                learning_rate: 1e-3,
                dev_beam: 20,
                dev_limit: None,
            },
            lambda_grid: lambda_grid(),
            listener_beam: 40,
            speaker_beam: 20,
            speaker_eval: true,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.domain.is_scone() {
            return Err(Error::Config("experiments run on synthetic SCONE corpora".into()));
        }
        if self.budget < 2 || !self.budget.is_multiple_of(2) {
            return Err(Error::Config("budget must be an even number of at least 2".into()));
        }
        if self.seeds.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("need at least one seed and non-empty splits".into()));
        }
        self.listener.config(self.domain, Role::Listener).validate()?;
        self.speaker.config(self.domain, Role::Speaker).validate()
    }
}

/// One system's test result for one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemRow {
    /// Stable identifier: `listener_base`, `listener_rational`,
    /// `listener_rational_pure`, `listener_ensemble`, `speaker_base`,
    /// `speaker_rational`, `speaker_rational_pure` or `speaker_reference`.
    pub key: String,
    pub system: String,
    pub models: usize,
    pub lambda: Option<f64>,
    pub accuracy: f64,
    pub ambiguous_accuracy: f64,
    pub bleu: Option<f64>,
    #[serde(skip)]
    pub outcomes: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub ambiguous_test: usize,
    pub listener_lambda: LambdaCurve,
    pub speaker_lambda: Option<LambdaCurve>,
    pub rows: Vec<SystemRow>,
    pub sign_tests: Vec<(String, SignTest)>,
    pub train_logs: Vec<(String, TrainLog)>,
    pub checkpoint_sha256: Vec<(String, String)>,
}

impl SeedReport {
    pub fn row(&self, key: &str) -> Option<&SystemRow> {
        self.rows.iter().find(|r| r.key == key)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub version: String,
    pub spec: ExperimentSpec,
    pub seeds: Vec<SeedReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Values of one system's field across seeds.
    pub fn column(&self, key: &str, f: impl Fn(&SystemRow) -> f64) -> Vec<f64> {
        self.seeds.iter().filter_map(|s| s.row(key).map(&f)).collect()
    }

    /// Plain-text comparison table, one row per system, one column per seed.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.seeds.first() else {
            return out;
        };
        let _ = write!(out, "{:<34} {:>6}", "system", "models");
        for s in &self.seeds {
            let _ = write!(out, " {:>13}", format!("seed {}", s.seed));
        }
        let _ = writeln!(out, " {:>13}", "mean");
        for r in &first.rows {
            let _ = write!(out, "{:<34} {:>6}", r.system, r.models);
            let mut acc = Vec::new();
            let mut amb = Vec::new();
            for s in &self.seeds {
                if let Some(x) = s.row(&r.key) {
                    let _ = write!(out, " {:>6.1}/{:>6.1}", x.accuracy, x.ambiguous_accuracy);
                    acc.push(x.accuracy);
                    amb.push(x.ambiguous_accuracy);
                }
            }
            let _ = writeln!(out, " {:>6.1}/{:>6.1}", mean(&acc), mean(&amb));
        }
        out.push_str("cells: test accuracy / ambiguous-subset accuracy\n");
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn row(key: &str, system: String, models: usize, lambda: Option<f64>, outcomes: Vec<bool>, amb: &[bool]) -> SystemRow {
    let sub: Vec<bool> = outcomes.iter().zip(amb).filter(|(_, a)| **a).map(|(o, _)| *o).collect();
    SystemRow {
        key: key.to_string(),
        system,
        models,
        lambda,
        accuracy: accuracy(&outcomes),
        ambiguous_accuracy: accuracy(&sub),
        bleu: None,
        outcomes,
    }
}

fn fresh_rows<'a>(rows: &'a [SystemRow], a: &str, b: &str) -> Option<(&'a SystemRow, &'a SystemRow)> {
    Some((rows.iter().find(|r| r.key == a)?, rows.iter().find(|r| r.key == b)?))
}

fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedReport> {
    let synth = SynthConfig {
        steps: spec.steps,
        ambiguity: spec.ambiguity,
        rationality: spec.rationality,
    };
    let corpus = synthetic_corpus(spec.domain, spec.sizes, &synth, seed)?;
    let n = spec.budget / 2;
    let lcfg = spec.listener.config(spec.domain, Role::Listener);
    let scfg = spec.speaker.config(spec.domain, Role::Speaker);
    let base = seed.wrapping_mul(1000);
    let listener_seeds: Vec<u64> = (0..spec.budget as u64).map(|k| base + k).collect();
    let speaker_seeds: Vec<u64> = (0..n as u64).map(|k| base + 100 + k).collect();
    let train_l = |c: &TrainConfig| train_listener(c, &corpus.train, &corpus.dev);
    let train_s = |c: &TrainConfig| train_speaker(c, &corpus.train, &corpus.dev);
    let trained_l: Vec<Trained<Listener>> = train_ensemble(&lcfg, &listener_seeds, train_l)?;
    let trained_s: Vec<Trained<Speaker>> = train_ensemble(&scfg, &speaker_seeds, train_s)?;

    let mut train_logs = Vec::new();
    let mut checkpoint_sha256 = Vec::new();
    for (k, t) in trained_l.iter().enumerate() {
        train_logs.push((format!("L0[{k}]"), t.log.clone()));
        checkpoint_sha256.push((format!("L0[{k}]"), digest(&t.checkpoint_with(t.model.to_checkpoint())?.to_bytes()?)));
    }
    for (k, t) in trained_s.iter().enumerate() {
        train_logs.push((format!("S0[{k}]"), t.log.clone()));
        checkpoint_sha256.push((format!("S0[{k}]"), digest(&t.checkpoint_with(t.model.to_checkpoint())?.to_bytes()?)));
    }
    log::info!("seed {seed}: models trained");
    let listeners: Vec<Listener> = trained_l.into_iter().map(|t| t.model).collect();
    let speakers: Vec<Speaker> = trained_s.into_iter().map(|t| t.model).collect();
    let half = &listeners[..n];

    let pcfg = PragmaticsConfig {
        listener_beam: spec.listener_beam,
        speaker_beam: spec.speaker_beam,
        ..Default::default()
    };
    let amb: Vec<bool> = corpus.test.iter().map(is_ambiguous).collect();

    let dev_curve = listener_lambda_curve(half, &speakers, &corpus.dev, &spec.lambda_grid, &pcfg)?;
    let dev_acc: Vec<f64> = dev_curve.iter().map(|o| accuracy(o)).collect();
    let listener_lambda = tune_lambda(&spec.lambda_grid, &dev_acc)?;
    log::info!("seed {seed}: listener lambda {} (dev {:?})", listener_lambda.best, dev_acc);
    let test_curve = listener_lambda_curve(half, &speakers, &corpus.test, &[0.0, listener_lambda.best, 1.0], &pcfg)?;
    let ensemble = listener_lambda_curve(&listeners, &[], &corpus.test, &[0.0], &pcfg)?;
    let [base_o, tuned_o, pure_o]: [Vec<bool>; 3] = test_curve.try_into().expect("three grid points");
    let mut rows = vec![
        row("listener_base", format!("L0 x{n}"), n, None, base_o, &amb),
        row(
            "listener_rational",
            format!("L0 x{n} + S0 x{n}"),
            2 * n,
            Some(listener_lambda.best),
            tuned_o,
            &amb,
        ),
        row("listener_rational_pure", format!("L0 x{n} + S0 x{n}, lambda 1"), 2 * n, Some(1.0), pure_o, &amb),
        row(
            "listener_ensemble",
            format!("L0 x{}", spec.budget),
            spec.budget,
            None,
            ensemble.into_iter().next().expect("one grid point"),
            &amb,
        ),
    ];

    let mut speaker_lambda = None;
    if spec.speaker_eval {
        // The ensemble's last member never rescores inside S0 x n, and its
        // seed is disjoint from those that do.
        let proxy = std::slice::from_ref(&listeners[spec.budget - 1]);
        let dev_gen = speaker_lambda_curve(&speakers, half, &corpus.dev, &spec.lambda_grid, &pcfg)?;
        let dev_bleu: Vec<f64> = dev_gen.iter().map(|g| bleu_of(&corpus.dev, g)).collect();
        let curve = tune_lambda(&spec.lambda_grid, &dev_bleu)?;
        log::info!("seed {seed}: speaker lambda {} (dev BLEU {:?})", curve.best, dev_bleu);
        let test_gen = speaker_lambda_curve(&speakers, half, &corpus.test, &[0.0, curve.best, 1.0], &pcfg)?;
        log::info!("seed {seed}: test directions generated");
        let gold: Vec<Vec<Vec<String>>> = corpus.test.iter().map(Instance::sentences).collect();
        let specs = [
            ("speaker_base", format!("S0 x{n}"), n, None),
            ("speaker_rational", format!("S0 x{n} + L0 x{n}"), 2 * n, Some(curve.best)),
            ("speaker_rational_pure", format!("S0 x{n} + L0 x{n}, lambda 1"), 2 * n, Some(1.0)),
        ];
        for ((key, name, models, lambda), g) in specs.into_iter().zip(&test_gen) {
            let ok = proxy_follow_accuracy(proxy, &corpus.test, g, spec.listener_beam)?;
            let mut r = row(key, name, models, lambda, ok, &amb);
            r.bleu = Some(bleu_of(&corpus.test, g));
            rows.push(r);
        }
        let ok = proxy_follow_accuracy(proxy, &corpus.test, &gold, spec.listener_beam)?;
        let mut r = row("speaker_reference", "reference directions".into(), 0, None, ok, &amb);
        r.bleu = Some(100.0);
        rows.push(r);
        speaker_lambda = Some(curve);
    }

    let mut sign_tests = Vec::new();
    for (a, b) in [
        ("listener_rational", "listener_base"),
        ("listener_rational", "listener_ensemble"),
        ("speaker_rational", "speaker_base"),
        ("speaker_rational_pure", "speaker_base"),
    ] {
        if let Some((x, y)) = fresh_rows(&rows, a, b) {
            sign_tests.push((format!("{a} vs {b}"), sign_test(&x.outcomes, &y.outcomes)));
        }
    }
    Ok(SeedReport {
        seed,
        ambiguous_test: amb.iter().filter(|a| **a).count(),
        listener_lambda,
        speaker_lambda,
        rows,
        sign_tests,
        train_logs,
        checkpoint_sha256,
    })
}

/// Train every system for every seed on its own synthetic corpus and
/// evaluate them on the same test split.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let seeds = spec.seeds.iter().map(|&s| run_seed(spec, s)).collect::<Result<_>>()?;
    Ok(ExperimentReport {
        version: VERSION.to_string(),
        spec: spec.clone(),
        seeds,
    })
}
