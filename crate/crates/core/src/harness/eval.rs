use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use super::metrics::{accuracy, corpus_bleu, join_sentences};
use super::VERSION;
use crate::error::{Error, Result};
use crate::listener::{Listener, Move};
use crate::pragmatics::{
    rational_listener, rational_listener_cached, rational_speaker, rational_speaker_cached, CandidateCache, Mode,
    PragmaticsConfig,
};
use crate::sail::StartMode;
use crate::scone::synth::is_ambiguous;
use crate::speaker::Speaker;
use crate::world::{resolve_start, Action, Domain, Instance, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub ambiguous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<Action>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<Vec<String>>>,
}

/// Aggregate metrics plus per-instance outcomes. Wall-clock time is kept
/// out of the serialized form so reruns compare byte for byte.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub version: String,
    pub system: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambiguous_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    pub outcomes: Vec<InstanceOutcome>,
    pub config: Value,
    #[serde(skip)]
    pub elapsed_ms: u128,
}

impl EvalReport {
    fn new(system: &str, config: Value) -> EvalReport {
        EvalReport {
            version: VERSION.to_string(),
            system: system.to_string(),
            accuracy: None,
            ambiguous_accuracy: None,
            bleu: None,
            outcomes: Vec::new(),
            config,
            elapsed_ms: 0,
        }
    }

    pub fn correct(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.correct.unwrap_or(false)).collect()
    }

    fn set_accuracy(&mut self) {
        let all = self.correct();
        let amb: Vec<bool> = self
            .outcomes
            .iter()
            .filter(|o| o.ambiguous)
            .map(|o| o.correct.unwrap_or(false))
            .collect();
        self.accuracy = Some(accuracy(&all));
        self.ambiguous_accuracy = (!amb.is_empty()).then(|| accuracy(&amb));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ambiguous(inst: &Instance) -> bool {
    inst.domain.is_scone() && is_ambiguous(inst)
}

fn system_name(cfg: &PragmaticsConfig) -> String {
    match cfg.mode {
        Mode::Base => "base".into(),
        Mode::Rational => "rational".into(),
        Mode::Combined => format!("combined({})", cfg.lambda),
    }
}

fn replay(start: &WorldState, actions: &[Vec<Action>]) -> Option<WorldState> {
    let mut s = start.clone();
    for a in actions.iter().flatten() {
        s = s.apply(a).ok()?;
    }
    Some(s)
}

fn check_domains(data: &[Instance], domain: Domain) -> Result<()> {
    match data.iter().find(|i| i.domain != domain) {
        Some(i) => Err(Error::Config(format!("instance {} is {}, models are {domain}", i.id, i.domain))),
        None => Ok(()),
    }
}

/// Follow `sentences` from the instance start and compare end states.
pub fn follow(
    listeners: &[Listener],
    speakers: &[Speaker],
    inst: &Instance,
    sentences: &[Vec<String>],
    cfg: &PragmaticsConfig,
) -> Result<(bool, Vec<Vec<Action>>)> {
    let actions = rational_listener(listeners, speakers, sentences, &inst.initial_state, cfg)?;
    let ok = replay(&inst.initial_state, &actions).as_ref() == Some(inst.final_state());
    Ok((ok, actions))
}

/// End-state accuracy of a single base listener; the dev metric for
/// early stopping.
pub(super) fn base_listener_accuracy(model: &Listener, data: &[Instance], beam: usize) -> Result<f64> {
    let cfg = PragmaticsConfig {
        listener_beam: beam,
        ..Default::default()
    };
    let mut ok = Vec::with_capacity(data.len());
    for inst in data {
        ok.push(follow(std::slice::from_ref(model), &[], inst, &inst.sentences(), &cfg)?.0);
    }
    Ok(accuracy(&ok))
}

pub(super) fn base_speaker_bleu(model: &Speaker, data: &[Instance], beam: usize) -> Result<f64> {
    let cfg = PragmaticsConfig {
        speaker_beam: beam,
        ..Default::default()
    };
    let mut cands = Vec::with_capacity(data.len());
    let mut refs = Vec::with_capacity(data.len());
    for inst in data {
        let out = rational_speaker(std::slice::from_ref(model), &[], &instance_segments(inst), &cfg)?;
        cands.push(join_sentences(&out));
        refs.push(join_sentences(&inst.sentences()));
    }
    Ok(corpus_bleu(&cands, &refs))
}

/// Listener accuracy under `cfg`. SAIL instances with an undetermined
/// start heading are resolved with `start_mode` first.
pub fn eval_listener(
    listeners: &[Listener],
    speakers: &[Speaker],
    data: &[Instance],
    cfg: &PragmaticsConfig,
    start_mode: Option<StartMode>,
) -> Result<EvalReport> {
    let t = Instant::now();
    let first = listeners.first().ok_or_else(|| Error::Config("no listeners".into()))?;
    check_domains(data, first.domain)?;
    let mut report = EvalReport::new(
        &system_name(cfg),
        serde_json::json!({
            "pragmatics": cfg,
            "start_mode": start_mode,
            "listeners": listeners.len(),
            "speakers": speakers.len(),
        }),
    );
    for inst in data {
        let inst = match start_mode {
            Some(m) if inst.start_undetermined => resolve_start(inst, m)?,
            _ => inst.clone(),
        };
        let (ok, actions) = follow(listeners, speakers, &inst, &inst.sentences(), cfg)?;
        report.outcomes.push(InstanceOutcome {
            id: inst.id.clone(),
            ambiguous: ambiguous(&inst),
            correct: Some(ok),
            actions: Some(actions),
            sentences: None,
        });
    }
    report.set_accuracy();
    report.elapsed_ms = t.elapsed().as_millis();
    Ok(report)
}

/// Per-lambda correctness of every instance, sharing candidates across the
/// grid.
pub fn listener_lambda_curve(
    listeners: &[Listener],
    speakers: &[Speaker],
    data: &[Instance],
    grid: &[f64],
    cfg: &PragmaticsConfig,
) -> Result<Vec<Vec<bool>>> {
    check_grid(grid)?;
    let mut out = vec![Vec::with_capacity(data.len()); grid.len()];
    for inst in data {
        let mut cache = CandidateCache::<Move>::new();
        let sentences = inst.sentences();
        for (g, &lambda) in grid.iter().enumerate() {
            let c = PragmaticsConfig::with_lambda(cfg, lambda);
            let actions = rational_listener_cached(listeners, speakers, &sentences, &inst.initial_state, &c, &mut cache)?;
            out[g].push(replay(&inst.initial_state, &actions).as_ref() == Some(inst.final_state()));
        }
    }
    Ok(out)
}

/// Gold segments paired with the states they start from.
pub fn instance_segments(inst: &Instance) -> Vec<(WorldState, Vec<Action>)> {
    (0..inst.segments.len())
        .map(|k| (inst.segment_start(k).clone(), inst.segments[k].actions.clone()))
        .collect()
}

/// Generated descriptions of every instance for each lambda.
pub fn speaker_lambda_curve(
    speakers: &[Speaker],
    listeners: &[Listener],
    data: &[Instance],
    grid: &[f64],
    cfg: &PragmaticsConfig,
) -> Result<Vec<Vec<Vec<Vec<String>>>>> {
    check_grid(grid)?;
    let mut out = vec![Vec::with_capacity(data.len()); grid.len()];
    for inst in data {
        let mut cache = CandidateCache::<usize>::new();
        let segs = instance_segments(inst);
        for (g, &lambda) in grid.iter().enumerate() {
            let c = PragmaticsConfig::with_lambda(cfg, lambda);
            out[g].push(rational_speaker_cached(speakers, listeners, &segs, &c, &mut cache)?);
        }
    }
    Ok(out)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Config("lambda grid must be a non-empty subset of [0, 1]".into()));
    }
    Ok(())
}

/// Dev metric at each grid point and the chosen lambda.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaCurve {
    pub points: Vec<(f64, f64)>,
    pub best: f64,
}

/// Grid point with the highest metric; ties go to the smaller lambda.
pub fn tune_lambda(grid: &[f64], metrics: &[f64]) -> Result<LambdaCurve> {
    check_grid(grid)?;
    if grid.len() != metrics.len() {
        return Err(Error::Config("one metric per grid point".into()));
    }
    let mut best = 0;
    for k in 1..grid.len() {
        let better = metrics[k] > metrics[best] || (metrics[k] == metrics[best] && grid[k] < grid[best]);
        if better {
            best = k;
        }
    }
    Ok(LambdaCurve {
        points: grid.iter().copied().zip(metrics.iter().copied()).collect(),
        best: grid[best],
    })
}

fn speaker_outcomes(data: &[Instance], sentences: Vec<Vec<Vec<String>>>) -> Vec<InstanceOutcome> {
    data.iter()
        .zip(sentences)
        .map(|(inst, s)| InstanceOutcome {
            id: inst.id.clone(),
            ambiguous: ambiguous(inst),
            correct: None,
            actions: None,
            sentences: Some(s),
        })
        .collect()
}

/// Corpus BLEU of each instance's generated description, sentences joined
/// with EOS, against the reference description.
pub fn eval_speaker_bleu(
    speakers: &[Speaker],
    listeners: &[Listener],
    data: &[Instance],
    cfg: &PragmaticsConfig,
) -> Result<EvalReport> {
    let t = Instant::now();
    let first = speakers.first().ok_or_else(|| Error::Config("no speakers".into()))?;
    check_domains(data, first.domain)?;
    let mut generated = Vec::with_capacity(data.len());
    for inst in data {
        generated.push(rational_speaker(speakers, listeners, &instance_segments(inst), cfg)?);
    }
    let mut report = EvalReport::new(
        &system_name(cfg),
        serde_json::json!({"pragmatics": cfg, "speakers": speakers.len(), "listeners": listeners.len()}),
    );
    report.bleu = Some(bleu_of(data, &generated));
    report.outcomes = speaker_outcomes(data, generated);
    report.elapsed_ms = t.elapsed().as_millis();
    Ok(report)
}

pub(super) fn bleu_of(data: &[Instance], generated: &[Vec<Vec<String>>]) -> f64 {
    let cands: Vec<Vec<String>> = generated.iter().map(|g| join_sentences(g)).collect();
    let refs: Vec<Vec<String>> = data.iter().map(|i| join_sentences(&i.sentences())).collect();
    corpus_bleu(&cands, &refs)
}

/// Whether the proxy listeners, decoding normally, reach each instance's
/// final state from the given directions.
pub fn proxy_follow_accuracy(
    proxies: &[Listener],
    data: &[Instance],
    directions: &[Vec<Vec<String>>],
    listener_beam: usize,
) -> Result<Vec<bool>> {
    if data.len() != directions.len() {
        return Err(Error::Config("one set of directions per instance".into()));
    }
    let cfg = PragmaticsConfig {
        listener_beam,
        ..Default::default()
    };
    data.iter()
        .zip(directions)
        .map(|(inst, d)| {
            if d.len() != inst.segments.len() {
                return Ok(false);
            }
            Ok(follow(proxies, &[], inst, d, &cfg)?.0)
        })
        .collect()
}

/// Directions from a speaker system, followed by held-out proxy listeners.
pub fn proxy_speaker_eval(
    speakers: &[Speaker],
    listeners: &[Listener],
    proxies: &[Listener],
    data: &[Instance],
    cfg: &PragmaticsConfig,
) -> Result<EvalReport> {
    let mut report = eval_speaker_bleu(speakers, listeners, data, cfg)?;
    let t = Instant::now();
    let directions: Vec<Vec<Vec<String>>> = report.outcomes.iter().map(|o| o.sentences.clone().unwrap_or_default()).collect();
    let ok = proxy_follow_accuracy(proxies, data, &directions, cfg.listener_beam)?;
    for (o, c) in report.outcomes.iter_mut().zip(ok) {
        o.correct = Some(c);
    }
    report.set_accuracy();
    if let Value::Object(m) = &mut report.config {
        m.insert("proxies".into(), proxies.len().into());
    }
    report.elapsed_ms += t.elapsed().as_millis();
    Ok(report)
}

/// Fraction of gold decoder steps where the listener's top move is the
/// gold one, skipping steps with a single option.
pub fn teacher_forced_accuracy(model: &Listener, data: &[Instance]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in data {
        for (k, seg) in inst.segments.iter().enumerate() {
            let enc = model.encode_sentence(&seg.sentence);
            let mut world = inst.segment_start(k).clone();
            let mut st = model.initial_decoder_state();
            let moves = crate::listener::segment_moves(&seg.actions);
            for (steps, gold) in moves.iter().enumerate() {
                let (opts, next) = model.step_distribution(&enc, &world, steps, &st);
                if opts.len() > 1 {
                    total += 1;
                    let best = opts
                        .iter()
                        .fold(None::<&(Move, f64)>, |b, o| match b {
                            Some(x) if x.1 >= o.1 => Some(x),
                            _ => Some(o),
                        })
                        .map(|o| o.0);
                    if best.as_ref() == Some(gold) {
                        hit += 1;
                    }
                }
                if let Move::Act(a) = gold {
                    world = world.apply(a).expect("gold actions replay");
                    st = next;
                }
            }
        }
    }
    if total == 0 {
        return 100.0;
    }
    100.0 * hit as f64 / total as f64
}
