//! Rational agents on top of the base models: a lockstep ensemble beam
//! proposes candidates, the opposite model rescores them, and a weight
//! `lambda` trades the two log-probabilities off.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listener::{self, DecoderState as ListenerDec, EncodedSentence, Listener, Move};
use crate::speaker::{DecoderState as SpeakerDec, EncodedSegment, Speaker};
use crate::world::{Action, WorldState};

/// Incremental scorer over a discrete output sequence.
pub trait Decoder {
    type State: Clone;
    /// Whatever `expand` computed that `advance` can reuse.
    type Carry;
    type Token: Clone + Ord + Debug;

    fn start(&self) -> Self::State;
    /// Valid next tokens with their conditional log-probabilities.
    fn expand(&self, state: &Self::State) -> (Vec<(Self::Token, f64)>, Self::Carry);
    fn advance(&self, state: &Self::State, carry: &Self::Carry, token: &Self::Token) -> Self::State;
    fn is_final(&self, state: &Self::State) -> bool;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<T> {
    pub tokens: Vec<T>,
    /// Cumulative log-probability under each ensemble member.
    pub member_scores: Vec<f64>,
    /// Sum of the members' step log-probabilities.
    pub score: f64,
    pub complete: bool,
}

impl<T> Hypothesis<T> {
    /// Mean member log-probability, the scale used for rescoring.
    pub fn mean_score(&self) -> f64 {
        self.member_scores.iter().sum::<f64>() / self.member_scores.len() as f64
    }
}

fn rank<T: Ord>(a: (f64, &[T]), b: (f64, &[T])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Beam search with every member scoring each extension; an extension is
/// kept only if all members allow it. Complete hypotheses come back sorted
/// by descending summed score, ties broken by ascending token sequence.
pub fn ensemble_beam<D: Decoder>(members: &[D], width: usize) -> Result<Vec<Hypothesis<D::Token>>> {
    if members.is_empty() {
        return Err(Error::Config("ensemble has no members".into()));
    }
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let n = members.len();
    let mut live: Vec<(Hypothesis<D::Token>, Vec<D::State>)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            member_scores: vec![0.0; n],
            score: 0.0,
            complete: false,
        },
        members.iter().map(Decoder::start).collect(),
    )];
    let mut finished: Vec<Hypothesis<D::Token>> = Vec::new();
    while !live.is_empty() {
        let mut carries = Vec::with_capacity(live.len());
        let mut cands: Vec<(usize, D::Token, Vec<f64>, f64, Vec<D::Token>)> = Vec::new();
        for (i, (hyp, states)) in live.iter().enumerate() {
            let mut exps: Vec<(Vec<(D::Token, f64)>, D::Carry)> =
                members.iter().zip(states).map(|(m, s)| m.expand(s)).collect();
            let others: Vec<BTreeMap<D::Token, f64>> = exps[1..].iter().map(|(e, _)| e.iter().cloned().collect()).collect();
            for (tok, lp0) in &exps[0].0 {
                let mut lps = vec![*lp0];
                for o in &others {
                    match o.get(tok) {
                        Some(lp) => lps.push(*lp),
                        None => break,
                    }
                }
                if lps.len() < n {
                    continue;
                }
                let step: f64 = lps.iter().sum();
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok.clone());
                cands.push((i, tok.clone(), lps, hyp.score + step, tokens));
            }
            carries.push(exps.drain(..).map(|(_, c)| c).collect::<Vec<_>>());
        }
        cands.sort_by(|a, b| rank((a.3, &a.4), (b.3, &b.4)));
        cands.truncate(width);
        let mut next = Vec::with_capacity(cands.len());
        for (i, tok, lps, score, tokens) in cands {
            let (parent, states) = &live[i];
            let member_scores: Vec<f64> = parent.member_scores.iter().zip(&lps).map(|(a, b)| a + b).collect();
            let new_states: Vec<D::State> = members
                .iter()
                .zip(states)
                .zip(&carries[i])
                .map(|((m, s), c)| m.advance(s, c, &tok))
                .collect();
            let complete = members[0].is_final(&new_states[0]);
            let hyp = Hypothesis {
                tokens,
                member_scores,
                score,
                complete,
            };
            if complete {
                finished.push(hyp);
            } else {
                next.push((hyp, new_states));
            }
        }
        live = next;
        if finished.len() >= width && !live.is_empty() {
            finished.sort_by(|a, b| rank((a.score, &a.tokens), (b.score, &b.tokens)));
            finished.truncate(width);
            let worst = finished.last().expect("non-empty").score;
            // Scores only fall as prefixes grow, so nothing live can overtake.
            if live.iter().all(|(h, _)| h.score < worst) {
                break;
            }
        }
    }
    if finished.is_empty() {
        return Err(Error::EmptyBeam);
    }
    finished.sort_by(|a, b| rank((a.score, &a.tokens), (b.score, &b.tokens)));
    finished.truncate(width);
    Ok(finished)
}

/// `lambda * rescorer + (1 - lambda) * generator` in log space. The end
/// points return one score exactly, ignoring the other.
pub fn combined_score(generator: f64, rescorer: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        generator
    } else if lambda == 1.0 {
        rescorer
    } else {
        lambda * rescorer + (1.0 - lambda) * generator
    }
}

/// One candidate with both views of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored<T> {
    pub tokens: Vec<T>,
    /// Summed ensemble score the beam ranked by.
    pub beam_score: f64,
    /// Mean generator-member log-probability.
    pub generator: f64,
    /// Mean rescorer-member log-probability; NaN when not computed.
    pub rescorer: f64,
}

/// Index of the best candidate: combined score, then generator score, then
/// the smaller token sequence.
pub fn select<T: Ord>(cands: &[Scored<T>], lambda: f64) -> Option<usize> {
    (0..cands.len()).min_by(|&a, &b| {
        let (x, y) = (&cands[a], &cands[b]);
        combined_score(y.generator, y.rescorer, lambda)
            .total_cmp(&combined_score(x.generator, x.rescorer, lambda))
            .then_with(|| y.beam_score.total_cmp(&x.beam_score))
            .then_with(|| x.tokens.cmp(&y.tokens))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Rational,
    Combined,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "base" => Ok(Mode::Base),
            "rational" => Ok(Mode::Rational),
            "combined" => Ok(Mode::Combined),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PragmaticsConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub speaker_beam: usize,
    pub listener_beam: usize,
    /// Rerank whole outputs instead of committing sentence by sentence.
    pub whole_sequence: bool,
}

impl Default for PragmaticsConfig {
    fn default() -> Self {
        PragmaticsConfig {
            mode: Mode::Base,
            lambda: 0.0,
            speaker_beam: 20,
            listener_beam: 40,
            whole_sequence: false,
        }
    }
}

impl PragmaticsConfig {
    pub fn with_mode(mode: Mode, lambda: f64) -> PragmaticsConfig {
        PragmaticsConfig {
            mode,
            lambda,
            ..Default::default()
        }
    }

    /// This config in combined mode at `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> PragmaticsConfig {
        PragmaticsConfig {
            mode: Mode::Combined,
            lambda,
            ..*self
        }
    }

    /// Weight actually applied to the rescorer.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::Base => 0.0,
            Mode::Rational => 1.0,
            Mode::Combined => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speaker_beam == 0 || self.listener_beam == 0 {
            return Err(Error::Config("beam widths must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// Listener decoding over one or more sentences; SHIFT after the last
/// sentence completes the output.
pub struct ListenerDecoder<'a> {
    model: &'a Listener,
    encs: Vec<EncodedSentence>,
    start: WorldState,
}

#[derive(Clone, Debug)]
pub struct ListenerBeamState {
    sentence: usize,
    steps: usize,
    world: WorldState,
    dec: ListenerDec,
}

impl<'a> ListenerDecoder<'a> {
    pub fn new(model: &'a Listener, sentences: &[Vec<String>], start: &WorldState) -> ListenerDecoder<'a> {
        ListenerDecoder {
            model,
            encs: sentences.iter().map(|s| model.encode_sentence(s)).collect(),
            start: start.clone(),
        }
    }
}

impl Decoder for ListenerDecoder<'_> {
    type State = ListenerBeamState;
    type Carry = ListenerDec;
    type Token = Move;

    fn start(&self) -> ListenerBeamState {
        ListenerBeamState {
            sentence: 0,
            steps: 0,
            world: self.start.clone(),
            dec: self.model.initial_decoder_state(),
        }
    }

    fn expand(&self, s: &ListenerBeamState) -> (Vec<(Move, f64)>, ListenerDec) {
        self.model.step_distribution(&self.encs[s.sentence], &s.world, s.steps, &s.dec)
    }

    fn advance(&self, s: &ListenerBeamState, carry: &ListenerDec, tok: &Move) -> ListenerBeamState {
        match tok {
            Move::Shift => ListenerBeamState {
                sentence: s.sentence + 1,
                steps: 0,
                world: s.world.clone(),
                dec: self.model.initial_decoder_state(),
            },
            Move::Act(a) => ListenerBeamState {
                sentence: s.sentence,
                steps: s.steps + 1,
                world: s.world.apply(a).expect("only valid actions are expanded"),
                dec: carry.clone(),
            },
        }
    }

    fn is_final(&self, s: &ListenerBeamState) -> bool {
        s.sentence == self.encs.len()
    }
}

/// Speaker decoding over one or more segments; EOS after the last segment
/// completes the output.
pub struct SpeakerDecoder<'a> {
    model: &'a Speaker,
    encs: Vec<EncodedSegment>,
}

#[derive(Clone, Debug)]
pub struct SpeakerBeamState {
    segment: usize,
    words: usize,
    prev: usize,
    dec: SpeakerDec,
}

impl<'a> SpeakerDecoder<'a> {
    /// `segments` pairs each action list with the state it starts from.
    pub fn new(model: &'a Speaker, segments: &[(WorldState, Vec<Action>)]) -> Result<SpeakerDecoder<'a>> {
        let encs = segments
            .iter()
            .map(|(s, a)| model.encode_trajectory(s, a))
            .collect::<Result<_>>()?;
        Ok(SpeakerDecoder { model, encs })
    }
}

impl Decoder for SpeakerDecoder<'_> {
    type State = SpeakerBeamState;
    type Carry = SpeakerDec;
    type Token = usize;

    fn start(&self) -> SpeakerBeamState {
        SpeakerBeamState {
            segment: 0,
            words: 0,
            prev: self.model.bos(),
            dec: self.model.initial_decoder_state(),
        }
    }

    fn expand(&self, s: &SpeakerBeamState) -> (Vec<(usize, f64)>, SpeakerDec) {
        let (mut opts, next) = self.model.step_distribution(&self.encs[s.segment], s.prev, s.words, &s.dec);
        let unk = self.model.unk();
        opts.retain(|(k, _)| *k != unk);
        (opts, next)
    }

    fn advance(&self, s: &SpeakerBeamState, carry: &SpeakerDec, tok: &usize) -> SpeakerBeamState {
        if *tok == self.model.eos() {
            SpeakerBeamState {
                segment: s.segment + 1,
                words: 0,
                prev: self.model.bos(),
                dec: self.model.initial_decoder_state(),
            }
        } else {
            SpeakerBeamState {
                segment: s.segment,
                words: s.words + 1,
                prev: *tok,
                dec: carry.clone(),
            }
        }
    }

    fn is_final(&self, s: &SpeakerBeamState) -> bool {
        s.segment == self.encs.len()
    }
}

fn mean<I: IntoIterator<Item = Result<f64>>>(xs: I) -> Result<f64> {
    let mut n = 0usize;
    let mut total = 0.0;
    for x in xs {
        total += x?;
        n += 1;
    }
    Ok(total / n as f64)
}

fn scored<T: Clone>(hyps: Vec<Hypothesis<T>>) -> Vec<Scored<T>> {
    hyps.into_iter()
        .map(|h| Scored {
            generator: h.mean_score(),
            beam_score: h.score,
            tokens: h.tokens,
            rescorer: f64::NAN,
        })
        .collect()
}

/// Listener candidates for `sentences` from `start`, rescored by the
/// speakers when any are given.
pub fn listener_candidates(
    listeners: &[Listener],
    speakers: &[Speaker],
    sentences: &[Vec<String>],
    start: &WorldState,
    width: usize,
) -> Result<Vec<Scored<Move>>> {
    let decs: Vec<ListenerDecoder> = listeners.iter().map(|l| ListenerDecoder::new(l, sentences, start)).collect();
    let mut cands = scored(ensemble_beam(&decs, width)?);
    if !speakers.is_empty() {
        for c in cands.iter_mut() {
            let segs = listener::split_moves(&c.tokens);
            let mut states = Vec::with_capacity(segs.len());
            let mut w = start.clone();
            for seg in &segs {
                states.push(w.clone());
                for a in seg {
                    w = w.apply(a).expect("beam outputs are executable");
                }
            }
            c.rescorer = mean(speakers.iter().map(|s| {
                let mut total = 0.0;
                for (k, seg) in segs.iter().enumerate() {
                    total += s.score_segment(&states[k], seg, &sentences[k])?;
                }
                Ok(total)
            }))?;
        }
    }
    Ok(cands)
}

/// Speaker candidates for the given segments, rescored by the listeners on
/// the gold actions when any are given.
pub fn speaker_candidates(
    speakers: &[Speaker],
    listeners: &[Listener],
    segments: &[(WorldState, Vec<Action>)],
    width: usize,
) -> Result<Vec<Scored<usize>>> {
    let decs: Vec<SpeakerDecoder> = speakers.iter().map(|s| SpeakerDecoder::new(s, segments)).collect::<Result<_>>()?;
    let mut cands = scored(ensemble_beam(&decs, width)?);
    if !listeners.is_empty() {
        let vocab = &speakers[0].vocab;
        let eos = speakers[0].eos();
        for c in cands.iter_mut() {
            let sentences = split_words(&c.tokens, eos, vocab);
            c.rescorer = mean(listeners.iter().map(|l| {
                let mut total = 0.0;
                for (k, (st, acts)) in segments.iter().enumerate() {
                    total += l.score_segment(&sentences[k], st, acts)?;
                }
                Ok(total)
            }))?;
        }
    }
    Ok(cands)
}

/// Word ids separated by EOS back into sentences.
pub fn split_words(tokens: &[usize], eos: usize, vocab: &crate::vocab::Vocab) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &t in tokens {
        if t == eos {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(vocab.word(t).to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Candidate lists keyed by sentence index and start state, so a sweep over
/// `lambda` only runs the base models once per distinct input.
#[derive(Default)]
pub struct CandidateCache<T> {
    map: HashMap<(usize, WorldState), Rc<Vec<Scored<T>>>>,
}

impl<T> CandidateCache<T> {
    pub fn new() -> Self {
        CandidateCache { map: HashMap::new() }
    }

    pub fn get_or_try<F>(&mut self, k: usize, state: &WorldState, f: F) -> Result<Rc<Vec<Scored<T>>>>
    where
        F: FnOnce() -> Result<Vec<Scored<T>>>,
    {
        if let Some(v) = self.map.get(&(k, state.clone())) {
            return Ok(Rc::clone(v));
        }
        let v = Rc::new(f()?);
        self.map.insert((k, state.clone()), Rc::clone(&v));
        Ok(v)
    }
}

/// Follow `sentences` from `start`, returning one action list per sentence.
/// Base mode is the listener ensemble's top beam output; the other modes
/// rescore its candidates with the speakers.
pub fn rational_listener(
    listeners: &[Listener],
    speakers: &[Speaker],
    sentences: &[Vec<String>],
    start: &WorldState,
    cfg: &PragmaticsConfig,
) -> Result<Vec<Vec<Action>>> {
    let speakers = if cfg.effective_lambda() == 0.0 { &[] } else { speakers };
    rational_listener_cached(listeners, speakers, sentences, start, cfg, &mut CandidateCache::new())
}

/// As [`rational_listener`], reusing `cache` across calls. Candidates are
/// rescored whenever speakers are given so the cache serves every `lambda`.
pub fn rational_listener_cached(
    listeners: &[Listener],
    speakers: &[Speaker],
    sentences: &[Vec<String>],
    start: &WorldState,
    cfg: &PragmaticsConfig,
    cache: &mut CandidateCache<Move>,
) -> Result<Vec<Vec<Action>>> {
    cfg.validate()?;
    let lambda = cfg.effective_lambda();
    let rescore = speakers;
    if lambda > 0.0 && speakers.is_empty() {
        return Err(Error::Config("rational listener needs at least one speaker".into()));
    }
    if cfg.whole_sequence {
        let cands = cache.get_or_try(usize::MAX, start, || {
            listener_candidates(listeners, rescore, sentences, start, cfg.listener_beam)
        })?;
        let best = select(&cands, lambda).ok_or(Error::EmptyBeam)?;
        return Ok(listener::split_moves(&cands[best].tokens));
    }
    let mut out = Vec::with_capacity(sentences.len());
    let mut state = start.clone();
    for (k, sentence) in sentences.iter().enumerate() {
        let one = std::slice::from_ref(sentence);
        let cands = cache.get_or_try(k, &state, || listener_candidates(listeners, rescore, one, &state, cfg.listener_beam))?;
        let best = select(&cands, lambda).ok_or(Error::EmptyBeam)?;
        let actions = listener::split_moves(&cands[best].tokens).swap_remove(0);
        for a in &actions {
            state = state.apply(a).expect("beam outputs are executable");
        }
        out.push(actions);
    }
    Ok(out)
}

/// Describe each segment of a trajectory with one sentence. Segments pair
/// their actions with the state they start from.
pub fn rational_speaker(
    speakers: &[Speaker],
    listeners: &[Listener],
    segments: &[(WorldState, Vec<Action>)],
    cfg: &PragmaticsConfig,
) -> Result<Vec<Vec<String>>> {
    let listeners = if cfg.effective_lambda() == 0.0 { &[] } else { listeners };
    rational_speaker_cached(speakers, listeners, segments, cfg, &mut CandidateCache::new())
}

/// As [`rational_speaker`], reusing `cache` across calls. Candidates are
/// rescored whenever listeners are given so the cache serves every `lambda`.
pub fn rational_speaker_cached(
    speakers: &[Speaker],
    listeners: &[Listener],
    segments: &[(WorldState, Vec<Action>)],
    cfg: &PragmaticsConfig,
    cache: &mut CandidateCache<usize>,
) -> Result<Vec<Vec<String>>> {
    cfg.validate()?;
    let lambda = cfg.effective_lambda();
    if lambda > 0.0 && listeners.is_empty() {
        return Err(Error::Config("rational speaker needs at least one listener".into()));
    }
    let rescore = listeners;
    if speakers.iter().any(|s| s.vocab != speakers[0].vocab) {
        return Err(Error::Config("speaker ensemble members must share a vocabulary".into()));
    }
    let vocab = &speakers[0].vocab;
    let eos = speakers[0].eos();
    if cfg.whole_sequence {
        let start = segments.first().map(|s| s.0.clone()).ok_or(Error::EmptyBeam)?;
        let cands = cache.get_or_try(usize::MAX, &start, || speaker_candidates(speakers, rescore, segments, cfg.speaker_beam))?;
        let best = select(&cands, lambda).ok_or(Error::EmptyBeam)?;
        return Ok(split_words(&cands[best].tokens, eos, vocab));
    }
    let mut out = Vec::with_capacity(segments.len());
    for (k, seg) in segments.iter().enumerate() {
        let one = std::slice::from_ref(seg);
        let cands = cache.get_or_try(k, &seg.0, || speaker_candidates(speakers, rescore, one, cfg.speaker_beam))?;
        let best = select(&cands, lambda).ok_or(Error::EmptyBeam)?;
        out.push(split_words(&cands[best].tokens, eos, vocab).swap_remove(0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed conditional tables over a tiny alphabet; token 0 ends.
    struct Table {
        depth: usize,
        bias: f64,
    }

    impl Decoder for Table {
        type State = Vec<u8>;
        type Carry = ();
        type Token = u8;

        fn start(&self) -> Vec<u8> {
            Vec::new()
        }

        fn expand(&self, s: &Vec<u8>) -> (Vec<(u8, f64)>, ()) {
            let toks: Vec<u8> = if s.len() + 1 >= self.depth { vec![0] } else { vec![0, 1, 2] };
            let raw: Vec<f64> = toks
                .iter()
                .map(|t| ((*t as f64 + 1.0) * (s.len() as f64 + self.bias)).sin())
                .collect();
            let z = raw.iter().map(|x| x.exp()).sum::<f64>().ln();
            (toks.into_iter().zip(raw.into_iter().map(|x| x - z)).collect(), ())
        }

        fn advance(&self, s: &Vec<u8>, _: &(), t: &u8) -> Vec<u8> {
            let mut v = s.clone();
            v.push(*t);
            v
        }

        fn is_final(&self, s: &Vec<u8>) -> bool {
            s.last() == Some(&0)
        }
    }

    #[test]
    fn single_uniform_member_ties_break_lexicographically() {
        struct Flat;
        impl Decoder for Flat {
            type State = usize;
            type Carry = ();
            type Token = char;
            fn start(&self) -> usize {
                0
            }
            fn expand(&self, _: &usize) -> (Vec<(char, f64)>, ()) {
                (vec![('b', 0.5f64.ln()), ('a', 0.5f64.ln())], ())
            }
            fn advance(&self, s: &usize, _: &(), _: &char) -> usize {
                s + 1
            }
            fn is_final(&self, s: &usize) -> bool {
                *s == 2
            }
        }
        let out = ensemble_beam(&[Flat], 10).unwrap();
        let seqs: Vec<String> = out.iter().map(|h| h.tokens.iter().collect()).collect();
        assert_eq!(seqs, vec!["aa", "ab", "ba", "bb"]);
    }

    #[test]
    fn lambda_end_points() {
        assert_eq!(combined_score(-1.0, f64::NAN, 0.0), -1.0);
        assert_eq!(combined_score(f64::NEG_INFINITY, -2.0, 1.0), -2.0);
        assert_eq!(combined_score(-1.0, -3.0, 0.5), -2.0);
    }

    #[test]
    fn truncated_beam_keeps_best_first() {
        let members = [Table { depth: 3, bias: 0.3 }];
        let full = ensemble_beam(&members, 100).unwrap();
        let top = ensemble_beam(&members, 1).unwrap();
        assert_eq!(full.len(), 7);
        assert!(top[0].score <= full[0].score);
        assert!(full.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
