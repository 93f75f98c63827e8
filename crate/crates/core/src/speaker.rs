//! Base speaker and the SAIL route segmenter. The speaker encodes each
//! segment of a trajectory with a bidirectional LSTM and decodes its
//! sentence word by word; SAIL decoders attend over the segment's collapsed
//! actions, SCONE decoders read the single action's vector directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::neural::attention::AttnOut;
use crate::neural::checkpoint::Checkpoint;
use crate::neural::lstm::{LstmRun, StepCache as CellCache};
use crate::neural::{
    axpy, concat, log_softmax_masked, masked, sigmoid, softmax_xent, AttnParams, Dims, Keys, Linear, LstmParams,
    Param, ParamStore, SeqMasks,
};
use crate::sail::{self, SailAction};
use crate::scone;
use crate::vocab::{Vocab, BOS, EOS, UNK};
use crate::world::{Action, Domain, Instance, WorldState};

/// Hard cap on words per generated sentence.
pub const MAX_WORDS: usize = 40;

pub const SPECIALS: [&str; 3] = [UNK, EOS, BOS];

/// Width of one encoder input vector.
pub fn input_dim(domain: Domain) -> usize {
    let p = WorldState::percept_dim(domain);
    if domain == Domain::Sail {
        sail::COLLAPSED_DIM + p
    } else {
        scone::action_feature_dim(domain) + p
    }
}

/// Encoder inputs for one segment: action representation followed by the
/// percept of the state it was taken in. SAIL forward runs are collapsed.
pub fn segment_inputs(start: &WorldState, actions: &[Action]) -> Result<Vec<Vec<f64>>> {
    let mut state = start.clone();
    match start {
        WorldState::Sail(_) => {
            let prim: Vec<SailAction> = actions
                .iter()
                .map(|a| match a {
                    Action::Sail(s) => Ok(*s),
                    Action::Scone(_) => Err(Error::Config("SCONE action in a SAIL segment".into())),
                })
                .collect::<Result<_>>()?;
            let mut out = Vec::new();
            for (k, a) in sail::collapse_moves(&prim).iter().enumerate() {
                let mut v = vec![0.0; sail::COLLAPSED_DIM];
                v[sail::collapsed_index(a)] = 1.0;
                v.extend(state.percept());
                out.push(v);
                state = state
                    .apply(&Action::Sail(*a))
                    .map_err(|reason| Error::InvalidAction { index: k, reason })?;
            }
            Ok(out)
        }
        _ => {
            let mut out = Vec::with_capacity(actions.len());
            for (k, a) in actions.iter().enumerate() {
                let Action::Scone(sa) = a else {
                    return Err(Error::Config("SAIL action in a SCONE segment".into()));
                };
                let mut v = scone::action_features(&state, sa);
                v.extend(state.percept());
                out.push(v);
                state = state.apply(a).map_err(|reason| Error::InvalidAction { index: k, reason })?;
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug)]
struct Net {
    emb: Param,
    enc_f: LstmParams,
    enc_b: LstmParams,
    dec: LstmParams,
    attn: Option<AttnParams>,
    wh: Linear,
    wz: Linear,
    key_dim: usize,
}

/// Per-step vectors `[input; forward; backward]` for one segment.
#[derive(Clone, Debug)]
pub struct EncodedSegment {
    xs: Vec<Vec<f64>>,
    fwd: LstmRun,
    bwd: LstmRun,
    keys: Keys,
}

impl EncodedSegment {
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.keys.keys
    }
}

#[derive(Clone, Debug)]
struct StepCache {
    query: Vec<f64>,
    att: Option<AttnOut>,
    z: Vec<f64>,
    prev: usize,
    x: Vec<f64>,
    cell: CellCache,
    ho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    h: Vec<f64>,
    c: Vec<f64>,
    ho: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Speaker {
    pub domain: Domain,
    pub vocab: Vocab,
    pub dims: Dims,
    pub max_words: usize,
    pub store: ParamStore,
    net: Net,
}

impl Speaker {
    pub fn new(domain: Domain, vocab: Vocab, dims: Dims, seed: u64) -> Speaker {
        for s in SPECIALS {
            assert!(vocab.get(s).is_some(), "speaker vocabulary lacks {s}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let (e, h) = (dims.embed, dims.hidden);
        let din = input_dim(domain);
        let key_dim = din + 2 * h;
        let v = vocab.len();
        let emb = s.add_glorot("emb", v, e, &mut rng);
        let enc_f = LstmParams::new(&mut s, "enc_f", din, h, &mut rng);
        let enc_b = LstmParams::new(&mut s, "enc_b", din, h, &mut rng);
        let dec = LstmParams::new(&mut s, "dec", e + key_dim, h, &mut rng);
        let attn = (domain == Domain::Sail).then(|| AttnParams::new(&mut s, "attn", h, key_dim, dims.attention, &mut rng));
        let wh = Linear::new(&mut s, "wh", v, h, false, &mut rng);
        let wz = Linear::new(&mut s, "wz", v, key_dim, false, &mut rng);
        Speaker {
            domain,
            vocab,
            dims,
            max_words: MAX_WORDS,
            store: s,
            net: Net {
                emb,
                enc_f,
                enc_b,
                dec,
                attn,
                wh,
                wz,
                key_dim,
            },
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = json!({
            "kind": "speaker",
            "domain": self.domain,
            "dims": self.dims,
            "max_words": self.max_words,
            "vocab": self.vocab,
        });
        Checkpoint::from_store(header, &self.store)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Speaker> {
        let h = &ckpt.header;
        if h["kind"] != "speaker" {
            return Err(Error::Checkpoint(format!("expected a speaker, found {}", h["kind"])));
        }
        let domain: Domain = serde_json::from_value(h["domain"].clone())?;
        let dims: Dims = serde_json::from_value(h["dims"].clone())?;
        let vocab: Vocab = serde_json::from_value(h["vocab"].clone())?;
        let mut s = Speaker::new(domain, vocab, dims, 0);
        s.max_words = serde_json::from_value(h["max_words"].clone())?;
        ckpt.load_into(&mut s.store)?;
        Ok(s)
    }

    pub fn eos(&self) -> usize {
        self.vocab.id(EOS)
    }

    pub fn bos(&self) -> usize {
        self.vocab.id(BOS)
    }

    pub fn unk(&self) -> usize {
        self.vocab.id(UNK)
    }

    pub fn sample_masks<R: rand::Rng>(&self, rng: &mut R) -> SeqMasks {
        let d = self.dims;
        SeqMasks::sample(
            d.dropout,
            input_dim(self.domain),
            d.hidden,
            d.embed + self.net.key_dim,
            d.hidden,
            rng,
        )
    }

    pub fn encode_trajectory(&self, start: &WorldState, actions: &[Action]) -> Result<EncodedSegment> {
        let xs = segment_inputs(start, actions)?;
        Ok(self.encode(&self.store.data, xs, &SeqMasks::default()))
    }

    fn encode(&self, w: &[f64], xs: Vec<Vec<f64>>, m: &SeqMasks) -> EncodedSegment {
        let n = &self.net;
        let xs: Vec<Vec<f64>> = xs.iter().map(|x| masked(x, m.emb.as_deref())).collect();
        let fwd = n.enc_f.run(w, &xs, m.enc_f.as_deref(), false);
        let bwd = n.enc_b.run(w, &xs, m.enc_b.as_deref(), true);
        let vectors: Vec<Vec<f64>> = (0..xs.len()).map(|k| concat(&[&xs[k], &fwd.hs[k], &bwd.hs[k]])).collect();
        let keys = match &n.attn {
            Some(a) => a.project_keys(w, vectors),
            None => Keys {
                keys: vectors,
                proj: Vec::new(),
            },
        };
        EncodedSegment { xs, fwd, bwd, keys }
    }

    fn encode_backward(&self, w: &[f64], g: &mut [f64], enc: &EncodedSegment, mut dkeys: Vec<Vec<f64>>, dproj: &[Vec<f64>]) {
        let n = &self.net;
        let din = enc.xs.first().map_or(0, Vec::len);
        let h = self.dims.hidden;
        if let Some(a) = &n.attn {
            a.keys_backward(w, g, &enc.keys, dproj, &mut dkeys);
        }
        let dfs: Vec<Vec<f64>> = dkeys.iter().map(|d| d[din..din + h].to_vec()).collect();
        let dbs: Vec<Vec<f64>> = dkeys.iter().map(|d| d[din + h..].to_vec()).collect();
        // Inputs are fixed features, so their gradients are dropped.
        n.enc_f.run_backward(w, g, &enc.xs, &enc.fwd, &dfs);
        n.enc_b.run_backward(w, g, &enc.xs, &enc.bwd, &dbs);
    }

    pub fn initial_decoder_state(&self) -> DecoderState {
        let h = self.dims.hidden;
        DecoderState {
            h: vec![0.0; h],
            c: vec![0.0; h],
            ho: vec![0.0; h],
        }
    }

    /// Output mask after `words` words of the current sentence.
    pub fn valid_words(&self, words: usize) -> Vec<bool> {
        let (eos, bos) = (self.eos(), self.bos());
        (0..self.vocab.len())
            .map(|k| {
                if words >= self.max_words {
                    k == eos
                } else if k == bos {
                    false
                } else {
                    !(k == eos && words == 0)
                }
            })
            .collect()
    }

    fn step(&self, w: &[f64], enc: &EncodedSegment, prev: usize, st: &DecoderState, m: &SeqMasks) -> (DecoderState, Vec<f64>, StepCache) {
        let n = &self.net;
        let e = self.dims.embed;
        let (att, z) = match &n.attn {
            Some(a) => {
                let out = a.attend(w, &st.ho, &enc.keys);
                let z = out.context.clone();
                (Some(out), z)
            }
            None => (None, enc.keys.keys[0].clone()),
        };
        let we = &w[n.emb.offset + prev * e..n.emb.offset + (prev + 1) * e];
        let x = masked(&concat(&[we, &z]), m.dec_in.as_deref());
        let px = n.dec.project(w, &x);
        let (h, c, cell) = n.dec.step(w, &px, &st.h, &st.c, m.dec_rec.as_deref());
        let ho = masked(&h, m.dec_out.as_deref());
        let mut logits = n.wh.forward(w, &ho);
        axpy(1.0, &n.wz.forward(w, &z), &mut logits);
        let cache = StepCache {
            query: st.ho.clone(),
            att,
            z,
            prev,
            x,
            cell,
            ho: ho.clone(),
        };
        (DecoderState { h, c, ho }, logits, cache)
    }

    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        w: &[f64],
        g: &mut [f64],
        enc: &EncodedSegment,
        cache: &StepCache,
        dlogits: &[f64],
        next: (&[f64], &[f64], &[f64]),
        m: &SeqMasks,
        dkeys: &mut [Vec<f64>],
        dproj: &mut [Vec<f64>],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = &self.net;
        let (e, hd) = (self.dims.embed, self.dims.hidden);
        let (dh_next, dc_next, dho_next) = next;
        let mut dho = dho_next.to_vec();
        let mut dz = vec![0.0; n.key_dim];
        n.wh.backward(w, g, &cache.ho, dlogits, Some(&mut dho));
        n.wz.backward(w, g, &cache.z, dlogits, Some(&mut dz));
        let mut dh = masked(&dho, m.dec_out.as_deref());
        axpy(1.0, dh_next, &mut dh);
        let sg = n.dec.step_backward(w, g, &cache.cell, &dh, dc_next);
        let mut dx = vec![0.0; cache.x.len()];
        n.dec.project_backward(w, g, &cache.x, &sg.dpx, Some(&mut dx));
        let dx = masked(&dx, m.dec_in.as_deref());
        let p = cache.prev;
        axpy(1.0, &dx[..e], &mut g[n.emb.offset + p * e..n.emb.offset + (p + 1) * e]);
        axpy(1.0, &dx[e..], &mut dz);
        let mut dquery = vec![0.0; hd];
        match (&n.attn, &cache.att) {
            (Some(a), Some(out)) => a.backward(w, g, &cache.query, &enc.keys, out, &dz, &mut dquery, dkeys, dproj),
            _ => axpy(1.0, &dz, &mut dkeys[0]),
        }
        (sg.dh, sg.dc, dquery)
    }

    /// Word ids of a sentence followed by EOS.
    pub fn targets(&self, sentence: &[String]) -> Vec<usize> {
        let mut t = self.vocab.encode(sentence);
        t.push(self.eos());
        t
    }

    /// Negative log-likelihood of `words` (ending in EOS) for one segment.
    pub fn segment_loss(
        &self,
        w: &[f64],
        grad: Option<&mut [f64]>,
        start: &WorldState,
        actions: &[Action],
        words: &[usize],
        m: &SeqMasks,
    ) -> Result<f64> {
        let xs = segment_inputs(start, actions)?;
        let enc = self.encode(w, xs, m);
        let mut st = self.initial_decoder_state();
        let mut prev = self.bos();
        let mut loss = 0.0;
        let mut trace = Vec::with_capacity(words.len());
        for (k, &target) in words.iter().enumerate() {
            let valid = self.valid_words(k);
            let (next, logits, cache) = self.step(w, &enc, prev, &st, m);
            let (l, d) = softmax_xent(&logits, &valid, target)?;
            loss += l;
            trace.push((cache, d));
            st = next;
            prev = target;
        }
        if let Some(g) = grad {
            let hd = self.dims.hidden;
            let t = enc.keys.keys.len();
            let mut dkeys = vec![vec![0.0; self.net.key_dim]; t];
            let adim = self.net.attn.map_or(0, |a| a.dim);
            let mut dproj = vec![vec![0.0; adim]; if self.net.attn.is_some() { t } else { 0 }];
            let (mut dh, mut dc, mut dho) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
            for (cache, d) in trace.iter().rev() {
                let r = self.step_backward(w, g, &enc, cache, d, (&dh, &dc, &dho), m, &mut dkeys, &mut dproj);
                dh = r.0;
                dc = r.1;
                dho = r.2;
            }
            self.encode_backward(w, g, &enc, dkeys, &dproj);
        }
        Ok(loss)
    }

    /// Log-probabilities of every valid next word, and the state after
    /// feeding `prev`.
    pub fn step_distribution(&self, enc: &EncodedSegment, prev: usize, words: usize, st: &DecoderState) -> (Vec<(usize, f64)>, DecoderState) {
        let valid = self.valid_words(words);
        let (next, logits, _) = self.step(&self.store.data, enc, prev, st, &SeqMasks::default());
        let lp = log_softmax_masked(&logits, &valid);
        let out = lp
            .into_iter()
            .enumerate()
            .filter(|(k, _)| valid[*k])
            .collect();
        (out, next)
    }

    /// `log P(sentence, EOS | segment)`.
    pub fn score_segment(&self, start: &WorldState, actions: &[Action], sentence: &[String]) -> Result<f64> {
        let words = self.targets(sentence);
        Ok(-self.segment_loss(&self.store.data, None, start, actions, &words, &SeqMasks::default())?)
    }

    /// Total log-probability of an instance's sentences given its segments.
    pub fn score_description(&self, inst: &Instance) -> Result<f64> {
        let mut total = 0.0;
        for (k, seg) in inst.segments.iter().enumerate() {
            total += self.score_segment(inst.segment_start(k), &seg.actions, &seg.sentence)?;
        }
        Ok(total)
    }

    pub fn instance_loss<R: rand::Rng>(&self, w: &[f64], grad: &mut [f64], inst: &Instance, rng: &mut R) -> Result<f64> {
        let mut total = 0.0;
        for (k, seg) in inst.segments.iter().enumerate() {
            let m = self.sample_masks(rng);
            let words = self.targets(&seg.sentence);
            total += self.segment_loss(w, Some(grad), inst.segment_start(k), &seg.actions, &words, &m)?;
        }
        Ok(total)
    }

    pub fn param_len(&self) -> usize {
        self.store.len()
    }

    /// True when the decoder attends over its input (SAIL only).
    pub fn uses_attention(&self) -> bool {
        self.net.attn.is_some()
    }
}

/// Logistic boundary classifier over a route's collapsed actions.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub dims: Dims,
    pub store: ParamStore,
    enc_f: LstmParams,
    enc_b: LstmParams,
    out: Linear,
}

/// A route as the segmenter sees it: collapsed actions, each with the
/// state it starts from.
pub struct CollapsedRoute {
    pub actions: Vec<SailAction>,
    pub inputs: Vec<Vec<f64>>,
}

impl CollapsedRoute {
    pub fn new(start: &WorldState, primitive: &[SailAction]) -> Result<CollapsedRoute> {
        let actions = sail::collapse_moves(primitive);
        let as_actions: Vec<Action> = actions.iter().map(|a| Action::Sail(*a)).collect();
        let inputs = segment_inputs(start, &as_actions)?;
        Ok(CollapsedRoute { actions, inputs })
    }
}

/// Collapsed inputs of a gold-segmented route, with a label per collapsed
/// action: 1 when a segment ends after it (the final one excluded).
pub fn segmenter_example(inst: &Instance) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, seg) in inst.segments.iter().enumerate() {
        let inputs = segment_inputs(inst.segment_start(k), &seg.actions)?;
        let n = inputs.len();
        xs.extend(inputs);
        ys.extend((0..n).map(|t| if t + 1 == n && k + 1 < inst.segments.len() { 1.0 } else { 0.0 }));
    }
    Ok((xs, ys))
}

impl Segmenter {
    pub fn new(dims: Dims, seed: u64) -> Segmenter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let din = input_dim(Domain::Sail);
        let enc_f = LstmParams::new(&mut s, "enc_f", din, dims.hidden, &mut rng);
        let enc_b = LstmParams::new(&mut s, "enc_b", din, dims.hidden, &mut rng);
        let out = Linear::new(&mut s, "out", 1, 2 * dims.hidden, true, &mut rng);
        Segmenter {
            dims,
            store: s,
            enc_f,
            enc_b,
            out,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(json!({"kind": "segmenter", "domain": Domain::Sail, "dims": self.dims}), &self.store)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Segmenter> {
        if ckpt.header["kind"] != "segmenter" {
            return Err(Error::Checkpoint(format!("expected a segmenter, found {}", ckpt.header["kind"])));
        }
        let dims: Dims = serde_json::from_value(ckpt.header["dims"].clone())?;
        let mut s = Segmenter::new(dims, 0);
        ckpt.load_into(&mut s.store)?;
        Ok(s)
    }

    /// Boundary logits, one per input position.
    fn logits(&self, w: &[f64], xs: &[Vec<f64>], m: &SeqMasks) -> (Vec<Vec<f64>>, LstmRun, LstmRun, Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = xs.iter().map(|x| masked(x, m.emb.as_deref())).collect();
        let f = self.enc_f.run(w, &xs, m.enc_f.as_deref(), false);
        let b = self.enc_b.run(w, &xs, m.enc_b.as_deref(), true);
        let hs: Vec<Vec<f64>> = (0..xs.len())
            .map(|k| masked(&concat(&[&f.hs[k], &b.hs[k]]), m.dec_out.as_deref()))
            .collect();
        let z = hs.iter().map(|h| self.out.forward(w, h)[0]).collect();
        (xs, f, b, hs, z)
    }

    pub fn sample_masks<R: rand::Rng>(&self, rng: &mut R) -> SeqMasks {
        let h = self.dims.hidden;
        SeqMasks::sample(self.dims.dropout, input_dim(Domain::Sail), h, 0, 2 * h, rng)
    }

    /// Summed binary cross-entropy over positions.
    pub fn loss(&self, w: &[f64], grad: Option<&mut [f64]>, xs: &[Vec<f64>], ys: &[f64], m: &SeqMasks) -> f64 {
        let (xs, f, b, hs, z) = self.logits(w, xs, m);
        let h = self.dims.hidden;
        let mut loss = 0.0;
        let mut dz = Vec::with_capacity(z.len());
        for (zt, y) in z.iter().zip(ys) {
            // softplus(z) - y z, computed stably
            loss += zt.max(0.0) + (-zt.abs()).exp().ln_1p() - y * zt;
            dz.push(sigmoid(*zt) - y);
        }
        if let Some(g) = grad {
            let mut dfs = Vec::with_capacity(hs.len());
            let mut dbs = Vec::with_capacity(hs.len());
            for (ht, d) in hs.iter().zip(&dz) {
                let mut dh = vec![0.0; 2 * h];
                self.out.backward(w, g, ht, &[*d], Some(&mut dh));
                let dh = masked(&dh, m.dec_out.as_deref());
                dfs.push(dh[..h].to_vec());
                dbs.push(dh[h..].to_vec());
            }
            self.enc_f.run_backward(w, g, &xs, &f, &dfs);
            self.enc_b.run_backward(w, g, &xs, &b, &dbs);
        }
        loss
    }

    pub fn boundary_probs(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let (_, _, _, _, z) = self.logits(&self.store.data, xs, &SeqMasks::default());
        z.into_iter().map(sigmoid).collect()
    }

    /// Split a route where the boundary probability exceeds `threshold`.
    /// The route end always closes the last segment.
    pub fn segment_route(&self, start: &WorldState, primitive: &[SailAction], threshold: f64) -> Result<Vec<Vec<Action>>> {
        if primitive.is_empty() {
            return Err(Error::Config("cannot segment an empty route".into()));
        }
        let route = CollapsedRoute::new(start, primitive)?;
        let probs = self.boundary_probs(&route.inputs);
        let mut out = vec![Vec::new()];
        let n = route.actions.len();
        for (t, a) in route.actions.iter().enumerate() {
            out.last_mut()
                .expect("non-empty")
                .extend(sail::expand_moves(&[*a]).into_iter().map(Action::Sail));
            if t + 1 < n && probs[t] > threshold {
                out.push(Vec::new());
            }
        }
        Ok(out)
    }

    pub fn param_len(&self) -> usize {
        self.store.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{grad_check, sample_coords};
    use crate::sail::synth::sail_generate;
    use crate::scone::synth::synth_generate;

    fn vocab_of(insts: &[Instance]) -> Vocab {
        let sents: Vec<Vec<String>> = insts.iter().flat_map(|i| i.sentences()).collect();
        Vocab::build(sents.iter().map(Vec::as_slice), 1, &SPECIALS)
    }

    fn check(domain: Domain, seed: u64) -> f64 {
        let insts = if domain == Domain::Sail {
            sail_generate(1, 2, 1, seed).unwrap().1
        } else {
            synth_generate(domain, 1, 2, 0.5, seed).unwrap()
        };
        let inst = &insts[0];
        let s = Speaker::new(domain, vocab_of(&insts), Dims { embed: 4, hidden: 3, attention: 3, dropout: 0.2 }, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masks: Vec<SeqMasks> = inst.segments.iter().map(|_| s.sample_masks(&mut rng)).collect();
        let f = |w: &[f64]| {
            let mut g = vec![0.0; w.len()];
            let mut loss = 0.0;
            for (k, seg) in inst.segments.iter().enumerate() {
                let words = s.targets(&seg.sentence);
                loss += s.segment_loss(w, Some(&mut g), inst.segment_start(k), &seg.actions, &words, &masks[k]).unwrap();
            }
            (loss, g)
        };
        let coords = sample_coords(s.param_len(), 400, &mut rng);
        grad_check(f, &s.store.data, 1e-5, &coords)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (k, d) in [Domain::Alchemy, Domain::Scene, Domain::Tangrams, Domain::Sail].into_iter().enumerate() {
            let err = check(d, 20 + k as u64);
            assert!(err <= 1e-4, "{d}: {err}");
        }
    }

    #[test]
    fn segmenter_gradients_match() {
        let (_, insts) = sail_generate(1, 3, 1, 5).unwrap();
        let (xs, ys) = segmenter_example(&insts[0]).unwrap();
        let seg = Segmenter::new(Dims { embed: 3, hidden: 3, attention: 0, dropout: 0.3 }, 1);
        let m = seg.sample_masks(&mut ChaCha8Rng::seed_from_u64(2));
        let f = |w: &[f64]| {
            let mut g = vec![0.0; w.len()];
            let l = seg.loss(w, Some(&mut g), &xs, &ys, &m);
            (l, g)
        };
        let coords = sample_coords(seg.param_len(), 300, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(grad_check(f, &seg.store.data, 1e-5, &coords) <= 1e-4);
    }

    #[test]
    fn segmentation_is_a_partition() {
        let (_, insts) = sail_generate(5, 3, 1, 9).unwrap();
        let seg = Segmenter::new(Dims { embed: 4, hidden: 4, attention: 0, dropout: 0.0 }, 1);
        for inst in &insts {
            let prim: Vec<SailAction> = inst
                .actions()
                .iter()
                .map(|a| match a {
                    Action::Sail(s) => *s,
                    _ => unreachable!(),
                })
                .collect();
            for thr in [0.0, 0.5, 1.0] {
                let parts = seg.segment_route(&inst.initial_state, &prim, thr).unwrap();
                assert!(parts.iter().all(|p| !p.is_empty()));
                let flat: Vec<Action> = parts.concat();
                assert_eq!(flat, inst.actions());
                if thr == 1.0 {
                    assert_eq!(parts.len(), 1);
                }
            }
        }
    }
}
