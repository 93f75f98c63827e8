//! Base listener. Each sentence is encoded by a bidirectional LSTM; an
//! attentive LSTM decoder, reset at every sentence, emits actions for the
//! current sentence until it chooses SHIFT. SCONE actions are scored factor
//! by factor, with a bilinear bonus over their contextual embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::neural::attention::AttnOut;
use crate::neural::checkpoint::Checkpoint;
use crate::neural::lstm::{LstmRun, StepCache as CellCache};
use crate::neural::{
    axpy, concat, dot, gemv, gemv_t, ger, log_softmax_masked, masked, softmax_xent, AttnParams, Dims, Keys, Linear,
    LstmParams, Param, ParamStore, SeqMasks,
};
use crate::sail;
use crate::scone::{self, FactorLayout};
use crate::vocab::{Vocab, UNK};
use crate::world::{Action, Domain, WorldState};

/// Most primitive SAIL actions the listener may take for one sentence.
pub const MAX_SAIL_SEGMENT: usize = 24;

/// One listener decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    Act(Action),
    Shift,
}

/// Candidate moves at one decoder step.
#[derive(Clone, Debug)]
pub struct Options {
    pub moves: Vec<Move>,
    pub valid: Vec<bool>,
    /// SCONE only: flattened factor-score indices and action features.
    entries: Vec<Vec<usize>>,
    feats: Vec<Vec<f64>>,
}

impl Options {
    pub fn position(&self, m: &Move) -> Option<usize> {
        self.moves.iter().position(|x| x == m)
    }

    /// Only SHIFT remains, so the step is deterministic.
    fn forced_shift(&self) -> bool {
        let mut it = self.moves.iter().zip(&self.valid).filter(|(_, v)| **v);
        matches!((it.next(), it.next()), (Some((Move::Shift, _)), None))
    }
}

#[derive(Clone, Debug)]
struct FactorHead {
    attn: AttnParams,
    wz: Linear,
    wo: Linear,
}

#[derive(Clone, Debug)]
enum Head {
    Sail {
        wz: Linear,
        wo: Linear,
    },
    Scone {
        factors: Vec<FactorHead>,
        /// Start of each factor inside the concatenated score vector.
        offsets: Vec<usize>,
        types: usize,
        wqa: Param,
        wa: Param,
    },
}

#[derive(Clone, Debug)]
struct Net {
    emb: Param,
    enc_f: LstmParams,
    enc_b: LstmParams,
    wy: Linear,
    dec: LstmParams,
    attn: AttnParams,
    wh: Linear,
    head: Head,
    key_dim: usize,
}

/// Per-token vectors `[embedding; forward; backward]` plus what the
/// backward pass needs.
#[derive(Clone, Debug)]
pub struct EncodedSentence {
    ids: Vec<usize>,
    xs: Vec<Vec<f64>>,
    fwd: LstmRun,
    bwd: LstmRun,
    /// Keys projected once per attention mechanism; entry 0 is the main one.
    keys: Vec<Keys>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.keys[0].keys
    }
}

#[derive(Clone, Debug)]
enum HeadCache {
    Sail { s: Vec<f64> },
    Scone { fac: Vec<(AttnOut, Vec<f64>)>, q: Vec<f64> },
}

#[derive(Clone, Debug)]
struct StepCache {
    query: Vec<f64>,
    main: AttnOut,
    y: Vec<f64>,
    x: Vec<f64>,
    cell: CellCache,
    ho: Vec<f64>,
    head: HeadCache,
}

struct StepOut {
    h: Vec<f64>,
    c: Vec<f64>,
    ho: Vec<f64>,
    logits: Vec<f64>,
    cache: StepCache,
}

/// Recurrent decoder state between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    h: Vec<f64>,
    c: Vec<f64>,
    ho: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Listener {
    pub domain: Domain,
    pub vocab: Vocab,
    pub dims: Dims,
    pub store: ParamStore,
    net: Net,
}

impl Listener {
    pub fn new(domain: Domain, vocab: Vocab, dims: Dims, seed: u64) -> Listener {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let (e, h, a) = (dims.embed, dims.hidden, dims.attention);
        let p = WorldState::percept_dim(domain);
        let key_dim = e + 2 * h;
        let emb = s.add_glorot("emb", vocab.len(), e, &mut rng);
        let enc_f = LstmParams::new(&mut s, "enc_f", e, h, &mut rng);
        let enc_b = LstmParams::new(&mut s, "enc_b", e, h, &mut rng);
        let wy = Linear::new(&mut s, "wy", h, p, false, &mut rng);
        let dec = LstmParams::new(&mut s, "dec", h + key_dim, h, &mut rng);
        let attn = AttnParams::new(&mut s, "attn", h, key_dim, a, &mut rng);
        let wh = Linear::new(&mut s, "wh", h, h, false, &mut rng);
        let head = if domain == Domain::Sail {
            Head::Sail {
                wz: Linear::new(&mut s, "wz", h, key_dim, false, &mut rng),
                wo: Linear::new(&mut s, "wo", 4, h, false, &mut rng),
            }
        } else {
            let layout = FactorLayout::for_domain(domain);
            let types = layout.sizes[0];
            // The type factor carries one extra entry for SHIFT.
            let sizes: Vec<usize> = layout.sizes.iter().enumerate().map(|(f, n)| n + usize::from(f == 0)).collect();
            let mut offsets = Vec::with_capacity(sizes.len());
            let mut acc = 0;
            for n in &sizes {
                offsets.push(acc);
                acc += n;
            }
            let factors = sizes
                .iter()
                .enumerate()
                .map(|(f, &n)| {
                    let name = layout.names[f];
                    FactorHead {
                        attn: AttnParams::new(&mut s, &format!("attn_{name}"), h, key_dim, a, &mut rng),
                        wz: Linear::new(&mut s, &format!("wz_{name}"), h, key_dim, false, &mut rng),
                        wo: Linear::new(&mut s, &format!("wo_{name}"), n, h, false, &mut rng),
                    }
                })
                .collect();
            let phi = scone::action_feature_dim(domain);
            let wqa = s.add_glorot("wqa", acc, phi, &mut rng);
            let wa = s.add("wa", phi, 1);
            Head::Scone {
                factors,
                offsets,
                types,
                wqa,
                wa,
            }
        };
        Listener {
            domain,
            vocab,
            dims,
            store: s,
            net: Net {
                emb,
                enc_f,
                enc_b,
                wy,
                dec,
                attn,
                wh,
                head,
                key_dim,
            },
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = json!({
            "kind": "listener",
            "domain": self.domain,
            "dims": self.dims,
            "vocab": self.vocab,
        });
        Checkpoint::from_store(header, &self.store)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Listener> {
        let h = &ckpt.header;
        if h["kind"] != "listener" {
            return Err(Error::Checkpoint(format!("expected a listener, found {}", h["kind"])));
        }
        let domain: Domain = serde_json::from_value(h["domain"].clone())?;
        let dims: Dims = serde_json::from_value(h["dims"].clone())?;
        let vocab: Vocab = serde_json::from_value(h["vocab"].clone())?;
        let mut l = Listener::new(domain, vocab, dims, 0);
        ckpt.load_into(&mut l.store)?;
        Ok(l)
    }

    fn attentions(&self) -> Vec<&AttnParams> {
        let mut v = vec![&self.net.attn];
        if let Head::Scone { factors, .. } = &self.net.head {
            v.extend(factors.iter().map(|f| &f.attn));
        }
        v
    }

    /// Dropout masks for one sentence/segment pair.
    pub fn sample_masks<R: rand::Rng>(&self, rng: &mut R) -> SeqMasks {
        let d = self.dims;
        SeqMasks::sample(d.dropout, d.embed, d.hidden, d.hidden + self.net.key_dim, d.hidden, rng)
    }

    pub fn sentence_ids(&self, sentence: &[String]) -> Vec<usize> {
        if sentence.is_empty() {
            // Nothing to attend to otherwise; the model sees a lone unknown word.
            vec![self.vocab.id(UNK)]
        } else {
            self.vocab.encode(sentence)
        }
    }

    pub fn encode_sentence(&self, sentence: &[String]) -> EncodedSentence {
        self.encode(&self.store.data, &self.sentence_ids(sentence), &SeqMasks::default())
    }

    fn encode(&self, w: &[f64], ids: &[usize], m: &SeqMasks) -> EncodedSentence {
        let n = &self.net;
        let e = self.dims.embed;
        let xs: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| masked(&w[n.emb.offset + id * e..n.emb.offset + (id + 1) * e], m.emb.as_deref()))
            .collect();
        let fwd = n.enc_f.run(w, &xs, m.enc_f.as_deref(), false);
        let bwd = n.enc_b.run(w, &xs, m.enc_b.as_deref(), true);
        let vectors: Vec<Vec<f64>> = (0..xs.len()).map(|k| concat(&[&xs[k], &fwd.hs[k], &bwd.hs[k]])).collect();
        let keys = self.attentions().iter().map(|a| a.project_keys(w, vectors.clone())).collect();
        EncodedSentence {
            ids: ids.to_vec(),
            xs,
            fwd,
            bwd,
            keys,
        }
    }

    fn encode_backward(&self, w: &[f64], g: &mut [f64], enc: &EncodedSentence, mut dkeys: Vec<Vec<f64>>, dproj: &[Vec<Vec<f64>>], m: &SeqMasks) {
        let n = &self.net;
        let (e, h) = (self.dims.embed, self.dims.hidden);
        for (a, (keys, dp)) in self.attentions().iter().zip(enc.keys.iter().zip(dproj)) {
            a.keys_backward(w, g, keys, dp, &mut dkeys);
        }
        let mut dxs: Vec<Vec<f64>> = dkeys.iter().map(|d| d[..e].to_vec()).collect();
        let dfs: Vec<Vec<f64>> = dkeys.iter().map(|d| d[e..e + h].to_vec()).collect();
        let dbs: Vec<Vec<f64>> = dkeys.iter().map(|d| d[e + h..].to_vec()).collect();
        let fx = n.enc_f.run_backward(w, g, &enc.xs, &enc.fwd, &dfs);
        let bx = n.enc_b.run_backward(w, g, &enc.xs, &enc.bwd, &dbs);
        for k in 0..dxs.len() {
            axpy(1.0, &fx[k], &mut dxs[k]);
            axpy(1.0, &bx[k], &mut dxs[k]);
            let dx = masked(&dxs[k], m.emb.as_deref());
            let id = enc.ids[k];
            axpy(1.0, &dx, &mut g[n.emb.offset + id * e..n.emb.offset + (id + 1) * e]);
        }
    }

    /// Moves available after `steps` actions of the current sentence.
    pub fn options(&self, state: &WorldState, steps: usize) -> Options {
        match state {
            WorldState::Sail(s) => {
                let mut moves: Vec<Move> = sail::LISTENER_ACTIONS.iter().map(|a| Move::Act(Action::Sail(*a))).collect();
                moves.push(Move::Shift);
                let capped = steps >= MAX_SAIL_SEGMENT;
                let mut valid: Vec<bool> = sail::LISTENER_ACTIONS
                    .iter()
                    .map(|a| !capped && sail::transition(&s.map, s.pose, a).is_ok())
                    .collect();
                valid.push(steps > 0);
                Options {
                    moves,
                    valid,
                    entries: Vec::new(),
                    feats: Vec::new(),
                }
            }
            _ => {
                let Head::Scone { offsets, types, .. } = &self.net.head else {
                    panic!("listener domain does not match the state");
                };
                if steps > 0 {
                    return Options {
                        moves: vec![Move::Shift],
                        valid: vec![true],
                        entries: vec![vec![*types]],
                        feats: vec![Vec::new()],
                    };
                }
                let actions = scone::valid_actions(state);
                let mut moves = Vec::with_capacity(actions.len() + 1);
                let mut entries = Vec::with_capacity(actions.len() + 1);
                let mut feats = Vec::with_capacity(actions.len() + 1);
                for a in actions {
                    entries.push(a.factor_entries().iter().map(|&(f, v)| offsets[f] + v).collect());
                    feats.push(scone::action_features(state, &a));
                    moves.push(Move::Act(Action::Scone(a)));
                }
                let mut valid = vec![true; moves.len()];
                moves.push(Move::Shift);
                entries.push(vec![*types]);
                feats.push(Vec::new());
                valid.push(false);
                Options {
                    moves,
                    valid,
                    entries,
                    feats,
                }
            }
        }
    }

    pub fn initial_decoder_state(&self) -> DecoderState {
        let h = self.dims.hidden;
        DecoderState {
            h: vec![0.0; h],
            c: vec![0.0; h],
            ho: vec![0.0; h],
        }
    }

    fn step(&self, w: &[f64], enc: &EncodedSentence, y: &[f64], st: &DecoderState, m: &SeqMasks, opts: &Options) -> StepOut {
        let n = &self.net;
        let main = n.attn.attend(w, &st.ho, &enc.keys[0]);
        let u = n.wy.forward(w, y);
        let x = masked(&concat(&[&u, &main.context]), m.dec_in.as_deref());
        let px = n.dec.project(w, &x);
        let (h, c, cell) = n.dec.step(w, &px, &st.h, &st.c, m.dec_rec.as_deref());
        let ho = masked(&h, m.dec_out.as_deref());
        let mut r = n.wh.forward(w, &ho);
        axpy(1.0, &u, &mut r);
        let (logits, head) = match &n.head {
            Head::Sail { wz, wo } => {
                let mut s = wz.forward(w, &main.context);
                axpy(1.0, &r, &mut s);
                (wo.forward(w, &s), HeadCache::Sail { s })
            }
            Head::Scone { factors, wqa, wa, .. } => {
                let mut fac = Vec::with_capacity(factors.len());
                let mut q = Vec::new();
                for (f, fh) in factors.iter().enumerate() {
                    let out = fh.attn.attend(w, &ho, &enc.keys[1 + f]);
                    let mut s = fh.wz.forward(w, &out.context);
                    axpy(1.0, &r, &mut s);
                    q.extend(fh.wo.forward(w, &s));
                    fac.push((out, s));
                }
                // b(a) = q^T Wqa phi + wa^T phi = (Wqa^T q + wa) . phi
                let mut t = w[wa.range()].to_vec();
                gemv_t(&w[wqa.range()], wqa.cols, &q, &mut t);
                let logits = opts
                    .entries
                    .iter()
                    .zip(&opts.feats)
                    .map(|(ent, phi)| {
                        let base: f64 = ent.iter().map(|&k| q[k]).sum();
                        if phi.is_empty() {
                            base
                        } else {
                            base + dot(&t, phi)
                        }
                    })
                    .collect();
                (logits, HeadCache::Scone { fac, q })
            }
        };
        StepOut {
            h,
            c,
            ho: ho.clone(),
            logits,
            cache: StepCache {
                query: st.ho.clone(),
                main,
                y: y.to_vec(),
                x,
                cell,
                ho,
                head,
            },
        }
    }

    /// Backward through one step. `dh`/`dc` come from the next step's
    /// recurrence and `dho` from its attention query. Returns the same
    /// three quantities for the previous step.
    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        w: &[f64],
        g: &mut [f64],
        enc: &EncodedSentence,
        cache: &StepCache,
        opts: &Options,
        dlogits: &[f64],
        next: (&[f64], &[f64], &[f64]),
        m: &SeqMasks,
        dkeys: &mut [Vec<f64>],
        dproj: &mut [Vec<Vec<f64>>],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = &self.net;
        let hd = self.dims.hidden;
        let (dh_next, dc_next, dho_next) = next;
        let mut dr = vec![0.0; hd];
        let mut dctx = vec![0.0; n.key_dim];
        let mut dho = dho_next.to_vec();
        match (&n.head, &cache.head) {
            (Head::Sail { wz, wo }, HeadCache::Sail { s }) => {
                let mut ds = vec![0.0; hd];
                wo.backward(w, g, s, dlogits, Some(&mut ds));
                wz.backward(w, g, &cache.main.context, &ds, Some(&mut dctx));
                axpy(1.0, &ds, &mut dr);
            }
            (
                Head::Scone {
                    factors,
                    offsets,
                    wqa,
                    wa,
                    ..
                },
                HeadCache::Scone { fac, q },
            ) => {
                let mut dq = vec![0.0; q.len()];
                let mut dt = vec![0.0; wa.rows];
                for ((ent, phi), &d) in opts.entries.iter().zip(&opts.feats).zip(dlogits) {
                    if d == 0.0 {
                        continue;
                    }
                    for &k in ent {
                        dq[k] += d;
                    }
                    axpy(d, phi, &mut dt);
                }
                axpy(1.0, &dt, &mut g[wa.range()]);
                ger(&mut g[wqa.range()], wqa.cols, q, &dt);
                gemv(&w[wqa.range()], wqa.cols, &dt, &mut dq);
                for (f, (fh, (out, s))) in factors.iter().zip(fac).enumerate() {
                    let lo = offsets[f];
                    let dqf = &dq[lo..lo + fh.wo.out_dim()];
                    let mut ds = vec![0.0; hd];
                    fh.wo.backward(w, g, s, dqf, Some(&mut ds));
                    let mut dz = vec![0.0; n.key_dim];
                    fh.wz.backward(w, g, &out.context, &ds, Some(&mut dz));
                    axpy(1.0, &ds, &mut dr);
                    fh.attn.backward(w, g, &cache.ho, &enc.keys[1 + f], out, &dz, &mut dho, dkeys, &mut dproj[1 + f]);
                }
            }
            _ => unreachable!("head and cache variants agree"),
        }
        let mut du = dr.clone();
        n.wh.backward(w, g, &cache.ho, &dr, Some(&mut dho));
        let mut dh = masked(&dho, m.dec_out.as_deref());
        axpy(1.0, dh_next, &mut dh);
        let sg = n.dec.step_backward(w, g, &cache.cell, &dh, dc_next);
        let mut dx = vec![0.0; cache.x.len()];
        n.dec.project_backward(w, g, &cache.x, &sg.dpx, Some(&mut dx));
        let dx = masked(&dx, m.dec_in.as_deref());
        axpy(1.0, &dx[..hd], &mut du);
        axpy(1.0, &dx[hd..], &mut dctx);
        let mut dquery = vec![0.0; hd];
        n.attn.backward(w, g, &cache.query, &enc.keys[0], &cache.main, &dctx, &mut dquery, dkeys, &mut dproj[0]);
        n.wy.backward(w, g, &cache.y, &du, None);
        (sg.dh, sg.dc, dquery)
    }

    /// Negative log-likelihood of `moves` (the segment's actions followed by
    /// SHIFT) for one sentence, accumulating its gradient into `grad`.
    pub fn segment_loss(
        &self,
        w: &[f64],
        grad: Option<&mut [f64]>,
        sentence: &[String],
        start: &WorldState,
        moves: &[Move],
        m: &SeqMasks,
    ) -> Result<f64> {
        let ids = self.sentence_ids(sentence);
        let enc = self.encode(w, &ids, m);
        let mut st = self.initial_decoder_state();
        let mut world = start.clone();
        let mut loss = 0.0;
        let mut trace: Vec<(StepCache, Options, Vec<f64>)> = Vec::new();
        for (t, mv) in moves.iter().enumerate() {
            let opts = self.options(&world, t);
            let k = opts.position(mv).ok_or_else(|| Error::InvalidAction {
                index: t,
                reason: crate::error::ActionError::invalid(format!("{mv:?} is not a listener option here")),
            })?;
            if opts.forced_shift() {
                if t + 1 != moves.len() {
                    return Err(Error::Config("moves continue after the sentence ends".into()));
                }
                break;
            }
            let out = self.step(w, &enc, &world.percept(), &st, m, &opts);
            let (l, d) = softmax_xent(&out.logits, &opts.valid, k)?;
            loss += l;
            st = DecoderState {
                h: out.h,
                c: out.c,
                ho: out.ho,
            };
            trace.push((out.cache, opts, d));
            match mv {
                Move::Act(a) => {
                    world = world.apply(a).map_err(|reason| Error::InvalidAction { index: t, reason })?;
                }
                Move::Shift => {
                    if t + 1 != moves.len() {
                        return Err(Error::Config("moves continue after SHIFT".into()));
                    }
                }
            }
        }
        if let Some(g) = grad {
            let hd = self.dims.hidden;
            let mut dkeys = vec![vec![0.0; self.net.key_dim]; enc.len()];
            let mut dproj: Vec<Vec<Vec<f64>>> = self
                .attentions()
                .iter()
                .map(|a| vec![vec![0.0; a.dim]; enc.len()])
                .collect();
            let (mut dh, mut dc, mut dho) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
            for (cache, opts, d) in trace.iter().rev() {
                let r = self.step_backward(w, g, &enc, cache, opts, d, (&dh, &dc, &dho), m, &mut dkeys, &mut dproj);
                dh = r.0;
                dc = r.1;
                dho = r.2;
            }
            self.encode_backward(w, g, &enc, dkeys, &dproj, m);
        }
        Ok(loss)
    }

    /// Log-probabilities of the valid moves at one step, with the state each
    /// leads to inside the network.
    pub fn step_distribution(
        &self,
        enc: &EncodedSentence,
        world: &WorldState,
        steps: usize,
        st: &DecoderState,
    ) -> (Vec<(Move, f64)>, DecoderState) {
        let opts = self.options(world, steps);
        if opts.forced_shift() {
            return (vec![(Move::Shift, 0.0)], st.clone());
        }
        let out = self.step(&self.store.data, enc, &world.percept(), st, &SeqMasks::default(), &opts);
        let lp = log_softmax_masked(&out.logits, &opts.valid);
        let moves = opts
            .moves
            .iter()
            .zip(&opts.valid)
            .zip(lp)
            .filter(|((_, v), _)| **v)
            .map(|((m, _), l)| (*m, l))
            .collect();
        (
            moves,
            DecoderState {
                h: out.h,
                c: out.c,
                ho: out.ho,
            },
        )
    }

    /// `log P(actions, SHIFT | sentence, start)` for one segment.
    pub fn score_segment(&self, sentence: &[String], start: &WorldState, actions: &[Action]) -> Result<f64> {
        let moves = segment_moves(actions);
        Ok(-self.segment_loss(&self.store.data, None, sentence, start, &moves, &SeqMasks::default())?)
    }

    /// Total log-probability of an instance's actions given its sentences,
    /// SHIFT decisions included.
    pub fn score_trajectory(&self, inst: &crate::world::Instance) -> Result<f64> {
        let mut total = 0.0;
        for (k, seg) in inst.segments.iter().enumerate() {
            total += self.score_segment(&seg.sentence, inst.segment_start(k), &seg.actions)?;
        }
        Ok(total)
    }

    /// Whole-instance loss and gradient with fresh dropout masks per segment.
    pub fn instance_loss<R: rand::Rng>(
        &self,
        w: &[f64],
        grad: &mut [f64],
        inst: &crate::world::Instance,
        rng: &mut R,
    ) -> Result<f64> {
        let mut total = 0.0;
        for (k, seg) in inst.segments.iter().enumerate() {
            let m = self.sample_masks(rng);
            total += self.segment_loss(w, Some(grad), &seg.sentence, inst.segment_start(k), &segment_moves(&seg.actions), &m)?;
        }
        Ok(total)
    }

    pub fn param_len(&self) -> usize {
        self.store.len()
    }

    /// Zero the bilinear bonus, leaving plain factor sums.
    pub fn zero_bonus(&mut self) {
        if let Head::Scone { wqa, wa, .. } = &self.net.head {
            let (a, b) = (wqa.range(), wa.range());
            self.store.data[a].iter_mut().for_each(|x| *x = 0.0);
            self.store.data[b].iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Unnormalized first-step scores of every option in `state`.
    pub fn factored_scores(&self, sentence: &[String], state: &WorldState) -> Vec<(Move, f64)> {
        let enc = self.encode_sentence(sentence);
        let opts = self.options(state, 0);
        let out = self.step(&self.store.data, &enc, &state.percept(), &self.initial_decoder_state(), &SeqMasks::default(), &opts);
        opts.moves.iter().copied().zip(out.logits).collect()
    }

    /// Per-factor score vectors `q_f` at the first step of a sentence.
    pub fn factor_vectors(&self, sentence: &[String], state: &WorldState) -> Vec<Vec<f64>> {
        let enc = self.encode_sentence(sentence);
        let opts = self.options(state, 0);
        let out = self.step(&self.store.data, &enc, &state.percept(), &self.initial_decoder_state(), &SeqMasks::default(), &opts);
        match (&self.net.head, out.cache.head) {
            (Head::Scone { offsets, factors, .. }, HeadCache::Scone { q, .. }) => factors
                .iter()
                .enumerate()
                .map(|(f, fh)| q[offsets[f]..offsets[f] + fh.wo.out_dim()].to_vec())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Bonus weights `(Wqa, wa)` as a flat view, SCONE only.
    pub fn bonus_params(&self) -> Option<(Param, Param)> {
        match &self.net.head {
            Head::Scone { wqa, wa, .. } => Some((*wqa, *wa)),
            Head::Sail { .. } => None,
        }
    }
}

/// The listener's view of a gold segment: its actions, then SHIFT.
pub fn segment_moves(actions: &[Action]) -> Vec<Move> {
    let mut v: Vec<Move> = actions.iter().map(|a| Move::Act(*a)).collect();
    v.push(Move::Shift);
    v
}

/// Split a move sequence at SHIFTs into per-sentence action lists.
pub fn split_moves(moves: &[Move]) -> Vec<Vec<Action>> {
    let mut out = vec![Vec::new()];
    for m in moves {
        match m {
            Move::Act(a) => out.last_mut().expect("non-empty").push(*a),
            Move::Shift => out.push(Vec::new()),
        }
    }
    if out.last().is_some_and(Vec::is_empty) && out.len() > 1 {
        out.pop();
    }
    out
}
