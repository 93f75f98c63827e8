use pragma_core::harness::{train_listener, train_speaker, Role, TrainConfig};
use pragma_core::listener::Listener;
use pragma_core::neural::Dims;
use pragma_core::sail::synth::sail_generate;
use pragma_core::sail::SailAction;
use pragma_core::scone::synth::synth_generate;
use pragma_core::scone::{valid_actions, AlchemyState, Color};
use pragma_core::speaker::{Segmenter, Speaker, SPECIALS};
use pragma_core::vocab::{Vocab, UNK};
use pragma_core::world::{Action, Domain, Instance, WorldState};

fn vocab(insts: &[Instance], min_freq: usize, specials: &[&str]) -> Vocab {
    let s: Vec<Vec<String>> = insts.iter().flat_map(Instance::sentences).collect();
    Vocab::build(s.iter().map(Vec::as_slice), min_freq, specials)
}

#[test]
fn listener_mass_over_two_step_trajectories_is_one() {
    for domain in Domain::SCONE {
        let insts = synth_generate(domain, 3, 2, 0.5, 21).unwrap();
        let l = Listener::new(domain, vocab(&insts, 1, &[UNK]), Dims::new(8, 8, 0.0), 3);
        let inst = &insts[0];
        let (d1, d2) = (&inst.segments[0].sentence, &inst.segments[1].sentence);
        let mut total = 0.0;
        for a1 in valid_actions(&inst.initial_state) {
            let a1 = Action::Scone(a1);
            let s1 = l.score_segment(d1, &inst.initial_state, std::slice::from_ref(&a1)).unwrap();
            assert!(s1 <= 0.0);
            let mid = inst.initial_state.apply(&a1).unwrap();
            for a2 in valid_actions(&mid) {
                let s2 = l.score_segment(d2, &mid, &[Action::Scone(a2)]).unwrap();
                total += (s1 + s2).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{domain}: {total}");
        assert!(l.score_trajectory(inst).unwrap() <= 0.0);
    }
}

#[test]
fn listener_step_distribution_is_normalised() {
    let (_, insts) = sail_generate(4, 2, 1, 8).unwrap();
    let l = Listener::new(Domain::Sail, vocab(&insts, 1, &[UNK]), Dims::new(8, 8, 0.0), 1);
    for inst in &insts {
        let enc = l.encode_sentence(&inst.segments[0].sentence);
        for steps in [0, 1, 5] {
            let (d, _) = l.step_distribution(&enc, &inst.initial_state, steps, &l.initial_decoder_state());
            let z: f64 = d.iter().map(|(_, lp)| lp.exp()).sum();
            assert!((z - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn speaker_mass_over_short_sentences_is_one() {
    let words: Vec<Vec<String>> = vec![vec!["red".into(), "mix".into(), "pour".into()]];
    let v = Vocab::build(words.iter().map(Vec::as_slice), 1, &SPECIALS);
    let insts = synth_generate(Domain::Scene, 2, 2, 0.0, 5).unwrap();
    let mut s = Speaker::new(Domain::Scene, v.clone(), Dims::new(8, 8, 0.0), 2);
    s.max_words = 2;
    let emit: Vec<String> = v
        .words()
        .iter()
        .filter(|w| ![pragma_core::vocab::EOS, pragma_core::vocab::BOS].contains(&w.as_str()))
        .cloned()
        .collect();
    assert_eq!(emit.len(), 4);
    for inst in &insts {
        for k in 0..inst.segments.len() {
            let (st, acts) = (inst.segment_start(k), &inst.segments[k].actions);
            let mut total = 0.0;
            for a in &emit {
                total += s.score_segment(st, acts, std::slice::from_ref(a)).unwrap().exp();
                for b in &emit {
                    total += s.score_segment(st, acts, &[a.clone(), b.clone()]).unwrap().exp();
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "{total}");
        }
    }
}

#[test]
fn speaker_inputs_track_beaker_contents() {
    let insts = synth_generate(Domain::Alchemy, 2, 1, 0.0, 1).unwrap();
    let s = Speaker::new(Domain::Alchemy, vocab(&insts, 1, &SPECIALS), Dims::new(8, 8, 0.0), 1);
    let mut a = AlchemyState::default();
    a.beakers[0] = vec![Color::Red, Color::Red];
    let mut b = a.clone();
    b.beakers[0] = vec![Color::Green, Color::Green];
    let act = [Action::Scone(pragma_core::scone::SconeAction::Drain { a: 1, i: 1 })];
    let ea = s.encode_trajectory(&WorldState::Alchemy(a), &act).unwrap();
    let eb = s.encode_trajectory(&WorldState::Alchemy(b), &act).unwrap();
    assert_eq!(ea.vectors().len(), 1);
    assert_ne!(ea.vectors(), eb.vectors());
    assert!(!s.uses_attention());
}

fn small_cfg(role: Role, epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::new(Domain::Alchemy, role);
    c.dims = Dims::new(16, 16, 0.0);
    c.epochs = epochs;
    c.patience = epochs;
    c.dev_beam = 3;
    c
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn training_loss_falls_over_first_epochs() {
    let insts = synth_generate(Domain::Alchemy, 60, 3, 0.5, 9).unwrap();
    let (train, dev) = insts.split_at(50);
    let l = train_listener(&small_cfg(Role::Listener, 5), train, dev).unwrap();
    let losses: Vec<f64> = l.log.epochs.iter().map(|e| e.train_loss).collect();
    assert!(strictly_decreasing(&losses), "{losses:?}");
    let s = train_speaker(&small_cfg(Role::Speaker, 5), train, dev).unwrap();
    let losses: Vec<f64> = s.log.epochs.iter().map(|e| e.train_loss).collect();
    assert!(strictly_decreasing(&losses), "{losses:?}");
}

#[test]
fn segmenter_partitions_routes() {
    let (maps, insts) = sail_generate(10, 3, 2, 4).unwrap();
    assert!(!maps.is_empty());
    let seg = Segmenter::new(Dims::new(8, 8, 0.0), 1);
    for inst in &insts {
        let route: Vec<SailAction> = inst
            .actions()
            .into_iter()
            .map(|a| match a {
                Action::Sail(s) => s,
                _ => unreachable!(),
            })
            .collect();
        let whole = seg.segment_route(&inst.initial_state, &route, 1.0).unwrap();
        assert_eq!(whole.len(), 1);
        for threshold in [0.0, 0.5] {
            let parts = seg.segment_route(&inst.initial_state, &route, threshold).unwrap();
            assert!(parts.iter().all(|p| !p.is_empty()));
            let flat: Vec<Action> = parts.concat();
            assert_eq!(flat, inst.actions());
        }
        let all = seg.segment_route(&inst.initial_state, &route, 0.0).unwrap();
        assert_eq!(all.len(), pragma_core::sail::collapse_moves(&route).len());
    }
}
