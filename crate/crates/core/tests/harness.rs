use pragma_core::harness::{
    corpus_bleu, eval_listener, proxy_follow_accuracy, run_experiment, sign_test, train_ensemble, train_listener,
    train_speaker, tune_lambda, ExperimentSpec, Role, TrainConfig, TrainLog,
};
use pragma_core::neural::Dims;
use pragma_core::pragmatics::{combined_score, select, PragmaticsConfig, Scored};
use pragma_core::scone::synth::synth_generate;
use pragma_core::Domain;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn cfg(role: Role, epochs: usize, patience: usize) -> TrainConfig {
    let mut c = TrainConfig::new(Domain::Scene, role);
    c.dims = Dims::new(8, 8, 0.0);
    c.epochs = epochs;
    c.patience = patience;
    c.dev_beam = 2;
    c
}

fn stopped_by_patience(log: &TrainLog, epochs: usize, patience: usize) -> bool {
    let best = log.epochs.iter().position(|e| e.epoch == log.best_epoch).unwrap();
    let tail = log.epochs.len() - 1 - best;
    if log.epochs.len() < epochs {
        tail == patience + 1
    } else {
        tail <= patience + 1
    }
}

#[test]
fn early_stopping_honours_patience() {
    let insts = synth_generate(Domain::Scene, 30, 2, 0.5, 4).unwrap();
    let (train, dev) = insts.split_at(24);
    for patience in [0, 1] {
        let t = train_listener(&cfg(Role::Listener, 6, patience), train, dev).unwrap();
        assert!(stopped_by_patience(&t.log, 6, patience), "{:?}", t.log);
        let best = t.log.epochs.iter().map(|e| e.dev_metric).fold(f64::MIN, f64::max);
        assert_eq!(best, t.log.best_dev);
    }
}

#[test]
fn ensemble_members_follow_their_seeds() {
    let insts = synth_generate(Domain::Scene, 20, 2, 0.5, 6).unwrap();
    let (train, dev) = insts.split_at(16);
    let c = cfg(Role::Speaker, 1, 0);
    let one = train_ensemble(&c, &[3], |c| train_speaker(c, train, dev)).unwrap();
    assert_eq!(one.len(), 1);
    let two = train_ensemble(&c, &[3, 4], |c| train_speaker(c, train, dev)).unwrap();
    assert_eq!(two[0].model.store.data, one[0].model.store.data);
    assert_ne!(two[0].model.store.data, two[1].model.store.data);
    assert_eq!((two[0].config.seed, two[1].config.seed), (3, 4));
}

#[test]
fn proxy_following_gold_directions_is_plain_listener_accuracy() {
    let insts = synth_generate(Domain::Scene, 30, 2, 0.5, 2).unwrap();
    let (train, dev) = insts.split_at(24);
    let l = train_listener(&cfg(Role::Listener, 2, 2), train, dev).unwrap().model;
    let ls = std::slice::from_ref(&l);
    let base = PragmaticsConfig { listener_beam: 3, ..Default::default() };
    let report = eval_listener(ls, &[], dev, &base, None).unwrap();
    let gold: Vec<_> = dev.iter().map(|i| i.sentences()).collect();
    assert_eq!(proxy_follow_accuracy(ls, dev, &gold, 3).unwrap(), report.correct());
    // Wrong sentence counts never count as followed.
    let short: Vec<_> = dev.iter().map(|i| i.sentences()[..1].to_vec()).collect();
    assert!(proxy_follow_accuracy(ls, dev, &short, 3).unwrap().iter().all(|ok| !ok));
}

#[test]
fn lambda_tuning_picks_smallest_best() {
    let c = tune_lambda(&[0.0, 0.5, 1.0], &[10.0, 30.0, 30.0]).unwrap();
    assert_eq!(c.best, 0.5);
    assert_eq!(c.points, vec![(0.0, 10.0), (0.5, 30.0), (1.0, 30.0)]);
    assert!(tune_lambda(&[0.0, 1.0], &[1.0]).is_err());
    assert!(tune_lambda(&[], &[]).is_err());
    assert!(tune_lambda(&[0.0, 1.5], &[1.0, 2.0]).is_err());
}

#[test]
fn sign_test_values() {
    let t = sign_test(&[true; 10], &[false; 10]);
    assert_eq!((t.wins, t.losses, t.ties), (10, 0, 0));
    assert!((t.p_value - 2.0 / 1024.0).abs() < 1e-12);
    let same = sign_test(&[true, false, true], &[true, false, true]);
    assert_eq!((same.ties, same.p_value), (3, 1.0));
    // 3 wins, 1 loss: P(X <= 1) under Binomial(4, 1/2) is 5/16, doubled.
    let t = sign_test(&[true, true, true, false], &[false, false, false, true]);
    assert!((t.p_value - 10.0 / 16.0).abs() < 1e-12);
}

#[test]
fn bleu_extremes() {
    let c = vec![words("pour the red beaker into the third one")];
    assert!((corpus_bleu(&c, &c) - 100.0).abs() < 1e-9);
    assert_eq!(corpus_bleu(&c, &[words("mix it now please")]), 0.0);
}

#[test]
fn selection_weights_generator_and_rescorer() {
    let cands = vec![
        Scored { tokens: vec![1], beam_score: -1.0, generator: -1.0, rescorer: -5.0 },
        Scored { tokens: vec![2], beam_score: -2.0, generator: -2.0, rescorer: -0.5 },
    ];
    assert_eq!(select(&cands, 0.0), Some(0));
    assert_eq!(select(&cands, 1.0), Some(1));
    // The two combined scores cross at lambda = 1 / 5.5.
    assert_eq!(select(&cands, 0.1), Some(0));
    assert_eq!(select(&cands, 0.2), Some(1));
    assert_eq!(select::<usize>(&[], 0.5), None);
    assert_eq!(combined_score(-3.0, f64::NAN, 0.0), -3.0);
    assert_eq!(combined_score(f64::NAN, -2.0, 1.0), -2.0);
}

#[test]
fn tiny_experiment_reports_every_system() {
    let mut spec = ExperimentSpec {
        domain: Domain::Tangrams,
        sizes: [30, 10, 10],
        steps: 2,
        seeds: vec![1],
        budget: 2,
        lambda_grid: vec![0.0, 1.0],
        listener_beam: 3,
        speaker_beam: 2,
        ..Default::default()
    };
    for m in [&mut spec.listener, &mut spec.speaker] {
        m.hidden = 6;
        m.attention = 6;
        m.epochs = 1;
        m.dev_beam = 2;
    }
    let report = run_experiment(&spec).unwrap();
    let keys: Vec<&str> = report.seeds[0].rows.iter().map(|r| r.key.as_str()).collect();
    for k in ["listener_base", "listener_rational", "listener_ensemble", "speaker_base", "speaker_rational", "speaker_reference"] {
        assert_eq!(keys.iter().filter(|x| **x == k).count(), 1, "{k} in {keys:?}");
    }
    let ens = report.seeds[0].rows.iter().find(|r| r.key == "listener_ensemble").unwrap();
    assert_eq!(ens.models, 2);
    assert!(report.table().contains("mean"));

    assert!(run_experiment(&ExperimentSpec { budget: 3, ..spec.clone() }).is_err());
    assert!(run_experiment(&ExperimentSpec { domain: Domain::Sail, ..spec }).is_err());
}
