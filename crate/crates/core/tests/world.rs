use std::sync::Arc;

use pragma_core::sail::map_format::{load_map, map_to_text, parse_map, save_map};
use pragma_core::sail::synth::sail_generate;
use pragma_core::sail::{
    collapse_moves, expand_moves, percept as sail_percept, resolve_start_orientation, transition as sail_transition,
    EdgeAttrs, Floor, Object, Orientation, Pose, SailAction, SailMap, StartMode, Wall,
};
use pragma_core::scone::synth::synth_generate;
use pragma_core::scone::templates::parse;
use pragma_core::scone::{valid_actions, SconeAction};
use pragma_core::world::{
    apply_actions, load_instances, save_instances, validate_instance, Format, MapLibrary, Violation,
};
use pragma_core::{Action, Domain, Error, WorldState};
use proptest::prelude::*;

fn no_maps() -> MapLibrary {
    MapLibrary::new()
}

#[test]
fn replay_matches_recorded_states() {
    for domain in Domain::SCONE {
        let insts = synth_generate(domain, 350, 5, 0.5, 3).unwrap();
        for inst in &insts {
            let recorded: Vec<WorldState> =
                inst.segments.iter().flat_map(|s| s.states_after.iter().cloned()).collect();
            assert_eq!(apply_actions(&inst.initial_state, &inst.actions()).unwrap(), recorded);
            assert!(apply_actions(&inst.initial_state, &[]).unwrap().is_empty());
        }
    }
}

#[test]
fn invalid_action_reports_its_index() {
    let inst = &synth_generate(Domain::Alchemy, 1, 2, 0.0, 4).unwrap()[0];
    let mut acts = inst.actions();
    acts.push(Action::Scone(SconeAction::Pour { i: 2, j: 2 }));
    match apply_actions(&inst.initial_state, &acts) {
        Err(Error::InvalidAction { index, .. }) => assert_eq!(index, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn perturbed_state_is_one_replay_violation() {
    let mut inst = synth_generate(Domain::Scene, 1, 3, 0.0, 8).unwrap().remove(0);
    assert!(validate_instance(&inst).is_valid());
    let other = synth_generate(Domain::Scene, 1, 1, 0.0, 99).unwrap().remove(0).initial_state;
    assert_ne!(other, inst.segments[1].states_after[0]);
    inst.segments[1].states_after[0] = other;
    let report = validate_instance(&inst);
    let replay: Vec<_> =
        report.violations.iter().filter(|v| matches!(v, Violation::ReplayMismatch { .. })).collect();
    assert_eq!(replay, vec![&Violation::ReplayMismatch { segment: 1, step: 0 }]);
}

#[test]
fn two_action_scone_segment_is_rejected() {
    let mut inst = synth_generate(Domain::Tangrams, 1, 2, 0.0, 2).unwrap().remove(0);
    let second = inst.segments.remove(1);
    inst.segments[0].actions.extend(second.actions);
    inst.segments[0].states_after.extend(second.states_after);
    let report = validate_instance(&inst);
    assert!(report.violations.contains(&Violation::SconeSegmentLength { segment: 0, actions: 2 }));
}

#[test]
fn jsonl_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let insts: Vec<_> = Domain::SCONE.iter().flat_map(|d| synth_generate(*d, 5, 4, 0.5, 12).unwrap()).collect();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    save_instances(&insts, &a).unwrap();
    save_instances(&insts, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_instances(&a, Format::Jsonl, &no_maps()).unwrap(), insts);

    let empty = dir.path().join("empty.jsonl");
    save_instances(&[], &empty).unwrap();
    assert!(std::fs::read(&empty).unwrap().is_empty());
    assert!(load_instances(&empty, Format::Jsonl, &no_maps()).unwrap().is_empty());
}

#[test]
fn jsonl_errors_carry_line_or_id() {
    let dir = tempfile::tempdir().unwrap();
    let inst = synth_generate(Domain::Alchemy, 1, 2, 0.0, 1).unwrap().remove(0);
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, format!("{}\n{{not json\n", inst.to_json_line())).unwrap();
    assert!(matches!(load_instances(&path, Format::Jsonl, &no_maps()), Err(Error::Parse { line: 2, .. })));

    let mut broken = inst.clone();
    broken.segments[0].sentence = vec!["Upper".into()];
    save_instances(&[broken], &path).unwrap();
    match load_instances(&path, Format::Jsonl, &no_maps()) {
        Err(Error::Validation { id, .. }) => assert_eq!(id, inst.id),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scone_tsv_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dev.tsv");
    let rows = [
        "a-1\t1:gg 2:_ 3:_ 4:o 5:_ 6:_ 7:_\tpour the first beaker into the second\t1:_ 2:gg 3:_ 4:o 5:_ 6:_ 7:_",
        "a-2\t1:r 2:_ 3:_ 4:_ 5:_ 6:_ 7:_\tdrain it\t1:_ 2:_ 3:_ 4:_ 5:_ 6:_ 7:_\tstop\t1:_ 2:_ 3:_ 4:_ 5:_ 6:_ 7:_",
    ];
    std::fs::write(&path, rows.join("\n") + "\n").unwrap();
    match load_instances(&path, Format::SconeTsv, &no_maps()) {
        Ok(_) => panic!("a no-op utterance has no action"),
        Err(e) => assert!(matches!(e, Error::Parse { line: 2, .. } | Error::Validation { .. }), "{e}"),
    }
    std::fs::write(&path, rows[0].to_string() + "\n" + &rows[1][..rows[1].find("\tstop").unwrap()] + "\n").unwrap();
    let insts = load_instances(&path, Format::SconeTsv, &no_maps()).unwrap();
    assert_eq!(insts.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["a-1", "a-2"]);
    assert_eq!(insts[0].actions(), vec![Action::Scone(SconeAction::Pour { i: 1, j: 2 })]);
    assert_eq!(insts[1].actions(), vec![Action::Scone(SconeAction::Drain { a: 1, i: 1 })]);
    assert_eq!(insts[0].segments[0].sentence[0], "pour");
}

#[test]
fn unambiguous_corpora_parse_back_to_their_actions() {
    for domain in Domain::SCONE {
        for inst in synth_generate(domain, 100, 5, 0.0, 17).unwrap() {
            for (k, seg) in inst.segments.iter().enumerate() {
                let Action::Scone(a) = seg.actions[0] else { unreachable!() };
                let denoted = parse(inst.segment_start(k), &seg.sentence);
                assert_eq!(denoted.into_iter().collect::<Vec<_>>(), vec![a], "{}", seg.sentence.join(" "));
                assert!(valid_actions(inst.segment_start(k)).contains(&a));
            }
        }
        assert_eq!(synth_generate(domain, 20, 5, 0.3, 5).unwrap(), synth_generate(domain, 20, 5, 0.3, 5).unwrap());
    }
}

const HALL: &str = "# three node hall\nnode 0 0 sofa\nnode 1 0\nnode 2 0 lamp\nnode 1 1\n\
edge 0 0 1 0 floor=blue wall=fish\nedge 1 0 2 0 floor=wood wall=plain\nedge 1 0 1 1 floor=grass wall=eiffel\n";

fn hall() -> Arc<SailMap> {
    Arc::new(parse_map("hall", HALL).unwrap())
}

#[test]
fn map_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = hall();
    assert_eq!(m.nodes.len(), 4);
    assert_eq!(m.edges.len(), 3);
    let path = dir.path().join("hall.map");
    save_map(&m, &path).unwrap();
    assert_eq!(load_map(&path).unwrap(), *m);
    assert_eq!(parse_map("hall", &map_to_text(&m)).unwrap(), *m);

    let empty = dir.path().join("empty.map");
    std::fs::write(&empty, "# nothing\n").unwrap();
    assert!(load_map(&empty).is_err());
    assert!(parse_map("x", "node 0 0\nedge 0 0 5 5 floor=blue wall=fish\n").is_err());
    assert!(matches!(parse_map("x", "node 0 zero\n"), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn sail_moves_and_turns() {
    let m = hall();
    let start = Pose::new((0, 0), Orientation::E);
    let end = sail_transition(&m, start, &SailAction::Forward { n: 2 }).unwrap();
    assert_eq!(end, Pose::new((2, 0), Orientation::E));
    assert!(sail_transition(&m, start, &SailAction::Forward { n: 3 }).is_err());
    let mut p = start;
    for _ in 0..4 {
        p = sail_transition(&m, p, &SailAction::Left).unwrap();
    }
    assert_eq!(p, start);
    let lr = sail_transition(&m, sail_transition(&m, start, &SailAction::Left).unwrap(), &SailAction::Right).unwrap();
    assert_eq!(lr, start);
    assert_eq!(sail_transition(&m, start, &SailAction::Stop).unwrap(), start);
    let lost = Pose::new((0, 0), Orientation::Undetermined);
    assert!(sail_transition(&m, lost, &SailAction::FORWARD).is_err());
    assert!(sail_transition(&m, lost, &SailAction::Left).is_err());
}

#[test]
fn percept_blocks_rotate_with_heading() {
    let m = hall();
    let facing = [Orientation::N, Orientation::E, Orientation::S, Orientation::W];
    for node in [(0, 0), (1, 0), (2, 0), (1, 1)] {
        for o in facing {
            let before = sail_percept(&m, Pose::new(node, o));
            let after = sail_percept(&m, Pose::new(node, o.counter_clockwise()));
            assert_eq!(before.len(), after.len());
            let block = (before.len() - Object::ALL.len()) / 4;
            // Blocks are (F, L, R, B); turning left makes old L the new F,
            // old B the new L, old F the new R, old R the new B.
            let get = |v: &[f64], k: usize| v[k * block..(k + 1) * block].to_vec();
            assert_eq!(get(&after, 0), get(&before, 1));
            assert_eq!(get(&after, 1), get(&before, 3));
            assert_eq!(get(&after, 2), get(&before, 0));
            assert_eq!(get(&after, 3), get(&before, 2));
            assert_eq!(after[4 * block..], before[4 * block..]);
        }
    }
    let bare = sail_percept(&m, Pose::new((1, 0), Orientation::N));
    assert!(bare[bare.len() - Object::ALL.len()..].iter().all(|x| *x == 0.0));
    let lost = sail_percept(&m, Pose::new((1, 0), Orientation::Undetermined));
    let block = (lost.len() - Object::ALL.len()) / 4;
    assert!(lost[..4 * block].iter().all(|x| *x == 0.0));
}

#[test]
fn percept_fixture() {
    let m = hall();
    let got = sail_percept(&m, Pose::new((1, 0), Orientation::N));
    let block = 1 + Floor::ALL.len() + Wall::ALL.len();
    let mut want = vec![0.0; 4 * block + Object::ALL.len()];
    // Forward is north to (1, 1), left is west to (0, 0), right is east
    // to (2, 0), and nothing lies behind.
    for (k, floor, wall) in [(0, Floor::Grass, Wall::Eiffel), (1, Floor::Blue, Wall::Fish), (2, Floor::Wood, Wall::Plain)] {
        want[k * block] = 1.0;
        want[k * block + 1 + floor.index()] = 1.0;
        want[k * block + 1 + Floor::ALL.len() + wall.index()] = 1.0;
    }
    assert_eq!(got, want);
    let sofa = sail_percept(&m, Pose::new((0, 0), Orientation::E));
    assert_eq!(sofa[4 * block + Object::Sofa.index()], 1.0);
}

#[test]
fn start_orientation_modes() {
    let route = [(0, 0), (1, 0), (1, 1)];
    assert_eq!(resolve_start_orientation(StartMode::Abs, (0, 0), &route).unwrap().orientation, Orientation::N);
    assert_eq!(resolve_start_orientation(StartMode::Rel, (0, 0), &route).unwrap().orientation, Orientation::S);
    assert!(matches!(resolve_start_orientation(StartMode::Rel, (0, 0), &[(0, 0)]), Err(Error::DegenerateRoute)));

    let (_, insts) = sail_generate(20, 2, 3, 6).unwrap();
    for inst in &insts {
        let WorldState::Sail(s) = &inst.initial_state else { unreachable!() };
        let route: Vec<_> = inst
            .segments
            .iter()
            .flat_map(|g| &g.states_after)
            .map(|w| match w {
                WorldState::Sail(s) => s.pose.node(),
                _ => unreachable!(),
            })
            .collect();
        let Some(next) = route.iter().find(|n| **n != s.pose.node()) else { continue };
        let heading = Orientation::from_delta((next.0 - s.pose.x, next.1 - s.pose.y)).unwrap();
        let got = resolve_start_orientation(StartMode::Rel, s.pose.node(), &route).unwrap().orientation;
        assert!(got == heading.clockwise() && got != heading.opposite());
    }
}

#[test]
fn sail_edges_need_adjacent_nodes() {
    let mut m = SailMap::new("t");
    m.nodes.extend([(0, 0), (2, 0)]);
    let attrs = EdgeAttrs { floor: Floor::Blue, wall: Wall::Fish };
    assert!(m.add_edge((0, 0), (2, 0), attrs).is_err());
    assert_eq!(m.step((0, 0), Orientation::E), None);
}

proptest! {
    #[test]
    fn expand_inverts_collapse(kinds in prop::collection::vec(0u8..4, 0..40)) {
        let prims: Vec<SailAction> = kinds
            .iter()
            .map(|k| match k {
                0 | 1 => SailAction::FORWARD,
                2 => SailAction::Left,
                _ => SailAction::Right,
            })
            .collect();
        let c = collapse_moves(&prims);
        prop_assert_eq!(expand_moves(&c), prims);
        let merged = c.windows(2).all(|w| !matches!((w[0], w[1]), (SailAction::Forward { .. }, SailAction::Forward { .. })));
        prop_assert!(merged);
    }
}

#[test]
fn four_forwards_collapse_to_move4() {
    assert_eq!(collapse_moves(&[SailAction::FORWARD; 4]), vec![SailAction::Forward { n: 4 }]);
    assert!(collapse_moves(&[]).is_empty());
}
