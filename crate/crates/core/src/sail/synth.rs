//! Small random hallway maps and templated routes over them.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EdgeAttrs, Floor, Node, Object, Orientation, Pose, SailAction, SailMap, SailState, Wall};
use crate::error::Result;
use crate::world::{apply_actions, split_for_id, Action, Domain, Instance, MapLibrary, Segment, WorldState};

const NUMBERS: [&str; 8] = ["one", "two", "three", "four", "five", "six", "seven", "eight"];

/// Random spanning tree over a `width x height` grid plus a few loops.
/// Straight runs share a floor pattern so hallways read as hallways.
pub fn random_map<R: Rng>(name: &str, width: i32, height: i32, rng: &mut R) -> SailMap {
    let mut map = SailMap::new(name);
    for x in 0..width {
        for y in 0..height {
            map.nodes.insert((x, y));
        }
    }
    let mut seen: BTreeSet<Node> = BTreeSet::new();
    let mut stack = vec![(0, 0)];
    seen.insert((0, 0));
    let mut pairs = Vec::new();
    while let Some(&node) = stack.last() {
        let mut dirs = Orientation::DETERMINED.to_vec();
        dirs.shuffle(rng);
        let next = dirs.into_iter().find_map(|d| {
            let (dx, dy) = d.delta().expect("determined");
            let n = (node.0 + dx, node.1 + dy);
            (map.nodes.contains(&n) && !seen.contains(&n)).then_some(n)
        });
        match next {
            Some(n) => {
                seen.insert(n);
                pairs.push((node, n));
                stack.push(n);
            }
            None => {
                stack.pop();
            }
        }
    }
    for _ in 0..(width * height / 4) {
        let a = (rng.gen_range(0..width), rng.gen_range(0..height));
        let d = *Orientation::DETERMINED.choose(rng).expect("dirs");
        let (dx, dy) = d.delta().expect("determined");
        let b = (a.0 + dx, a.1 + dy);
        if map.nodes.contains(&b) {
            pairs.push((a, b));
        }
    }
    let row_floor: Vec<Floor> = (0..height).map(|_| *Floor::ALL.choose(rng).expect("floors")).collect();
    let col_floor: Vec<Floor> = (0..width).map(|_| *Floor::ALL.choose(rng).expect("floors")).collect();
    for (a, b) in pairs {
        let floor = if a.1 == b.1 { row_floor[a.1 as usize] } else { col_floor[a.0 as usize] };
        let wall = *Wall::ALL.choose(rng).expect("walls");
        map.add_edge(a, b, EdgeAttrs { floor, wall }).expect("adjacent");
    }
    let nodes: Vec<Node> = map.nodes.iter().copied().collect();
    for n in nodes {
        if rng.gen_bool(0.2) {
            map.objects.insert(n, *Object::ALL.choose(rng).expect("objects"));
        }
    }
    map
}

fn run_length(map: &SailMap, pose: Pose) -> usize {
    let mut node = pose.node();
    let mut k = 0;
    while let Some(n) = map.step(node, pose.orientation) {
        node = n;
        k += 1;
        if k == NUMBERS.len() {
            break;
        }
    }
    k
}

fn steps_phrase(k: usize) -> String {
    if k == 1 {
        "one step".into()
    } else {
        format!("{} steps", NUMBERS[k - 1])
    }
}

fn segment<R: Rng>(map: &SailMap, pose: Pose, rng: &mut R) -> (Vec<String>, Vec<SailAction>) {
    let turn = *[SailAction::Left, SailAction::Right].choose(rng).expect("turns");
    let turned = super::transition(map, pose, &turn).expect("determined");
    let side = if turn == SailAction::Left { "left" } else { "right" };
    let ahead = run_length(map, pose);
    let after_turn = run_length(map, turned);
    let text: String;
    let mut actions = Vec::new();
    let choice = rng.gen_range(0..3);
    if choice == 0 && ahead > 0 {
        let k = rng.gen_range(1..=ahead);
        actions.extend(std::iter::repeat_n(SailAction::FORWARD, k));
        let end = (0..k).fold(pose.node(), |n, _| map.step(n, pose.orientation).expect("run"));
        let floor = map.edge(pose.node(), map.step(pose.node(), pose.orientation).expect("run")).expect("edge").floor;
        text = match (map.objects.get(&end), rng.gen_range(0..3)) {
            (Some(obj), 0) => format!("walk forward to the {obj}"),
            (_, 1) => format!("follow the {floor} hall {}", steps_phrase(k)),
            _ => format!("go straight {}", steps_phrase(k)),
        };
    } else if choice == 1 && after_turn > 0 {
        let k = rng.gen_range(1..=after_turn);
        actions.push(turn);
        actions.extend(std::iter::repeat_n(SailAction::FORWARD, k));
        text = match rng.gen_range(0..2) {
            0 => format!("turn {side} and walk {}", steps_phrase(k)),
            _ => format!("go {side} then forward {}", steps_phrase(k)),
        };
    } else {
        actions.push(turn);
        text = match rng.gen_range(0..2) {
            0 => format!("turn {side}"),
            _ => format!("face {side}"),
        };
    }
    (crate::world::tokenize(&text), actions)
}

/// Routes of `segments` sentences over `maps` freshly drawn maps.
pub fn sail_generate(n: usize, segments: usize, maps: usize, seed: u64) -> Result<(MapLibrary, Vec<Instance>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut library = MapLibrary::new();
    let mut names = Vec::new();
    for m in 0..maps.max(1) {
        let name = format!("grid-{seed}-{m}");
        let map = random_map(&name, 5, 5, &mut rng);
        library.insert(name.clone(), Arc::new(map));
        names.push(name);
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let map = Arc::clone(&library[&names[rng.gen_range(0..names.len())]]);
        let nodes: Vec<Node> = map.nodes.iter().copied().collect();
        let start = Pose::new(
            *nodes.choose(&mut rng).expect("nodes"),
            *Orientation::DETERMINED.choose(&mut rng).expect("dirs"),
        );
        let initial = WorldState::Sail(SailState { map: Arc::clone(&map), pose: start });
        let mut cur = initial.clone();
        let mut segs = Vec::with_capacity(segments);
        for _ in 0..segments {
            let WorldState::Sail(s) = &cur else { unreachable!() };
            let (sentence, actions) = segment(&map, s.pose, &mut rng);
            let actions: Vec<Action> = actions.into_iter().map(Action::Sail).collect();
            let states_after = apply_actions(&cur, &actions)?;
            cur = states_after.last().expect("non-empty segment").clone();
            segs.push(Segment { sentence, actions, states_after });
        }
        let id = format!("sail-{seed}-{k:05}");
        out.push(Instance {
            split: split_for_id(&id),
            id,
            domain: Domain::Sail,
            initial_state: initial,
            segments: segs,
            start_undetermined: false,
        });
    }
    Ok((library, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::validate_instance;

    #[test]
    fn routes_replay() {
        let (_, insts) = sail_generate(30, 3, 2, 7).unwrap();
        for inst in &insts {
            assert!(validate_instance(inst).is_valid());
        }
    }

    #[test]
    fn maps_are_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_map("m", 4, 3, &mut rng);
        assert!(m.edges.len() >= m.nodes.len() - 1);
    }
}
