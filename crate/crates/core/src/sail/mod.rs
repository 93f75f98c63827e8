//! Grid-of-hallways navigation. A map is a set of grid nodes joined by
//! attributed edges (floor and wall patterns), with optional objects at
//! nodes. The agent has a pose (node and heading) and moves by turning or
//! walking forward along edges.

pub mod map_format;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ActionError, Error, Result};

pub type Node = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    N,
    E,
    S,
    W,
    #[serde(rename = "?")]
    Undetermined,
}

impl Orientation {
    pub const DETERMINED: [Orientation; 4] =
        [Orientation::N, Orientation::E, Orientation::S, Orientation::W];

    pub fn clockwise(self) -> Orientation {
        match self {
            Orientation::N => Orientation::E,
            Orientation::E => Orientation::S,
            Orientation::S => Orientation::W,
            Orientation::W => Orientation::N,
            Orientation::Undetermined => Orientation::Undetermined,
        }
    }

    pub fn counter_clockwise(self) -> Orientation {
        self.clockwise().clockwise().clockwise()
    }

    pub fn opposite(self) -> Orientation {
        self.clockwise().clockwise()
    }

    pub fn delta(self) -> Option<(i32, i32)> {
        match self {
            Orientation::N => Some((0, 1)),
            Orientation::E => Some((1, 0)),
            Orientation::S => Some((0, -1)),
            Orientation::W => Some((-1, 0)),
            Orientation::Undetermined => None,
        }
    }

    pub fn from_delta(d: (i32, i32)) -> Option<Orientation> {
        Orientation::DETERMINED
            .into_iter()
            .find(|o| o.delta() == Some(d))
    }
}

macro_rules! attr_enum {
    ($name:ident { $($variant:ident => $word:literal),* $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),* }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn word(self) -> &'static str {
                match self { $($name::$variant => $word),* }
            }

            pub fn from_word(w: &str) -> Option<$name> {
                match w { $($word => Some($name::$variant),)* _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.word())
            }
        }
    };
}

attr_enum!(Floor {
    Blue => "blue",
    Brick => "brick",
    Concrete => "concrete",
    Flower => "flower",
    Grass => "grass",
    Gravel => "gravel",
    Wood => "wood",
    Yellow => "yellow",
});

attr_enum!(Wall {
    Butterfly => "butterfly",
    Eiffel => "eiffel",
    Fish => "fish",
    Plain => "plain",
});

attr_enum!(Object {
    Barstool => "barstool",
    Chair => "chair",
    Easel => "easel",
    Hatrack => "hatrack",
    Lamp => "lamp",
    Sofa => "sofa",
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeAttrs {
    pub floor: Floor,
    pub wall: Wall,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SailMap {
    pub name: String,
    pub nodes: BTreeSet<Node>,
    /// Keyed by the ordered node pair `(min, max)`.
    pub edges: BTreeMap<(Node, Node), EdgeAttrs>,
    pub objects: BTreeMap<Node, Object>,
}

fn edge_key(a: Node, b: Node) -> (Node, Node) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SailMap {
    pub fn new(name: impl Into<String>) -> SailMap {
        SailMap {
            name: name.into(),
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
            objects: BTreeMap::new(),
        }
    }

    pub fn edge(&self, a: Node, b: Node) -> Option<&EdgeAttrs> {
        self.edges.get(&edge_key(a, b))
    }

    pub fn add_edge(&mut self, a: Node, b: Node, attrs: EdgeAttrs) -> Result<()> {
        let adjacent = (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1;
        if !adjacent || !self.nodes.contains(&a) || !self.nodes.contains(&b) {
            return Err(Error::Config(format!(
                "edge {a:?}-{b:?} must join adjacent existing nodes"
            )));
        }
        self.edges.insert(edge_key(a, b), attrs);
        Ok(())
    }

    /// Neighbor reached by stepping one edge from `node` toward `dir`.
    pub fn step(&self, node: Node, dir: Orientation) -> Option<Node> {
        let (dx, dy) = dir.delta()?;
        let next = (node.0 + dx, node.1 + dy);
        self.edge(node, next).map(|_| next)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    #[serde(rename = "dir")]
    pub orientation: Orientation,
}

impl Pose {
    pub fn new(node: Node, orientation: Orientation) -> Pose {
        Pose {
            x: node.0,
            y: node.1,
            orientation,
        }
    }

    pub fn node(&self) -> Node {
        (self.x, self.y)
    }
}

/// A pose on a shared, immutable map.
#[derive(Clone, Debug)]
pub struct SailState {
    pub map: Arc<SailMap>,
    pub pose: Pose,
}

impl PartialEq for SailState {
    fn eq(&self, other: &Self) -> bool {
        self.pose == other.pose && self.map.name == other.map.name
    }
}

impl Eq for SailState {}

impl std::hash::Hash for SailState {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.map.name.hash(state);
        self.pose.hash(state);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "args", rename_all = "snake_case")]
pub enum SailAction {
    /// `n >= 1` consecutive forward steps; `n == 1` is the primitive move.
    Forward { n: usize },
    Left,
    Right,
    Stop,
}

impl SailAction {
    pub const FORWARD: SailAction = SailAction::Forward { n: 1 };
}

impl fmt::Display for SailAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SailAction::Forward { n } => write!(f, "Move{n}"),
            SailAction::Left => f.write_str("Left"),
            SailAction::Right => f.write_str("Right"),
            SailAction::Stop => f.write_str("Stop"),
        }
    }
}

pub fn transition(map: &SailMap, pose: Pose, action: &SailAction) -> Result<Pose, ActionError> {
    match *action {
        SailAction::Left | SailAction::Right
            if pose.orientation == Orientation::Undetermined =>
        {
            Err(ActionError::UndeterminedOrientation)
        }
        SailAction::Left => Ok(Pose {
            orientation: pose.orientation.counter_clockwise(),
            ..pose
        }),
        SailAction::Right => Ok(Pose {
            orientation: pose.orientation.clockwise(),
            ..pose
        }),
        SailAction::Stop => Ok(pose),
        SailAction::Forward { n } => {
            if n == 0 {
                return Err(ActionError::invalid("forward needs n >= 1"));
            }
            if pose.orientation == Orientation::Undetermined {
                return Err(ActionError::UndeterminedOrientation);
            }
            let mut node = pose.node();
            for k in 0..n {
                node = map
                    .step(node, pose.orientation)
                    .ok_or(ActionError::Blocked { at_step: k })?;
            }
            Ok(Pose::new(node, pose.orientation))
        }
    }
}

impl SailState {
    pub fn apply(&self, action: &SailAction) -> Result<SailState, ActionError> {
        Ok(SailState {
            map: Arc::clone(&self.map),
            pose: transition(&self.map, self.pose, action)?,
        })
    }
}

/// Directional block: passable bit, floor one-hot, wall one-hot.
const DIR_BLOCK: usize = 1 + 8 + 4;
pub const PERCEPT_DIM: usize = 4 * DIR_BLOCK + 6;

/// Relative frame order of the directional blocks: forward, left, right,
/// behind. An undetermined heading leaves all four blocks zero.
pub fn percept(map: &SailMap, pose: Pose) -> Vec<f64> {
    debug_assert_eq!(Floor::ALL.len(), 8);
    debug_assert_eq!(Wall::ALL.len(), 4);
    let mut v = vec![0.0; PERCEPT_DIM];
    let o = pose.orientation;
    if o != Orientation::Undetermined {
        let frame = [o, o.counter_clockwise(), o.clockwise(), o.opposite()];
        for (k, dir) in frame.into_iter().enumerate() {
            if let Some(next) = map.step(pose.node(), dir) {
                let attrs = map.edge(pose.node(), next).expect("edge");
                let base = k * DIR_BLOCK;
                v[base] = 1.0;
                v[base + 1 + attrs.floor.index()] = 1.0;
                v[base + 1 + Floor::ALL.len() + attrs.wall.index()] = 1.0;
            }
        }
    }
    if let Some(obj) = map.objects.get(&pose.node()) {
        v[4 * DIR_BLOCK + obj.index()] = 1.0;
    }
    v
}

/// Merge maximal runs of forward steps into single `Forward { n }` actions.
pub fn collapse_moves(actions: &[SailAction]) -> Vec<SailAction> {
    let mut out: Vec<SailAction> = Vec::with_capacity(actions.len());
    for a in actions {
        match (out.last_mut(), a) {
            (Some(SailAction::Forward { n }), SailAction::Forward { n: m }) => *n += m,
            _ => out.push(*a),
        }
    }
    out
}

pub fn expand_moves(actions: &[SailAction]) -> Vec<SailAction> {
    let mut out = Vec::with_capacity(actions.len());
    for a in actions {
        match a {
            SailAction::Forward { n } => out.extend(std::iter::repeat_n(SailAction::FORWARD, *n)),
            other => out.push(*other),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StartMode {
    Rel,
    Abs,
}

/// Pick a heading for a route whose first orientation is undetermined.
/// `Abs` always faces north. `Rel` faces 90 degrees clockwise from the
/// direction toward the first node of the route that differs from `start`.
pub fn resolve_start_orientation(mode: StartMode, start: Node, route: &[Node]) -> Result<Pose> {
    match mode {
        StartMode::Abs => Ok(Pose::new(start, Orientation::N)),
        StartMode::Rel => {
            let next = route
                .iter()
                .find(|n| **n != start)
                .ok_or(Error::DegenerateRoute)?;
            let dir = Orientation::from_delta((next.0 - start.0, next.1 - start.1))
                .ok_or(Error::DegenerateRoute)?;
            Ok(Pose::new(start, dir.clockwise()))
        }
    }
}

/// Turns (at most two) that rotate `from` to face `to`.
pub fn turns_between(from: Orientation, to: Orientation) -> Vec<SailAction> {
    if from == to {
        Vec::new()
    } else if from.clockwise() == to {
        vec![SailAction::Right]
    } else if from.counter_clockwise() == to {
        vec![SailAction::Left]
    } else {
        vec![SailAction::Left, SailAction::Left]
    }
}

/// Listener-side primitive inventory. `Stop` is not emitted; the final
/// segment boundary ends an episode.
pub const LISTENER_ACTIONS: [SailAction; 3] =
    [SailAction::FORWARD, SailAction::Left, SailAction::Right];

/// Longest collapsed run with its own speaker input symbol; longer runs
/// share the last one.
pub const MAX_COLLAPSED_RUN: usize = 8;
/// `Forward{1..=8}`, `Left`, `Right`, `Stop`.
pub const COLLAPSED_DIM: usize = MAX_COLLAPSED_RUN + 3;

pub fn collapsed_index(a: &SailAction) -> usize {
    match *a {
        SailAction::Forward { n } => n.clamp(1, MAX_COLLAPSED_RUN) - 1,
        SailAction::Left => MAX_COLLAPSED_RUN,
        SailAction::Right => MAX_COLLAPSED_RUN + 1,
        SailAction::Stop => MAX_COLLAPSED_RUN + 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hall(len: i32) -> SailMap {
        let mut m = SailMap::new("hall");
        for x in 0..len {
            m.nodes.insert((x, 0));
        }
        for x in 0..len - 1 {
            m.add_edge(
                (x, 0),
                (x + 1, 0),
                EdgeAttrs {
                    floor: Floor::Blue,
                    wall: Wall::Fish,
                },
            )
            .unwrap();
        }
        m
    }

    #[test]
    fn turning_round_trips() {
        let m = hall(3);
        let p = Pose::new((0, 0), Orientation::E);
        let lr = transition(&m, transition(&m, p, &SailAction::Left).unwrap(), &SailAction::Right);
        assert_eq!(lr.unwrap(), p);
        let mut q = p;
        for _ in 0..4 {
            q = transition(&m, q, &SailAction::Left).unwrap();
        }
        assert_eq!(q, p);
    }

    #[test]
    fn move_two_reaches_far_end() {
        let m = hall(3);
        let p = Pose::new((0, 0), Orientation::E);
        let q = transition(&m, p, &SailAction::Forward { n: 2 }).unwrap();
        assert_eq!(q, Pose::new((2, 0), Orientation::E));
        assert_eq!(
            transition(&m, p, &SailAction::Forward { n: 3 }),
            Err(ActionError::Blocked { at_step: 2 })
        );
        assert_eq!(
            transition(&m, Pose::new((0, 0), Orientation::Undetermined), &SailAction::FORWARD),
            Err(ActionError::UndeterminedOrientation)
        );
    }

    #[test]
    fn percept_rotates_with_heading() {
        let mut m = hall(3);
        m.nodes.insert((1, 1));
        m.add_edge(
            (1, 0),
            (1, 1),
            EdgeAttrs {
                floor: Floor::Grass,
                wall: Wall::Eiffel,
            },
        )
        .unwrap();
        for o in Orientation::DETERMINED {
            let p = Pose::new((1, 0), o);
            let before = percept(&m, p);
            let after = percept(&m, transition(&m, p, &SailAction::Left).unwrap());
            let block = |v: &[f64], k: usize| v[k * DIR_BLOCK..(k + 1) * DIR_BLOCK].to_vec();
            // (F, L, R, B) after a left turn is (L, B, F, R) before it.
            assert_eq!(block(&after, 0), block(&before, 1));
            assert_eq!(block(&after, 1), block(&before, 3));
            assert_eq!(block(&after, 2), block(&before, 0));
            assert_eq!(block(&after, 3), block(&before, 2));
        }
        let none = percept(&m, Pose::new((0, 0), Orientation::E));
        assert!(none[4 * DIR_BLOCK..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn undetermined_heading_zeroes_directional_blocks() {
        let m = hall(3);
        let v = percept(&m, Pose::new((1, 0), Orientation::Undetermined));
        assert!(v[..4 * DIR_BLOCK].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn collapse_four_forwards() {
        let f = SailAction::FORWARD;
        assert_eq!(collapse_moves(&[f, f, f, f]), vec![SailAction::Forward { n: 4 }]);
        assert!(collapse_moves(&[]).is_empty());
        let mixed = [f, SailAction::Left, f, f];
        assert_eq!(
            collapse_moves(&mixed),
            vec![SailAction::Forward { n: 1 }, SailAction::Left, SailAction::Forward { n: 2 }]
        );
        assert_eq!(expand_moves(&collapse_moves(&mixed)), mixed.to_vec());
    }

    #[test]
    fn start_orientation_modes() {
        assert_eq!(
            resolve_start_orientation(StartMode::Abs, (0, 0), &[(0, 0), (1, 0)])
                .unwrap()
                .orientation,
            Orientation::N
        );
        assert_eq!(
            resolve_start_orientation(StartMode::Rel, (0, 0), &[(0, 0), (1, 0)])
                .unwrap()
                .orientation,
            Orientation::S
        );
        assert!(matches!(
            resolve_start_orientation(StartMode::Rel, (0, 0), &[(0, 0)]),
            Err(Error::DegenerateRoute)
        ));
    }
}
