//! The three SCONE-style tabletop domains: Alchemy beakers, Scene people and
//! Tangrams figures.
//!
//! Every domain exposes the same surface: a pure `transition`, a rule-based
//! `valid_actions`, a fixed-width `percept`, and the contextual action
//! embedding used by both base models. Arguments are 1-based, matching the
//! way instructions refer to positions.

pub mod alchemy;
pub mod scene;
pub mod synth;
pub mod tangrams;
pub mod templates;

use serde::{Deserialize, Serialize};

use crate::error::ActionError;
use crate::world::{Domain, WorldState};

pub use alchemy::AlchemyState;
pub use scene::{Person, SceneState};
pub use tangrams::TangramsState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    #[serde(rename = "r")]
    Red,
    #[serde(rename = "o")]
    Orange,
    #[serde(rename = "y")]
    Yellow,
    #[serde(rename = "g")]
    Green,
    #[serde(rename = "b")]
    Blue,
    #[serde(rename = "p")]
    Purple,
    #[serde(rename = "n")]
    Brown,
    #[serde(rename = "w")]
    White,
}

impl Color {
    /// The Scene palette.
    pub const ALL: [Color; 8] = [
        Color::Red,
        Color::Orange,
        Color::Yellow,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Brown,
        Color::White,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> char {
        match self {
            Color::Red => 'r',
            Color::Orange => 'o',
            Color::Yellow => 'y',
            Color::Green => 'g',
            Color::Blue => 'b',
            Color::Purple => 'p',
            Color::Brown => 'n',
            Color::White => 'w',
        }
    }

    pub fn from_code(c: char) -> Option<Color> {
        Color::ALL.into_iter().find(|col| col.code() == c)
    }

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Brown => "brown",
            Color::White => "white",
        }
    }

    pub fn from_word(w: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|col| col.word() == w)
    }
}

/// Tangram figure identifier, `A`..`H` on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape(pub u8);

impl Shape {
    pub const COUNT: usize = 8;
    const NAMES: [&'static str; Shape::COUNT] =
        ["cat", "dog", "boat", "house", "tree", "bird", "star", "fish"];

    pub fn all() -> impl Iterator<Item = Shape> {
        (0..Shape::COUNT as u8).map(Shape)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }

    pub fn from_letter(c: char) -> Option<Shape> {
        let c = c.to_ascii_uppercase();
        if c.is_ascii_uppercase() && ((c as u8 - b'A') as usize) < Shape::COUNT {
            Some(Shape(c as u8 - b'A'))
        } else {
            None
        }
    }

    pub fn word(self) -> &'static str {
        Shape::NAMES[self.index()]
    }

    pub fn from_word(w: &str) -> Option<Shape> {
        Shape::NAMES
            .iter()
            .position(|n| *n == w)
            .map(|i| Shape(i as u8))
    }
}

impl Serialize for Shape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.letter().to_string())
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Shape::from_letter(c)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown shape {s:?}"))),
            _ => Err(serde::de::Error::custom(format!("unknown shape {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "args", rename_all = "snake_case")]
pub enum SconeAction {
    Mix { i: usize },
    Pour { i: usize, j: usize },
    Drain { a: usize, i: usize },
    Enter { c: Color, i: usize },
    Exit { i: usize },
    Move { i: usize, j: usize },
    Switch { i: usize, j: usize },
    TakeHat { i: usize, j: usize },
    Remove { i: usize },
    Swap { i: usize, j: usize },
    Insert { i: usize, s: Shape },
}

impl SconeAction {
    pub fn domain(&self) -> Domain {
        use SconeAction::*;
        match self {
            Mix { .. } | Pour { .. } | Drain { .. } => Domain::Alchemy,
            Enter { .. } | Exit { .. } | Move { .. } | Switch { .. } | TakeHat { .. } => {
                Domain::Scene
            }
            Remove { .. } | Swap { .. } | Insert { .. } => Domain::Tangrams,
        }
    }

    /// Index of the action type within its domain's type factor.
    pub fn type_index(&self) -> usize {
        use SconeAction::*;
        match self {
            Mix { .. } | Enter { .. } | Remove { .. } => 0,
            Pour { .. } | Exit { .. } | Swap { .. } => 1,
            Drain { .. } | Move { .. } | Insert { .. } => 2,
            Switch { .. } => 3,
            TakeHat { .. } => 4,
        }
    }

    /// `(factor, value)` pairs naming the factored components of the action.
    /// Factor 0 is always the action type; the remaining factors are the
    /// domain's argument slots (see [`FactorLayout`]).
    pub fn factor_entries(&self) -> Vec<(usize, usize)> {
        use SconeAction::*;
        let t = (0, self.type_index());
        match *self {
            Mix { i } => vec![t, (1, i - 1)],
            Pour { i, j } => vec![t, (1, i - 1), (2, j - 1)],
            Drain { a, i } => vec![t, (1, i - 1), (3, a - 1)],
            Enter { c, i } => vec![t, (1, c.index()), (2, i - 1)],
            Exit { i } => vec![t, (2, i - 1)],
            Move { i, j } | Switch { i, j } | TakeHat { i, j } => vec![t, (2, i - 1), (3, j - 1)],
            Remove { i } => vec![t, (1, i - 1)],
            Swap { i, j } => vec![t, (1, i - 1), (2, j - 1)],
            Insert { i, s } => vec![t, (1, i - 1), (3, s.index())],
        }
    }
}

/// Sizes of the factors a SCONE action decomposes into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorLayout {
    pub names: Vec<&'static str>,
    pub sizes: Vec<usize>,
}

impl FactorLayout {
    pub fn for_domain(domain: Domain) -> FactorLayout {
        let (names, sizes) = match domain {
            Domain::Alchemy => (
                vec!["type", "i", "j", "a"],
                vec![3, alchemy::BEAKERS, alchemy::BEAKERS, alchemy::CAPACITY],
            ),
            Domain::Scene => (
                vec!["type", "c", "i", "j"],
                vec![5, Color::ALL.len(), scene::POSITIONS, scene::POSITIONS],
            ),
            Domain::Tangrams => (
                vec!["type", "i", "j", "s"],
                vec![3, tangrams::SLOTS, tangrams::SLOTS, Shape::COUNT],
            ),
            Domain::Sail => panic!("SAIL actions are not factored"),
        };
        FactorLayout { names, sizes }
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sizes
            .iter()
            .map(|s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }
}

/// Every action over the full argument grid of a domain, in canonical order.
pub fn action_grid(domain: Domain) -> Vec<SconeAction> {
    match domain {
        Domain::Alchemy => alchemy::grid(),
        Domain::Scene => scene::grid(),
        Domain::Tangrams => tangrams::grid(),
        Domain::Sail => Vec::new(),
    }
}

pub fn transition(state: &WorldState, action: &SconeAction) -> Result<WorldState, ActionError> {
    match state {
        WorldState::Alchemy(s) => s.apply(action).map(WorldState::Alchemy),
        WorldState::Scene(s) => s.apply(action).map(WorldState::Scene),
        WorldState::Tangrams(s) => s.apply(action).map(WorldState::Tangrams),
        WorldState::Sail(_) => Err(ActionError::DomainMismatch),
    }
}

/// Actions for which [`transition`] succeeds, in canonical grid order.
pub fn valid_actions(state: &WorldState) -> Vec<SconeAction> {
    match state {
        WorldState::Alchemy(s) => s.valid_actions(),
        WorldState::Scene(s) => s.valid_actions(),
        WorldState::Tangrams(s) => s.valid_actions(),
        WorldState::Sail(_) => Vec::new(),
    }
}

pub fn percept(state: &WorldState) -> Vec<f64> {
    match state {
        WorldState::Alchemy(s) => s.percept(),
        WorldState::Scene(s) => s.percept(),
        WorldState::Tangrams(s) => s.percept(),
        WorldState::Sail(_) => panic!("use sail::percept for SAIL states"),
    }
}

pub fn percept_dim(domain: Domain) -> usize {
    match domain {
        Domain::Alchemy => alchemy::PERCEPT_DIM,
        Domain::Scene => scene::PERCEPT_DIM,
        Domain::Tangrams => tangrams::PERCEPT_DIM,
        Domain::Sail => panic!("SAIL percept width depends on the map schema"),
    }
}

/// Contextual embedding of `action` in `state`: the world elements the
/// action touches (contents of the beakers, neighbouring people, removal
/// recency of the inserted shape). Tangrams history lives inside the state.
pub fn contextual_embedding(state: &WorldState, action: &SconeAction) -> Vec<f64> {
    match state {
        WorldState::Alchemy(s) => s.contextual_embedding(action),
        WorldState::Scene(s) => s.contextual_embedding(action),
        WorldState::Tangrams(s) => s.contextual_embedding(action),
        WorldState::Sail(_) => panic!("SAIL actions have no contextual embedding"),
    }
}

pub fn contextual_dim(domain: Domain) -> usize {
    match domain {
        Domain::Alchemy => alchemy::CONTEXT_DIM,
        Domain::Scene => scene::CONTEXT_DIM,
        Domain::Tangrams => tangrams::CONTEXT_DIM,
        Domain::Sail => 0,
    }
}

/// Width of [`action_features`]: factor one-hots followed by the
/// contextual embedding.
pub fn action_feature_dim(domain: Domain) -> usize {
    FactorLayout::for_domain(domain).total() + contextual_dim(domain)
}

/// One-hot type/argument blocks concatenated with the contextual embedding.
pub fn action_features(state: &WorldState, action: &SconeAction) -> Vec<f64> {
    let layout = FactorLayout::for_domain(action.domain());
    let offsets = layout.offsets();
    let mut v = vec![0.0; layout.total()];
    for (f, k) in action.factor_entries() {
        v[offsets[f] + k] = 1.0;
    }
    v.extend(contextual_embedding(state, action));
    v
}

pub(crate) fn one_hot_into(out: &mut [f64], index: usize) {
    out[index] = 1.0;
}
