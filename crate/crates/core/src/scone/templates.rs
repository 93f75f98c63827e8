//! Surface templates for synthetic SCONE instructions and their inverse
//! parser.
//!
//! A template is a word pattern with typed holes, one per action argument.
//! Each hole is filled by a referring expression whose literal meaning is a
//! set of argument values in the current state. Positional expressions
//! ("the third beaker", "at spot two") name one value; descriptive ones
//! ("the red beaker", "next to the person in blue") may fit several, which
//! is where ambiguity comes from.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use super::alchemy::{self, AlchemyState, CAPACITY};
use super::scene::{SceneState, POSITIONS};
use super::tangrams::{TangramsState, SLOTS};
use super::{transition, Color, SconeAction};
use crate::world::{Domain, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Beaker,
    Amount,
    Shirt,
    Person,
    Place,
    Figure,
    Shape,
    FigPlace,
}

/// A referring expression and its literal denotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ref {
    pub words: Vec<String>,
    pub den: Vec<usize>,
    /// Positional or otherwise unique by construction.
    pub specific: bool,
}

pub struct Template {
    pub pattern: &'static str,
    pub kinds: &'static [Kind],
    build: fn(&[usize]) -> Option<SconeAction>,
}

use Kind::*;

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];
const NUMBERS: [&str; 10] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

fn unordered(v: &[usize], f: fn(usize, usize) -> SconeAction) -> Option<SconeAction> {
    (v[0] != v[1]).then(|| f(v[0].min(v[1]), v[0].max(v[1])))
}

static MIX: [Template; 3] = [
    Template { pattern: "mix {0}", kinds: &[Beaker], build: |v| Some(SconeAction::Mix { i: v[0] }) },
    Template { pattern: "stir {0}", kinds: &[Beaker], build: |v| Some(SconeAction::Mix { i: v[0] }) },
    Template {
        pattern: "mix the contents of {0}",
        kinds: &[Beaker],
        build: |v| Some(SconeAction::Mix { i: v[0] }),
    },
];
static POUR: [Template; 4] = [
    Template { pattern: "pour {0} into {1}", kinds: &[Beaker, Beaker], build: |v| Some(SconeAction::Pour { i: v[0], j: v[1] }) },
    Template { pattern: "empty {0} into {1}", kinds: &[Beaker, Beaker], build: |v| Some(SconeAction::Pour { i: v[0], j: v[1] }) },
    Template { pattern: "add {0} to {1}", kinds: &[Beaker, Beaker], build: |v| Some(SconeAction::Pour { i: v[0], j: v[1] }) },
    Template { pattern: "transfer {0} to {1}", kinds: &[Beaker, Beaker], build: |v| Some(SconeAction::Pour { i: v[0], j: v[1] }) },
];
static DRAIN: [Template; 3] = [
    Template { pattern: "drain {0} from {1}", kinds: &[Amount, Beaker], build: |v| Some(SconeAction::Drain { a: v[0], i: v[1] }) },
    Template { pattern: "throw out {0} of {1}", kinds: &[Amount, Beaker], build: |v| Some(SconeAction::Drain { a: v[0], i: v[1] }) },
    Template { pattern: "pour out {0} from {1}", kinds: &[Amount, Beaker], build: |v| Some(SconeAction::Drain { a: v[0], i: v[1] }) },
];
static ENTER: [Template; 3] = [
    Template { pattern: "a person in {0} appears {1}", kinds: &[Shirt, Place], build: |v| Some(SconeAction::Enter { c: Color::ALL[v[0]], i: v[1] }) },
    Template { pattern: "someone in {0} enters {1}", kinds: &[Shirt, Place], build: |v| Some(SconeAction::Enter { c: Color::ALL[v[0]], i: v[1] }) },
    Template { pattern: "a new person wearing {0} walks in {1}", kinds: &[Shirt, Place], build: |v| Some(SconeAction::Enter { c: Color::ALL[v[0]], i: v[1] }) },
];
static EXIT: [Template; 3] = [
    Template { pattern: "{0} leaves", kinds: &[Person], build: |v| Some(SconeAction::Exit { i: v[0] }) },
    Template { pattern: "{0} exits", kinds: &[Person], build: |v| Some(SconeAction::Exit { i: v[0] }) },
    Template { pattern: "{0} walks away", kinds: &[Person], build: |v| Some(SconeAction::Exit { i: v[0] }) },
];
static MOVE: [Template; 3] = [
    Template { pattern: "{0} moves {1}", kinds: &[Person, Place], build: |v| Some(SconeAction::Move { i: v[0], j: v[1] }) },
    Template { pattern: "{0} walks over {1}", kinds: &[Person, Place], build: |v| Some(SconeAction::Move { i: v[0], j: v[1] }) },
    Template { pattern: "{0} goes {1}", kinds: &[Person, Place], build: |v| Some(SconeAction::Move { i: v[0], j: v[1] }) },
];
static SWITCH: [Template; 3] = [
    Template { pattern: "{0} and {1} switch places", kinds: &[Person, Person], build: |v| unordered(v, |i, j| SconeAction::Switch { i, j }) },
    Template { pattern: "{0} trades places with {1}", kinds: &[Person, Person], build: |v| unordered(v, |i, j| SconeAction::Switch { i, j }) },
    Template { pattern: "swap {0} and {1}", kinds: &[Person, Person], build: |v| unordered(v, |i, j| SconeAction::Switch { i, j }) },
];
static TAKE_HAT: [Template; 3] = [
    Template { pattern: "{0} gives the hat to {1}", kinds: &[Person, Person], build: |v| Some(SconeAction::TakeHat { i: v[0], j: v[1] }) },
    Template { pattern: "{0} passes the hat to {1}", kinds: &[Person, Person], build: |v| Some(SconeAction::TakeHat { i: v[0], j: v[1] }) },
    Template { pattern: "{1} takes the hat from {0}", kinds: &[Person, Person], build: |v| Some(SconeAction::TakeHat { i: v[0], j: v[1] }) },
];
static REMOVE: [Template; 3] = [
    Template { pattern: "remove {0}", kinds: &[Figure], build: |v| Some(SconeAction::Remove { i: v[0] }) },
    Template { pattern: "delete {0}", kinds: &[Figure], build: |v| Some(SconeAction::Remove { i: v[0] }) },
    Template { pattern: "take away {0}", kinds: &[Figure], build: |v| Some(SconeAction::Remove { i: v[0] }) },
];
static SWAP: [Template; 3] = [
    Template { pattern: "swap {0} and {1}", kinds: &[Figure, Figure], build: |v| unordered(v, |i, j| SconeAction::Swap { i, j }) },
    Template { pattern: "switch {0} with {1}", kinds: &[Figure, Figure], build: |v| unordered(v, |i, j| SconeAction::Swap { i, j }) },
    Template { pattern: "exchange {0} and {1}", kinds: &[Figure, Figure], build: |v| unordered(v, |i, j| SconeAction::Swap { i, j }) },
];
static INSERT: [Template; 3] = [
    Template { pattern: "put {1} back {0}", kinds: &[FigPlace, Shape], build: |v| Some(SconeAction::Insert { i: v[0], s: super::Shape(v[1] as u8) }) },
    Template { pattern: "bring {1} back {0}", kinds: &[FigPlace, Shape], build: |v| Some(SconeAction::Insert { i: v[0], s: super::Shape(v[1] as u8) }) },
    Template { pattern: "add {1} back {0}", kinds: &[FigPlace, Shape], build: |v| Some(SconeAction::Insert { i: v[0], s: super::Shape(v[1] as u8) }) },
];

/// Templates for one action type, indexed like [`SconeAction::type_index`].
pub fn templates(domain: Domain, action_type: usize) -> &'static [Template] {
    match (domain, action_type) {
        (Domain::Alchemy, 0) => &MIX,
        (Domain::Alchemy, 1) => &POUR,
        (Domain::Alchemy, 2) => &DRAIN,
        (Domain::Scene, 0) => &ENTER,
        (Domain::Scene, 1) => &EXIT,
        (Domain::Scene, 2) => &MOVE,
        (Domain::Scene, 3) => &SWITCH,
        (Domain::Scene, 4) => &TAKE_HAT,
        (Domain::Tangrams, 0) => &REMOVE,
        (Domain::Tangrams, 1) => &SWAP,
        (Domain::Tangrams, 2) => &INSERT,
        _ => &[],
    }
}

fn type_count(domain: Domain) -> usize {
    match domain {
        Domain::Alchemy | Domain::Tangrams => 3,
        Domain::Scene => 5,
        Domain::Sail => 0,
    }
}

/// Argument values in template slot order.
pub fn args(action: &SconeAction) -> Vec<usize> {
    use SconeAction::*;
    match *action {
        Mix { i } | Exit { i } | Remove { i } => vec![i],
        Pour { i, j } | Move { i, j } | Switch { i, j } | TakeHat { i, j } | Swap { i, j } => {
            vec![i, j]
        }
        Drain { a, i } => vec![a, i],
        Enter { c, i } => vec![c.index(), i],
        Insert { i, s } => vec![i, s.index()],
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn r(text: String, den: Vec<usize>, specific: bool) -> Ref {
    Ref {
        words: words(&text),
        den,
        specific,
    }
}

fn beaker_refs(s: &AlchemyState) -> Vec<Ref> {
    let n = alchemy::BEAKERS;
    let mut out = Vec::new();
    for k in 1..=n {
        out.push(r(format!("the {} beaker", ORDINALS[k - 1]), vec![k], true));
        out.push(r(format!("beaker {}", NUMBERS[k - 1]), vec![k], true));
    }
    for c in alchemy::COLORS {
        let den = (1..=n).filter(|&k| s.uniform_color(k) == Some(c)).collect();
        out.push(r(format!("the {} beaker", c.word()), den, false));
        let den = (1..=n).filter(|&k| s.beaker(k).last() == Some(&c)).collect();
        out.push(r(format!("the beaker with {} on top", c.word()), den, false));
    }
    out.push(r("the empty beaker".into(), (1..=n).filter(|&k| s.beaker(k).is_empty()).collect(), false));
    out.push(r(
        "the full beaker".into(),
        (1..=n).filter(|&k| s.beaker(k).len() == CAPACITY).collect(),
        false,
    ));
    out
}

fn amount_refs() -> Vec<Ref> {
    (1..=CAPACITY)
        .map(|a| {
            let unit = if a == 1 { "unit" } else { "units" };
            r(format!("{} {unit}", NUMBERS[a - 1]), vec![a], true)
        })
        .collect()
}

fn shirt_refs() -> Vec<Ref> {
    Color::ALL
        .iter()
        .map(|c| r(c.word().to_string(), vec![c.index()], true))
        .collect()
}

fn person_refs(s: &SceneState) -> Vec<Ref> {
    let who = |f: &dyn Fn(&super::Person) -> bool| -> Vec<usize> {
        (1..=POSITIONS).filter(|&k| s.at(k).is_some_and(f)).collect()
    };
    let mut out = Vec::new();
    for k in 1..=POSITIONS {
        out.push(r(format!("the person in spot {}", NUMBERS[k - 1]), vec![k], true));
    }
    for c in Color::ALL {
        out.push(r(format!("the person in {}", c.word()), who(&|p| p.shirt == c), false));
        out.push(r(
            format!("the person in {} without a hat", c.word()),
            who(&|p| p.shirt == c && p.hat.is_none()),
            false,
        ));
        out.push(r(format!("the person with a {} hat", c.word()), who(&|p| p.hat == Some(c)), false));
        for h in Color::ALL {
            out.push(r(
                format!("the person in {} with a {} hat", c.word(), h.word()),
                who(&|p| p.shirt == c && p.hat == Some(h)),
                false,
            ));
        }
    }
    out
}

fn place_refs(s: &SceneState) -> Vec<Ref> {
    let mut out = Vec::new();
    for k in 1..=POSITIONS {
        out.push(r(format!("at spot {}", NUMBERS[k - 1]), vec![k], true));
    }
    let n = POSITIONS;
    for p in person_refs(s) {
        let name = p.words.join(" ");
        let left: Vec<usize> = p.den.iter().filter(|&&x| x > 1).map(|x| x - 1).collect();
        let right: Vec<usize> = p.den.iter().filter(|&&x| x < n).map(|x| x + 1).collect();
        let mut both: Vec<usize> = left.iter().chain(&right).copied().collect();
        both.sort_unstable();
        both.dedup();
        out.push(r(format!("to the left of {name}"), left, p.specific));
        out.push(r(format!("to the right of {name}"), right, p.specific));
        out.push(r(format!("next to {name}"), both, false));
    }
    out.push(Ref {
        words: Vec::new(),
        den: (1..=n).collect(),
        specific: false,
    });
    out
}

fn figure_refs(s: &TangramsState) -> Vec<Ref> {
    let n = s.figures.len();
    let pos = |sh: super::Shape| s.figures.iter().position(|f| *f == sh).map(|p| p + 1);
    let mut out = Vec::new();
    for k in 1..=SLOTS {
        out.push(r(format!("the {} figure", ORDINALS[k - 1]), vec![k], true));
    }
    out.push(r("the last figure".into(), (n >= 1).then_some(n).into_iter().collect(), true));
    for sh in super::Shape::all() {
        let p: Vec<usize> = pos(sh).into_iter().collect();
        out.push(r(format!("the {}", sh.word()), p.clone(), true));
        let mut near: Vec<usize> = p
            .iter()
            .flat_map(|&x| [x.wrapping_sub(1), x + 1])
            .filter(|&x| (1..=n).contains(&x))
            .collect();
        near.sort_unstable();
        out.push(r(format!("the figure next to the {}", sh.word()), near, false));
    }
    out
}

fn shape_refs(s: &TangramsState) -> Vec<Ref> {
    let mut out: Vec<Ref> = super::Shape::all()
        .map(|sh| r(format!("the {}", sh.word()), vec![sh.index()], true))
        .collect();
    out.push(r(
        "it".into(),
        s.removed_shapes().iter().map(|sh| sh.index()).collect(),
        false,
    ));
    out
}

fn fig_place_refs(s: &TangramsState) -> Vec<Ref> {
    let n = s.figures.len();
    let mut out = Vec::new();
    for k in 1..=SLOTS {
        out.push(r(format!("at position {}", NUMBERS[k - 1]), vec![k], true));
    }
    out.push(r("at the start".into(), vec![1], true));
    out.push(r("at the end".into(), vec![n + 1], true));
    for sh in super::Shape::all() {
        let p = s.figures.iter().position(|f| *f == sh).map(|p| p + 1);
        out.push(r(format!("before the {}", sh.word()), p.into_iter().collect(), true));
        out.push(r(format!("after the {}", sh.word()), p.map(|x| x + 1).into_iter().collect(), true));
        out.push(r(
            format!("next to the {}", sh.word()),
            p.map(|x| vec![x, x + 1]).unwrap_or_default(),
            false,
        ));
    }
    out.push(Ref {
        words: Vec::new(),
        den: (1..=n + 1).collect(),
        specific: false,
    });
    out
}

/// Every referring expression of `kind` in `state`.
pub fn refs(kind: Kind, state: &WorldState) -> Vec<Ref> {
    match (kind, state) {
        (Beaker, WorldState::Alchemy(s)) => beaker_refs(s),
        (Amount, _) => amount_refs(),
        (Shirt, _) => shirt_refs(),
        (Person, WorldState::Scene(s)) => person_refs(s),
        (Place, WorldState::Scene(s)) => place_refs(s),
        (Figure, WorldState::Tangrams(s)) => figure_refs(s),
        (Shape, WorldState::Tangrams(s)) => shape_refs(s),
        (FigPlace, WorldState::Tangrams(s)) => fig_place_refs(s),
        _ => Vec::new(),
    }
}

enum Elem {
    Word(&'static str),
    Hole(usize),
}

fn elems(pattern: &'static str) -> Vec<Elem> {
    pattern
        .split_whitespace()
        .map(|w| match w.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
            Some(k) => Elem::Hole(k.parse().expect("hole index")),
            None => Elem::Word(w),
        })
        .collect()
}

type Lexicon = HashMap<Kind, HashMap<Vec<String>, Vec<usize>>>;

fn match_elems(
    pat: &[Elem],
    toks: &[String],
    kinds: &[Kind],
    lex: &Lexicon,
    dens: &mut Vec<Option<Vec<usize>>>,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    match pat.first() {
        None => {
            if toks.is_empty() {
                out.push(dens.iter().map(|d| d.clone().expect("every hole filled")).collect());
            }
        }
        Some(Elem::Word(w)) => {
            if toks.first().is_some_and(|t| t == w) {
                match_elems(&pat[1..], &toks[1..], kinds, lex, dens, out);
            }
        }
        Some(Elem::Hole(k)) => {
            let table = &lex[&kinds[*k]];
            for end in 0..=toks.len() {
                if let Some(den) = table.get(&toks[..end]) {
                    dens[*k] = Some(den.clone());
                    match_elems(&pat[1..], &toks[end..], kinds, lex, dens, out);
                    dens[*k] = None;
                }
            }
        }
    }
}

fn product(dens: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for d in dens {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                d.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn executable(state: &WorldState, template: &Template, dens: &[Vec<usize>], out: &mut BTreeSet<SconeAction>) {
    for combo in product(dens) {
        if let Some(a) = (template.build)(&combo) {
            if transition(state, &a).is_ok() {
                out.insert(a);
            }
        }
    }
}

/// Literal meaning of a sentence: every valid action some template reading
/// of it denotes.
pub fn parse(state: &WorldState, tokens: &[String]) -> BTreeSet<SconeAction> {
    let domain = state.domain();
    let mut lex: Lexicon = HashMap::new();
    let mut out = BTreeSet::new();
    for ty in 0..type_count(domain) {
        for t in templates(domain, ty) {
            for k in t.kinds {
                lex.entry(*k).or_insert_with(|| {
                    let mut m: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
                    for re in refs(*k, state) {
                        let e = m.entry(re.words).or_default();
                        e.extend(re.den);
                        e.sort_unstable();
                        e.dedup();
                    }
                    m
                });
            }
            let mut matches = Vec::new();
            let mut dens = vec![None; t.kinds.len()];
            match_elems(&elems(t.pattern), tokens, t.kinds, &lex, &mut dens, &mut matches);
            for m in matches {
                executable(state, t, &m, &mut out);
            }
        }
    }
    out
}

/// One way of saying an action: the filled template and the valid actions
/// it literally denotes.
#[derive(Clone, Debug)]
pub struct Realization {
    pub words: Vec<String>,
    pub specific: bool,
    pub denotation: BTreeSet<SconeAction>,
}

fn fill(pattern: &'static str, fillers: &[&Ref]) -> Vec<String> {
    let mut out = Vec::new();
    for e in elems(pattern) {
        match e {
            Elem::Word(w) => out.push(w.to_string()),
            Elem::Hole(k) => out.extend(fillers[k].words.iter().cloned()),
        }
    }
    out
}

/// Every realization of `action` in `state` whose referring expressions
/// each include the action's own argument.
pub fn realizations(state: &WorldState, action: &SconeAction) -> Vec<Realization> {
    let domain = state.domain();
    let values = args(action);
    let mut out = Vec::new();
    for t in templates(domain, action.type_index()) {
        let options: Vec<Vec<Ref>> = t
            .kinds
            .iter()
            .zip(&values)
            .map(|(k, v)| refs(*k, state).into_iter().filter(|re| re.den.contains(v)).collect())
            .collect();
        if options.iter().any(Vec::is_empty) {
            continue;
        }
        let ranges: Vec<Vec<usize>> = options.iter().map(|o| (0..o.len()).collect()).collect();
        for idx in product(&ranges) {
            let chosen: Vec<&Ref> = idx.iter().zip(&options).map(|(i, o)| &o[*i]).collect();
            let dens: Vec<Vec<usize>> = chosen.iter().map(|re| re.den.clone()).collect();
            let mut denotation = BTreeSet::new();
            executable(state, t, &dens, &mut denotation);
            out.push(Realization {
                words: fill(t.pattern, &chosen),
                specific: chosen.iter().all(|re| re.specific),
                denotation,
            });
        }
    }
    out
}


/// Draw a sentence for `action`. With probability `ambiguity` an
/// under-specified realization is chosen, weighting each by
/// `|denotation|^-rationality`; otherwise a specific one, uniformly over
/// templates and then over expressions.
pub fn describe<R: Rng>(
    state: &WorldState,
    action: &SconeAction,
    ambiguity: f64,
    rationality: f64,
    rng: &mut R,
) -> Vec<String> {
    let all = realizations(state, action);
    if ambiguity > 0.0 && rng.gen::<f64>() < ambiguity {
        let loose: Vec<&Realization> = all.iter().filter(|r| !r.specific).collect();
        if !loose.is_empty() {
            let weights: Vec<f64> = loose
                .iter()
                .map(|r| (r.denotation.len().max(1) as f64).powf(-rationality))
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (r, w) in loose.iter().zip(&weights) {
                if u < *w {
                    return r.words.clone();
                }
                u -= w;
            }
            return loose.last().expect("non-empty").words.clone();
        }
    }
    let ts = templates(state.domain(), action.type_index());
    let t = &ts[rng.gen_range(0..ts.len())];
    let values = args(action);
    let chosen: Vec<Ref> = t
        .kinds
        .iter()
        .zip(&values)
        .map(|(k, v)| {
            let opts: Vec<Ref> = refs(*k, state)
                .into_iter()
                .filter(|re| re.specific && re.den == [*v])
                .collect();
            opts[rng.gen_range(0..opts.len())].clone()
        })
        .collect();
    fill(t.pattern, &chosen.iter().collect::<Vec<_>>())
}
