//! Domain-agnostic task episodes: a start state, K instruction sentences and
//! the action segment each sentence describes, with the states recorded
//! after every action.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ActionError, Error, Result};
use crate::sail::{self, Orientation, Pose, SailAction, SailMap, SailState, StartMode};
use crate::scone::{self, AlchemyState, Color, SceneState, SconeAction, Shape, TangramsState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Alchemy,
    Scene,
    Tangrams,
    Sail,
}

impl Domain {
    pub const SCONE: [Domain; 3] = [Domain::Alchemy, Domain::Scene, Domain::Tangrams];

    pub fn is_scone(self) -> bool {
        self != Domain::Sail
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Alchemy => "alchemy",
            Domain::Scene => "scene",
            Domain::Tangrams => "tangrams",
            Domain::Sail => "sail",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Domain> {
        match s {
            "alchemy" => Ok(Domain::Alchemy),
            "scene" => Ok(Domain::Scene),
            "tangrams" => Ok(Domain::Tangrams),
            "sail" => Ok(Domain::Sail),
            _ => Err(Error::Config(format!("unknown domain {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum WorldState {
    Alchemy(AlchemyState),
    Scene(SceneState),
    Tangrams(TangramsState),
    Sail(SailState),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Scone(SconeAction),
    Sail(SailAction),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Scone(a) => write!(f, "{a:?}"),
            Action::Sail(a) => write!(f, "{a}"),
        }
    }
}

/// SAIL maps by name; SCONE data needs none.
pub type MapLibrary = BTreeMap<String, Arc<SailMap>>;

impl WorldState {
    pub fn domain(&self) -> Domain {
        match self {
            WorldState::Alchemy(_) => Domain::Alchemy,
            WorldState::Scene(_) => Domain::Scene,
            WorldState::Tangrams(_) => Domain::Tangrams,
            WorldState::Sail(_) => Domain::Sail,
        }
    }

    pub fn apply(&self, action: &Action) -> Result<WorldState, ActionError> {
        match (self, action) {
            (WorldState::Sail(s), Action::Sail(a)) => s.apply(a).map(WorldState::Sail),
            (WorldState::Sail(_), _) | (_, Action::Sail(_)) => Err(ActionError::DomainMismatch),
            (state, Action::Scone(a)) => scone::transition(state, a),
        }
    }

    pub fn percept(&self) -> Vec<f64> {
        match self {
            WorldState::Sail(s) => sail::percept(&s.map, s.pose),
            other => scone::percept(other),
        }
    }

    pub fn percept_dim(domain: Domain) -> usize {
        match domain {
            Domain::Sail => sail::PERCEPT_DIM,
            d => scone::percept_dim(d),
        }
    }

    pub fn to_json(&self) -> Value {
        let v = match self {
            WorldState::Alchemy(s) => serde_json::to_value(s),
            WorldState::Scene(s) => serde_json::to_value(s),
            WorldState::Tangrams(s) => serde_json::to_value(s),
            WorldState::Sail(s) => {
                let mut v = serde_json::to_value(s.pose).expect("pose");
                v["map"] = Value::String(s.map.name.clone());
                Ok(v)
            }
        };
        v.expect("state serialization is infallible")
    }

    pub fn from_json(domain: Domain, v: &Value, maps: &MapLibrary) -> Result<WorldState> {
        let bad = |e: String| Error::Parse { line: 0, message: e };
        let state = match domain {
            Domain::Alchemy => {
                let s: AlchemyState = serde_json::from_value(v.clone())?;
                s.check().map_err(bad)?;
                WorldState::Alchemy(s)
            }
            Domain::Scene => {
                let s: SceneState = serde_json::from_value(v.clone())?;
                s.check().map_err(bad)?;
                WorldState::Scene(s)
            }
            Domain::Tangrams => {
                let s: TangramsState = serde_json::from_value(v.clone())?;
                s.check().map_err(bad)?;
                WorldState::Tangrams(s)
            }
            Domain::Sail => {
                let pose: Pose = serde_json::from_value(v.clone())?;
                let name = v
                    .get("map")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("SAIL state needs a map name".into()))?;
                let map = maps
                    .get(name)
                    .ok_or_else(|| bad(format!("unknown map {name:?}")))?;
                if !map.nodes.contains(&pose.node()) {
                    return Err(bad(format!("pose {:?} is off map {name}", pose.node())));
                }
                WorldState::Sail(SailState {
                    map: Arc::clone(map),
                    pose,
                })
            }
        };
        Ok(state)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub sentence: Vec<String>,
    pub actions: Vec<Action>,
    /// One recorded state per action.
    pub states_after: Vec<WorldState>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub domain: Domain,
    pub split: Split,
    pub initial_state: WorldState,
    pub segments: Vec<Segment>,
    /// SAIL only: the recorded start heading is not observable to a
    /// listener and must be resolved with a [`StartMode`].
    pub start_undetermined: bool,
}

impl Instance {
    pub fn actions(&self) -> Vec<Action> {
        self.segments
            .iter()
            .flat_map(|s| s.actions.iter().copied())
            .collect()
    }

    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.segments.iter().map(|s| s.sentence.clone()).collect()
    }

    pub fn final_state(&self) -> &WorldState {
        self.segments
            .iter()
            .rev()
            .find_map(|s| s.states_after.last())
            .unwrap_or(&self.initial_state)
    }

    /// State each segment starts from.
    pub fn segment_start(&self, k: usize) -> &WorldState {
        if k == 0 {
            &self.initial_state
        } else {
            self.segments[k - 1]
                .states_after
                .last()
                .expect("segments are non-empty")
        }
    }

    /// States seen before each action of segment `k`.
    pub fn states_before(&self, k: usize) -> Vec<WorldState> {
        let seg = &self.segments[k];
        let mut out = Vec::with_capacity(seg.actions.len());
        out.push(self.segment_start(k).clone());
        out.extend(seg.states_after[..seg.actions.len() - 1].iter().cloned());
        out
    }
}

/// Replay `actions` from `state`, returning every successor state.
pub fn apply_actions(state: &WorldState, actions: &[Action]) -> Result<Vec<WorldState>> {
    let mut out = Vec::with_capacity(actions.len());
    let mut cur = state.clone();
    for (index, a) in actions.iter().enumerate() {
        cur = cur
            .apply(a)
            .map_err(|reason| Error::InvalidAction { index, reason })?;
        out.push(cur.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoSegments,
    EmptySegment { segment: usize },
    StateCountMismatch { segment: usize },
    SconeSegmentLength { segment: usize, actions: usize },
    DomainMismatch { segment: usize, step: usize },
    InvalidAction { segment: usize, step: usize, reason: ActionError },
    ReplayMismatch { segment: usize, step: usize },
    Vocabulary { segment: usize, token: String },
    EmptySentence { segment: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut v = Vec::new();
    if inst.segments.is_empty() {
        v.push(Violation::NoSegments);
    }
    if inst.initial_state.domain() != inst.domain {
        v.push(Violation::DomainMismatch { segment: 0, step: 0 });
    }
    let mut cur = Some(inst.initial_state.clone());
    for (k, seg) in inst.segments.iter().enumerate() {
        if seg.sentence.is_empty() {
            v.push(Violation::EmptySentence { segment: k });
        }
        for tok in &seg.sentence {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) || tok.to_lowercase() != *tok
            {
                v.push(Violation::Vocabulary {
                    segment: k,
                    token: tok.clone(),
                });
            }
        }
        if seg.actions.is_empty() {
            v.push(Violation::EmptySegment { segment: k });
        }
        if inst.domain.is_scone() && seg.actions.len() > 1 {
            v.push(Violation::SconeSegmentLength {
                segment: k,
                actions: seg.actions.len(),
            });
        }
        if seg.actions.len() != seg.states_after.len() {
            v.push(Violation::StateCountMismatch { segment: k });
        }
        for (t, (a, recorded)) in seg.actions.iter().zip(&seg.states_after).enumerate() {
            if recorded.domain() != inst.domain {
                v.push(Violation::DomainMismatch { segment: k, step: t });
            }
            let Some(state) = cur.take() else { break };
            match state.apply(a) {
                Ok(next) => {
                    if next != *recorded {
                        v.push(Violation::ReplayMismatch { segment: k, step: t });
                    }
                    cur = Some(next);
                }
                Err(reason) => v.push(Violation::InvalidAction {
                    segment: k,
                    step: t,
                    reason,
                }),
            }
        }
    }
    ValidationReport { violations: v }
}

/// Lowercase, split on whitespace, detach punctuation into its own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() && ch != '\'' {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SegmentWire {
    sentence: Vec<String>,
    actions: Vec<Action>,
    states_after: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
struct InstanceWire {
    id: String,
    domain: Domain,
    split: Split,
    initial_state: Value,
    segments: Vec<SegmentWire>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    start_undetermined: bool,
}

impl Instance {
    pub fn to_json_line(&self) -> String {
        let wire = InstanceWire {
            id: self.id.clone(),
            domain: self.domain,
            split: self.split,
            initial_state: self.initial_state.to_json(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentWire {
                    sentence: s.sentence.clone(),
                    actions: s.actions.clone(),
                    states_after: s.states_after.iter().map(WorldState::to_json).collect(),
                })
                .collect(),
            start_undetermined: self.start_undetermined,
        };
        serde_json::to_string(&wire).expect("instance serialization is infallible")
    }

    pub fn from_json_line(line: &str, maps: &MapLibrary) -> Result<Instance> {
        let wire: InstanceWire = serde_json::from_str(line)?;
        let d = wire.domain;
        let segments = wire
            .segments
            .into_iter()
            .map(|s| {
                Ok(Segment {
                    sentence: s.sentence,
                    actions: s.actions,
                    states_after: s
                        .states_after
                        .iter()
                        .map(|v| WorldState::from_json(d, v, maps))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Instance {
            id: wire.id,
            domain: d,
            split: wire.split,
            initial_state: WorldState::from_json(d, &wire.initial_state, maps)?,
            segments,
            start_undetermined: wire.start_undetermined,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    SconeTsv,
    SailNative,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "scone_tsv" => Ok(Format::SconeTsv),
            "sail_native" => Ok(Format::SailNative),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

/// Read and validate a corpus. SAIL states refer to maps in `maps`.
pub fn load_instances(path: &Path, format: Format, maps: &MapLibrary) -> Result<Vec<Instance>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let insts = match format {
        Format::Jsonl => lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| {
                Instance::from_json_line(l, maps).map_err(|e| Error::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Format::SconeTsv => parse_scone_tsv(&lines)?,
        Format::SailNative => parse_sail_native(&lines, maps)?,
    };
    for inst in &insts {
        let report = validate_instance(inst);
        if !report.is_valid() {
            return Err(Error::Validation {
                id: inst.id.clone(),
                details: format!("{:?}", report.violations),
            });
        }
    }
    Ok(insts)
}

/// Canonical jsonl, one instance per line.
pub fn save_instances(insts: &[Instance], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for inst in insts {
        writeln!(f, "{}", inst.to_json_line())?;
    }
    f.flush()?;
    Ok(())
}

/// SCONE release style rows:
/// `id <TAB> state_0 <TAB> utterance_1 <TAB> state_1 ... utterance_K <TAB> state_K`.
///
/// States are space-separated `position:contents` cells. Seven cells is an
/// Alchemy row (`1:ggo 2:_`, bottom unit first), ten is Scene (`4:go`,
/// shirt then hat, `_` for none), five or fewer is Tangrams (`1:A`). The
/// action between consecutive states is recovered as the first valid action
/// (canonical order) that produces the next state.
fn parse_scone_tsv(lines: &[String]) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (k, raw) in lines.iter().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() < 4 || !cols.len().is_multiple_of(2) {
            return Err(err(format!("expected id, state and (utterance, state) pairs; got {} columns", cols.len())));
        }
        let initial = parse_scone_cells(cols[1]).map_err(&err)?;
        let domain = initial.domain();
        let mut cur = initial.clone();
        let mut segments = Vec::new();
        for pair in cols[2..].chunks(2) {
            let target = parse_scone_cells(pair[1]).map_err(&err)?;
            if target.domain() != domain {
                return Err(err("state shapes change within a row".into()));
            }
            let (action, next) = scone::valid_actions(&cur)
                .into_iter()
                .find_map(|a| {
                    let next = scone::transition(&cur, &a).ok()?;
                    same_scone_layout(&next, &target).then_some((a, next))
                })
                .ok_or_else(|| err(format!("no single action explains step {}", segments.len() + 1)))?;
            segments.push(Segment {
                sentence: tokenize(pair[0]),
                actions: vec![Action::Scone(action)],
                states_after: vec![next.clone()],
            });
            cur = next;
        }
        out.push(Instance {
            id: cols[0].to_string(),
            domain,
            split: split_for_id(cols[0]),
            initial_state: initial,
            segments,
            start_undetermined: false,
        });
    }
    Ok(out)
}

/// Tangrams rows carry no removal history, so only the visible layout is compared.
fn same_scone_layout(a: &WorldState, b: &WorldState) -> bool {
    match (a, b) {
        (WorldState::Tangrams(x), WorldState::Tangrams(y)) => x.figures == y.figures,
        _ => a == b,
    }
}

fn parse_scone_cells(text: &str) -> std::result::Result<WorldState, String> {
    let cells: Vec<(usize, &str)> = text
        .split_whitespace()
        .map(|c| {
            let (pos, body) = c.split_once(':').ok_or(format!("bad cell {c:?}"))?;
            let pos: usize = pos.parse().map_err(|_| format!("bad position in {c:?}"))?;
            Ok((pos, body))
        })
        .collect::<std::result::Result<_, String>>()?;
    for (k, (pos, _)) in cells.iter().enumerate() {
        if *pos != k + 1 {
            return Err(format!("cells out of order at {pos}"));
        }
    }
    let color = |ch: char| Color::from_code(ch).ok_or(format!("unknown color code {ch:?}"));
    match cells.len() {
        scone::alchemy::BEAKERS => {
            let mut s = AlchemyState::default();
            for (k, (_, body)) in cells.iter().enumerate() {
                if *body != "_" {
                    s.beakers[k] = body.chars().map(color).collect::<std::result::Result<_, _>>()?;
                }
            }
            s.check()?;
            Ok(WorldState::Alchemy(s))
        }
        scone::scene::POSITIONS => {
            let mut s = SceneState::default();
            for (k, (_, body)) in cells.iter().enumerate() {
                let chars: Vec<char> = body.chars().collect();
                if chars.len() != 2 {
                    return Err(format!("scene cell {body:?} needs shirt and hat"));
                }
                if chars[0] != '_' {
                    s.positions[k] = Some(scone::Person {
                        shirt: color(chars[0])?,
                        hat: if chars[1] == '_' { None } else { Some(color(chars[1])?) },
                    });
                }
            }
            Ok(WorldState::Scene(s))
        }
        n if n <= scone::tangrams::SLOTS => {
            let figures = cells
                .iter()
                .map(|(_, body)| {
                    let mut ch = body.chars();
                    match (ch.next(), ch.next()) {
                        (Some(c), None) => Shape::from_letter(c).ok_or(format!("unknown shape {body:?}")),
                        _ => Err(format!("unknown shape {body:?}")),
                    }
                })
                .collect::<std::result::Result<_, _>>()?;
            let s = TangramsState {
                figures,
                ..Default::default()
            };
            s.check()?;
            Ok(WorldState::Tangrams(s))
        }
        n => Err(format!("{n} cells match no SCONE domain")),
    }
}

/// Native SAIL route grammar, one directive per line:
///
/// ```text
/// instance <id> <train|dev|test> <map> <x> <y> <N|E|S|W|?N|?E|?S|?W>
/// sentence <free text>
/// actions <F|L|R>...
/// end
/// ```
///
/// Each `sentence` is followed by the `actions` of its segment. A `?`
/// heading marks the start orientation as undetermined while still naming
/// the true heading used to replay the route.
fn parse_sail_native(lines: &[String], maps: &MapLibrary) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    let mut cur: Option<(Instance, WorldState, Option<Vec<String>>)> = None;
    for (k, raw) in lines.iter().enumerate() {
        let line = k + 1;
        let err = |message: String| Error::Parse { line, message };
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let (head, rest) = body.split_once(' ').unwrap_or((body, ""));
        match head {
            "instance" => {
                if cur.is_some() {
                    return Err(err("missing `end` before new instance".into()));
                }
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 6 {
                    return Err(err("instance needs id split map x y heading".into()));
                }
                let split: Split = serde_json::from_value(Value::String(f[1].into()))
                    .map_err(|_| err(format!("bad split {:?}", f[1])))?;
                let map = maps.get(f[2]).ok_or_else(|| err(format!("unknown map {:?}", f[2])))?;
                let coord = |s: &str| s.parse::<i32>().map_err(|_| err(format!("bad coordinate {s:?}")));
                let (undetermined, dir) = match f[5].strip_prefix('?') {
                    Some(d) => (true, d),
                    None => (false, f[5]),
                };
                let orientation: Orientation = serde_json::from_value(Value::String(dir.into()))
                    .map_err(|_| err(format!("bad heading {:?}", f[5])))?;
                let pose = Pose::new((coord(f[3])?, coord(f[4])?), orientation);
                if !map.nodes.contains(&pose.node()) {
                    return Err(err("start pose is off the map".into()));
                }
                let start = WorldState::Sail(SailState {
                    map: Arc::clone(map),
                    pose,
                });
                let inst = Instance {
                    id: f[0].to_string(),
                    domain: Domain::Sail,
                    split,
                    initial_state: start.clone(),
                    segments: Vec::new(),
                    start_undetermined: undetermined,
                };
                cur = Some((inst, start, None));
            }
            "sentence" => {
                let (_, _, pending) = cur.as_mut().ok_or_else(|| err("sentence outside instance".into()))?;
                if pending.is_some() {
                    return Err(err("sentence without actions".into()));
                }
                *pending = Some(tokenize(rest));
            }
            "actions" => {
                let (inst, state, pending) =
                    cur.as_mut().ok_or_else(|| err("actions outside instance".into()))?;
                let sentence = pending.take().ok_or_else(|| err("actions without sentence".into()))?;
                let actions = rest
                    .split_whitespace()
                    .map(|t| match t {
                        "F" => Ok(Action::Sail(SailAction::FORWARD)),
                        "L" => Ok(Action::Sail(SailAction::Left)),
                        "R" => Ok(Action::Sail(SailAction::Right)),
                        other => Err(err(format!("unknown action {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let states_after = apply_actions(state, &actions).map_err(|e| err(e.to_string()))?;
                if let Some(last) = states_after.last() {
                    *state = last.clone();
                }
                inst.segments.push(Segment {
                    sentence,
                    actions,
                    states_after,
                });
            }
            "end" => {
                let (inst, _, pending) = cur.take().ok_or_else(|| err("end outside instance".into()))?;
                if pending.is_some() {
                    return Err(err("sentence without actions".into()));
                }
                out.push(inst);
            }
            other => return Err(err(format!("unknown directive {other:?}"))),
        }
    }
    if cur.is_some() {
        return Err(Error::Parse {
            line: lines.len(),
            message: "unterminated instance".into(),
        });
    }
    Ok(out)
}

/// Seed-stable 80/10/10 split assignment from an instance id.
pub fn split_for_id(id: &str) -> Split {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(id.as_bytes());
    match digest[0] as u32 * 10 / 256 {
        0..=7 => Split::Train,
        8 => Split::Dev,
        _ => Split::Test,
    }
}

/// Give a SAIL instance with an undetermined start a concrete heading
/// (`mode`), prepending the turns needed to face the recorded route.
pub fn resolve_start(inst: &Instance, mode: StartMode) -> Result<Instance> {
    let WorldState::Sail(start) = &inst.initial_state else {
        return Ok(inst.clone());
    };
    if !inst.start_undetermined {
        return Ok(inst.clone());
    }
    let route: Vec<_> = inst
        .segments
        .iter()
        .flat_map(|s| s.states_after.iter())
        .filter_map(|s| match s {
            WorldState::Sail(s) => Some(s.pose.node()),
            _ => None,
        })
        .collect();
    let pose = sail::resolve_start_orientation(mode, start.pose.node(), &route)?;
    let resolved = WorldState::Sail(SailState {
        map: Arc::clone(&start.map),
        pose,
    });
    let mut out = inst.clone();
    out.initial_state = resolved.clone();
    out.start_undetermined = false;
    let first = &mut out.segments[0];
    let rest: Vec<Action> = first
        .actions
        .iter()
        .copied()
        .skip_while(|a| matches!(a, Action::Sail(SailAction::Left | SailAction::Right)))
        .collect();
    let mut actions: Vec<Action> = sail::turns_between(pose.orientation, start.pose.orientation)
        .into_iter()
        .map(Action::Sail)
        .collect();
    // Leading turns in the recording were made from the true heading.
    let true_heading = first
        .states_after
        .iter()
        .zip(&first.actions)
        .find(|(_, a)| !matches!(a, Action::Sail(SailAction::Left | SailAction::Right)))
        .map(|_| ())
        .and_then(|_| {
            let skipped = first.actions.len() - rest.len();
            if skipped == 0 {
                None
            } else {
                match &first.states_after[skipped - 1] {
                    WorldState::Sail(s) => Some(s.pose.orientation),
                    _ => None,
                }
            }
        });
    if let Some(h) = true_heading {
        actions = sail::turns_between(pose.orientation, h)
            .into_iter()
            .map(Action::Sail)
            .collect();
    }
    actions.extend(rest);
    if actions.is_empty() {
        return Err(Error::DegenerateRoute);
    }
    first.states_after = apply_actions(&resolved, &actions)?;
    first.actions = actions;
    let cur = first.states_after.last().cloned().expect("non-empty");
    let mut state = cur;
    for seg in out.segments.iter_mut().skip(1) {
        seg.states_after = apply_actions(&state, &seg.actions)?;
        state = seg.states_after.last().cloned().expect("non-empty");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(
            tokenize("Pour the Red beaker, then STOP."),
            vec!["pour", "the", "red", "beaker", ",", "then", "stop", "."]
        );
    }

    #[test]
    fn empty_action_list_is_identity() {
        let s = WorldState::Alchemy(AlchemyState::default());
        assert!(apply_actions(&s, &[]).unwrap().is_empty());
    }

    #[test]
    fn scone_tsv_recovers_actions() {
        let row = "ex-1\t1:gg 2:_ 3:_ 4:_ 5:o 6:_ 7:_\tpour the first beaker into the second\t1:_ 2:gg 3:_ 4:_ 5:o 6:_ 7:_".to_string();
        let insts = parse_scone_tsv(&[row]).unwrap();
        assert_eq!(insts.len(), 1);
        assert_eq!(
            insts[0].segments[0].actions,
            vec![Action::Scone(SconeAction::Pour { i: 1, j: 2 })]
        );
        assert!(validate_instance(&insts[0]).is_valid());
    }

    #[test]
    fn scone_tsv_rejects_unexplained_step() {
        let row = "ex-2\t1:gg 2:_ 3:_ 4:_ 5:o 6:_ 7:_\tmagic\t1:rrrr 2:_ 3:_ 4:_ 5:o 6:_ 7:_".to_string();
        assert!(matches!(parse_scone_tsv(&[row]), Err(Error::Parse { line: 1, .. })));
    }
}
