//! Human-evaluation sessions: a person reads one instruction at a time and
//! acts in the simulated world; finishing records whether the intended end
//! state was reached.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::world::{Action, Domain, Instance, WorldState};

/// Instruction source that replays an instance's own sentences.
pub const REFERENCE_SYSTEM: &str = "reference";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("session {0} is finished")]
    Finished(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("results log: {0}")]
    Io(String),
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub system: String,
    pub instance: Arc<Instance>,
    pub instructions: Vec<Vec<String>>,
    pub state: WorldState,
    pub actions: Vec<Action>,
    /// Index of the instruction being carried out.
    pub step: usize,
    pub finished: bool,
    started: Instant,
}

impl Session {
    pub fn instruction(&self) -> Option<String> {
        self.instructions.get(self.step).map(|s| s.join(" "))
    }

    pub fn view(&self) -> Value {
        serde_json::json!({
            "session_id": self.id,
            "state": self.state.to_json(),
            "step": self.step,
            "instruction": self.instruction(),
            "finished": self.finished,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub session_id: String,
    pub instance_id: String,
    pub system: String,
    pub actions: Vec<Action>,
    pub success: bool,
    pub duration_ms: u64,
}

/// Instructions per system, keyed by instance id.
pub type Directions = BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>>;

struct ResultsLog {
    rows: Vec<String>,
    path: Option<PathBuf>,
}

/// All live sessions. Each session sits behind its own lock; the results
/// log has a single writer lock.
pub struct SessionStore {
    data: BTreeMap<Domain, Vec<Arc<Instance>>>,
    directions: Directions,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next: Mutex<(u64, BTreeMap<Domain, usize>)>,
    results: Mutex<ResultsLog>,
}

/// What the client asked to do next.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Act(Action),
    /// Move on to the next instruction.
    Next,
}

impl Step {
    /// Either a domain action object or the string `"next"`.
    pub fn from_json(v: &Value) -> Result<Step, SessionError> {
        if v.as_str() == Some("next") {
            return Ok(Step::Next);
        }
        serde_json::from_value(v.clone())
            .map(Step::Act)
            .map_err(|e| SessionError::BadRequest(format!("unparseable action: {e}")))
    }
}

impl SessionStore {
    pub fn new(instances: Vec<Instance>, directions: Directions, results: Option<PathBuf>) -> SessionStore {
        let mut data: BTreeMap<Domain, Vec<Arc<Instance>>> = BTreeMap::new();
        for i in instances {
            data.entry(i.domain).or_default().push(Arc::new(i));
        }
        SessionStore {
            data,
            directions,
            sessions: Mutex::new(HashMap::new()),
            next: Mutex::new((0, BTreeMap::new())),
            results: Mutex::new(ResultsLog { rows: Vec::new(), path: results }),
        }
    }

    pub fn systems(&self) -> Vec<String> {
        let mut v = vec![REFERENCE_SYSTEM.to_string()];
        v.extend(self.directions.keys().filter(|k| *k != REFERENCE_SYSTEM).cloned());
        v
    }

    /// Start a session on the next instance of `domain` (round robin) with
    /// instructions from `system`.
    pub fn create(&self, domain: Domain, system: &str) -> Result<Value, SessionError> {
        let pool = self
            .data
            .get(&domain)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| SessionError::BadRequest(format!("no instances for {domain}")))?;
        let table = match system {
            REFERENCE_SYSTEM => None,
            s => Some(
                self.directions
                    .get(s)
                    .ok_or_else(|| SessionError::BadRequest(format!("unknown system {s:?}")))?,
            ),
        };
        let (id, inst) = {
            let mut next = self.next.lock().expect("counter lock");
            let cursor = next.1.entry(domain).or_insert(0);
            let mut found = None;
            for _ in 0..pool.len() {
                let cand = &pool[*cursor % pool.len()];
                *cursor += 1;
                if table.is_none_or(|t| t.contains_key(&cand.id)) {
                    found = Some(Arc::clone(cand));
                    break;
                }
            }
            let inst = found.ok_or_else(|| SessionError::BadRequest(format!("{system} has no directions for {domain}")))?;
            next.0 += 1;
            (format!("s{:06}", next.0), inst)
        };
        let instructions = match table {
            None => inst.sentences(),
            Some(t) => t[&inst.id].clone(),
        };
        let session = Session {
            id: id.clone(),
            system: system.to_string(),
            state: inst.initial_state.clone(),
            instance: inst,
            instructions,
            actions: Vec::new(),
            step: 0,
            finished: false,
            started: Instant::now(),
        };
        let view = serde_json::json!({
            "session_id": id,
            "instruction": session.instruction(),
            "state": session.state.to_json(),
        });
        self.sessions
            .lock()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn view(&self, id: &str) -> Result<Value, SessionError> {
        let s = self.get(id)?;
        let s = s.lock().expect("session lock");
        Ok(s.view())
    }

    /// Apply one step. An invalid action leaves the session untouched. In
    /// SCONE every instruction is one action, so acting also moves on.
    pub fn act(&self, id: &str, step: Step) -> Result<Value, SessionError> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session lock");
        if s.finished {
            return Err(SessionError::Finished(id.to_string()));
        }
        let done = match step {
            Step::Next => true,
            Step::Act(a) => {
                let next = s.state.apply(&a).map_err(|e| SessionError::InvalidAction(e.to_string()))?;
                s.state = next;
                s.actions.push(a);
                s.instance.domain.is_scone()
            }
        };
        if done && s.step < s.instructions.len() {
            s.step += 1;
        }
        Ok(serde_json::json!({
            "state": s.state.to_json(),
            "done_sentence": done,
            "step": s.step,
            "instruction": s.instruction(),
        }))
    }

    /// Close the session and record the outcome.
    pub fn finish(&self, id: &str) -> Result<Value, SessionError> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session lock");
        if s.finished {
            return Err(SessionError::Finished(id.to_string()));
        }
        let success = &s.state == s.instance.final_state();
        let row = ResultRow {
            session_id: s.id.clone(),
            instance_id: s.instance.id.clone(),
            system: s.system.clone(),
            actions: s.actions.clone(),
            success,
            duration_ms: s.started.elapsed().as_millis() as u64,
        };
        let line = serde_json::to_string(&row).map_err(|e| SessionError::Io(e.to_string()))?;
        {
            let mut log = self.results.lock().expect("results lock");
            if let Some(p) = &log.path {
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| SessionError::Io(e.to_string()))?;
                writeln!(f, "{line}").map_err(|e| SessionError::Io(e.to_string()))?;
            }
            log.rows.push(line);
        }
        s.finished = true;
        Ok(serde_json::json!({ "success": success }))
    }

    /// Recorded outcomes as JSON lines, in finishing order.
    pub fn results_jsonl(&self) -> String {
        let log = self.results.lock().expect("results lock");
        let mut out = String::new();
        for r in &log.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scone::synth::synth_generate;
    use crate::world::apply_actions;

    fn store() -> SessionStore {
        SessionStore::new(synth_generate(Domain::Alchemy, 3, 5, 0.0, 4).unwrap(), Directions::new(), None)
    }

    #[test]
    fn gold_actions_succeed() {
        let st = store();
        let v = st.create(Domain::Alchemy, REFERENCE_SYSTEM).unwrap();
        let id = v["session_id"].as_str().unwrap().to_string();
        let inst = st.get(&id).unwrap().lock().unwrap().instance.clone();
        for a in inst.actions() {
            st.act(&id, Step::Act(a)).unwrap();
        }
        assert_eq!(st.finish(&id).unwrap()["success"], true);
        assert_eq!(st.finish(&id), Err(SessionError::Finished(id.clone())));
        assert_eq!(st.results_jsonl().lines().count(), 1);
    }

    #[test]
    fn state_is_replay_of_log() {
        let st = store();
        let id = st.create(Domain::Alchemy, REFERENCE_SYSTEM).unwrap()["session_id"].as_str().unwrap().to_string();
        let bad = Action::Scone(crate::scone::SconeAction::Pour { i: 0, j: 0 });
        let before = st.view(&id).unwrap();
        assert!(matches!(st.act(&id, Step::Act(bad)), Err(SessionError::InvalidAction(_))));
        assert_eq!(st.view(&id).unwrap(), before);
        let s = st.get(&id).unwrap();
        let s = s.lock().unwrap();
        let replay = apply_actions(&s.instance.initial_state, &s.actions).unwrap();
        assert_eq!(replay.last().unwrap_or(&s.instance.initial_state), &s.state);
    }

    #[test]
    fn unknown_session_and_system() {
        let st = store();
        assert_eq!(st.view("nope"), Err(SessionError::NotFound("nope".into())));
        assert!(matches!(st.create(Domain::Alchemy, "ghost"), Err(SessionError::BadRequest(_))));
        assert!(matches!(st.create(Domain::Scene, REFERENCE_SYSTEM), Err(SessionError::BadRequest(_))));
    }
}
