use serde::{Deserialize, Serialize};

use super::{one_hot_into, SconeAction, Shape};
use crate::error::ActionError;

pub const SLOTS: usize = 5;
pub const PERCEPT_DIM: usize = SLOTS * (Shape::COUNT + 1);
/// Removal recency one-hot, clamped at this many steps.
pub const CONTEXT_DIM: usize = 10;

/// A row of distinct figures plus the removal log needed to put shapes back.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TangramsState {
    pub figures: Vec<Shape>,
    /// `(step index, shape)` for every removal, oldest first.
    pub history: Vec<(usize, Shape)>,
    /// Number of actions applied so far.
    #[serde(default)]
    pub step: usize,
}

impl TangramsState {
    pub fn check(&self) -> Result<(), String> {
        if self.figures.len() > SLOTS {
            return Err(format!("{} figures exceed {SLOTS} slots", self.figures.len()));
        }
        for (k, s) in self.figures.iter().enumerate() {
            if self.figures[..k].contains(s) {
                return Err(format!("shape {} appears twice", s.letter()));
            }
        }
        Ok(())
    }

    /// Shapes that can be put back: removed at some point and not on canvas.
    pub fn removed_shapes(&self) -> Vec<Shape> {
        let mut out: Vec<Shape> = Vec::new();
        for (_, s) in &self.history {
            if !self.figures.contains(s) && !out.contains(s) {
                out.push(*s);
            }
        }
        out.sort();
        out
    }

    pub fn last_removal(&self, s: Shape) -> Option<usize> {
        self.history.iter().rev().find(|(_, h)| *h == s).map(|(t, _)| *t)
    }

    /// The most recently removed shape that is currently off the canvas.
    pub fn most_recent_removed(&self) -> Option<Shape> {
        self.history
            .iter()
            .rev()
            .map(|(_, s)| *s)
            .find(|s| !self.figures.contains(s))
    }

    pub fn apply(&self, action: &SconeAction) -> Result<TangramsState, ActionError> {
        let n = self.figures.len();
        let mut next = self.clone();
        match *action {
            SconeAction::Remove { i } => {
                if i == 0 || i > n {
                    return Err(ActionError::invalid(format!("no figure at {i}")));
                }
                let s = next.figures.remove(i - 1);
                next.history.push((self.step, s));
            }
            SconeAction::Swap { i, j } => {
                if i == 0 || i >= j || j > n {
                    return Err(ActionError::invalid(format!("cannot swap {i} and {j}")));
                }
                next.figures.swap(i - 1, j - 1);
            }
            SconeAction::Insert { i, s } => {
                if n >= SLOTS || i == 0 || i > n + 1 {
                    return Err(ActionError::invalid(format!("cannot insert at {i}")));
                }
                if !self.removed_shapes().contains(&s) {
                    return Err(ActionError::invalid(format!(
                        "shape {} was never removed",
                        s.letter()
                    )));
                }
                next.figures.insert(i - 1, s);
            }
            _ => return Err(ActionError::DomainMismatch),
        }
        next.step += 1;
        Ok(next)
    }

    pub fn valid_actions(&self) -> Vec<SconeAction> {
        let n = self.figures.len();
        let mut out: Vec<SconeAction> = (1..=n).map(|i| SconeAction::Remove { i }).collect();
        for i in 1..=n {
            for j in i + 1..=n {
                out.push(SconeAction::Swap { i, j });
            }
        }
        if n < SLOTS {
            let removed = self.removed_shapes();
            for i in 1..=n + 1 {
                for s in Shape::all() {
                    if removed.contains(&s) {
                        out.push(SconeAction::Insert { i, s });
                    }
                }
            }
        }
        out
    }

    pub fn percept(&self) -> Vec<f64> {
        let w = Shape::COUNT + 1;
        let mut v = vec![0.0; PERCEPT_DIM];
        for slot in 0..SLOTS {
            let code = self.figures.get(slot).map_or(Shape::COUNT, |s| s.index());
            one_hot_into(&mut v[slot * w..(slot + 1) * w], code);
        }
        v
    }

    pub fn contextual_embedding(&self, action: &SconeAction) -> Vec<f64> {
        let mut v = vec![0.0; CONTEXT_DIM];
        if let SconeAction::Insert { s, .. } = *action {
            if let Some(t) = self.last_removal(s) {
                let ago = self.step.saturating_sub(t).clamp(1, CONTEXT_DIM);
                v[ago - 1] = 1.0;
            }
        }
        v
    }
}

pub fn grid() -> Vec<SconeAction> {
    let mut out: Vec<SconeAction> = (1..=SLOTS).map(|i| SconeAction::Remove { i }).collect();
    for i in 1..=SLOTS {
        for j in i + 1..=SLOTS {
            out.push(SconeAction::Swap { i, j });
        }
    }
    for i in 1..=SLOTS {
        for s in Shape::all() {
            out.push(SconeAction::Insert { i, s });
        }
    }
    out
}
