use serde::{Deserialize, Serialize};

use super::{one_hot_into, Color, SconeAction};
use crate::error::ActionError;

pub const POSITIONS: usize = 10;
const NCOL: usize = Color::ALL.len();
pub const PERCEPT_DIM: usize = POSITIONS * 2 * (NCOL + 1);
/// `[shirt | hat | out-of-bounds]` per referenced position.
const PERSON_DIM: usize = 2 * NCOL + 1;
pub const CONTEXT_DIM: usize = 3 * PERSON_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Person {
    pub shirt: Color,
    pub hat: Option<Color>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneState {
    pub positions: Vec<Option<Person>>,
}

impl Default for SceneState {
    fn default() -> Self {
        SceneState {
            positions: vec![None; POSITIONS],
        }
    }
}

impl SceneState {
    pub fn check(&self) -> Result<(), String> {
        if self.positions.len() != POSITIONS {
            return Err(format!(
                "expected {POSITIONS} positions, got {}",
                self.positions.len()
            ));
        }
        Ok(())
    }

    pub fn at(&self, i: usize) -> Option<&Person> {
        self.positions.get(i.wrapping_sub(1)).and_then(Option::as_ref)
    }

    pub fn population(&self) -> usize {
        self.positions.iter().filter(|p| p.is_some()).count()
    }

    pub fn apply(&self, action: &SconeAction) -> Result<SceneState, ActionError> {
        let in_range = |i: usize| (1..=POSITIONS).contains(&i);
        let mut next = self.clone();
        match *action {
            SconeAction::Enter { c, i } => {
                if !in_range(i) || self.at(i).is_some() {
                    return Err(ActionError::invalid(format!("position {i} is not free")));
                }
                next.positions[i - 1] = Some(Person { shirt: c, hat: None });
            }
            SconeAction::Exit { i } => {
                if !in_range(i) || self.at(i).is_none() {
                    return Err(ActionError::invalid(format!("nobody at position {i}")));
                }
                next.positions[i - 1] = None;
            }
            SconeAction::Move { i, j } => {
                if !in_range(i) || !in_range(j) || i == j {
                    return Err(ActionError::invalid(format!("cannot move {i} to {j}")));
                }
                if self.at(i).is_none() || self.at(j).is_some() {
                    return Err(ActionError::invalid(format!(
                        "move needs someone at {i} and nobody at {j}"
                    )));
                }
                next.positions[j - 1] = next.positions[i - 1].take();
            }
            SconeAction::Switch { i, j } => {
                if !in_range(i) || !in_range(j) || i >= j {
                    return Err(ActionError::invalid(format!("cannot switch {i} and {j}")));
                }
                if self.at(i).is_none() || self.at(j).is_none() {
                    return Err(ActionError::invalid("switch needs two people"));
                }
                next.positions.swap(i - 1, j - 1);
            }
            SconeAction::TakeHat { i, j } => {
                if !in_range(i) || !in_range(j) || i == j {
                    return Err(ActionError::invalid(format!("cannot pass a hat {i} to {j}")));
                }
                let hat = match (self.at(i), self.at(j)) {
                    (Some(Person { hat: Some(h), .. }), Some(Person { hat: None, .. })) => *h,
                    _ => {
                        return Err(ActionError::invalid(
                            "hat transfer needs a hatted giver and a hatless receiver",
                        ))
                    }
                };
                next.positions[i - 1].as_mut().expect("giver").hat = None;
                next.positions[j - 1].as_mut().expect("receiver").hat = Some(hat);
            }
            _ => return Err(ActionError::DomainMismatch),
        }
        Ok(next)
    }

    pub fn valid_actions(&self) -> Vec<SconeAction> {
        let occupied = |i| self.at(i).is_some();
        let hatted = |i| matches!(self.at(i), Some(Person { hat: Some(_), .. }));
        let hatless = |i| matches!(self.at(i), Some(Person { hat: None, .. }));
        let mut out = Vec::new();
        for c in Color::ALL {
            for i in 1..=POSITIONS {
                if !occupied(i) {
                    out.push(SconeAction::Enter { c, i });
                }
            }
        }
        for i in 1..=POSITIONS {
            if occupied(i) {
                out.push(SconeAction::Exit { i });
            }
        }
        for i in 1..=POSITIONS {
            for j in 1..=POSITIONS {
                if i != j && occupied(i) && !occupied(j) {
                    out.push(SconeAction::Move { i, j });
                }
            }
        }
        for i in 1..=POSITIONS {
            for j in i + 1..=POSITIONS {
                if occupied(i) && occupied(j) {
                    out.push(SconeAction::Switch { i, j });
                }
            }
        }
        for i in 1..=POSITIONS {
            for j in 1..=POSITIONS {
                if i != j && hatted(i) && hatless(j) {
                    out.push(SconeAction::TakeHat { i, j });
                }
            }
        }
        out
    }

    pub fn percept(&self) -> Vec<f64> {
        let mut v = vec![0.0; PERCEPT_DIM];
        for (k, p) in self.positions.iter().enumerate() {
            let base = k * 2 * (NCOL + 1);
            let (shirt, hat) = match p {
                Some(p) => (p.shirt.index(), p.hat.map_or(NCOL, Color::index)),
                None => (NCOL, NCOL),
            };
            one_hot_into(&mut v[base..base + NCOL + 1], shirt);
            one_hot_into(&mut v[base + NCOL + 1..base + 2 * (NCOL + 1)], hat);
        }
        v
    }

    /// Person block for a (possibly out-of-range) position; positions 0 and
    /// 11 set the out-of-bounds sentinel.
    fn person_block(&self, pos: isize, out: &mut [f64]) {
        if pos < 1 || pos > POSITIONS as isize {
            out[2 * NCOL] = 1.0;
            return;
        }
        if let Some(p) = self.at(pos as usize) {
            out[p.shirt.index()] = 1.0;
            if let Some(h) = p.hat {
                out[NCOL + h.index()] = 1.0;
            }
        }
    }

    pub fn contextual_embedding(&self, action: &SconeAction) -> Vec<f64> {
        let mut v = vec![0.0; CONTEXT_DIM];
        let refs: Vec<isize> = match *action {
            SconeAction::Enter { i, .. } => vec![i as isize - 1, i as isize + 1],
            SconeAction::Exit { i } => vec![i as isize, i as isize - 1, i as isize + 1],
            SconeAction::Move { i, j } => vec![i as isize, j as isize - 1, j as isize + 1],
            SconeAction::Switch { i, j } | SconeAction::TakeHat { i, j } => {
                vec![i as isize, j as isize]
            }
            _ => Vec::new(),
        };
        for (k, pos) in refs.into_iter().enumerate() {
            self.person_block(pos, &mut v[k * PERSON_DIM..(k + 1) * PERSON_DIM]);
        }
        v
    }
}

pub fn grid() -> Vec<SconeAction> {
    let mut out = Vec::new();
    for c in Color::ALL {
        for i in 1..=POSITIONS {
            out.push(SconeAction::Enter { c, i });
        }
    }
    out.extend((1..=POSITIONS).map(|i| SconeAction::Exit { i }));
    for i in 1..=POSITIONS {
        for j in 1..=POSITIONS {
            if i != j {
                out.push(SconeAction::Move { i, j });
            }
        }
    }
    for i in 1..=POSITIONS {
        for j in i + 1..=POSITIONS {
            out.push(SconeAction::Switch { i, j });
        }
    }
    for i in 1..=POSITIONS {
        for j in 1..=POSITIONS {
            if i != j {
                out.push(SconeAction::TakeHat { i, j });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(shirt: Color, hat: Option<Color>) -> Option<Person> {
        Some(Person { shirt, hat })
    }

    #[test]
    fn switch_is_an_involution() {
        let mut s = SceneState::default();
        s.positions[0] = person(Color::Red, None);
        s.positions[3] = person(Color::Blue, Some(Color::Green));
        let a = SconeAction::Switch { i: 1, j: 4 };
        let twice = s.apply(&a).unwrap().apply(&a).unwrap();
        assert_eq!(twice, s);
    }

    #[test]
    fn enter_at_left_edge_uses_sentinel() {
        let s = SceneState::default();
        let v = s.contextual_embedding(&SconeAction::Enter { c: Color::Red, i: 1 });
        assert_eq!(v[2 * NCOL], 1.0);
        assert!(v[..2 * NCOL].iter().all(|x| *x == 0.0));
        assert_eq!(v[PERSON_DIM + 2 * NCOL], 0.0);
    }

    #[test]
    fn take_hat_moves_the_hat() {
        let mut s = SceneState::default();
        s.positions[1] = person(Color::Red, Some(Color::Blue));
        s.positions[4] = person(Color::Green, None);
        let n = s.apply(&SconeAction::TakeHat { i: 2, j: 5 }).unwrap();
        assert_eq!(n.at(2).unwrap().hat, None);
        assert_eq!(n.at(5).unwrap().hat, Some(Color::Blue));
        assert!(n.apply(&SconeAction::TakeHat { i: 2, j: 5 }).is_err());
    }

    #[test]
    fn percept_width() {
        assert_eq!(SceneState::default().percept().len(), 10 * (9 + 9));
    }
}
