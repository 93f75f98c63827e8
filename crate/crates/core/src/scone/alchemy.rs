use serde::{Deserialize, Serialize};

use super::{one_hot_into, Color, SconeAction};
use crate::error::ActionError;

pub const BEAKERS: usize = 7;
pub const CAPACITY: usize = 4;
/// Colors a beaker unit can take (the Scene palette without white).
pub const COLORS: [Color; 7] = [
    Color::Red,
    Color::Orange,
    Color::Yellow,
    Color::Green,
    Color::Blue,
    Color::Purple,
    Color::Brown,
];
const UNIT_CODES: usize = COLORS.len() + 1;
pub const PERCEPT_DIM: usize = BEAKERS * CAPACITY * UNIT_CODES;
const CONTENTS_DIM: usize = CAPACITY * COLORS.len();
pub const CONTEXT_DIM: usize = 2 * CONTENTS_DIM + CAPACITY;

/// Seven beakers, each a bottom-to-top stack of colored units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlchemyState {
    pub beakers: Vec<Vec<Color>>,
}

impl Default for AlchemyState {
    fn default() -> Self {
        AlchemyState {
            beakers: vec![Vec::new(); BEAKERS],
        }
    }
}

fn color_slot(c: Color) -> Option<usize> {
    COLORS.iter().position(|x| *x == c)
}

impl AlchemyState {
    pub fn check(&self) -> Result<(), String> {
        if self.beakers.len() != BEAKERS {
            return Err(format!("expected {BEAKERS} beakers, got {}", self.beakers.len()));
        }
        for (k, b) in self.beakers.iter().enumerate() {
            if b.len() > CAPACITY {
                return Err(format!("beaker {} holds {} units", k + 1, b.len()));
            }
            if b.iter().any(|c| color_slot(*c).is_none()) {
                return Err(format!("beaker {} holds a non-alchemy color", k + 1));
            }
        }
        Ok(())
    }

    pub fn beaker(&self, i: usize) -> &[Color] {
        &self.beakers[i - 1]
    }

    pub fn total_units(&self) -> usize {
        self.beakers.iter().map(Vec::len).sum()
    }

    /// Color of a non-empty beaker whose units all share one color.
    pub fn uniform_color(&self, i: usize) -> Option<Color> {
        let b = self.beaker(i);
        let first = *b.first()?;
        b.iter().all(|c| *c == first).then_some(first)
    }

    pub fn apply(&self, action: &SconeAction) -> Result<AlchemyState, ActionError> {
        let in_range = |i: usize| (1..=BEAKERS).contains(&i);
        let mut next = self.clone();
        match *action {
            SconeAction::Mix { i } => {
                if !in_range(i) {
                    return Err(ActionError::invalid(format!("no beaker {i}")));
                }
                let b = &mut next.beakers[i - 1];
                let distinct = b.iter().any(|c| Some(c) != b.first());
                if !distinct {
                    return Err(ActionError::invalid(format!("beaker {i} has nothing to mix")));
                }
                b.iter_mut().for_each(|c| *c = Color::Brown);
            }
            SconeAction::Pour { i, j } => {
                if !in_range(i) || !in_range(j) || i == j {
                    return Err(ActionError::invalid(format!("cannot pour {i} into {j}")));
                }
                if self.beaker(i).is_empty() {
                    return Err(ActionError::invalid(format!("beaker {i} is empty")));
                }
                if self.beaker(i).len() + self.beaker(j).len() > CAPACITY {
                    return Err(ActionError::invalid(format!("beaker {j} would overflow")));
                }
                let moved = std::mem::take(&mut next.beakers[i - 1]);
                next.beakers[j - 1].extend(moved);
            }
            SconeAction::Drain { a, i } => {
                if !in_range(i) || a == 0 || a > self.beaker(i).len() {
                    return Err(ActionError::invalid(format!("cannot drain {a} from beaker {i}")));
                }
                let b = &mut next.beakers[i - 1];
                b.truncate(b.len() - a);
            }
            _ => return Err(ActionError::DomainMismatch),
        }
        Ok(next)
    }

    pub fn valid_actions(&self) -> Vec<SconeAction> {
        let mut out = Vec::new();
        for i in 1..=BEAKERS {
            let b = self.beaker(i);
            if b.iter().any(|c| Some(c) != b.first()) {
                out.push(SconeAction::Mix { i });
            }
        }
        for i in 1..=BEAKERS {
            for j in 1..=BEAKERS {
                if i != j
                    && !self.beaker(i).is_empty()
                    && self.beaker(i).len() + self.beaker(j).len() <= CAPACITY
                {
                    out.push(SconeAction::Pour { i, j });
                }
            }
        }
        for a in 1..=CAPACITY {
            for i in 1..=BEAKERS {
                if a <= self.beaker(i).len() {
                    out.push(SconeAction::Drain { a, i });
                }
            }
        }
        out
    }

    /// One block per (beaker, unit slot): seven color bits plus an empty bit.
    pub fn percept(&self) -> Vec<f64> {
        let mut v = vec![0.0; PERCEPT_DIM];
        for (b, units) in self.beakers.iter().enumerate() {
            for slot in 0..CAPACITY {
                let base = (b * CAPACITY + slot) * UNIT_CODES;
                let code = units
                    .get(slot)
                    .map(|c| color_slot(*c).expect("alchemy color"))
                    .unwrap_or(COLORS.len());
                one_hot_into(&mut v[base..base + UNIT_CODES], code);
            }
        }
        v
    }

    /// Unit-by-unit color one-hots of one beaker; empty slots stay zero.
    pub fn encode_contents(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; CONTENTS_DIM];
        for (slot, c) in self.beaker(i).iter().enumerate() {
            let base = slot * COLORS.len();
            one_hot_into(&mut v[base..base + COLORS.len()], color_slot(*c).expect("alchemy color"));
        }
        v
    }

    /// Layout: `[contents block A | contents block B | amount one-hot]`.
    pub fn contextual_embedding(&self, action: &SconeAction) -> Vec<f64> {
        let mut v = vec![0.0; CONTEXT_DIM];
        match *action {
            SconeAction::Mix { i } => v[..CONTENTS_DIM].copy_from_slice(&self.encode_contents(i)),
            SconeAction::Pour { i, j } => {
                v[..CONTENTS_DIM].copy_from_slice(&self.encode_contents(i));
                v[CONTENTS_DIM..2 * CONTENTS_DIM].copy_from_slice(&self.encode_contents(j));
            }
            SconeAction::Drain { a, i } => {
                v[..CONTENTS_DIM].copy_from_slice(&self.encode_contents(i));
                v[2 * CONTENTS_DIM + a - 1] = 1.0;
            }
            _ => {}
        }
        v
    }
}

pub fn grid() -> Vec<SconeAction> {
    let mut out: Vec<SconeAction> = (1..=BEAKERS).map(|i| SconeAction::Mix { i }).collect();
    for i in 1..=BEAKERS {
        for j in 1..=BEAKERS {
            if i != j {
                out.push(SconeAction::Pour { i, j });
            }
        }
    }
    for a in 1..=CAPACITY {
        for i in 1..=BEAKERS {
            out.push(SconeAction::Drain { a, i });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Color::*;

    fn state(beakers: &[&[Color]]) -> AlchemyState {
        let mut s = AlchemyState::default();
        for (k, b) in beakers.iter().enumerate() {
            s.beakers[k] = b.to_vec();
        }
        s
    }

    #[test]
    fn pour_moves_everything() {
        let s = state(&[&[Orange, Orange], &[]]);
        let n = s.apply(&SconeAction::Pour { i: 1, j: 2 }).unwrap();
        assert!(n.beaker(1).is_empty());
        assert_eq!(n.beaker(2), &[Orange, Orange]);
    }

    #[test]
    fn mix_turns_brown() {
        let s = state(&[&[], &[], &[Red, Green]]);
        let n = s.apply(&SconeAction::Mix { i: 3 }).unwrap();
        assert_eq!(n.beaker(3), &[Brown, Brown]);
        assert!(s.apply(&SconeAction::Mix { i: 1 }).is_err());
        let homogeneous = state(&[&[Red, Red]]);
        assert!(homogeneous.apply(&SconeAction::Mix { i: 1 }).is_err());
    }

    #[test]
    fn pour_overflow_and_empty_source_fail() {
        let s = state(&[&[Red, Red, Red], &[Blue, Blue], &[]]);
        assert!(s.apply(&SconeAction::Pour { i: 1, j: 2 }).is_err());
        assert!(s.apply(&SconeAction::Pour { i: 3, j: 1 }).is_err());
        assert!(!s.valid_actions().contains(&SconeAction::Pour { i: 1, j: 2 }));
    }

    #[test]
    fn full_target_admits_no_pour() {
        let s = state(&[&[Red], &[Blue, Blue, Blue, Blue]]);
        assert!(s
            .valid_actions()
            .iter()
            .all(|a| !matches!(a, SconeAction::Pour { j: 2, .. })));
    }

    #[test]
    fn drain_takes_from_top() {
        let s = state(&[&[Red, Green, Blue]]);
        let n = s.apply(&SconeAction::Drain { a: 2, i: 1 }).unwrap();
        assert_eq!(n.beaker(1), &[Red]);
    }

    #[test]
    fn empty_percept_sets_empty_bits_only() {
        let v = AlchemyState::default().percept();
        assert_eq!(v.len(), 7 * 4 * 8);
        for block in v.chunks(UNIT_CODES) {
            assert_eq!(&block[..7], &[0.0; 7]);
            assert_eq!(block[7], 1.0);
        }
    }

    #[test]
    fn percept_change_is_local() {
        let a = state(&[&[], &[Red, Red]]);
        let b = state(&[&[], &[Red, Blue]]);
        let (va, vb) = (a.percept(), b.percept());
        let block = (CAPACITY + 1) * UNIT_CODES;
        for (k, (x, y)) in va.iter().zip(&vb).enumerate() {
            if x != y {
                assert!((block..block + UNIT_CODES).contains(&k), "diff at {k}");
            }
        }
        assert_ne!(va, vb);
    }

    #[test]
    fn mix_of_empty_beaker_has_zero_contents() {
        let s = AlchemyState::default();
        let v = s.contextual_embedding(&SconeAction::Mix { i: 5 });
        assert!(v.iter().all(|x| *x == 0.0));
    }
}
