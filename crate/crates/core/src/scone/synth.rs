//! Synthetic SCONE episodes: random start states, uniform random walks over
//! valid actions, one templated sentence per action.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::alchemy::{self, AlchemyState};
use super::scene::SceneState;
use super::tangrams::TangramsState;
use super::{templates, valid_actions, Color, Person, Shape};
use crate::error::{Error, Result};
use crate::world::{split_for_id, Action, Domain, Instance, Segment, WorldState};

const MAX_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub steps: usize,
    /// Probability of choosing an under-specified template.
    pub ambiguity: f64,
    /// Exponent on the inverse denotation size when picking among
    /// under-specified realizations; 0 picks uniformly.
    pub rationality: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            steps: 5,
            ambiguity: 0.0,
            rationality: 1.0,
        }
    }
}

pub fn random_state<R: Rng>(domain: Domain, rng: &mut R) -> WorldState {
    match domain {
        Domain::Alchemy => {
            let mut s = AlchemyState::default();
            for b in s.beakers.iter_mut() {
                let height = rng.gen_range(0..=alchemy::CAPACITY);
                if rng.gen_bool(0.8) {
                    let c = *alchemy::COLORS.choose(rng).expect("palette");
                    b.extend(std::iter::repeat_n(c, height));
                } else {
                    b.extend((0..height).map(|_| *alchemy::COLORS.choose(rng).expect("palette")));
                }
            }
            WorldState::Alchemy(s)
        }
        Domain::Scene => {
            let mut s = SceneState::default();
            for p in s.positions.iter_mut() {
                if rng.gen_bool(0.4) {
                    *p = Some(Person {
                        shirt: *Color::ALL.choose(rng).expect("palette"),
                        hat: rng.gen_bool(0.5).then(|| *Color::ALL.choose(rng).expect("palette")),
                    });
                }
            }
            WorldState::Scene(s)
        }
        Domain::Tangrams => {
            let mut shapes: Vec<Shape> = Shape::all().collect();
            shapes.shuffle(rng);
            shapes.truncate(super::tangrams::SLOTS);
            WorldState::Tangrams(TangramsState {
                figures: shapes,
                ..Default::default()
            })
        }
        Domain::Sail => panic!("use sail::synth for SAIL episodes"),
    }
}

fn walk<R: Rng>(
    domain: Domain,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Option<(WorldState, Vec<Segment>)> {
    let start = random_state(domain, rng);
    let mut cur = start.clone();
    let mut segments = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let valid = valid_actions(&cur);
        let action = *valid.choose(rng)?;
        let sentence = templates::describe(&cur, &action, cfg.ambiguity, cfg.rationality, rng);
        let next = super::transition(&cur, &action).expect("valid action");
        segments.push(Segment {
            sentence,
            actions: vec![Action::Scone(action)],
            states_after: vec![next.clone()],
        });
        cur = next;
    }
    Some((start, segments))
}

pub fn synth_with(domain: Domain, n: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<Instance>> {
    if !domain.is_scone() {
        return Err(Error::Config("synth_with generates SCONE domains only".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut attempt = 0;
        let (initial_state, segments) = loop {
            if let Some(ep) = walk(domain, cfg, &mut rng) {
                break ep;
            }
            attempt += 1;
            if attempt >= MAX_RETRIES {
                return Err(Error::GenerationStuck { retries: attempt });
            }
        };
        let id = format!("{domain}-{seed}-{k:05}");
        out.push(Instance {
            split: split_for_id(&id),
            id,
            domain,
            initial_state,
            segments,
            start_undetermined: false,
        });
    }
    Ok(out)
}

pub fn synth_generate(
    domain: Domain,
    n: usize,
    steps: usize,
    ambiguity: f64,
    seed: u64,
) -> Result<Vec<Instance>> {
    let cfg = SynthConfig {
        steps,
        ambiguity,
        ..Default::default()
    };
    synth_with(domain, n, &cfg, seed)
}

/// True when some sentence literally denotes more than one valid action.
pub fn is_ambiguous(inst: &Instance) -> bool {
    (0..inst.segments.len())
        .any(|k| templates::parse(inst.segment_start(k), &inst.segments[k].sentence).len() > 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::validate_instance;

    #[test]
    fn zero_instances() {
        assert!(synth_generate(Domain::Alchemy, 0, 5, 0.5, 1).unwrap().is_empty());
    }

    #[test]
    fn generated_instances_validate() {
        for d in Domain::SCONE {
            for inst in synth_generate(d, 20, 5, 0.5, 3).unwrap() {
                assert!(validate_instance(&inst).is_valid(), "{}", inst.id);
            }
        }
    }
}
