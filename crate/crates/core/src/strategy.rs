//! Built-in coordinate-choice strategies for the controlled walk.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::walk::{Strategy, WalkState};

/// Always moves the same axis.
pub struct AlwaysAxis(pub usize);

impl Strategy for AlwaysAxis {
    fn choose_axis(&mut self, _: &WalkState) -> usize {
        self.0
    }

    fn name(&self) -> &str {
        "always-first"
    }
}

/// Cycles through the axes in order.
#[derive(Default)]
pub struct RoundRobin {
    next: usize,
}

impl Strategy for RoundRobin {
    fn choose_axis(&mut self, state: &WalkState) -> usize {
        let axis = self.next;
        self.next = (self.next + 1) % state.partition().dim();
        axis
    }

    fn name(&self) -> &str {
        "round-robin"
    }
}

pub struct UniformAxis {
    rng: StreamRng,
}

impl UniformAxis {
    pub fn new(rng: StreamRng) -> Self {
        Self { rng }
    }
}

impl Strategy for UniformAxis {
    fn choose_axis(&mut self, state: &WalkState) -> usize {
        self.rng.gen_range(0..state.partition().dim())
    }

    fn name(&self) -> &str {
        "uniform-random"
    }
}

/// Picks the axis with the most unvisited neighbours of the current site;
/// ties are broken uniformly.
pub struct GreedyFresh {
    rng: StreamRng,
}

impl GreedyFresh {
    pub fn new(rng: StreamRng) -> Self {
        Self { rng }
    }
}

impl Strategy for GreedyFresh {
    fn choose_axis(&mut self, state: &WalkState) -> usize {
        let pos = state.position();
        let d = state.partition().dim();
        let scores: Vec<usize> = (0..d)
            .map(|axis| {
                [1, -1]
                    .into_iter()
                    .filter_map(|delta| pos.shifted(axis, delta))
                    .filter(|s| state.visits_of(s).walk == 0)
                    .count()
            })
            .collect();
        let top = *scores.iter().max().unwrap();
        let best: Vec<usize> = (0..d).filter(|&a| scores[a] == top).collect();
        best[self.rng.gen_range(0..best.len())]
    }

    fn name(&self) -> &str {
        "greedy-fresh"
    }
}

/// Names of the built-in strategies as used in configs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    AlwaysFirst,
    RoundRobin,
    UniformRandom,
    GreedyFresh,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::AlwaysFirst,
        StrategyKind::RoundRobin,
        StrategyKind::UniformRandom,
        StrategyKind::GreedyFresh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::AlwaysFirst => "always-first",
            StrategyKind::RoundRobin => "round-robin",
            StrategyKind::UniformRandom => "uniform-random",
            StrategyKind::GreedyFresh => "greedy-fresh",
        }
    }

    /// Instantiates the strategy; `rng` is its private stream.
    pub fn build(&self, rng: StreamRng) -> Box<dyn Strategy + Send> {
        match self {
            StrategyKind::AlwaysFirst => Box::new(AlwaysAxis(0)),
            StrategyKind::RoundRobin => Box::new(RoundRobin::default()),
            StrategyKind::UniformRandom => Box::new(UniformAxis::new(rng)),
            StrategyKind::GreedyFresh => Box::new(GreedyFresh::new(rng)),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("strategies", format!("unknown strategy `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Environment;
    use crate::lattice::Partition;
    use crate::rng::seeded;

    #[test]
    fn round_robin_alternates() {
        let w = WalkState::new(Partition::new(&[1, 1]).unwrap(), Environment::Empty, 0).unwrap();
        let mut rr = RoundRobin::default();
        let picks: Vec<usize> = (0..5).map(|_| rr.choose_axis(&w)).collect();
        assert_eq!(picks, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn greedy_prefers_unvisited() {
        let mut w = WalkState::new(Partition::new(&[1, 1]).unwrap(), Environment::Empty, 0).unwrap();
        let mut g = GreedyFresh::new(seeded(1));
        // after one x-step, the x-axis has one visited neighbour (the origin)
        w.step_controlled(&mut AlwaysAxis(0)).unwrap();
        for _ in 0..20 {
            assert_eq!(g.choose_axis(&w), 1);
        }
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
            assert_eq!(k.build(seeded(0)).name(), k.as_str());
        }
        assert!("nope".parse::<StrategyKind>().is_err());
    }
}
