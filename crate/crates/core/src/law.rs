//! Finite symmetric jump laws on `Z^d`.

use num_integer::Integer;
use num_rational::Ratio;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::lattice::Site;

/// A symmetric probability law with finite support and rational weights.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLaw {
    support: Vec<(Site, Ratio<u64>)>,
    /// Cumulative integer weights over the common denominator.
    cumulative: Vec<u64>,
    denominator: u64,
}

impl StepLaw {
    pub fn new(support: Vec<(Site, Ratio<u64>)>) -> Result<Self> {
        let Some(first) = support.first() else {
            return Err(Error::config("law", "support is empty"));
        };
        let dim = first.0.dim();
        let mut denominator = 1u64;
        for (i, (site, w)) in support.iter().enumerate() {
            if site.dim() != dim {
                return Err(Error::config(
                    format!("law[{i}]"),
                    "offsets must share one dimension",
                ));
            }
            if *w.numer() == 0 {
                return Err(Error::config(format!("law[{i}]"), "weights must be positive"));
            }
            if support[..i].iter().any(|(s, _)| s == site) {
                return Err(Error::config(format!("law[{i}]"), format!("duplicate offset {site}")));
            }
            denominator = denominator.lcm(w.denom());
        }
        let mut cumulative = Vec::with_capacity(support.len());
        let mut acc = 0u64;
        for (_, w) in &support {
            acc = acc
                .checked_add(w.numer() * (denominator / w.denom()))
                .ok_or_else(|| Error::config("law", "weights overflow"))?;
            cumulative.push(acc);
        }
        if acc != denominator {
            return Err(Error::config("law", format!("weights sum to {acc}/{denominator}, not 1")));
        }
        for (site, w) in &support {
            let mirror = site.negated();
            if !support.iter().any(|(s, v)| *s == mirror && v == w) {
                return Err(Error::config(
                    "law",
                    format!("not symmetric: {site} has no mirror {mirror} of equal weight"),
                ));
            }
        }
        Ok(Self {
            support,
            cumulative,
            denominator,
        })
    }

    /// Uniform law over the given offsets.
    pub fn uniform(offsets: &[Site]) -> Result<Self> {
        let w = Ratio::new(1, offsets.len().max(1) as u64);
        Self::new(offsets.iter().map(|s| (*s, w)).collect())
    }

    /// Uniform law over `±e_i` for each listed axis.
    pub fn unit_moves(dim: usize, axes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut offsets = Vec::new();
        for axis in axes {
            for delta in [1, -1] {
                let mut s = Site::origin(dim);
                s.set(axis, delta);
                offsets.push(s);
            }
        }
        Self::uniform(&offsets)
    }

    pub fn dim(&self) -> usize {
        self.support[0].0.dim()
    }

    pub fn support(&self) -> &[(Site, Ratio<u64>)] {
        &self.support
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> &Site {
        let u = rng.gen_range(0..self.denominator);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        &self.support[idx].0
    }

    /// Whether the support generates all of `Z^d` as a group.
    ///
    /// Integer row reduction to echelon form; the lattice is all of `Z^d`
    /// exactly when it has full rank and every pivot is a unit.
    pub fn generates_full_lattice(&self) -> bool {
        let d = self.dim();
        let mut rows: Vec<Vec<i128>> = self
            .support
            .iter()
            .map(|(s, _)| s.coords().iter().map(|&c| c as i128).collect())
            .collect();
        let mut pivot_row = 0;
        for col in 0..d {
            loop {
                let best = (pivot_row..rows.len())
                    .filter(|&r| rows[r][col] != 0)
                    .min_by_key(|&r| rows[r][col].abs());
                let Some(best) = best else { break };
                rows.swap(pivot_row, best);
                let mut done = true;
                for r in pivot_row + 1..rows.len() {
                    if rows[r][col] != 0 {
                        let q = rows[r][col].div_euclid(rows[pivot_row][col]);
                        for c in col..d {
                            rows[r][c] -= q * rows[pivot_row][c];
                        }
                        if rows[r][col] != 0 {
                            done = false;
                        }
                    }
                }
                if done {
                    break;
                }
            }
            if pivot_row < rows.len() && rows[pivot_row][col] != 0 {
                if rows[pivot_row][col].abs() != 1 {
                    return false;
                }
                pivot_row += 1;
            } else {
                return false;
            }
        }
        true
    }
}
