//! Exact laws of the walk at small horizons by exhaustive weighted path
//! enumeration. This is the ground truth every statistical test is held to.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Partition, Site};

/// Maximum number of weighted paths (or path pairs) an enumeration may visit.
pub const PATH_CUTOFF: u128 = 10_000_000;

/// Exact law of `S_n` as a map from sites to rational probabilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactDistribution {
    horizon: u64,
    entries: BTreeMap<Site, BigRational>,
}

impl ExactDistribution {
    fn from_numerators(horizon: u64, numerators: HashMap<Site, u128>, denominator: u128) -> Self {
        let den = BigInt::from(denominator);
        let entries = numerators
            .into_iter()
            .filter(|(_, num)| *num > 0)
            .map(|(site, num)| (site, BigRational::new(BigInt::from(num), den.clone())))
            .collect();
        Self { horizon, entries }
    }

    pub fn point_mass(site: Site, horizon: u64) -> Self {
        Self {
            horizon,
            entries: BTreeMap::from([(site, BigRational::one())]),
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn entries(&self) -> &BTreeMap<Site, BigRational> {
        &self.entries
    }

    pub fn probability(&self, site: &Site) -> BigRational {
        self.entries.get(site).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.entries.values().fold(BigRational::zero(), |acc, p| acc + p)
    }

    /// `sup_A |P(A) - Q(A)|`, computed exactly.
    pub fn total_variation(&self, other: &ExactDistribution) -> BigRational {
        let mut sum = BigRational::zero();
        for (site, p) in &self.entries {
            sum += (p - other.probability(site)).abs();
        }
        for (site, q) in &other.entries {
            if !self.entries.contains_key(site) {
                sum += q.clone();
            }
        }
        sum / BigRational::from_integer(BigInt::from(2))
    }

    /// Probabilities as floats, for comparison with empirical frequencies.
    pub fn to_f64_map(&self) -> BTreeMap<Site, f64> {
        self.entries
            .iter()
            .map(|(s, p)| (*s, ratio_to_f64(p)))
            .collect()
    }
}

/// Serialized as `{"horizon": n, "entries": {"(x,y)": "p/q", ...}}`.
impl Serialize for ExactDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Entries<'a>(&'a BTreeMap<Site, BigRational>);
        impl Serialize for Entries<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for (site, p) in self.0 {
                    map.serialize_entry(&site.to_string(), &format!("{}/{}", p.numer(), p.denom()))?;
                }
                map.end()
            }
        }
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("horizon", &self.horizon)?;
        map.serialize_entry("entries", &Entries(&self.entries))?;
        map.end()
    }
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn check_cutoff(paths: Option<u128>, what: &str) -> Result<()> {
    match paths {
        Some(p) if p <= PATH_CUTOFF => Ok(()),
        _ => Err(Error::Resource(format!(
            "{what} exceeds the enumeration cutoff of {PATH_CUTOFF} paths"
        ))),
    }
}

/// Visits every path `S_0, ..., S_n` of the walk with its probability
/// `numerator / denominator`; returns the common denominator.
///
/// Each step from a site with total visit count `k` moves block
/// `min(k, m)` by one of its `2 d_c` signed unit vectors, each with weight
/// `1 / (2 d_c)`. Visit counts are tracked by a plain list scan.
pub fn enumerate_paths<F>(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    visit: F,
) -> Result<u128>
where
    F: FnMut(&[Site], u128),
{
    match environment {
        Environment::Empty | Environment::Finite { .. } | Environment::Line { .. } => {}
        other => {
            return Err(Error::Unsupported(format!(
                "exact enumeration supports empty, finite and line environments, not {other:?}"
            )))
        }
    }
    environment.validate(partition)?;
    let horizon = u32::try_from(n).map_err(|_| Error::Resource(format!("horizon {n}")))?;
    check_cutoff(
        (partition.branching() as u128).checked_pow(horizon),
        &format!("{partition} at n = {n}"),
    )?;
    let lcm = partition
        .dims()
        .iter()
        .fold(1u128, |acc, &d| acc.lcm(&(2 * d as u128)));
    let denominator = lcm
        .checked_pow(horizon)
        .ok_or_else(|| Error::Resource(format!("weight denominator overflows at n = {n}")))?;

    let origin = Site::origin(partition.dim());
    let mut dfs = Dfs {
        partition,
        environment,
        horizon: n as usize,
        lcm,
        path: vec![origin],
        seen: vec![(origin, environment.pre_visits(partition, &origin) + 1)],
        visit,
    };
    dfs.descend(1);
    Ok(denominator)
}

struct Dfs<'a, F> {
    partition: &'a Partition,
    environment: &'a Environment,
    horizon: usize,
    lcm: u128,
    path: Vec<Site>,
    /// (site, total visit count) for every site reached so far.
    seen: Vec<(Site, u32)>,
    visit: F,
}

impl<F: FnMut(&[Site], u128)> Dfs<'_, F> {
    fn descend(&mut self, numerator: u128) {
        if self.path.len() == self.horizon + 1 {
            (self.visit)(&self.path, numerator);
            return;
        }
        let here = *self.path.last().unwrap();
        let count = self.seen.iter().find(|(s, _)| *s == here).unwrap().1;
        let block = (count as usize).min(self.partition.blocks()) - 1;
        let axes = self.partition.block_axes(block);
        let weight = numerator * (self.lcm / (2 * axes.len() as u128));
        for axis in axes {
            for delta in [1, -1] {
                let next = here.shifted(axis, delta).expect("small horizons cannot overflow");
                let undo = match self.seen.iter().position(|(s, _)| *s == next) {
                    Some(i) => {
                        self.seen[i].1 += 1;
                        Some(i)
                    }
                    None => {
                        let pre = self.environment.pre_visits(self.partition, &next);
                        self.seen.push((next, pre + 1));
                        None
                    }
                };
                self.path.push(next);
                self.descend(weight);
                self.path.pop();
                match undo {
                    Some(i) => self.seen[i].1 -= 1,
                    None => {
                        self.seen.pop();
                    }
                }
            }
        }
    }
}

/// Exact law of `S_n`.
pub fn exact_distribution(
    partition: &Partition,
    environment: &Environment,
    n: u64,
) -> Result<ExactDistribution> {
    let mut acc: HashMap<Site, u128> = HashMap::new();
    let den = enumerate_paths(partition, environment, n, |path, w| {
        *acc.entry(*path.last().unwrap()).or_default() += w;
    })?;
    Ok(ExactDistribution::from_numerators(n, acc, den))
}

/// Exact `P[0 in {S_from, ..., S_to}]`.
pub fn exact_window_probability(
    partition: &Partition,
    environment: &Environment,
    from: u64,
    to: u64,
) -> Result<BigRational> {
    if from > to {
        return Err(Error::Precondition(format!("window [{from}, {to}] is empty")));
    }
    let mut hits = 0u128;
    let den = enumerate_paths(partition, environment, to, |path, w| {
        if path[from as usize..].iter().any(Site::is_origin) {
            hits += w;
        }
    })?;
    Ok(BigRational::new(BigInt::from(hits), BigInt::from(den)))
}

/// Exact `P[0 in {S_n, ..., S_2n}]` from the empty environment.
pub fn exact_return_window(partition: &Partition, n: u64) -> Result<BigRational> {
    exact_window_probability(partition, &Environment::Empty, n, 2 * n)
}

/// Unit-step trajectories of length `len` of the simple random walk on
/// `Z^dim`, in odometer order.
fn srw_trajectories(dim: usize, len: u32) -> Vec<Vec<Site>> {
    let moves = 2 * dim;
    let count = moves.pow(len);
    let mut out = Vec::with_capacity(count);
    for mut code in 0..count {
        let mut pos = Site::origin(dim);
        let mut traj = Vec::with_capacity(len as usize + 1);
        traj.push(pos);
        for _ in 0..len {
            let k = code % moves;
            code /= moves;
            pos = pos.shifted(k / 2, if k % 2 == 0 { 1 } else { -1 }).unwrap();
            traj.push(pos);
        }
        out.push(traj);
    }
    out
}

/// Law of `S_n` built from two independent simple random walks `U` (on the
/// first block) and `V` (on the second): `S_0 = (U(0), V(0))` and
/// `S_k = (U(a_k), V(k - a_k))` with `a_k = #{S_0, ..., S_{k-1}}`.
///
/// Every pair of `U` paths of length `n` and `V` paths of length `n - 1` is
/// enumerated with equal weight; the composite position is computed from the
/// formula above, never from the step rule.
pub fn exact_reconstruction_distribution(
    partition: &Partition,
    n: u64,
) -> Result<ExactDistribution> {
    if partition.blocks() != 2 {
        return Err(Error::Unsupported(format!(
            "reconstruction needs exactly two blocks, {partition} has {}",
            partition.blocks()
        )));
    }
    let d = partition.dim();
    if n == 0 {
        return Ok(ExactDistribution::point_mass(Site::origin(d), 0));
    }
    let (d1, d2) = (partition.block_dim(0), partition.block_dim(1));
    let len = u32::try_from(n).map_err(|_| Error::Resource(format!("horizon {n}")))?;
    let pairs = (2 * d1 as u128)
        .checked_pow(len)
        .and_then(|u| (2 * d2 as u128).checked_pow(len - 1).and_then(|v| u.checked_mul(v)));
    check_cutoff(pairs, &format!("reconstruction of {partition} at n = {n}"))?;

    let us = srw_trajectories(d1, len);
    let vs = srw_trajectories(d2, len - 1);
    let compose = |u: &Site, v: &Site| {
        let mut c: Vec<i32> = u.coords().to_vec();
        c.extend_from_slice(v.coords());
        Site::from_coords(&c)
    };
    let mut counts: HashMap<Site, u128> = HashMap::new();
    let mut seen: Vec<Site> = Vec::with_capacity(len as usize + 1);
    for u in &us {
        for v in &vs {
            seen.clear();
            let mut s = compose(&u[0], &v[0]);
            seen.push(s);
            for k in 1..=len as usize {
                let a = seen.len();
                s = compose(&u[a], &v[k - a]);
                if !seen.contains(&s) {
                    seen.push(s);
                }
            }
            *counts.entry(s).or_default() += 1;
        }
    }
    Ok(ExactDistribution::from_numerators(n, counts, pairs.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(dims: &[u32]) -> Partition {
        Partition::new(dims).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn s(c: &[i32]) -> Site {
        Site::from_coords(c)
    }

    #[test]
    fn m11_two_steps() {
        let dist = exact_distribution(&p(&[1, 1]), &Environment::Empty, 2).unwrap();
        assert_eq!(dist.probability(&s(&[0, 0])), q(1, 2));
        assert_eq!(dist.probability(&s(&[2, 0])), q(1, 4));
        assert_eq!(dist.probability(&s(&[-2, 0])), q(1, 4));
        assert_eq!(dist.entries().len(), 3);
    }

    #[test]
    fn m22_two_steps_origin() {
        let dist = exact_distribution(&p(&[2, 2]), &Environment::Empty, 2).unwrap();
        assert_eq!(dist.probability(&Site::origin(4)), q(1, 4));
        assert_eq!(dist.total(), BigRational::one());
    }

    #[test]
    fn horizon_zero_is_point_mass() {
        for dims in [&[1, 1][..], &[2, 2], &[2, 1, 1], &[3]] {
            let part = p(dims);
            let dist = exact_distribution(&part, &Environment::Empty, 0).unwrap();
            assert_eq!(dist, ExactDistribution::point_mass(Site::origin(part.dim()), 0));
        }
    }

    #[test]
    fn return_windows() {
        assert_eq!(exact_return_window(&p(&[2, 2]), 0).unwrap(), BigRational::one());
        assert_eq!(exact_return_window(&p(&[2, 2]), 1).unwrap(), q(1, 4));
        assert_eq!(exact_return_window(&p(&[1, 1]), 1).unwrap(), q(1, 2));
    }

    #[test]
    fn cutoff_enforced() {
        assert!(exact_distribution(&p(&[2, 2]), &Environment::Empty, 11).is_ok());
        let err = exact_distribution(&p(&[2, 2]), &Environment::Empty, 12).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        let err = exact_return_window(&p(&[2, 2]), 6).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn trumpet_unsupported() {
        let err = exact_distribution(&p(&[1, 1]), &Environment::Trumpet { count: 1 }, 2).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn reconstruction_requires_two_blocks() {
        assert!(matches!(
            exact_reconstruction_distribution(&p(&[2, 1, 1]), 2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn reconstruction_first_step() {
        for dims in [[1u32, 1], [2, 2], [1, 2], [2, 1]] {
            let part = p(&dims);
            let a = exact_reconstruction_distribution(&part, 1).unwrap();
            let b = exact_distribution(&part, &Environment::Empty, 1).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.entries().len(), 2 * dims[0] as usize);
        }
    }

    #[test]
    fn line_environment_traps_first_coordinate() {
        let part = p(&[1, 1]);
        let env = Environment::line_through_origin(&part, 1);
        let dist = exact_distribution(&part, &env, 6).unwrap();
        assert!(dist.entries().keys().all(|s| s.get(0) == 0));
    }

    #[test]
    fn json_export() {
        let dist = exact_distribution(&p(&[1, 1]), &Environment::Empty, 2).unwrap();
        let v = serde_json::to_value(&dist).unwrap();
        assert_eq!(v["horizon"], 2);
        assert_eq!(v["entries"]["(0,0)"], "1/2");
        assert_eq!(v["entries"]["(2,0)"], "1/4");
    }

    #[test]
    fn total_variation_exact() {
        let a = exact_distribution(&p(&[1, 1]), &Environment::Empty, 2).unwrap();
        let b = ExactDistribution::point_mass(Site::origin(2), 2);
        assert_eq!(a.total_variation(&b), q(1, 2));
        assert_eq!(a.total_variation(&a), BigRational::zero());
    }
}
