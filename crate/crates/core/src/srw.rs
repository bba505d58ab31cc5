//! Two-dimensional simple random walk reference: local times, annulus
//! hitting, return windows and range, as used to bound the mixture walk.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::replicas::{digest, Replicas};
use crate::rng::{seeded, BitPool, StreamRng};
use crate::stats::{BernoulliTally, Estimate, MomentTally};

/// Nearest-neighbour walk on `Z^2` drawing two random bits per step.
pub struct Srw2 {
    pub x: i32,
    pub y: i32,
    rng: StreamRng,
    bits: BitPool,
}

impl Srw2 {
    pub fn new(start: (i32, i32), rng: StreamRng) -> Self {
        Self {
            x: start.0,
            y: start.1,
            rng,
            bits: BitPool::default(),
        }
    }

    /// Moves one step; callers keep horizons below `2^31` from the origin.
    #[inline]
    pub fn step(&mut self) {
        match self.bits.below(&mut self.rng, 4) {
            0 => self.x += 1,
            1 => self.x -= 1,
            2 => self.y += 1,
            _ => self.y -= 1,
        }
    }

    #[inline]
    pub fn at_origin(&self) -> bool {
        self.x == 0 && self.y == 0
    }

    #[inline]
    pub fn sup_norm(&self) -> u32 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    #[inline]
    pub fn key(&self) -> u64 {
        (self.x as u32 as u64) << 32 | self.y as u32 as u64
    }
}

fn check_horizon(steps: u64) -> Result<()> {
    if steps >= 1 << 31 {
        return Err(Error::Resource(format!("{steps} steps exceed the 32-bit lattice")));
    }
    Ok(())
}

/// Trajectory `U_0, ..., U_n` from `start` (the origin by default).
pub fn run_srw2d(seed: u64, n: u64, start: Option<Site>) -> Result<Vec<Site>> {
    run_srw2d_with(seeded(seed), n, start)
}

pub fn run_srw2d_with(rng: StreamRng, n: u64, start: Option<Site>) -> Result<Vec<Site>> {
    check_horizon(n)?;
    let start = start.unwrap_or_else(|| Site::origin(2));
    if start.dim() != 2 {
        return Err(Error::config("start", "start site must be two-dimensional"));
    }
    let mut walk = Srw2::new((start.get(0), start.get(1)), rng);
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(start);
    for _ in 0..n {
        walk.step();
        out.push(Site::from_coords(&[walk.x, walk.y]));
    }
    Ok(out)
}

/// Visit counts `N_n(x)` over times `0..=n` and their maximum `N*_n`.
#[derive(Clone, Debug)]
pub struct LocalTimeProfile {
    pub counts: FxHashMap<Site, u64>,
    pub max: u64,
    /// Smallest site (in lexicographic order) attaining the maximum.
    pub argmax: Site,
}

pub fn max_local_time(trajectory: &[Site]) -> Result<LocalTimeProfile> {
    if trajectory.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let mut counts: FxHashMap<Site, u64> = FxHashMap::default();
    for s in trajectory {
        *counts.entry(*s).or_default() += 1;
    }
    let (argmax, max) = counts
        .iter()
        .map(|(s, c)| (*s, *c))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    Ok(LocalTimeProfile { counts, max, argmax })
}

/// The sup-norm shell `r < |u| <= r + 1` contains exactly the norm `floor(r) + 1`.
pub fn annulus_shell(r: f64) -> u32 {
    r.max(0.0).floor() as u32 + 1
}

/// First `k > 0` with `r < |U_k| <= r + 1` (sup norm), if within the trajectory.
pub fn tau_annulus(trajectory: &[Site], r: f64) -> Option<u64> {
    let shell = annulus_shell(r);
    trajectory
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, s)| s.sup_norm() == shell)
        .map(|(k, _)| k as u64)
}

#[derive(Serialize)]
struct Params<'a> {
    quantity: &'a str,
    a: u64,
    b: u64,
    start: Option<&'a Site>,
    outer: Option<f64>,
}

fn params_digest(quantity: &str, a: u64, b: u64) -> String {
    digest(&Params {
        quantity,
        a,
        b,
        start: None,
        outer: None,
    })
}

/// Estimate of `P_x[tau_0 < tau_R]`: started at `x`, does the walk reach
/// sup norm 1 before the shell of radius `R`?
pub fn hitting_before_annulus_tally(
    start: &Site,
    outer: f64,
    replicas: &Replicas,
) -> Result<BernoulliTally> {
    if start.dim() != 2 {
        return Err(Error::config("start", "start site must be two-dimensional"));
    }
    let norm = start.sup_norm();
    if norm == 0 {
        return Err(Error::Precondition("start site must differ from the origin".into()));
    }
    if (norm as f64) > outer {
        return Err(Error::Precondition(format!("|x| = {norm} exceeds R = {outer}")));
    }
    let shell = annulus_shell(outer);
    let (x, y) = (start.get(0), start.get(1));
    replicas.fold(|_, rng| {
        let mut w = Srw2::new((x, y), rng);
        let hit = loop {
            w.step();
            let r = w.sup_norm();
            if r == 1 {
                break true;
            }
            if r == shell {
                break false;
            }
        };
        let mut t = BernoulliTally::default();
        t.push(hit);
        Ok(t)
    })
}

pub fn estimate_hitting_before_annulus(
    start: &Site,
    outer: f64,
    replicas: &Replicas,
) -> Result<Estimate> {
    let tally = hitting_before_annulus_tally(start, outer, replicas)?;
    let d = digest(&Params {
        quantity: "hitting-before-annulus",
        a: 0,
        b: 0,
        start: Some(start),
        outer: Some(outer),
    });
    Ok(tally.estimate(replicas.master_seed, &d))
}

/// Tally for `P[0 in {U(t), ..., U(2n)}]`.
pub fn return_window_srw_tally(t: u64, n: u64, replicas: &Replicas) -> Result<BernoulliTally> {
    let end = n
        .checked_mul(2)
        .ok_or_else(|| Error::Resource(format!("2n overflows for n = {n}")))?;
    if t > end {
        return Err(Error::Precondition(format!("t = {t} exceeds 2n = {end}")));
    }
    check_horizon(end)?;
    replicas.fold(|_, rng| {
        let mut w = Srw2::new((0, 0), rng);
        let mut hit = t == 0;
        for k in 1..=end {
            if hit {
                break;
            }
            w.step();
            hit = k >= t && w.at_origin();
        }
        let mut tally = BernoulliTally::default();
        tally.push(hit);
        Ok(tally)
    })
}

pub fn estimate_return_window_srw(t: u64, n: u64, replicas: &Replicas) -> Result<Estimate> {
    let tally = return_window_srw_tally(t, n, replicas)?;
    Ok(tally.estimate(replicas.master_seed, &params_digest("srw-return-window", t, n)))
}

/// Tally of the range `r_{n,U} = #{U_0, ..., U_n}`.
pub fn range_srw_tally(n: u64, replicas: &Replicas) -> Result<MomentTally> {
    if n == 0 {
        return Err(Error::Precondition("range needs n >= 1".into()));
    }
    check_horizon(n)?;
    replicas.fold(|_, rng| {
        let mut w = Srw2::new((0, 0), rng);
        let mut seen: FxHashSet<u64> = FxHashSet::default();
        seen.insert(w.key());
        for _ in 0..n {
            w.step();
            seen.insert(w.key());
        }
        let mut t = MomentTally::default();
        t.push(seen.len() as i64);
        Ok(t)
    })
}

pub fn range_size_srw(n: u64, replicas: &Replicas) -> Result<Estimate> {
    let tally = range_srw_tally(n, replicas)?;
    Ok(tally.estimate(1.0, replicas.master_seed, &params_digest("srw-range", n, 0)))
}

/// Tally of the maximal local time `N*_n` over times `0..=n`.
pub fn max_local_time_tally(n: u64, replicas: &Replicas) -> Result<MomentTally> {
    check_horizon(n)?;
    replicas.fold(|_, rng| {
        let mut w = Srw2::new((0, 0), rng);
        let mut counts: FxHashMap<u64, u32> = FxHashMap::default();
        counts.insert(w.key(), 1);
        let mut best = 1u32;
        for _ in 0..n {
            w.step();
            let c = counts.entry(w.key()).or_insert(0);
            *c += 1;
            best = best.max(*c);
        }
        let mut t = MomentTally::default();
        t.push(best as i64);
        Ok(t)
    })
}

pub fn estimate_max_local_time(n: u64, replicas: &Replicas) -> Result<Estimate> {
    let tally = max_local_time_tally(n, replicas)?;
    Ok(tally.estimate(1.0, replicas.master_seed, &params_digest("srw-max-local-time", n, 0)))
}
