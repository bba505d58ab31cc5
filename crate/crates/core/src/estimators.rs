//! Monte Carlo estimators for the mixture walk: return windows, range
//! statistics, origin returns, range shape, controlled-walk strategies and
//! the time-change decomposition test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Partition, Site};
use crate::replicas::{digest, Mergeable, Replicas};
use crate::rng::{BitPool, StreamRng};
use crate::stats::{chi_square_two_sample, BernoulliTally, ChiSquareTest, Estimate, MomentTally, FIXED_POINT};
use crate::strategy::StrategyKind;
use crate::walk::{Strategy, VisitMap, WalkState};

#[derive(Serialize)]
struct Params<'a> {
    quantity: &'a str,
    partition: &'a Partition,
    environment: &'a Environment,
    n: u64,
    extra: Option<String>,
}

fn params_digest(
    quantity: &str,
    partition: &Partition,
    environment: &Environment,
    n: u64,
    extra: Option<String>,
) -> String {
    digest(&Params {
        quantity,
        partition,
        environment,
        n,
        extra,
    })
}

// ---------------------------------------------------------------- return window

/// Tally of `P[0 in {S_n, ..., S_2n}]`.
pub fn return_window_tally(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<BernoulliTally> {
    environment.validate(partition)?;
    let end = n
        .checked_mul(2)
        .ok_or_else(|| Error::Resource(format!("2n overflows for n = {n}")))?;
    replicas.fold(|_, rng| {
        let mut walk = WalkState::with_rng(partition.clone(), environment.clone(), rng)?;
        let mut hit = n == 0;
        while !hit && walk.time() < end {
            walk.step()?;
            hit = walk.time() >= n && walk.position().is_origin();
        }
        let mut t = BernoulliTally::default();
        t.push(hit);
        Ok(t)
    })
}

/// Bernoulli estimate with a Wilson 95% interval.
pub fn estimate_return_window(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<Estimate> {
    let tally = return_window_tally(partition, environment, n, replicas)?;
    let d = params_digest("return-window", partition, environment, n, None);
    Ok(tally.estimate(replicas.master_seed, &d))
}

// ---------------------------------------------------------------- range statistics

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeTally {
    pub ranges: MomentTally,
    /// Replicas with `r_n > 99 n / 100`.
    pub upper_violations: u64,
    /// Replicas with `r_n < n / (C ln n)^2`.
    pub lower_violations: u64,
}

impl Mergeable for RangeTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(self, o: Self) -> Self {
        Self {
            ranges: self.ranges.merge(o.ranges),
            upper_violations: self.upper_violations + o.upper_violations,
            lower_violations: self.lower_violations + o.lower_violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeStats {
    /// Mean of `r_n / n`.
    pub mean_ratio: Estimate,
    pub min: u64,
    pub max: u64,
    pub upper_violations: u64,
    pub lower_violations: u64,
    pub bound_c: f64,
}

pub fn lower_range_bound(n: u64, bound_c: f64) -> f64 {
    n as f64 / (bound_c * (n as f64).ln()).powi(2)
}

pub fn range_tally(
    partition: &Partition,
    n: u64,
    bound_c: f64,
    replicas: &Replicas,
) -> Result<RangeTally> {
    if n < 2 {
        return Err(Error::Precondition(format!("range bounds need n >= 2, got {n}")));
    }
    if bound_c.is_nan() || bound_c <= 0.0 {
        return Err(Error::config("bound_c", "must be > 0"));
    }
    let lower = lower_range_bound(n, bound_c);
    replicas.fold(|_, rng| {
        let mut walk = WalkState::with_rng(partition.clone(), Environment::Empty, rng)?;
        walk.advance_by(n)?;
        let r = walk.range();
        let mut t = RangeTally::default();
        t.ranges.push(r as i64);
        t.upper_violations += (100 * r > 99 * n) as u64;
        t.lower_violations += ((r as f64) < lower) as u64;
        Ok(t)
    })
}

impl RangeTally {
    pub fn finish(&self, n: u64, bound_c: f64, master_seed: u64, digest: &str) -> RangeStats {
        RangeStats {
            mean_ratio: self.ranges.estimate(n as f64, master_seed, digest),
            min: self.ranges.min as u64,
            max: self.ranges.max as u64,
            upper_violations: self.upper_violations,
            lower_violations: self.lower_violations,
            bound_c,
        }
    }
}

pub fn estimate_range_stats(
    partition: &Partition,
    n: u64,
    bound_c: f64,
    replicas: &Replicas,
) -> Result<RangeStats> {
    let tally = range_tally(partition, n, bound_c, replicas)?;
    let d = params_digest(
        "range-stats",
        partition,
        &Environment::Empty,
        n,
        Some(format!("C={bound_c}")),
    );
    Ok(tally.finish(n, bound_c, replicas.master_seed, &d))
}

// ---------------------------------------------------------------- origin returns

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnsTally {
    /// `#{k in [1, n] : S_k = 0}` per replica.
    pub total: MomentTally,
    /// Returns with `k > n / 2`.
    pub late: MomentTally,
    /// Replicas by total return count.
    pub histogram: BTreeMap<u64, u64>,
    /// Returns at odd times (impossible from the empty environment).
    pub odd_time_returns: u64,
}

impl Mergeable for ReturnsTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(mut self, o: Self) -> Self {
        self.total = self.total.merge(o.total);
        self.late = self.late.merge(o.late);
        for (k, v) in o.histogram {
            *self.histogram.entry(k).or_default() += v;
        }
        self.odd_time_returns += o.odd_time_returns;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnsSummary {
    pub mean: Estimate,
    pub late_mean: Estimate,
    pub histogram: BTreeMap<u64, u64>,
    pub odd_time_returns: u64,
}

impl ReturnsTally {
    fn record(&mut self, n: u64, return_times: impl Iterator<Item = u64>) {
        let (mut total, mut late) = (0i64, 0i64);
        for k in return_times {
            total += 1;
            late += (2 * k > n) as i64;
            self.odd_time_returns += k % 2;
        }
        self.total.push(total);
        self.late.push(late);
        *self.histogram.entry(total as u64).or_default() += 1;
    }

    pub fn finish(&self, master_seed: u64, digest: &str) -> ReturnsSummary {
        ReturnsSummary {
            mean: self.total.estimate(1.0, master_seed, digest),
            late_mean: self.late.estimate(1.0, master_seed, digest),
            histogram: self.histogram.clone(),
            odd_time_returns: self.odd_time_returns,
        }
    }
}

/// Simple random walk on `Z^d`: a one-block partition ignores visit counts.
struct FreeWalk {
    pos: Site,
    moves: u32,
    rng: StreamRng,
    bits: BitPool,
}

impl FreeWalk {
    fn step(&mut self) -> Result<()> {
        let k = self.bits.below(&mut self.rng, self.moves);
        let axis = (k >> 1) as usize;
        self.pos = self
            .pos
            .shifted(axis, if k & 1 == 0 { 1 } else { -1 })
            .ok_or(Error::Overflow { axis, time: 0 })?;
        Ok(())
    }
}

pub fn returns_tally(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<ReturnsTally> {
    if n == 0 {
        return Err(Error::Precondition("returns need n >= 1".into()));
    }
    environment.validate(partition)?;
    let memoryless = partition.blocks() == 1 && environment.is_empty();
    replicas.fold(|_, rng| {
        let mut times = Vec::new();
        if memoryless {
            let mut w = FreeWalk {
                pos: Site::origin(partition.dim()),
                moves: 2 * partition.dim() as u32,
                rng,
                bits: BitPool::default(),
            };
            for k in 1..=n {
                w.step()?;
                if w.pos.is_origin() {
                    times.push(k);
                }
            }
        } else {
            let mut walk = WalkState::with_rng(partition.clone(), environment.clone(), rng)?;
            for k in 1..=n {
                walk.step()?;
                if walk.position().is_origin() {
                    times.push(k);
                }
            }
        }
        let mut t = ReturnsTally::default();
        t.record(n, times.into_iter());
        Ok(t)
    })
}

pub fn estimate_returns_to_origin(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<ReturnsSummary> {
    let tally = returns_tally(partition, environment, n, replicas)?;
    let d = params_digest("returns", partition, environment, n, None);
    Ok(tally.finish(replicas.master_seed, &d))
}

// ---------------------------------------------------------------- range shape

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeTally {
    /// `W_n / H_n` in fixed point, over replicas with `H_n > 0`.
    pub ratio: MomentTally,
    /// Replicas whose range has zero vertical extent.
    pub h_zero: u64,
}

impl Mergeable for ShapeTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(self, o: Self) -> Self {
        Self {
            ratio: self.ratio.merge(o.ratio),
            h_zero: self.h_zero + o.h_zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRatio {
    /// Mean of `W_n / H_n`; `None` when every replica had `H_n = 0`.
    pub ratio: Option<Estimate>,
    pub h_zero: u64,
    pub replicas: u64,
}

impl ShapeTally {
    pub fn finish(&self, master_seed: u64, digest: &str) -> ShapeRatio {
        ShapeRatio {
            ratio: (self.ratio.count > 0)
                .then(|| self.ratio.estimate(FIXED_POINT, master_seed, digest)),
            h_zero: self.h_zero,
            replicas: self.ratio.count + self.h_zero,
        }
    }
}

pub fn shape_tally(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<ShapeTally> {
    if partition.dims() != [1, 1] {
        return Err(Error::config(
            "partition",
            format!("shape ratio is defined for M(1,1), got {partition}"),
        ));
    }
    environment.validate(partition)?;
    replicas.fold(|_, rng| {
        let mut walk = WalkState::with_rng(partition.clone(), environment.clone(), rng)?;
        walk.advance_by(n)?;
        let bb = walk.bounding_box();
        let mut t = ShapeTally::default();
        match bb.width(1) {
            0 => t.h_zero += 1,
            h => t.ratio.push_real(bb.width(0) as f64 / h as f64),
        }
        Ok(t)
    })
}

pub fn estimate_shape_ratio(
    partition: &Partition,
    environment: &Environment,
    n: u64,
    replicas: &Replicas,
) -> Result<ShapeRatio> {
    let tally = shape_tally(partition, environment, n, replicas)?;
    let d = params_digest("shape", partition, environment, n, None);
    Ok(tally.finish(replicas.master_seed, &d))
}

// ---------------------------------------------------------------- strategies

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub strategy: String,
    /// `E[r_n]`.
    pub range: Estimate,
    /// `E[r_n] / n` (equal to `E[r_n]` when `n = 0`).
    pub range_per_step: Estimate,
}

/// Tally of `r_n` under the controlled walk in dimension `d`. The strategy
/// for replica `i` is built from an independent sub-stream.
pub fn strategy_tally<F>(factory: F, d: usize, n: u64, replicas: &Replicas) -> Result<MomentTally>
where
    F: Fn(StreamRng) -> Box<dyn Strategy + Send> + Sync + Send,
{
    let partition = Partition::new(&[d as u32])
        .map_err(|_| Error::config("dimension", format!("d = {d} outside 1..=8")))?;
    let strategy_streams = replicas.substream(1);
    replicas.fold(|i, rng| {
        let mut strategy = factory(strategy_streams.rng(i));
        let mut walk = WalkState::with_rng(partition.clone(), Environment::Empty, rng)?;
        for _ in 0..n {
            walk.step_controlled(strategy.as_mut())?;
        }
        let mut t = MomentTally::default();
        t.push(walk.range() as i64);
        Ok(t)
    })
}

pub fn finish_strategy(name: &str, tally: &MomentTally, n: u64, master_seed: u64, digest: &str) -> StrategyScore {
    let range = tally.estimate(1.0, master_seed, digest);
    StrategyScore {
        strategy: name.to_string(),
        range_per_step: range.scaled(1.0 / n.max(1) as f64),
        range,
    }
}

pub fn evaluate_strategy(kind: StrategyKind, d: usize, n: u64, replicas: &Replicas) -> Result<StrategyScore> {
    let tally = strategy_tally(|rng| kind.build(rng), d, n, replicas)?;
    let partition = Partition::new(&[d as u32])?;
    let dg = params_digest("strategy", &partition, &Environment::Empty, n, Some(kind.to_string()));
    Ok(finish_strategy(kind.as_str(), &tally, n, replicas.master_seed, &dg))
}

// ---------------------------------------------------------------- decomposition test

/// Upper edges of the squared-norm bins (relative to `n`) per block.
const SHELL_EDGES: [f64; 7] = [0.05, 0.15, 0.3, 0.5, 0.8, 1.2, 2.0];
const SHELLS: usize = SHELL_EDGES.len() + 1;

/// Coarse cell of `S_n`: coordinate sign pattern times, for each block, the
/// bin of its squared norm divided by `n`.
pub fn coarse_cell(site: &Site, partition: &Partition, n: u64) -> usize {
    let mut cell = 0usize;
    for &c in site.coords() {
        cell = cell * 2 + (c >= 0) as usize;
    }
    for b in 0..partition.blocks() {
        let sq: u64 = partition
            .block_axes(b)
            .map(|a| (site.get(a) as i64 * site.get(a) as i64) as u64)
            .sum();
        let rel = sq as f64 / n.max(1) as f64;
        let bin = SHELL_EDGES.iter().take_while(|&&e| rel >= e).count();
        cell = cell * SHELLS + bin;
    }
    cell
}

pub fn cell_count(partition: &Partition) -> usize {
    (1usize << partition.dim()) * SHELLS.pow(partition.blocks() as u32)
}

/// Cell histograms of `S_n` under the direct dynamics and under the
/// reconstruction from two independent walks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionTally {
    pub direct: Vec<u64>,
    pub reconstructed: Vec<u64>,
}

impl Mergeable for DecompositionTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(self, o: Self) -> Self {
        fn add(a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
            if a.is_empty() {
                return b;
            }
            if b.is_empty() {
                return a;
            }
            a.into_iter().zip(b).map(|(x, y)| x + y).collect()
        }
        Self {
            direct: add(self.direct, o.direct),
            reconstructed: add(self.reconstructed, o.reconstructed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub test: ChiSquareTest,
    pub replicas: u64,
    pub inverted: bool,
}

impl DecompositionTally {
    pub fn finish(&self, inverted: bool) -> Result<DecompositionReport> {
        Ok(DecompositionReport {
            test: chi_square_two_sample(&self.direct, &self.reconstructed)?,
            replicas: self.direct.iter().sum(),
            inverted,
        })
    }
}

/// `S_n` built from independent walks `U` and `V`: the first block takes
/// the next `U` increment after each fresh arrival, the second block the
/// next `V` increment otherwise (reversed when `inverted`).
pub fn reconstruct_position(
    partition: &Partition,
    n: u64,
    u_rng: StreamRng,
    v_rng: StreamRng,
    inverted: bool,
) -> Result<Site> {
    let d = partition.dim();
    let (d1, d2) = (partition.block_dim(0), partition.block_dim(1));
    let mut u = FreeWalk {
        pos: Site::origin(d1),
        moves: 2 * d1 as u32,
        rng: u_rng,
        bits: BitPool::default(),
    };
    let mut v = FreeWalk {
        pos: Site::origin(d2),
        moves: 2 * d2 as u32,
        rng: v_rng,
        bits: BitPool::default(),
    };
    let mut visits = VisitMap::new(d);
    let mut site = Site::origin(d);
    let mut fresh = visits.arrive(&site, || 0).1;
    for _ in 0..n {
        if fresh != inverted {
            u.step()?;
        } else {
            v.step()?;
        }
        for (i, &c) in u.pos.coords().iter().chain(v.pos.coords()).enumerate() {
            site.set(i, c);
        }
        fresh = visits.arrive(&site, || 0).1;
    }
    debug_assert_eq!(site.dim(), d2 + d1);
    Ok(site)
}

pub fn decomposition_tally(
    partition: &Partition,
    n: u64,
    inverted: bool,
    replicas: &Replicas,
) -> Result<DecompositionTally> {
    if partition.blocks() != 2 {
        return Err(Error::config(
            "partition",
            format!("decomposition test needs two blocks, got {partition}"),
        ));
    }
    let cells = cell_count(partition);
    let (direct, u_streams, v_streams) = (
        replicas.substream(0),
        replicas.substream(1),
        replicas.substream(2),
    );
    replicas.fold(|i, _| {
        let mut walk = WalkState::with_rng(partition.clone(), Environment::Empty, direct.rng(i))?;
        walk.advance_by(n)?;
        let rebuilt = reconstruct_position(partition, n, u_streams.rng(i), v_streams.rng(i), inverted)?;
        let mut t = DecompositionTally {
            direct: vec![0; cells],
            reconstructed: vec![0; cells],
        };
        t.direct[coarse_cell(&walk.position(), partition, n)] += 1;
        t.reconstructed[coarse_cell(&rebuilt, partition, n)] += 1;
        Ok(t)
    })
}

/// Two-sample chi-square test of the direct law of `S_n` against the
/// reconstruction, over coarse cells.
pub fn decomposition_consistency_test(
    partition: &Partition,
    n: u64,
    inverted: bool,
    replicas: &Replicas,
) -> Result<DecompositionReport> {
    decomposition_tally(partition, n, inverted, replicas)?.finish(inverted)
}
