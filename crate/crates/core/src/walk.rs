//! The mixture walk `M(d_1, ..., d_m)` and its single-replica step engine.

use rustc_hash::FxHashMap;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Partition, Site, MAX_DIM};
use crate::law::StepLaw;
use crate::rng::{seeded, BitPool, StreamRng};

/// Visit counts of one site, split by origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Visits {
    /// Arrivals of the walk itself (time 0 counts as an arrival at the origin).
    pub walk: u32,
    /// Pre-visits contributed by the initial environment.
    pub env: u32,
}

impl Visits {
    #[inline]
    pub fn total(&self) -> u32 {
        self.walk + self.env
    }
}

#[derive(Clone, Debug)]
enum Store {
    Packed(FxHashMap<u128, Visits>),
    Wide(FxHashMap<[i32; MAX_DIM], Visits>),
}

/// Site -> visit counts; the walk's entire interaction state.
#[derive(Clone, Debug)]
pub struct VisitMap {
    dim: usize,
    store: Store,
}

impl VisitMap {
    pub fn new(dim: usize) -> Self {
        let store = if dim <= 4 {
            Store::Packed(FxHashMap::default())
        } else {
            Store::Wide(FxHashMap::default())
        };
        Self { dim, store }
    }

    pub fn get(&self, site: &Site) -> Option<Visits> {
        match &self.store {
            Store::Packed(m) => m.get(&site.packed()).copied(),
            Store::Wide(m) => m.get(&site.raw()).copied(),
        }
    }

    fn insert(&mut self, site: &Site, v: Visits) {
        match &mut self.store {
            Store::Packed(m) => {
                m.insert(site.packed(), v);
            }
            Store::Wide(m) => {
                m.insert(site.raw(), v);
            }
        }
    }

    /// Records a walk arrival at `site`. `pre` supplies the environment count
    /// for sites never seen before. Returns the updated counts and whether
    /// this is the walk's first arrival there.
    #[inline]
    pub fn arrive(&mut self, site: &Site, pre: impl FnOnce() -> u32) -> (Visits, bool) {
        let slot = match &mut self.store {
            Store::Packed(m) => m.entry(site.packed()).or_insert_with(|| Visits {
                walk: 0,
                env: pre(),
            }),
            Store::Wide(m) => m.entry(site.raw()).or_insert_with(|| Visits {
                walk: 0,
                env: pre(),
            }),
        };
        let first = slot.walk == 0;
        slot.walk += 1;
        (*slot, first)
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Packed(m) => m.len(),
            Store::Wide(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        match &mut self.store {
            Store::Packed(m) => m.clear(),
            Store::Wide(m) => m.clear(),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = (Site, Visits)> + '_> {
        let dim = self.dim;
        match &self.store {
            Store::Packed(m) => Box::new(m.iter().map(move |(k, v)| {
                let coords: Vec<i32> = (0..dim).map(|i| (k >> (32 * i)) as u32 as i32).collect();
                (Site::from_coords(&coords), *v)
            })),
            Store::Wide(m) => {
                Box::new(m.iter().map(move |(k, v)| (Site::from_coords(&k[..dim]), *v)))
            }
        }
    }
}

/// Block (zero-based) that moves on the `visit_count`-th visit to a site:
/// block `i` on visit `i + 1`, the last block from visit `m` on.
pub fn component_for_visit(visit_count: u32, partition: &Partition) -> Result<usize> {
    if visit_count == 0 {
        return Err(Error::Invariant(
            "stepping from a site with zero recorded visits".into(),
        ));
    }
    Ok((visit_count as usize).min(partition.blocks()) - 1)
}

/// Per-axis extents of the sites the walk has visited.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: Vec<i32>,
    pub max: Vec<i32>,
}

impl BoundingBox {
    pub fn width(&self, axis: usize) -> u64 {
        (self.max[axis] as i64 - self.min[axis] as i64) as u64
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.coords()
            .iter()
            .enumerate()
            .all(|(a, &c)| self.min[a] <= c && c <= self.max[a])
    }
}

/// Adaptive rule that picks which coordinate performs a `±1` step.
pub trait Strategy {
    /// Zero-based axis to move, given read-only access to the walk.
    fn choose_axis(&mut self, state: &WalkState) -> usize;

    fn name(&self) -> &str;
}

/// What [`WalkState::run`] should record besides the final state.
#[derive(Clone, Debug, Default)]
pub struct Recording {
    /// Inclusive absolute time window `[a, b]` of positions to keep.
    pub window: Option<(u64, u64)>,
    /// Departure times of steps taken from fresh sites.
    pub fresh_times: bool,
    /// Times `k >= 1` at which the walk sits at the origin.
    pub origin_returns: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub trajectory: Vec<Site>,
    pub fresh_times: Vec<u64>,
    pub origin_returns: Vec<u64>,
}

#[derive(Clone, Debug)]
struct BlockMoves {
    first_axis: usize,
    moves: u32,
}

/// State of a single walk: position, clock, visit map and random stream.
#[derive(Clone, Debug)]
pub struct WalkState {
    partition: Partition,
    environment: Environment,
    blocks: Vec<BlockMoves>,
    position: Site,
    current: Visits,
    time: u64,
    visits: VisitMap,
    range: u64,
    fresh_steps: u64,
    bbox_min: [i32; MAX_DIM],
    bbox_max: [i32; MAX_DIM],
    rng: StreamRng,
    bits: BitPool,
}

impl WalkState {
    pub fn new(partition: Partition, environment: Environment, seed: u64) -> Result<Self> {
        Self::with_rng(partition, environment, seeded(seed))
    }

    pub fn with_rng(partition: Partition, environment: Environment, rng: StreamRng) -> Result<Self> {
        environment.validate(&partition)?;
        let dim = partition.dim();
        let blocks = (0..partition.blocks())
            .map(|b| BlockMoves {
                first_axis: partition.block_axes(b).start,
                moves: 2 * partition.block_dim(b) as u32,
            })
            .collect();
        let mut visits = VisitMap::new(dim);
        if let Environment::Finite { sites } = &environment {
            for pv in sites {
                visits.insert(&pv.site, Visits { walk: 0, env: pv.count });
            }
        }
        let origin = Site::origin(dim);
        let mut state = Self {
            partition,
            environment,
            blocks,
            position: origin,
            current: Visits::default(),
            time: 0,
            visits,
            range: 0,
            fresh_steps: 0,
            bbox_min: [0; MAX_DIM],
            bbox_max: [0; MAX_DIM],
            rng,
            bits: BitPool::default(),
        };
        state.arrive(origin);
        Ok(state)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn environment(&self) -> &Environment {
        &self.environment
    }

    pub fn position(&self) -> Site {
        self.position
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// `r_n`: distinct sites visited by the walk itself, time 0 included.
    pub fn range(&self) -> u64 {
        self.range
    }

    /// `f_n`: steps taken from fresh sites.
    pub fn fresh_steps(&self) -> u64 {
        self.fresh_steps
    }

    /// Visit counts at the current position.
    pub fn current_visits(&self) -> Visits {
        self.current
    }

    /// The current site is being visited for the first time, with no pre-visits.
    pub fn is_fresh(&self) -> bool {
        self.current.total() == 1
    }

    /// Total visit count of any site, environment included.
    pub fn visit_count(&self, site: &Site) -> u32 {
        self.visits_of(site).total()
    }

    pub fn visits_of(&self, site: &Site) -> Visits {
        self.visits.get(site).unwrap_or_else(|| Visits {
            walk: 0,
            env: if self.environment.is_predicate() {
                self.environment.pre_visits(&self.partition, site)
            } else {
                0
            },
        })
    }

    pub fn visit_map(&self) -> &VisitMap {
        &self.visits
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let d = self.partition.dim();
        BoundingBox {
            min: self.bbox_min[..d].to_vec(),
            max: self.bbox_max[..d].to_vec(),
        }
    }

    /// Mutable access to the walk's own random stream.
    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    #[inline]
    fn arrive(&mut self, site: Site) {
        let env = &self.environment;
        let partition = &self.partition;
        let (v, first) = self.visits.arrive(&site, || {
            if env.is_predicate() {
                env.pre_visits(partition, &site)
            } else {
                0
            }
        });
        if first {
            self.range += 1;
        }
        self.current = v;
        self.position = site;
        for (axis, &c) in site.coords().iter().enumerate() {
            if c < self.bbox_min[axis] {
                self.bbox_min[axis] = c;
            } else if c > self.bbox_max[axis] {
                self.bbox_max[axis] = c;
            }
        }
    }

    #[inline]
    fn advance(&mut self, next: Site) {
        if self.is_fresh() {
            self.fresh_steps += 1;
        }
        self.time += 1;
        self.arrive(next);
    }

    /// One step of the mixture walk.
    #[inline]
    pub fn step(&mut self) -> Result<()> {
        let block = component_for_visit(self.current.total(), &self.partition)?;
        let moves = &self.blocks[block];
        let k = self.bits.below(&mut self.rng, moves.moves);
        let axis = moves.first_axis + (k >> 1) as usize;
        let delta = if k & 1 == 0 { 1 } else { -1 };
        let next = self.position.shifted(axis, delta).ok_or(Error::Overflow {
            axis,
            time: self.time,
        })?;
        self.advance(next);
        Ok(())
    }

    /// One step where the jump has law `mu1` from fresh sites, `mu2` otherwise.
    pub fn step_general(&mut self, mu1: &StepLaw, mu2: &StepLaw) -> Result<()> {
        let d = self.partition.dim();
        for (name, law) in [("mu1", mu1), ("mu2", mu2)] {
            if law.dim() != d {
                return Err(Error::config(
                    name,
                    format!("law has dimension {}, walk has {d}", law.dim()),
                ));
            }
        }
        let law = if self.is_fresh() { mu1 } else { mu2 };
        let offset = *law.sample(&mut self.rng);
        let next = self.position.checked_add(&offset).ok_or_else(|| {
            let axis = (0..d)
                .find(|&a| self.position.get(a).checked_add(offset.get(a)).is_none())
                .unwrap_or(0);
            Error::Overflow {
                axis,
                time: self.time,
            }
        })?;
        self.advance(next);
        Ok(())
    }

    /// One step along the axis chosen by `strategy`, `±1` with probability 1/2.
    pub fn step_controlled(&mut self, strategy: &mut dyn Strategy) -> Result<()> {
        let axis = strategy.choose_axis(self);
        let d = self.partition.dim();
        if axis >= d {
            return Err(Error::config(
                "strategy",
                format!("`{}` chose axis {axis}, dimension is {d}", strategy.name()),
            ));
        }
        let delta = if self.bits.below(&mut self.rng, 2) == 0 { 1 } else { -1 };
        let next = self.position.shifted(axis, delta).ok_or(Error::Overflow {
            axis,
            time: self.time,
        })?;
        self.advance(next);
        Ok(())
    }

    /// Runs `n` steps, keeping the requested recordings.
    pub fn run(&mut self, n: u64, recording: &Recording) -> Result<RunSummary> {
        self.run_with(n, recording, |s| s.step())
    }

    /// Like [`run`](Self::run) but under a strategy.
    pub fn run_controlled(
        &mut self,
        n: u64,
        recording: &Recording,
        strategy: &mut dyn Strategy,
    ) -> Result<RunSummary> {
        self.run_with(n, recording, |s| s.step_controlled(strategy))
    }

    fn run_with(
        &mut self,
        n: u64,
        recording: &Recording,
        mut step: impl FnMut(&mut Self) -> Result<()>,
    ) -> Result<RunSummary> {
        let mut out = RunSummary::default();
        let in_window = |t: u64| recording.window.is_some_and(|(a, b)| a <= t && t <= b);
        if in_window(self.time) {
            out.trajectory.push(self.position);
        }
        for _ in 0..n {
            if recording.fresh_times && self.is_fresh() {
                out.fresh_times.push(self.time);
            }
            step(self)?;
            if in_window(self.time) {
                out.trajectory.push(self.position);
            }
            if recording.origin_returns && self.position.is_origin() {
                out.origin_returns.push(self.time);
            }
        }
        Ok(out)
    }

    /// Plain `n`-step run without recordings.
    pub fn advance_by(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn p(dims: &[u32]) -> Partition {
        Partition::new(dims).unwrap()
    }

    fn window(n: u64) -> Recording {
        Recording {
            window: Some((0, n)),
            ..Default::default()
        }
    }

    #[test]
    fn initial_state() {
        let w = WalkState::new(p(&[2, 2]), Environment::Empty, 1).unwrap();
        assert_eq!(w.position(), Site::origin(4));
        assert_eq!(w.time(), 0);
        assert_eq!(w.range(), 1);
        assert_eq!(w.fresh_steps(), 0);
        assert_eq!(w.visit_count(&Site::origin(4)), 1);
        let bb = w.bounding_box();
        assert!((0..4).all(|a| bb.width(a) == 0));
    }

    #[test]
    fn line_environment_adds_to_origin_count() {
        let part = p(&[1, 1]);
        let env = Environment::line_through_origin(&part, 1);
        let w = WalkState::new(part, env, 5).unwrap();
        assert_eq!(w.visit_count(&Site::origin(2)), 2);
        assert_eq!(w.range(), 1);
    }

    #[test]
    fn finite_environment_excluded_from_range() {
        let part = p(&[2, 2]);
        let pre = Site::from_coords(&[1, 0, 0, 0]);
        let w = WalkState::new(part, Environment::finite([(pre, 1)]), 5).unwrap();
        assert_eq!(w.range(), 1);
        assert_eq!(w.visit_count(&pre), 1);
        assert_eq!(w.visits_of(&pre).walk, 0);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let env = Environment::finite([(Site::from_coords(&[1, 0]), 1)]);
        let err = WalkState::new(p(&[2, 2]), env, 0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn component_rule() {
        assert_eq!(component_for_visit(1, &p(&[2, 2])).unwrap(), 0);
        assert_eq!(component_for_visit(3, &p(&[2, 2])).unwrap(), 1);
        assert_eq!(component_for_visit(2, &p(&[2, 1, 1])).unwrap(), 1);
        assert_eq!(component_for_visit(9, &p(&[2, 1, 1])).unwrap(), 2);
        assert!(matches!(
            component_for_visit(0, &p(&[2, 2])),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn first_step_is_fresh_and_in_block_one() {
        for seed in 0..50 {
            let mut w = WalkState::new(p(&[2, 2]), Environment::Empty, seed).unwrap();
            w.step().unwrap();
            let s = w.position();
            assert_eq!(s.l1_norm(), 1);
            assert_eq!(s.get(2), 0);
            assert_eq!(s.get(3), 0);
            assert_eq!(w.range(), 2);
            assert_eq!(w.fresh_steps(), 1);
        }
    }

    #[test]
    fn trapped_in_line() {
        let part = p(&[1, 1]);
        let env = Environment::line_through_origin(&part, 1);
        let mut w = WalkState::new(part, env, 9).unwrap();
        let traj = w.run(2_000, &window(2_000)).unwrap().trajectory;
        assert!(traj.iter().all(|s| s.get(0) == 0));
        assert_eq!(w.bounding_box().width(0), 0);
        assert_eq!(w.fresh_steps(), 0);
    }

    #[test]
    fn zero_steps_is_identity() {
        let mut w = WalkState::new(p(&[2, 2]), Environment::Empty, 4).unwrap();
        w.advance_by(10).unwrap();
        let before = (w.position(), w.time(), w.range(), w.fresh_steps());
        let out = w.run(0, &Recording::default()).unwrap();
        assert!(out.trajectory.is_empty());
        assert_eq!(before, (w.position(), w.time(), w.range(), w.fresh_steps()));
    }

    #[test]
    fn recordings_are_consistent() {
        let mut w = WalkState::new(p(&[1, 1]), Environment::Empty, 21).unwrap();
        let rec = Recording {
            window: Some((0, 500)),
            fresh_times: true,
            origin_returns: true,
        };
        let out = w.run(500, &rec).unwrap();
        assert_eq!(out.trajectory.len(), 501);
        assert_eq!(out.fresh_times.len() as u64, w.fresh_steps());
        let returns: Vec<u64> = (1..=500u64)
            .filter(|&k| out.trajectory[k as usize].is_origin())
            .collect();
        assert_eq!(returns, out.origin_returns);
        let partial = w.run(10, &Recording { window: Some((503, 505)), ..Default::default() }).unwrap();
        assert_eq!(partial.trajectory.len(), 3);
    }

    #[test]
    fn overflow_is_an_error() {
        let part = p(&[1]);
        let env = Environment::Empty;
        let mut w = WalkState::new(part, env, 0).unwrap();
        w.position = Site::from_coords(&[i32::MAX]);
        w.current = Visits { walk: 1, env: 0 };
        let mut hit = false;
        for _ in 0..64 {
            let before = w.position();
            match w.step() {
                Err(Error::Overflow { axis: 0, .. }) => {
                    assert_eq!(w.position(), before);
                    hit = true;
                    break;
                }
                Ok(()) => {
                    w.position = Site::from_coords(&[i32::MAX]);
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(hit);
    }

    #[test]
    fn general_step_with_doubled_first_law() {
        let mu1 = StepLaw::uniform(&[Site::from_coords(&[2, 0]), Site::from_coords(&[-2, 0])]).unwrap();
        let mu2 = StepLaw::unit_moves(2, [1]).unwrap();
        let mut plus = 0;
        let trials = 4000;
        for seed in 0..trials {
            let mut w = WalkState::new(p(&[1, 1]), Environment::Empty, seed).unwrap();
            w.step_general(&mu1, &mu2).unwrap();
            let s = w.position();
            assert!(s == Site::from_coords(&[2, 0]) || s == Site::from_coords(&[-2, 0]));
            if s.get(0) == 2 {
                plus += 1;
            }
        }
        let phat = plus as f64 / trials as f64;
        assert!((phat - 0.5).abs() < 4.0 * (0.25 / trials as f64).sqrt());
    }

    #[test]
    fn general_step_rejects_dimension_mismatch() {
        let mu = StepLaw::unit_moves(3, 0..3).unwrap();
        let mut w = WalkState::new(p(&[1, 1]), Environment::Empty, 0).unwrap();
        assert!(w.step_general(&mu, &mu).is_err());
    }

    #[test]
    fn general_law_weights_rational() {
        let law = StepLaw::new(vec![
            (Site::from_coords(&[1]), Ratio::new(1, 2)),
            (Site::from_coords(&[-1]), Ratio::new(1, 2)),
        ])
        .unwrap();
        let mut w = WalkState::new(p(&[1]), Environment::Empty, 0).unwrap();
        for _ in 0..100 {
            w.step_general(&law, &law).unwrap();
        }
        assert_eq!(w.time(), 100);
    }

    struct Fixed(usize);
    impl Strategy for Fixed {
        fn choose_axis(&mut self, _: &WalkState) -> usize {
            self.0
        }
        fn name(&self) -> &str {
            "fixed"
        }
    }

    #[test]
    fn controlled_out_of_range_axis() {
        let mut w = WalkState::new(p(&[1, 1]), Environment::Empty, 0).unwrap();
        let err = w.step_controlled(&mut Fixed(2)).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert_eq!(w.time(), 0);
    }

    #[test]
    fn controlled_single_axis_stays_on_line() {
        let mut w = WalkState::new(p(&[1, 1]), Environment::Empty, 0).unwrap();
        let out = w.run_controlled(300, &window(300), &mut Fixed(0)).unwrap();
        assert!(out.trajectory.iter().all(|s| s.get(1) == 0));
    }

    #[test]
    fn wide_dimension_map() {
        let mut w = WalkState::new(p(&[3, 3]), Environment::Empty, 2).unwrap();
        w.advance_by(5_000).unwrap();
        let total: u64 = w.visit_map().iter().map(|(_, v)| v.walk as u64).sum();
        assert_eq!(total, 5_001);
        let walked = w.visit_map().iter().filter(|(_, v)| v.walk > 0).count() as u64;
        assert_eq!(walked, w.range());
    }
}
