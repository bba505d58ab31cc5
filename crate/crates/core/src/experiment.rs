//! Configuration-driven experiment sweeps with mergeable, reproducible reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::estimators::{
    decomposition_tally, finish_strategy, range_tally, return_window_tally, returns_tally, shape_tally,
    strategy_tally, DecompositionTally, RangeTally, ReturnsTally, ShapeTally,
};
use crate::lattice::{Partition, Site};
use crate::replicas::{digest, Mergeable, Replicas};
use crate::srw::{
    hitting_before_annulus_tally, max_local_time_tally, range_srw_tally, return_window_srw_tally,
};
use crate::stats::{fit_scaling, BernoulliTally, Estimate, MomentTally, ScalingFit, FIXED_POINT};
use crate::strategy::StrategyKind;
use crate::walk::{Recording, WalkState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ReturnWindow,
    RangeStats,
    Returns,
    Shape,
    Strategy,
    DecompositionTest,
    SrwReference,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ReturnWindow => "return-window",
            ExperimentKind::RangeStats => "range-stats",
            ExperimentKind::Returns => "returns",
            ExperimentKind::Shape => "shape",
            ExperimentKind::Strategy => "strategy",
            ExperimentKind::DecompositionTest => "decomposition-test",
            ExperimentKind::SrwReference => "srw-reference",
        }
    }

    /// Seed-derivation tag; fixed forever so reports stay reproducible.
    fn tag(&self) -> u64 {
        match self {
            ExperimentKind::ReturnWindow => 1,
            ExperimentKind::RangeStats => 2,
            ExperimentKind::Returns => 3,
            ExperimentKind::Shape => 4,
            ExperimentKind::Strategy => 5,
            ExperimentKind::DecompositionTest => 6,
            ExperimentKind::SrwReference => 7,
        }
    }
}

/// Horizon grid: explicit values or `base^from, base^(from+step), ..., base^to`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Explicit(Vec<u64>),
    Geometric {
        base: u64,
        from: u32,
        to: u32,
        #[serde(default = "one_u32")]
        step: u32,
    },
}

fn one_u32() -> u32 {
    1
}

impl Grid {
    pub fn points(&self) -> Result<Vec<u64>> {
        let pts = match self {
            Grid::Explicit(v) => v.clone(),
            Grid::Geometric { base, from, to, step } => {
                if *base < 2 {
                    return Err(Error::config("grid.base", "must be >= 2"));
                }
                if *step == 0 || from > to {
                    return Err(Error::config("grid", "need from <= to and step >= 1"));
                }
                (*from..=*to)
                    .step_by(*step as usize)
                    .map(|e| {
                        base.checked_pow(e)
                            .ok_or_else(|| Error::config("grid", format!("{base}^{e} overflows")))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if pts.is_empty() {
            return Err(Error::config("grid", "grid is empty"));
        }
        for (i, n) in pts.iter().enumerate() {
            if pts[..i].contains(n) {
                return Err(Error::config(format!("grid[{i}]"), format!("duplicate n = {n}")));
            }
        }
        Ok(pts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrwMeasure {
    /// `E[N*_n]`.
    MaxLocalTime,
    /// `P[0 in {U(t), ..., U(2n)}]`, `t = window_start * n`.
    ReturnWindow,
    /// `E[r_{n,U}]`.
    Range,
    /// `P_x[tau_0 < tau_R]` with `x = (n, 0)`, `R = n (ln n)^4`.
    HittingBeforeAnnulus,
}

impl SrwMeasure {
    fn as_str(&self) -> &'static str {
        match self {
            SrwMeasure::MaxLocalTime => "max-local-time",
            SrwMeasure::ReturnWindow => "return-window",
            SrwMeasure::Range => "range",
            SrwMeasure::HittingBeforeAnnulus => "hitting-before-annulus",
        }
    }
}

/// One experiment: a kind, a model, a horizon grid and a replica budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_partition")]
    pub partition: Vec<u32>,
    #[serde(default)]
    pub environment: Environment,
    pub grid: Grid,
    pub replicas: u64,
    /// First replica index; partial runs cover `[replica_start, replica_start + replicas)`.
    #[serde(default)]
    pub replica_start: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_bound_c")]
    pub bound_c: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srw_measure: Option<SrwMeasure>,
    /// Return-window start as a multiple of `n` for the SRW reference.
    #[serde(default = "default_window_start")]
    pub window_start: f64,
    /// Negative control for the decomposition test.
    #[serde(default)]
    pub inverted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

fn default_partition() -> Vec<u32> {
    vec![2, 2]
}

fn default_bound_c() -> f64 {
    10.0
}

fn default_strategies() -> Vec<StrategyKind> {
    vec![
        StrategyKind::AlwaysFirst,
        StrategyKind::RoundRobin,
        StrategyKind::UniformRandom,
    ]
}

fn default_window_start() -> f64 {
    1.0
}

/// The fields that determine results; replica range, workers and output
/// paths are excluded so partial runs share a digest.
#[derive(Serialize)]
struct DigestView<'a> {
    kind: ExperimentKind,
    partition: &'a [u32],
    environment: &'a Environment,
    grid: Vec<u64>,
    seed: u64,
    bound_c: f64,
    strategies: &'a [StrategyKind],
    srw_measure: Option<SrwMeasure>,
    window_start: f64,
    inverted: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn partition(&self) -> Result<Partition> {
        if let Some(i) = self.partition.iter().position(|&d| d == 0) {
            return Err(Error::config(
                format!("partition[{i}]"),
                format!("block dimension d_{} must be >= 1", i + 1),
            ));
        }
        Partition::new(&self.partition)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(digest(&DigestView {
            kind: self.kind,
            partition: &self.partition,
            environment: &self.environment,
            grid: self.grid.points()?,
            seed: self.seed,
            bound_c: self.bound_c,
            strategies: &self.strategies,
            srw_measure: self.srw_measure,
            window_start: self.window_start,
            inverted: self.inverted,
        }))
    }

    /// Checks every precondition the run will rely on.
    pub fn validate(&self) -> Result<()> {
        let partition = self.partition()?;
        self.environment.validate(&partition)?;
        let grid = self.grid.points()?;
        if self.replicas == 0 {
            return Err(Error::config("replicas", "must be >= 1"));
        }
        if self.replica_start.checked_add(self.replicas).is_none() {
            return Err(Error::config("replica_start", "replica range overflows"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be >= 1"));
        }
        let each = |pred: &dyn Fn(u64) -> bool, msg: &str| -> Result<()> {
            match grid.iter().position(|&n| !pred(n)) {
                Some(i) => Err(Error::config(format!("grid[{i}]"), format!("n = {}: {msg}", grid[i]))),
                None => Ok(()),
            }
        };
        if let Some(&n) = grid.iter().find(|&&n| n >= 1 << 30) {
            return Err(Error::Resource(format!(
                "grid point n = {n}: horizon too large for the 32-bit lattice"
            )));
        }
        match self.kind {
            ExperimentKind::ReturnWindow => {}
            ExperimentKind::RangeStats => {
                each(&|n| n >= 2, "range bounds need n >= 2")?;
                if self.bound_c.is_nan() || self.bound_c <= 0.0 {
                    return Err(Error::config("bound_c", "must be > 0"));
                }
            }
            ExperimentKind::Returns => each(&|n| n >= 1, "returns need n >= 1")?,
            ExperimentKind::Shape => {
                if self.partition != [1, 1] {
                    return Err(Error::config("partition", "shape experiments use M(1,1)"));
                }
            }
            ExperimentKind::Strategy => {
                if self.strategies.is_empty() {
                    return Err(Error::config("strategies", "at least one strategy is required"));
                }
            }
            ExperimentKind::DecompositionTest => {
                if partition.blocks() != 2 {
                    return Err(Error::config("partition", "decomposition test needs two blocks"));
                }
                if !self.environment.is_empty() {
                    return Err(Error::config("environment", "decomposition test uses the empty environment"));
                }
            }
            ExperimentKind::SrwReference => {
                let measure = self
                    .srw_measure
                    .ok_or_else(|| Error::config("srw_measure", "required for srw-reference"))?;
                match measure {
                    SrwMeasure::Range => each(&|n| n >= 1, "range needs n >= 1")?,
                    SrwMeasure::HittingBeforeAnnulus => {
                        each(&|n| n >= 3, "hitting needs |x| = n >= 3 so that |x| <= R")?
                    }
                    SrwMeasure::ReturnWindow => {
                        if !(0.0..=2.0).contains(&self.window_start) {
                            return Err(Error::config("window_start", "must lie in [0, 2]"));
                        }
                    }
                    SrwMeasure::MaxLocalTime => {}
                }
            }
        }
        Ok(())
    }

    fn replicas_for(&self, grid_index: usize) -> Replicas {
        Replicas::new(self.seed, self.replicas)
            .with_scope(&[self.kind.tag(), grid_index as u64])
            .starting_at(self.replica_start)
    }
}

/// Sufficient statistics of one report row; merging is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tally {
    Bernoulli(BernoulliTally),
    Moments(MomentTally),
    Range(RangeTally),
    Returns(ReturnsTally),
    Shape(ShapeTally),
    Decomposition(DecompositionTally),
}

impl Tally {
    fn merge(self, other: Tally) -> Result<Tally> {
        Ok(match (self, other) {
            (Tally::Bernoulli(a), Tally::Bernoulli(b)) => Tally::Bernoulli(a.merge(b)),
            (Tally::Moments(a), Tally::Moments(b)) => Tally::Moments(a.merge(b)),
            (Tally::Range(a), Tally::Range(b)) => Tally::Range(Mergeable::merge(a, b)),
            (Tally::Returns(a), Tally::Returns(b)) => Tally::Returns(Mergeable::merge(a, b)),
            (Tally::Shape(a), Tally::Shape(b)) => Tally::Shape(Mergeable::merge(a, b)),
            (Tally::Decomposition(a), Tally::Decomposition(b)) => Tally::Decomposition(Mergeable::merge(a, b)),
            _ => return Err(Error::Merge("rows carry different tally types".into())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub grid_index: u64,
    pub n: u64,
    /// Strategy name for strategy experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Half-open replica index ranges folded into this row.
    pub replica_ranges: Vec<(u64, u64)>,
    pub tally: Tally,
    pub wall_time: f64,
}

/// Rows plus everything needed to reproduce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ExperimentKind,
    pub digest: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    /// Scaling fit of return-window estimates, when the grid allows one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<ScalingFit>,
}

fn with_grid_point(err: Error, n: u64) -> Error {
    match err {
        Error::Resource(m) => Error::Resource(format!("grid point n = {n}: {m}")),
        Error::Precondition(m) => Error::Precondition(format!("grid point n = {n}: {m}")),
        Error::Invariant(m) => Error::Invariant(format!("grid point n = {n}: {m}")),
        other => other,
    }
}

/// Runs the configured experiment over its grid.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Invariant(e.to_string()))?
            .install(|| run_rows(config)),
        None => run_rows(config),
    }
}

fn run_rows(config: &ExperimentConfig) -> Result<Report> {
    let partition = config.partition()?;
    let env = &config.environment;
    let mut rows = Vec::new();
    for (gi, &n) in config.grid.points()?.iter().enumerate() {
        let replicas = config.replicas_for(gi);
        let range = vec![(replicas.start, replicas.end())];
        let mut push = |label: Option<String>, started: Instant, tally: Tally| {
            rows.push(ReportRow {
                grid_index: gi as u64,
                n,
                label,
                replica_ranges: range.clone(),
                tally,
                wall_time: started.elapsed().as_secs_f64(),
            });
        };
        let started = Instant::now();
        let tally = match config.kind {
            ExperimentKind::ReturnWindow => {
                Tally::Bernoulli(return_window_tally(&partition, env, n, &replicas).map_err(|e| with_grid_point(e, n))?)
            }
            ExperimentKind::RangeStats => {
                Tally::Range(range_tally(&partition, n, config.bound_c, &replicas).map_err(|e| with_grid_point(e, n))?)
            }
            ExperimentKind::Returns => {
                Tally::Returns(returns_tally(&partition, env, n, &replicas).map_err(|e| with_grid_point(e, n))?)
            }
            ExperimentKind::Shape => {
                Tally::Shape(shape_tally(&partition, env, n, &replicas).map_err(|e| with_grid_point(e, n))?)
            }
            ExperimentKind::DecompositionTest => Tally::Decomposition(
                decomposition_tally(&partition, n, config.inverted, &replicas).map_err(|e| with_grid_point(e, n))?,
            ),
            ExperimentKind::SrwReference => {
                let measure = config.srw_measure.expect("validated");
                let t = match measure {
                    SrwMeasure::MaxLocalTime => max_local_time_tally(n, &replicas).map(Tally::Moments),
                    SrwMeasure::Range => range_srw_tally(n, &replicas).map(Tally::Moments),
                    SrwMeasure::ReturnWindow => {
                        let t = (config.window_start * n as f64).round() as u64;
                        return_window_srw_tally(t, n, &replicas).map(Tally::Bernoulli)
                    }
                    SrwMeasure::HittingBeforeAnnulus => {
                        let start = Site::from_coords(&[n as i32, 0]);
                        hitting_before_annulus_tally(&start, hitting_outer_radius(n), &replicas)
                            .map(Tally::Bernoulli)
                    }
                };
                t.map_err(|e| with_grid_point(e, n))?
            }
            ExperimentKind::Strategy => {
                for (si, kind) in config.strategies.iter().enumerate() {
                    let started = Instant::now();
                    let reps = replicas.substream(si as u64);
                    let d = partition.dim();
                    let t = strategy_tally(|rng| kind.build(rng), d, n, &reps).map_err(|e| with_grid_point(e, n))?;
                    push(Some(kind.to_string()), started, Tally::Moments(t));
                }
                continue;
            }
        };
        push(None, started, tally);
    }
    let mut report = Report {
        kind: config.kind,
        digest: config.digest()?,
        master_seed: config.seed,
        config: config.clone(),
        rows,
        fit: None,
    };
    report.refresh_fit();
    Ok(report)
}

/// Outer radius `R = |x| (ln |x|)^4` for the hitting measure.
pub fn hitting_outer_radius(x: u64) -> f64 {
    x as f64 * (x as f64).ln().powi(4)
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn estimate_fields(e: Option<&Estimate>) -> [String; 4] {
    match e {
        Some(e) => [fmt_f64(e.point), fmt_f64(e.stderr), fmt_f64(e.ci_lo), fmt_f64(e.ci_hi)],
        None => Default::default(),
    }
}

impl Report {
    fn refresh_fit(&mut self) {
        self.fit = None;
        if self.kind != ExperimentKind::ReturnWindow {
            return;
        }
        let grid: Vec<(u64, Estimate)> = self
            .rows
            .iter()
            .filter_map(|r| self.row_estimate(r).map(|e| (r.n, e)))
            .collect();
        self.fit = fit_scaling(&grid).ok();
    }

    /// Headline estimate of a row.
    pub fn row_estimate(&self, row: &ReportRow) -> Option<Estimate> {
        let (seed, dg) = (self.master_seed, self.digest.as_str());
        match &row.tally {
            Tally::Bernoulli(t) => Some(t.estimate(seed, dg)),
            Tally::Moments(t) => Some(t.estimate(1.0, seed, dg)),
            Tally::Range(t) => Some(t.ranges.estimate(row.n as f64, seed, dg)),
            Tally::Returns(t) => Some(t.total.estimate(1.0, seed, dg)),
            Tally::Shape(t) => (t.ratio.count > 0).then(|| t.ratio.estimate(FIXED_POINT, seed, dg)),
            Tally::Decomposition(_) => None,
        }
    }

    pub fn csv_header(&self) -> Vec<&'static str> {
        let mut h = vec!["kind", "n"];
        if self.kind == ExperimentKind::Strategy {
            h.push("strategy");
        }
        h.extend(["point", "stderr", "ci_lo", "ci_hi", "replicas", "seed"]);
        h.extend(match self.kind {
            ExperimentKind::ReturnWindow => &["successes"][..],
            ExperimentKind::RangeStats => &["bound_c", "min_range", "max_range", "upper_violations", "lower_violations"],
            ExperimentKind::Returns => &["late_mean", "late_ci_lo", "late_ci_hi", "odd_time_returns"],
            ExperimentKind::Shape => &["h_zero"],
            ExperimentKind::Strategy => &["range_per_step", "range_per_step_ci_lo", "range_per_step_ci_hi", "range_ln_n_over_n"],
            ExperimentKind::DecompositionTest => &["statistic", "dof", "cells", "inverted"],
            ExperimentKind::SrwReference => &["measure", "normalized"],
        });
        h.push("wall_time");
        h
    }

    pub fn csv_records(&self) -> Result<Vec<Vec<String>>> {
        self.rows.iter().map(|row| self.csv_record(row)).collect()
    }

    fn csv_record(&self, row: &ReportRow) -> Result<Vec<String>> {
        let n = row.n;
        let ln = (n as f64).ln();
        let est = self.row_estimate(row);
        let mut rec = vec![self.kind.as_str().to_string(), n.to_string()];
        if self.kind == ExperimentKind::Strategy {
            rec.push(row.label.clone().unwrap_or_default());
        }
        let replicas: u64 = row.replica_ranges.iter().map(|(a, b)| b - a).sum();
        match &row.tally {
            Tally::Decomposition(t) => {
                let test = t.finish(self.config.inverted)?.test;
                rec.extend([fmt_f64(test.p_value), String::new(), String::new(), String::new()]);
                rec.extend([replicas.to_string(), self.master_seed.to_string()]);
                rec.extend([
                    fmt_f64(test.statistic),
                    test.dof.to_string(),
                    test.cells.to_string(),
                    self.config.inverted.to_string(),
                ]);
            }
            tally => {
                rec.extend(estimate_fields(est.as_ref()));
                rec.extend([replicas.to_string(), self.master_seed.to_string()]);
                match tally {
                    Tally::Bernoulli(t) if self.kind == ExperimentKind::ReturnWindow => {
                        rec.push(t.successes.to_string())
                    }
                    Tally::Range(t) => rec.extend([
                        fmt_f64(self.config.bound_c),
                        t.ranges.min.to_string(),
                        t.ranges.max.to_string(),
                        t.upper_violations.to_string(),
                        t.lower_violations.to_string(),
                    ]),
                    Tally::Returns(t) => {
                        let late = t.late.estimate(1.0, self.master_seed, &self.digest);
                        rec.extend([
                            fmt_f64(late.point),
                            fmt_f64(late.ci_lo),
                            fmt_f64(late.ci_hi),
                            t.odd_time_returns.to_string(),
                        ]);
                    }
                    Tally::Shape(t) => rec.push(t.h_zero.to_string()),
                    Tally::Moments(_) if self.kind == ExperimentKind::Strategy => {
                        let e = est.as_ref().expect("moment rows have estimates");
                        let per = e.scaled(1.0 / n.max(1) as f64);
                        let norm = (n >= 2).then(|| e.point * ln / n as f64);
                        rec.extend([fmt_f64(per.point), fmt_f64(per.ci_lo), fmt_f64(per.ci_hi), fmt_opt(norm)]);
                    }
                    _ => {
                        let measure = self.config.srw_measure.expect("srw rows carry a measure");
                        let point = est.as_ref().map(|e| e.point).unwrap_or(f64::NAN);
                        let normalized = match measure {
                            SrwMeasure::MaxLocalTime => (n >= 2).then(|| point / (ln * ln)),
                            SrwMeasure::ReturnWindow | SrwMeasure::HittingBeforeAnnulus => {
                                (n >= 3).then(|| point * ln / ln.ln())
                            }
                            SrwMeasure::Range => (n >= 2).then(|| point * ln / n as f64),
                        };
                        rec.extend([measure.as_str().to_string(), fmt_opt(normalized)]);
                    }
                }
            }
        }
        rec.push(fmt_f64(row.wall_time));
        Ok(rec)
    }

    /// CSV text with a fixed header per kind.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).map_err(std::io::Error::from)?;
        for rec in self.csv_records()? {
            w.write_record(&rec).map_err(std::io::Error::from)?;
        }
        finish_csv(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.kind.as_str(), self.digest)
    }

    /// Writes `<dir>/<kind>-<digest>.csv` and `<dir>/<kind>-<digest>.summary.json`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.file_stem()));
        let json = dir.join(format!("{}.summary.json", self.file_stem()));
        std::fs::write(&csv, self.to_csv()?)?;
        std::fs::write(&json, self.to_json()?)?;
        Ok((csv, json))
    }
}

fn coalesce(mut ranges: Vec<(u64, u64)>) -> Result<Vec<(u64, u64)>> {
    ranges.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
    for (a, b) in ranges {
        match out.last_mut() {
            Some(last) if a < last.1 => {
                return Err(Error::Merge(format!(
                    "overlapping replica ranges [{}, {}) and [{a}, {b})",
                    last.0, last.1
                )))
            }
            Some(last) if a == last.1 => last.1 = b,
            _ => out.push((a, b)),
        }
    }
    Ok(out)
}

/// Combines partial reports of the same experiment over disjoint replica
/// ranges. The result does not depend on the order of `parts`.
pub fn merge_results(parts: Vec<Report>) -> Result<Report> {
    let mut parts = parts;
    if parts.is_empty() {
        return Err(Error::Merge("nothing to merge".into()));
    }
    let digest = parts[0].digest.clone();
    if let Some(other) = parts.iter().find(|p| p.digest != digest) {
        return Err(Error::Merge(format!(
            "config digests differ: {digest} vs {}",
            other.digest
        )));
    }
    let first_start = |r: &Report| r.rows.iter().flat_map(|row| row.replica_ranges.iter()).map(|x| x.0).min();
    parts.sort_by_key(|r| first_start(r));
    let mut iter = parts.into_iter();
    let mut merged = iter.next().unwrap();
    for part in iter {
        if part.rows.len() != merged.rows.len() {
            return Err(Error::Merge("reports have different row sets".into()));
        }
        for (row, other) in merged.rows.iter_mut().zip(part.rows) {
            if (row.grid_index, row.n, &row.label) != (other.grid_index, other.n, &other.label) {
                return Err(Error::Merge(format!(
                    "row mismatch at n = {} / n = {}",
                    row.n, other.n
                )));
            }
            let mut ranges = std::mem::take(&mut row.replica_ranges);
            ranges.extend(other.replica_ranges);
            row.replica_ranges = ranges;
            let tally = std::mem::replace(&mut row.tally, Tally::Bernoulli(BernoulliTally::default()));
            row.tally = tally.merge(other.tally)?;
            row.wall_time += other.wall_time;
        }
    }
    for row in &mut merged.rows {
        row.replica_ranges = coalesce(std::mem::take(&mut row.replica_ranges))?;
    }
    if let Some(row) = merged.rows.first() {
        merged.config.replica_start = row.replica_ranges[0].0;
        merged.config.replicas = row.replica_ranges.iter().map(|(a, b)| b - a).sum();
    }
    merged.refresh_fit();
    Ok(merged)
}

/// One trajectory summary per grid point, from replica 0 of the configured walk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationRow {
    pub n: u64,
    pub position: Site,
    pub range: u64,
    pub fresh_steps: u64,
    pub origin_returns: u64,
    pub widths: Vec<u64>,
}

pub fn simulate(config: &ExperimentConfig) -> Result<Vec<SimulationRow>> {
    let partition = config.partition()?;
    config.environment.validate(&partition)?;
    let grid = config.grid.points()?;
    grid.iter()
        .enumerate()
        .map(|(gi, &n)| {
            let rng = config.replicas_for(gi).substream(0).rng(config.replica_start);
            let mut walk = WalkState::with_rng(partition.clone(), config.environment.clone(), rng)?;
            let rec = Recording {
                origin_returns: true,
                ..Default::default()
            };
            let out = walk.run(n, &rec).map_err(|e| with_grid_point(e, n))?;
            let bb = walk.bounding_box();
            Ok(SimulationRow {
                n,
                position: walk.position(),
                range: walk.range(),
                fresh_steps: walk.fresh_steps(),
                origin_returns: out.origin_returns.len() as u64,
                widths: (0..partition.dim()).map(|a| bb.width(a)).collect(),
            })
        })
        .collect()
}

pub fn simulation_csv(rows: &[SimulationRow]) -> Result<String> {
    let join = |v: Vec<String>| v.join(";");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "position", "range", "fresh_steps", "origin_returns", "widths"])
        .map_err(std::io::Error::from)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            join(r.position.coords().iter().map(|c| c.to_string()).collect()),
            r.range.to_string(),
            r.fresh_steps.to_string(),
            r.origin_returns.to_string(),
            join(r.widths.iter().map(|c| c.to_string()).collect()),
        ])
        .map_err(std::io::Error::from)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

/// Strategy leaderboard rows sorted by mean range, best first.
pub fn leaderboard(report: &Report) -> Vec<(u64, String, Estimate)> {
    let mut rows: Vec<_> = report
        .rows
        .iter()
        .filter_map(|r| {
            let Tally::Moments(t) = &r.tally else { return None };
            let score = finish_strategy(
                r.label.as_deref().unwrap_or(""),
                t,
                r.n,
                report.master_seed,
                &report.digest,
            );
            Some((r.n, score.strategy, score.range))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(b.2.point.total_cmp(&a.2.point)));
    rows
}
