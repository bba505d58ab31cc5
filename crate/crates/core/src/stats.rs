//! Estimates, confidence intervals and exactly mergeable tallies.
//!
//! Tallies hold integer sufficient statistics only, so merging replica
//! batches is associative and commutative down to the last bit.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Fixed-point scale used for real-valued observations.
pub const FIXED_POINT: f64 = (1u64 << 30) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicas: u64,
    pub master_seed: u64,
    pub digest: String,
}

impl Estimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }

    pub fn disjoint(&self, other: &Estimate) -> bool {
        self.ci_hi < other.ci_lo || other.ci_hi < self.ci_lo
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }

    /// Same estimate with point and interval multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Estimate {
        Estimate {
            point: self.point * factor,
            stderr: self.stderr * factor,
            ci_lo: self.ci_lo * factor,
            ci_hi: self.ci_hi * factor,
            ..self.clone()
        }
    }
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let margin = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - margin).max(0.0), (center + margin).min(1.0))
}

/// Success count of a Bernoulli experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BernoulliTally {
    pub trials: u64,
    pub successes: u64,
}

impl BernoulliTally {
    pub fn push(&mut self, success: bool) {
        self.trials += 1;
        self.successes += success as u64;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.successes += other.successes;
        self
    }

    pub fn estimate(&self, master_seed: u64, digest: &str) -> Estimate {
        let n = self.trials.max(1) as f64;
        let p = self.successes as f64 / n;
        let (ci_lo, ci_hi) = if self.trials == 0 {
            (0.0, 1.0)
        } else {
            wilson_interval(self.successes, self.trials)
        };
        Estimate {
            point: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            ci_lo: ci_lo.min(p),
            ci_hi: ci_hi.max(p),
            replicas: self.trials,
            master_seed,
            digest: digest.to_string(),
        }
    }
}

/// Count, sum, sum of squares, min and max of integer observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentTally {
    pub count: u64,
    #[serde(with = "i128_string")]
    pub sum: i128,
    #[serde(with = "i128_string")]
    pub sum_sq: i128,
    pub min: i64,
    pub max: i64,
}

impl Default for MomentTally {
    fn default() -> Self {
        Self {
            count: 0,
            sum: 0,
            sum_sq: 0,
            min: i64::MAX,
            max: i64::MIN,
        }
    }
}

impl MomentTally {
    pub fn push(&mut self, x: i64) {
        self.count += 1;
        self.sum += x as i128;
        self.sum_sq += x as i128 * x as i128;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Pushes a real observation in fixed point (see [`FIXED_POINT`]).
    pub fn push_real(&mut self, x: f64) {
        self.push((x * FIXED_POINT).round() as i64);
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Unbiased sample variance, exact up to the final division.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as i128;
        // n * sum_sq - sum^2 >= 0 is exact in integers
        let num = n * self.sum_sq - self.sum * self.sum;
        num as f64 / (n as f64 * (n - 1) as f64)
    }

    /// Normal-approximation estimate of the mean, with observations divided by `scale`.
    pub fn estimate(&self, scale: f64, master_seed: u64, digest: &str) -> Estimate {
        let mean = self.mean() / scale;
        let stderr = if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt() / scale
        };
        Estimate {
            point: mean,
            stderr,
            ci_lo: mean - Z95 * stderr,
            ci_hi: mean + Z95 * stderr,
            replicas: self.count,
            master_seed,
            digest: digest.to_string(),
        }
    }
}

mod i128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &i128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Least-squares fit of `p_n = C (ln ln n / ln n)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub grid: Vec<(u64, Estimate)>,
    pub constant: f64,
    /// `||p - C g|| / ||p||`.
    pub relative_residual: f64,
    pub good: bool,
}

pub const FIT_TOLERANCE: f64 = 0.2;

pub fn scaling_shape(n: u64) -> f64 {
    let l = (n as f64).ln();
    (l.ln() / l).powi(2)
}

pub fn fit_scaling(grid: &[(u64, Estimate)]) -> Result<ScalingFit> {
    if grid.len() < 3 {
        return Err(Error::config("grid", "scaling fit needs at least 3 points"));
    }
    for (i, (n, _)) in grid.iter().enumerate() {
        if *n < 16 {
            return Err(Error::config(format!("grid[{i}]"), format!("n = {n} < 16")));
        }
        if grid[..i].iter().any(|(m, _)| m == n) {
            return Err(Error::config(format!("grid[{i}]"), format!("duplicate n = {n}")));
        }
    }
    let (mut pg, mut gg, mut pp) = (0.0, 0.0, 0.0);
    for (n, est) in grid {
        let g = scaling_shape(*n);
        pg += est.point * g;
        gg += g * g;
        pp += est.point * est.point;
    }
    let constant = pg / gg;
    let residual: f64 = grid
        .iter()
        .map(|(n, est)| (est.point - constant * scaling_shape(*n)).powi(2))
        .sum::<f64>()
        .sqrt();
    let relative_residual = if pp > 0.0 { residual / pp.sqrt() } else { f64::INFINITY };
    Ok(ScalingFit {
        grid: grid.to_vec(),
        constant,
        relative_residual,
        good: constant > 0.0 && relative_residual <= FIT_TOLERANCE,
    })
}

/// Result of a two-sample chi-square homogeneity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    /// Cells used after pooling sparse ones.
    pub cells: u64,
}

/// Minimum pooled count for a cell to stand on its own.
pub const MIN_CELL: u64 = 10;

/// Tests whether two histograms over the same cells come from one law.
/// Cells with fewer than [`MIN_CELL`] combined observations are pooled.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    if a.len() != b.len() {
        return Err(Error::Invariant("histograms have different cell counts".into()));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Precondition("chi-square test needs samples on both sides".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= MIN_CELL {
            cells.push((x as f64, y as f64));
        } else {
            pooled.0 += x;
            pooled.1 += y;
        }
    }
    if pooled.0 + pooled.1 > 0 {
        cells.push((pooled.0 as f64, pooled.1 as f64));
    }
    let total = na + nb;
    let mut statistic = 0.0;
    for (x, y) in &cells {
        let col = x + y;
        let ea = col * na / total;
        let eb = col * nb / total;
        statistic += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = cells.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| Error::Invariant(e.to_string()))?
            .sf(statistic)
    };
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
        cells: cells.len() as u64,
    })
}
