//! Replica fan-out with per-replica random streams and exact merging.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::stats::{BernoulliTally, MomentTally};

/// Accumulated replica results that combine associatively and commutatively.
pub trait Mergeable: Sized + Send {
    fn empty() -> Self;
    fn merge(self, other: Self) -> Self;
}

impl Mergeable for BernoulliTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(self, other: Self) -> Self {
        BernoulliTally::merge(self, other)
    }
}

impl Mergeable for MomentTally {
    fn empty() -> Self {
        Self::default()
    }
    fn merge(self, other: Self) -> Self {
        MomentTally::merge(self, other)
    }
}

/// A contiguous range of replica indices under one master seed and scope.
///
/// Replica `i` always draws from `stream(master_seed, scope, i)`, so any
/// split of the index range reproduces the same per-replica samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replicas {
    pub master_seed: u64,
    pub scope: Vec<u64>,
    pub start: u64,
    pub count: u64,
}

impl Replicas {
    pub fn new(master_seed: u64, count: u64) -> Self {
        Self {
            master_seed,
            scope: Vec::new(),
            start: 0,
            count,
        }
    }

    pub fn with_scope(mut self, scope: &[u64]) -> Self {
        self.scope = scope.to_vec();
        self
    }

    pub fn starting_at(mut self, start: u64) -> Self {
        self.start = start;
        self
    }

    /// Same indices, independent streams.
    pub fn substream(&self, tag: u64) -> Self {
        let mut out = self.clone();
        out.scope.push(tag);
        out
    }

    pub fn end(&self) -> u64 {
        self.start + self.count
    }

    pub fn rng(&self, index: u64) -> StreamRng {
        stream(self.master_seed, &self.scope, index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("replicas", "must be >= 1"));
        }
        if self.start.checked_add(self.count).is_none() {
            return Err(Error::config("replicas", "index range overflows"));
        }
        Ok(())
    }

    /// Runs `f` for every replica index in parallel and merges the results.
    pub fn fold<T, F>(&self, f: F) -> Result<T>
    where
        T: Mergeable,
        F: Fn(u64, StreamRng) -> Result<T> + Sync + Send,
    {
        self.validate()?;
        (self.start..self.end())
            .into_par_iter()
            .map(|i| f(i, self.rng(i)))
            .try_reduce(T::empty, |a, b| Ok(a.merge(b)))
    }
}

/// Short stable digest of any serializable configuration.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("digest input serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(r: &Replicas) -> MomentTally {
        r.fold(|_, mut rng| {
            let mut t = MomentTally::default();
            t.push(rng.gen_range(0..1000));
            Ok(t)
        })
        .unwrap()
    }

    #[test]
    fn split_equals_whole() {
        let whole = draws(&Replicas::new(5, 100).with_scope(&[1]));
        let a = draws(&Replicas::new(5, 37).with_scope(&[1]));
        let b = draws(&Replicas::new(5, 63).with_scope(&[1]).starting_at(37));
        assert_eq!(a.merge(b), whole);
        assert_eq!(b.merge(a), whole);
    }

    #[test]
    fn zero_replicas_rejected() {
        let err = Replicas::new(0, 0).validate().unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let r = Replicas::new(9, 500);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(7).build().unwrap();
        assert_eq!(one.install(|| draws(&r)), many.install(|| draws(&r)));
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(&(1, "a")), digest(&(1, "a")));
        assert_ne!(digest(&(1, "a")), digest(&(2, "a")));
        assert_eq!(digest(&0).len(), 16);
    }
}
