//! Lattice points and coordinate-block partitions of `Z^d`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// An ordered split `d = d_1 + ... + d_m` of the coordinates into blocks.
///
/// Block `i` (zero-based) owns the axes `offset_i .. offset_i + d_i`. The walk
/// moves block `i` on its `(i+1)`-th visit to a site and block `m-1` on every
/// visit after that.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition {
    dims: Vec<u32>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(dims: &[u32]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("partition", "at least one block is required"));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::config(
                format!("partition[{pos}]"),
                "block dimensions must be >= 1",
            ));
        }
        let total: u32 = dims.iter().sum();
        if total as usize > MAX_DIM {
            return Err(Error::config(
                "partition",
                format!("total dimension {total} exceeds {MAX_DIM}"),
            ));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0usize;
        for &d in dims {
            offsets.push(acc);
            acc += d as usize;
        }
        Ok(Self {
            dims: dims.to_vec(),
            offsets,
        })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    /// Total dimension `d`.
    pub fn dim(&self) -> usize {
        self.dims.iter().sum::<u32>() as usize
    }

    /// Number of blocks `m`.
    pub fn blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn block_dim(&self, block: usize) -> usize {
        self.dims[block] as usize
    }

    pub fn block_axes(&self, block: usize) -> Range<usize> {
        let start = self.offsets[block];
        start..start + self.dims[block] as usize
    }

    pub fn block_of_axis(&self, axis: usize) -> usize {
        self.offsets
            .iter()
            .rposition(|&o| o <= axis)
            .expect("axis below first offset")
    }

    /// Largest number of signed unit moves available to any block.
    pub fn branching(&self) -> usize {
        2 * *self.dims.iter().max().unwrap() as usize
    }
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;
    fn try_from(dims: Vec<u32>) -> Result<Self> {
        Partition::new(&dims)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.dims
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M(")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

/// A point of `Z^d`, `d <= 8`, with 32-bit signed coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Site {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    pub fn new(coords: &[i32]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::config(
                "site",
                format!("dimension {} outside 1..={MAX_DIM}", coords.len()),
            ));
        }
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Site {
            dim: coords.len() as u8,
            coords: c,
        })
    }

    /// Convenience constructor for literals; panics on a bad dimension.
    pub fn from_coords(coords: &[i32]) -> Self {
        Site::new(coords).expect("invalid site literal")
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    pub fn get(&self, axis: usize) -> i32 {
        self.coords()[axis]
    }

    pub fn is_origin(&self) -> bool {
        self.coords().iter().all(|&c| c == 0)
    }

    pub fn l1_norm(&self) -> u64 {
        self.coords().iter().map(|&c| c.unsigned_abs() as u64).sum()
    }

    pub fn sup_norm(&self) -> u32 {
        self.coords().iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn sq_norm(&self) -> u64 {
        self.coords().iter().map(|&c| (c as i64 * c as i64) as u64).sum()
    }

    /// Returns the site shifted by `delta` along `axis`, or `None` on overflow.
    pub fn shifted(&self, axis: usize, delta: i32) -> Option<Site> {
        let mut out = *self;
        out.coords[axis] = self.coords[axis].checked_add(delta)?;
        Some(out)
    }

    /// Componentwise sum, or `None` on overflow or dimension mismatch.
    pub fn checked_add(&self, other: &Site) -> Option<Site> {
        if self.dim != other.dim {
            return None;
        }
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] = self.coords[i].checked_add(other.coords[i])?;
        }
        Some(out)
    }

    pub fn negated(&self) -> Site {
        let mut out = *self;
        for c in &mut out.coords[..self.dim()] {
            *c = c.wrapping_neg();
        }
        out
    }

    pub(crate) fn set(&mut self, axis: usize, value: i32) {
        self.coords[axis] = value;
    }

    /// Packs up to four coordinates into a single hash key.
    #[inline]
    pub(crate) fn packed(&self) -> u128 {
        debug_assert!(self.dim() <= 4);
        (self.coords[0] as u32 as u128)
            | (self.coords[1] as u32 as u128) << 32
            | (self.coords[2] as u32 as u128) << 64
            | (self.coords[3] as u32 as u128) << 96
    }

    #[inline]
    pub(crate) fn raw(&self) -> [i32; MAX_DIM] {
        self.coords
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Site {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        Site::new(&v).map_err(serde::de::Error::custom)
    }
}
