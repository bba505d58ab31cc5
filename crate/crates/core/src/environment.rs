//! Initial environments: sites marked as visited before the walk starts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Partition, Site};

/// Pre-visit configuration of the lattice.
///
/// Pre-visits add to a site's visit count (and therefore shift which block
/// moves there) but never count toward the walk's range.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Environment {
    #[default]
    Empty,
    /// Explicit list of distinct sites with their pre-visit counts.
    Finite { sites: Vec<PreVisit> },
    /// Every site whose coordinates outside `free_block` equal `constants`
    /// (listed in increasing axis order).
    Line {
        free_block: usize,
        constants: Vec<i32>,
        #[serde(default = "one")]
        count: u32,
    },
    /// `{(x, y) : |y| < e^x}` in two dimensions.
    Trumpet {
        #[serde(default = "one")]
        count: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreVisit {
    pub site: Site,
    pub count: u32,
}

fn one() -> u32 {
    1
}

impl Environment {
    pub fn finite(entries: impl IntoIterator<Item = (Site, u32)>) -> Self {
        Environment::Finite {
            sites: entries
                .into_iter()
                .map(|(site, count)| PreVisit { site, count })
                .collect(),
        }
    }

    /// The line through the origin along `free_block`, pre-visited once.
    pub fn line_through_origin(partition: &Partition, free_block: usize) -> Self {
        let fixed = partition.dim() - partition.block_dim(free_block);
        Environment::Line {
            free_block,
            constants: vec![0; fixed],
            count: 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Environment::Empty)
    }

    pub fn validate(&self, partition: &Partition) -> Result<()> {
        let d = partition.dim();
        match self {
            Environment::Empty => Ok(()),
            Environment::Finite { sites } => {
                for (i, pv) in sites.iter().enumerate() {
                    if pv.site.dim() != d {
                        return Err(Error::config(
                            format!("environment.sites[{i}]"),
                            format!("site {} has dimension {}, expected {d}", pv.site, pv.site.dim()),
                        ));
                    }
                    if pv.count == 0 {
                        return Err(Error::config(
                            format!("environment.sites[{i}].count"),
                            "pre-visit counts must be >= 1",
                        ));
                    }
                    if sites[..i].iter().any(|o| o.site == pv.site) {
                        return Err(Error::config(
                            format!("environment.sites[{i}]"),
                            format!("duplicate site {}", pv.site),
                        ));
                    }
                }
                Ok(())
            }
            Environment::Line {
                free_block,
                constants,
                count,
            } => {
                if *free_block >= partition.blocks() {
                    return Err(Error::config(
                        "environment.free_block",
                        format!("block {free_block} does not exist in {partition}"),
                    ));
                }
                let expected = d - partition.block_dim(*free_block);
                if constants.len() != expected {
                    return Err(Error::config(
                        "environment.constants",
                        format!("expected {expected} constants, got {}", constants.len()),
                    ));
                }
                if *count == 0 {
                    return Err(Error::config("environment.count", "must be >= 1"));
                }
                Ok(())
            }
            Environment::Trumpet { count } => {
                if d != 2 {
                    return Err(Error::config(
                        "environment",
                        format!("trumpet requires dimension 2, partition has {d}"),
                    ));
                }
                if *count == 0 {
                    return Err(Error::config("environment.count", "must be >= 1"));
                }
                Ok(())
            }
        }
    }

    /// Pre-visit count of `site` (0 when the site is not in the environment).
    pub fn pre_visits(&self, partition: &Partition, site: &Site) -> u32 {
        match self {
            Environment::Empty => 0,
            Environment::Finite { sites } => sites
                .iter()
                .find(|pv| pv.site == *site)
                .map_or(0, |pv| pv.count),
            Environment::Line {
                free_block,
                constants,
                count,
            } => {
                let free = partition.block_axes(*free_block);
                let mut fixed = constants.iter();
                let member = (0..site.dim())
                    .filter(|axis| !free.contains(axis))
                    .all(|axis| Some(&site.get(axis)) == fixed.next());
                if member {
                    *count
                } else {
                    0
                }
            }
            Environment::Trumpet { count } => {
                if in_trumpet(site.get(0), site.get(1)) {
                    *count
                } else {
                    0
                }
            }
        }
    }

    /// Whether membership must be evaluated lazily as the walk reaches sites.
    pub(crate) fn is_predicate(&self) -> bool {
        matches!(self, Environment::Line { .. } | Environment::Trumpet { .. })
    }
}

/// Exact membership test for `|y| < e^x`.
///
/// `y = 0` is a member for every `x` since `e^x > 0`. For `|y| >= 1` we need
/// `x >= 1`; for `1 <= x <= 21` the double-precision `exp` is within one ulp
/// and `e^x` stays at least `1e-4` away from every integer, so the float
/// comparison is exact. From `x = 22` on, `e^x > 2^31 > |y|`.
pub fn in_trumpet(x: i32, y: i32) -> bool {
    let ay = y.unsigned_abs();
    if ay == 0 {
        return true;
    }
    if x < 1 {
        return false;
    }
    if x >= 22 {
        return true;
    }
    (ay as f64) < (x as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m11() -> Partition {
        Partition::new(&[1, 1]).unwrap()
    }

    #[test]
    fn line_membership() {
        let p = m11();
        let env = Environment::line_through_origin(&p, 1);
        assert_eq!(env.pre_visits(&p, &Site::from_coords(&[0, 17])), 1);
        assert_eq!(env.pre_visits(&p, &Site::from_coords(&[1, 0])), 0);

        let p22 = Partition::new(&[2, 2]).unwrap();
        let env = Environment::line_through_origin(&p22, 1);
        assert_eq!(env.pre_visits(&p22, &Site::from_coords(&[0, 0, 5, -3])), 1);
        assert_eq!(env.pre_visits(&p22, &Site::from_coords(&[0, 1, 5, -3])), 0);
    }

    #[test]
    fn shifted_line() {
        let p = m11();
        let env = Environment::Line {
            free_block: 1,
            constants: vec![3],
            count: 2,
        };
        assert_eq!(env.pre_visits(&p, &Site::from_coords(&[3, -9])), 2);
        assert_eq!(env.pre_visits(&p, &Site::from_coords(&[0, 0])), 0);
    }

    #[test]
    fn trumpet_membership() {
        assert!(in_trumpet(-5, 0));
        assert!(in_trumpet(0, 0));
        assert!(!in_trumpet(0, 1));
        // e^1 = 2.718..
        assert!(in_trumpet(1, 2));
        assert!(in_trumpet(1, -2));
        assert!(!in_trumpet(1, 3));
        // e^2 = 7.389..
        assert!(in_trumpet(2, 7));
        assert!(!in_trumpet(2, 8));
        assert!(in_trumpet(22, i32::MIN));
        assert!(in_trumpet(21, 1_318_815_734));
        assert!(!in_trumpet(21, 1_318_815_735));
    }

    #[test]
    fn trumpet_float_margin() {
        // the exact comparison relies on e^x staying away from integers
        for x in 1..=21 {
            let e = (x as f64).exp();
            let frac = e - e.floor();
            assert!(frac > 1e-4 && frac < 1.0 - 1e-4, "x = {x}: {e}");
        }
    }

    #[test]
    fn validation_errors_name_fields() {
        let p = m11();
        let env = Environment::finite([(Site::from_coords(&[1, 0, 0]), 1)]);
        let err = env.validate(&p).unwrap_err().to_string();
        assert!(err.contains("environment.sites[0]"), "{err}");

        let dup = Environment::finite([
            (Site::from_coords(&[1, 0]), 1),
            (Site::from_coords(&[1, 0]), 2),
        ]);
        assert!(dup.validate(&p).is_err());

        let p4 = Partition::new(&[2, 2]).unwrap();
        assert!(Environment::Trumpet { count: 1 }.validate(&p4).is_err());
        assert!(Environment::line_through_origin(&p4, 0).validate(&p4).is_ok());
    }

    #[test]
    fn serde_shape() {
        let env: Environment = serde_json::from_str(
            r#"{"type":"line","free_block":1,"constants":[0]}"#,
        )
        .unwrap();
        assert_eq!(env, Environment::line_through_origin(&m11(), 1));
        let env: Environment =
            serde_json::from_str(r#"{"type":"finite","sites":[{"site":[1,0],"count":1}]}"#)
                .unwrap();
        assert_eq!(env.pre_visits(&m11(), &Site::from_coords(&[1, 0])), 1);
    }
}
