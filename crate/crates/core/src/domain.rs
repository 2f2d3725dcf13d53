//! Value types shared by every stage of the pipeline.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FlowError, Result};

macro_rules! real_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

real_vector!(
    /// State of the dynamical system, one entry per state variable.
    StateVec
);
real_vector!(
    /// System parameters fed to the right-hand side and to the network.
    ParamVec
);

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_k, hi_k]`.
///
/// A dimension with `lo == hi` is legal and pins that coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("box upper corner", lo.len(), hi.len())?;
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(FlowError::invalid(format!("box dimension {i} is not finite")));
            }
            if a > b {
                return Err(FlowError::invalid(format!(
                    "box dimension {i}: lo {a} > hi {b}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The same interval repeated `dim` times.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// Degenerate box holding a single point.
    pub fn point(p: &[f64]) -> Self {
        Self {
            lo: p.to_vec(),
            hi: p.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.lo[i] == self.hi[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    /// Lebesgue measure over the non-degenerate dimensions.
    pub fn volume(&self) -> f64 {
        (0..self.dim())
            .filter(|&i| !self.is_degenerate(i))
            .map(|i| self.width(i))
            .product()
    }

    /// Intersection with another box of the same dimension, `None` if empty.
    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return None;
        }
        Some(BoxDomain { lo, hi })
    }
}

/// One observation `((x_in, alpha, delta), x_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub x_in: StateVec,
    pub alpha: ParamVec,
    pub delta: f64,
    pub x_out: StateVec,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub system: Option<String>,
    pub seed: Option<u64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<DataPair>,
    pub d: usize,
    pub l: usize,
    pub delta_range: BoxDomain,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Builds a dataset, checking every pair and deriving the time-lag range
    /// `[min delta, max delta]` from the pairs.
    pub fn from_pairs(d: usize, l: usize, pairs: Vec<DataPair>, meta: DatasetMeta) -> Result<Self> {
        if pairs.is_empty() {
            return Err(FlowError::EmptyDataset);
        }
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for p in &pairs {
            check_dim("pair x_in", d, p.x_in.len())?;
            check_dim("pair x_out", d, p.x_out.len())?;
            check_dim("pair alpha", l, p.alpha.len())?;
            if !(p.delta >= 0.0 && p.delta.is_finite()) {
                return Err(FlowError::invalid(format!("time lag {} is not >= 0", p.delta)));
            }
            if !p.x_in.is_finite() || !p.x_out.is_finite() || !p.alpha.is_finite() {
                return Err(FlowError::invalid("non-finite value in data pair"));
            }
            dmin = dmin.min(p.delta);
            dmax = dmax.max(p.delta);
        }
        Ok(Self {
            pairs,
            d,
            l,
            delta_range: BoxDomain::interval(dmin, dmax)?,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Time-stamped states along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    pub alpha: ParamVec,
    pub x0: StateVec,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<StateVec>, alpha: ParamVec, x0: StateVec) -> Result<Self> {
        check_dim("trajectory states", times.len(), states.len())?;
        check_times_increasing(&times)?;
        Ok(Self {
            times,
            states,
            alpha,
            x0,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

pub(crate) fn check_times_increasing(times: &[f64]) -> Result<()> {
    for (k, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(FlowError::invalid(format!(
                "times must be strictly increasing (t[{}] = {} >= t[{}] = {})",
                k,
                w[0],
                k + 1,
                w[1]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.5], vec![0.5]).is_ok());
    }

    #[test]
    fn intersection_and_volume() {
        let a = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let b = BoxDomain::new(vec![1.0, -1.0], vec![3.0, 0.5]).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c.lo(), &[1.0, 0.0]);
        assert_eq!(c.hi(), &[2.0, 0.5]);
        assert_eq!(c.volume(), 0.5);
        let far = BoxDomain::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        assert!(a.intersect(&far).is_none());
    }

    #[test]
    fn dataset_derives_lag_range() {
        let pair = |delta| DataPair {
            x_in: StateVec::new(vec![0.0]),
            alpha: ParamVec::new(vec![1.0]),
            delta,
            x_out: StateVec::new(vec![0.0]),
        };
        let ds = Dataset::from_pairs(1, 1, vec![pair(0.05), pair(0.02), pair(0.09)], Default::default())
            .unwrap();
        assert_eq!(ds.delta_range.lo(), &[0.02]);
        assert_eq!(ds.delta_range.hi(), &[0.09]);
        assert!(matches!(
            Dataset::from_pairs(1, 1, vec![], Default::default()),
            Err(FlowError::EmptyDataset)
        ));
    }

    #[test]
    fn trajectory_requires_increasing_times() {
        let s = |v| StateVec::new(vec![v]);
        let a = ParamVec::new(vec![]);
        assert!(Trajectory::new(vec![0.0, 0.0], vec![s(1.0), s(1.0)], a.clone(), s(1.0)).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![s(1.0)], a, s(1.0)).is_err());
    }
}
