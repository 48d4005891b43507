//! Hidden-unit group partitions.
//!
//! Overlapping groups are laid out as a sliding window of width `group_size`
//! and stride `group_size * (1 - overlap)`. Each group owns a private copy of
//! its members on an augmented axis of length `K * group_size`, so that the
//! groups are disjoint there. [`GroupPartition::expand`] copies real hidden
//! values onto the augmented axis and [`GroupPartition::accumulate`] (its
//! adjoint) sums augmented values back onto the real units.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::check_len;

const STRIDE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    j_original: usize,
    group_size: usize,
    overlap_fraction: f64,
    stride: usize,
    num_groups: usize,
    aug_to_orig: Vec<usize>,
}

impl GroupPartition {
    /// `j / group_size` contiguous groups with the identity augmented map.
    pub fn make_nonoverlapping(j: usize, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::Config("group_size must be at least 1".into()));
        }
        if j == 0 || !j.is_multiple_of(group_size) {
            return Err(Error::Config(format!(
                "group_size {group_size} does not divide hidden layer size {j}"
            )));
        }
        Ok(GroupPartition {
            j_original: j,
            group_size,
            overlap_fraction: 0.0,
            stride: group_size,
            num_groups: j / group_size,
            aug_to_orig: (0..j).collect(),
        })
    }

    /// Sliding-window groups; group `k` covers original units
    /// `[k * stride, k * stride + group_size)`.
    pub fn make_overlapping(j: usize, group_size: usize, overlap_fraction: f64) -> Result<Self> {
        if !(overlap_fraction > 0.0 && overlap_fraction < 1.0) {
            return Err(Error::Config(format!(
                "overlap fraction {overlap_fraction} must lie strictly between 0 and 1"
            )));
        }
        if group_size == 0 {
            return Err(Error::Config("group_size must be at least 1".into()));
        }
        if group_size > j {
            return Err(Error::Config(format!(
                "group_size {group_size} exceeds hidden layer size {j}"
            )));
        }
        let exact_stride = group_size as f64 * (1.0 - overlap_fraction);
        let stride = exact_stride.round();
        if stride < 1.0 || (exact_stride - stride).abs() > STRIDE_TOLERANCE {
            return Err(Error::Config(format!(
                "group_size {group_size} with overlap {overlap_fraction} gives stride \
                 {exact_stride}, which is not a positive integer"
            )));
        }
        let stride = stride as usize;
        if !(j - group_size).is_multiple_of(stride) {
            return Err(Error::Config(format!(
                "hidden layer size {j} minus group_size {group_size} is not divisible by \
                 stride {stride} (group_size {group_size}, overlap {overlap_fraction})"
            )));
        }
        let num_groups = (j - group_size) / stride + 1;
        let aug_to_orig = (0..num_groups)
            .flat_map(|k| k * stride..k * stride + group_size)
            .collect();
        Ok(GroupPartition {
            j_original: j,
            group_size,
            overlap_fraction,
            stride,
            num_groups,
            aug_to_orig,
        })
    }

    /// Dispatches on the overlap: zero gives the non-overlapping layout.
    pub fn new(j: usize, group_size: usize, overlap_fraction: f64) -> Result<Self> {
        if overlap_fraction == 0.0 {
            Self::make_nonoverlapping(j, group_size)
        } else {
            Self::make_overlapping(j, group_size, overlap_fraction)
        }
    }

    pub fn j_original(&self) -> usize {
        self.j_original
    }

    pub fn j_augmented(&self) -> usize {
        self.aug_to_orig.len()
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn overlap_fraction(&self) -> f64 {
        self.overlap_fraction
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn aug_to_orig(&self) -> &[usize] {
        &self.aug_to_orig
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlap_fraction > 0.0
    }

    /// Range of group `k` on the augmented axis.
    pub fn group_bounds(&self, k: usize) -> Range<usize> {
        k * self.group_size..(k + 1) * self.group_size
    }

    pub fn groups(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_groups).map(|k| self.group_bounds(k))
    }

    pub fn expand(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len("expand input", h.len(), self.j_original)?;
        Ok(self.aug_to_orig.iter().map(|&i| h[i]).collect())
    }

    pub fn accumulate(&self, aug: &[f64]) -> Result<Vec<f64>> {
        check_len("accumulate input", aug.len(), self.j_augmented())?;
        let mut out = vec![0.0; self.j_original];
        for (&i, &v) in self.aug_to_orig.iter().zip(aug) {
            out[i] += v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::dot;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn nonoverlapping_counts() {
        let p = GroupPartition::make_nonoverlapping(500, 5).unwrap();
        assert_eq!(p.num_groups(), 100);
        assert_eq!(p.j_augmented(), 500);
        let one = GroupPartition::make_nonoverlapping(8, 8).unwrap();
        assert_eq!(one.num_groups(), 1);
        assert_eq!(one.group_bounds(0), 0..8);
    }

    #[test]
    fn nonoverlapping_divisibility_error_names_both_values() {
        let err = GroupPartition::make_nonoverlapping(6, 4).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains('6') && msg.contains('4'), "{msg}");
        assert!(GroupPartition::make_nonoverlapping(6, 0).is_err());
    }

    #[test]
    fn overlapping_layouts() {
        let p = GroupPartition::make_overlapping(100, 20, 0.2).unwrap();
        assert_eq!((p.stride(), p.num_groups(), p.j_augmented()), (16, 6, 120));
        let p = GroupPartition::make_overlapping(100, 50, 0.5).unwrap();
        assert_eq!((p.stride(), p.num_groups(), p.j_augmented()), (25, 3, 150));
        assert!(matches!(
            GroupPartition::make_overlapping(100, 50, 0.2),
            Err(Error::Config(_))
        ));
        // stride 20 * 0.7 = 14 but 20 * (1 - 0.33) is not integral
        assert!(GroupPartition::make_overlapping(100, 20, 0.33).is_err());
        assert!(GroupPartition::make_overlapping(100, 20, 0.0).is_err());
        assert!(GroupPartition::make_overlapping(100, 20, 1.0).is_err());
    }

    #[test]
    fn overlapping_on_paper_sized_layers() {
        // 500- and 2000-unit layers with the overlapping configurations used in
        // the experiments.
        assert!(GroupPartition::make_overlapping(500, 20, 0.2).is_ok());
        assert!(GroupPartition::make_overlapping(500, 20, 0.5).is_ok());
        assert!(GroupPartition::make_overlapping(500, 50, 0.5).is_ok());
        assert!(GroupPartition::make_overlapping(500, 50, 0.2).is_err());
        // stride 40 does not divide 2000 - 50
        assert!(GroupPartition::make_overlapping(2000, 50, 0.2).is_err());
        assert!(GroupPartition::make_overlapping(2000, 20, 0.5).is_ok());
        assert!(GroupPartition::make_overlapping(2000, 50, 0.5).is_ok());
    }

    #[test]
    fn expand_small_case() {
        let p = GroupPartition::make_overlapping(4, 2, 0.5).unwrap();
        assert_eq!(p.num_groups(), 3);
        let out = p.expand(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(out, vec![0.1, 0.2, 0.2, 0.3, 0.3, 0.4]);
        assert_eq!(p.expand(&[0.0; 4]).unwrap(), vec![0.0; 6]);
        assert_eq!(p.accumulate(&[1.0; 6]).unwrap(), vec![1.0, 2.0, 2.0, 1.0]);
        assert!(p.expand(&[0.0; 3]).is_err());
        assert!(p.accumulate(&[0.0; 4]).is_err());
    }

    #[test]
    fn identity_maps_without_overlap() {
        let p = GroupPartition::make_nonoverlapping(6, 3).unwrap();
        let v = [0.5, 0.1, 0.9, 0.3, 0.2, 0.7];
        assert_eq!(p.expand(&v).unwrap(), v.to_vec());
        assert_eq!(p.accumulate(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn new_dispatches_zero_overlap() {
        let a = GroupPartition::new(12, 4, 0.0).unwrap();
        let b = GroupPartition::make_nonoverlapping(12, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adjoint_identity_on_small_partition() {
        let p = GroupPartition::make_overlapping(4, 2, 0.5).unwrap();
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
            let u: Vec<f64> = (0..6).map(|_| rng.gaussian()).collect();
            // explicit sums for both inner products
            let mut lhs = 0.0;
            for (t, &ut) in u.iter().enumerate() {
                lhs += v[p.aug_to_orig()[t]] * ut;
            }
            let mut rhs = 0.0;
            for (i, &vi) in v.iter().enumerate() {
                let s: f64 = (0..6)
                    .filter(|&t| p.aug_to_orig()[t] == i)
                    .map(|t| u[t])
                    .sum();
                rhs += vi * s;
            }
            let via_ops = dot(&p.expand(&v).unwrap(), &u);
            let via_adj = dot(&v, &p.accumulate(&u).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((via_ops - lhs).abs() < 1e-12);
            assert!((via_adj - rhs).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn groups_tile_augmented_axis(
            g in 1usize..12,
            k in 1usize..8,
            overlap_steps in 0usize..4,
        ) {
            // choose stride dividing g so the overlap is exact
            let stride = if overlap_steps == 0 { g } else { (g / (overlap_steps + 1)).max(1) };
            let a = 1.0 - stride as f64 / g as f64;
            let j = (k - 1) * stride + g;
            let p = GroupPartition::new(j, g, a).unwrap();
            let mut covered = vec![0usize; p.j_augmented()];
            for r in p.groups() {
                prop_assert_eq!(r.len(), g);
                for t in r { covered[t] += 1; }
            }
            prop_assert!(covered.iter().all(|&c| c == 1));
            prop_assert_eq!(p.num_groups() * g, p.j_augmented());
            let mut seen = vec![false; j];
            for &i in p.aug_to_orig() { seen[i] = true; }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
