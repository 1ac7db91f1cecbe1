//! The two-axis coverage domain, its discretisation into candidate sets,
//! and the masking used by the batch agents.
//!
//! Candidate order is row-major over (ITN level, IRS level) and is stable;
//! every tie-break in the agents resolves to the lowest candidate index.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in coverage space: the fraction of the population covered by
/// insecticide-treated nets and by indoor residual spraying.
///
/// Both coordinates lie in `(0, 1]`. "No intervention" is not a `Policy`;
/// the simulators expose it as a separate baseline scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct Policy {
    a_itn: f64,
    a_irs: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    a_itn: f64,
    a_irs: f64,
}

impl TryFrom<RawPolicy> for Policy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        Policy::new(raw.a_itn, raw.a_irs)
    }
}

fn valid_coverage(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl Policy {
    pub fn new(a_itn: f64, a_irs: f64) -> Result<Self> {
        if !valid_coverage(a_itn) || !valid_coverage(a_irs) {
            return Err(Error::Domain(format!(
                "policy coverage must lie in (0, 1], got ({a_itn}, {a_irs})"
            )));
        }
        Ok(Policy { a_itn, a_irs })
    }

    pub fn itn(&self) -> f64 {
        self.a_itn
    }

    pub fn irs(&self) -> f64 {
        self.a_irs
    }

    /// Euclidean distance in raw coverage units.
    pub fn distance(&self, other: &Policy) -> f64 {
        (self.a_itn - other.a_itn).hypot(self.a_irs - other.a_irs)
    }

    fn key(&self) -> (u64, u64) {
        (self.a_itn.to_bits(), self.a_irs.to_bits())
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.a_itn, self.a_irs)
    }
}

fn default_lower() -> f64 {
    0.01
}

fn default_upper() -> f64 {
    1.0
}

/// Regular grid over coverage space. The bounds apply to both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution_itn: usize,
    pub resolution_irs: usize,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution_itn: 100,
            resolution_irs: 100,
            lower: default_lower(),
            upper: default_upper(),
        }
    }
}

impl GridSpec {
    pub fn new(resolution_itn: usize, resolution_irs: usize, lower: f64, upper: f64) -> Self {
        GridSpec {
            resolution_itn,
            resolution_irs,
            lower,
            upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution_itn < 2 || self.resolution_irs < 2 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 2 per axis, got {}x{}",
                self.resolution_itn, self.resolution_irs
            )));
        }
        if !(valid_coverage(self.lower) && valid_coverage(self.upper) && self.lower < self.upper) {
            return Err(Error::Config(format!(
                "grid bounds must satisfy 0 < lower < upper <= 1, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Distance between neighbouring levels on the ITN and IRS axes.
    pub fn spacing(&self) -> (f64, f64) {
        let span = self.upper - self.lower;
        (
            span / (self.resolution_itn - 1) as f64,
            span / (self.resolution_irs - 1) as f64,
        )
    }

    pub fn len(&self) -> usize {
        self.resolution_itn * self.resolution_irs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn level(&self, k: usize, resolution: usize) -> f64 {
        if k + 1 == resolution {
            self.upper
        } else {
            self.lower + (self.upper - self.lower) * k as f64 / (resolution - 1) as f64
        }
    }
}

/// Builds the full row-major grid, every point available.
pub fn discretize(spec: &GridSpec) -> Result<CandidateSet> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.len());
    for i in 0..spec.resolution_itn {
        let itn = spec.level(i, spec.resolution_itn);
        for j in 0..spec.resolution_irs {
            points.push(Policy::new(itn, spec.level(j, spec.resolution_irs))?);
        }
    }
    CandidateSet::from_points(points)
}

/// An ordered set of unique candidate policies with an availability mask.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    points: Vec<Policy>,
    available: Vec<bool>,
    available_count: usize,
    index: HashMap<(u64, u64), usize>,
}

impl CandidateSet {
    pub fn from_points(points: Vec<Policy>) -> Result<Self> {
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.key(), i).is_some() {
                return Err(Error::Config(format!("duplicate candidate point {p}")));
            }
        }
        let n = points.len();
        Ok(CandidateSet {
            points,
            available: vec![true; n],
            available_count: n,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Policy] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> Policy {
        self.points[idx]
    }

    pub fn available_count(&self) -> usize {
        self.available_count
    }

    pub fn is_available(&self, idx: usize) -> bool {
        self.available[idx]
    }

    /// Available points with their candidate indices, in candidate order.
    pub fn available(&self) -> impl Iterator<Item = (usize, &Policy)> + '_ {
        self.points
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.available[*i])
    }

    pub fn available_indices(&self) -> Vec<usize> {
        self.available().map(|(i, _)| i).collect()
    }

    /// Exact lookup of a candidate by value.
    pub fn index_of(&self, policy: &Policy) -> Option<usize> {
        self.index.get(&policy.key()).copied()
    }

    /// Index of the candidate closest to `policy`; ties go to the lowest index.
    pub fn nearest_index(&self, policy: &Policy) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.distance(policy);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Marks one candidate removed. Returns whether it was available.
    pub fn remove(&mut self, idx: usize) -> bool {
        let was = std::mem::replace(&mut self.available[idx], false);
        if was {
            self.available_count -= 1;
        }
        was
    }

    /// Removes every available point strictly closer than `radius` to
    /// `center` and returns how many were removed.
    pub fn mask_near(&mut self, center: &Policy, radius: f64) -> usize {
        let mut removed = 0;
        for (i, p) in self.points.iter().enumerate() {
            if self.available[i] && p.distance(center) < radius {
                self.available[i] = false;
                removed += 1;
            }
        }
        self.available_count -= removed;
        removed
    }

    pub fn reset(&mut self) {
        self.available.fill(true);
        self.available_count = self.points.len();
    }

    /// Draws `n` distinct available candidate indices uniformly without
    /// replacement.
    pub fn sample_random_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n > self.available_count {
            return Err(Error::Domain(format!(
                "cannot draw {n} candidates, only {} available",
                self.available_count
            )));
        }
        let avail = self.available_indices();
        Ok(rand::seq::index::sample(rng, avail.len(), n)
            .into_iter()
            .map(|k| avail[k])
            .collect())
    }

    pub fn sample_random<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Policy>> {
        Ok(self
            .sample_random_indices(n, rng)?
            .into_iter()
            .map(|i| self.points[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(a: f64, b: f64) -> Policy {
        Policy::new(a, b).unwrap()
    }

    #[test]
    fn policy_rejects_zero_and_above_one() {
        assert!(Policy::new(0.0, 0.5).is_err());
        assert!(Policy::new(0.5, 1.0001).is_err());
        assert!(Policy::new(f64::NAN, 0.5).is_err());
        assert!(Policy::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn policy_deserialize_validates() {
        assert!(serde_json::from_str::<Policy>(r#"{"a_itn":0.0,"a_irs":0.5}"#).is_err());
        let q: Policy = serde_json::from_str(r#"{"a_itn":0.6,"a_irs":0.04}"#).unwrap();
        assert_eq!(q, p(0.6, 0.04));
    }

    #[test]
    fn two_by_two_corners() {
        let set = discretize(&GridSpec::new(2, 2, 0.5, 1.0)).unwrap();
        assert_eq!(
            set.points(),
            &[p(0.5, 0.5), p(0.5, 1.0), p(1.0, 0.5), p(1.0, 1.0)]
        );
        assert_eq!(set.available_count(), 4);
    }

    #[test]
    fn hundred_by_hundred_cardinality() {
        let set = discretize(&GridSpec::default()).unwrap();
        assert_eq!(set.len(), 10_000);
        assert_eq!(set.point(0), p(0.01, 0.01));
        assert_eq!(set.point(9_999), p(1.0, 1.0));
    }

    #[test]
    fn two_by_three_first_point() {
        let set = discretize(&GridSpec::new(2, 3, 0.01, 1.0)).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(set.point(0), p(0.01, 0.01));
        // row-major: second point advances the IRS axis
        assert_eq!(set.point(1).itn(), 0.01);
    }

    #[test]
    fn invalid_grid_specs() {
        assert!(discretize(&GridSpec::new(1, 5, 0.01, 1.0)).is_err());
        assert!(discretize(&GridSpec::new(5, 5, 0.0, 1.0)).is_err());
        assert!(discretize(&GridSpec::new(5, 5, 0.5, 0.5)).is_err());
        assert!(discretize(&GridSpec::new(5, 5, 0.2, 1.1)).is_err());
    }

    #[test]
    fn duplicate_points_rejected() {
        assert!(CandidateSet::from_points(vec![p(0.1, 0.1), p(0.1, 0.1)]).is_err());
    }

    #[test]
    fn sample_exhaustive_is_permutation() {
        let set = discretize(&GridSpec::new(3, 4, 0.1, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = set.sample_random_indices(12, &mut rng).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn sample_zero_and_too_many() {
        let set = discretize(&GridSpec::new(3, 3, 0.1, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(set.sample_random(0, &mut rng).unwrap().is_empty());
        assert!(matches!(set.sample_random(10, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn sample_is_seed_deterministic_and_skips_removed() {
        let mut set = discretize(&GridSpec::new(10, 10, 0.01, 1.0)).unwrap();
        set.mask_near(&p(0.01, 0.01), 0.5);
        let a = set.sample_random(5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = set.sample_random(5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        for q in &a {
            assert!(set.is_available(set.index_of(q).unwrap()));
        }
    }

    #[test]
    fn mask_radius_zero_removes_nothing() {
        let mut set = discretize(&GridSpec::new(2, 2, 0.5, 1.0)).unwrap();
        assert_eq!(set.mask_near(&p(0.5, 0.5), 0.0), 0);
        assert_eq!(set.available_count(), 4);
    }

    #[test]
    fn mask_two_by_two_hand_distances() {
        // distances from (0.5,0.5): 0, 0.5, 0.5, sqrt(0.5)=0.707
        let mut set = discretize(&GridSpec::new(2, 2, 0.5, 1.0)).unwrap();
        assert_eq!(set.mask_near(&p(0.5, 0.5), 0.6), 3);
        let left: Vec<_> = set.available().map(|(_, q)| *q).collect();
        assert_eq!(left, vec![p(1.0, 1.0)]);
        assert_eq!(set.mask_near(&p(0.5, 0.5), 0.6), 0);
    }

    #[test]
    fn reset_restores_everything() {
        let mut set = discretize(&GridSpec::new(2, 2, 0.5, 1.0)).unwrap();
        set.reset();
        assert_eq!(set.available_count(), 4);
        assert_eq!(set.mask_near(&p(0.5, 0.5), 10.0), 4);
        assert_eq!(set.available_count(), 0);
        set.reset();
        assert_eq!(set.available_count(), 4);
        assert_eq!(set.mask_near(&p(0.5, 0.5), 0.6), 3);
        set.reset();
        assert_eq!(set.mask_near(&p(0.5, 0.5), 0.6), 3);
    }

    #[test]
    fn nearest_index_ties_to_lowest() {
        let set = discretize(&GridSpec::new(2, 2, 0.5, 1.0)).unwrap();
        assert_eq!(set.nearest_index(&p(0.75, 0.75)), Some(0));
        assert_eq!(set.nearest_index(&p(0.99, 0.6)), Some(2));
    }

    proptest! {
        #[test]
        fn masking_conserves_points(
            centers in prop::collection::vec((0.01f64..=1.0, 0.01f64..=1.0, 0.0f64..0.5), 0..8)
        ) {
            let mut set = discretize(&GridSpec::new(7, 9, 0.05, 1.0)).unwrap();
            let mut removed = 0;
            for (a, b, r) in centers {
                removed += set.mask_near(&p(a, b), r);
            }
            prop_assert_eq!(set.available_count() + removed, set.len());
            prop_assert_eq!(set.available().count(), set.available_count());
        }

        #[test]
        fn distance_is_a_symmetric_metric(a in 0.01f64..=1.0, b in 0.01f64..=1.0,
                                          c in 0.01f64..=1.0, d in 0.01f64..=1.0) {
            let (x, y) = (p(a, b), p(c, d));
            prop_assert_eq!(x.distance(&y), y.distance(&x));
            prop_assert_eq!(x.distance(&y) == 0.0, x == y);
        }
    }
}
