//! Subpopulation densities on the probability simplex.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Tolerance on `|sum(rho) - 1|` enforced after every update.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Population densities `rho_k >= 0` with `sum_k rho_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    rho: DVector<f64>,
}

impl DensityVector {
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "need at least one subpopulation");
        let d = Self { rho: DVector::from_element(k, 1.0 / k as f64) };
        d.validate().expect("uniform density is on the simplex");
        d
    }

    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        let d = Self { rho: DVector::from_vec(v) };
        d.validate()?;
        Ok(d)
    }

    pub(crate) fn from_dvector_unchecked(rho: DVector<f64>) -> Self {
        Self { rho }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn as_slice(&self) -> &[f64] {
        self.rho.as_slice()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.is_empty() {
            return Err(Error::Density("density has no entries".into()));
        }
        if let Some(v) = self.rho.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Density(format!("negative or NaN entry {v}")));
        }
        let sum: f64 = self.rho.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::Density(format!("entries sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex (sort-based algorithm).
///
/// Inputs must be finite; the result satisfies the [`DensityVector`]
/// invariants exactly up to [`SIMPLEX_SUM_TOL`].
pub fn project_simplex(v: &[f64]) -> DensityVector {
    assert!(!v.is_empty(), "cannot project an empty vector");
    assert!(v.iter().all(|x| x.is_finite()), "projection input must be finite");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    let mut support = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
            support = i + 1;
        }
    }
    debug_assert!(support > 0);
    let rho = DVector::from_iterator(v.len(), v.iter().map(|&x| (x - threshold).max(0.0)));
    let d = DensityVector { rho };
    debug_assert!(d.validate().is_ok());
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Exact projection by enumerating candidate supports: for every nonempty
    /// subset S, shift the S-entries by a common offset to sum to 1, keep the
    /// feasible candidates, and return the closest one.
    fn brute_force_projection(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let sum: f64 = support.iter().map(|&i| v[i]).sum();
            let theta = (sum - 1.0) / support.len() as f64;
            let mut x = vec![0.0; n];
            let mut feasible = true;
            for &i in &support {
                x[i] = v[i] - theta;
                if x[i] < -1e-12 {
                    feasible = false;
                    break;
                }
            }
            if !feasible {
                continue;
            }
            let dist: f64 = v.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, x));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn projection_is_identity_on_the_simplex() {
        let v = [0.2, 0.5, 0.3];
        let p = project_simplex(&v);
        assert_eq!(p.as_slice(), &v);
    }

    #[test]
    fn projection_collapses_a_dominant_coordinate() {
        let p = project_simplex(&[2.0, 0.0, 0.0]);
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_of_constant_vectors_is_uniform() {
        for c in [-3.0, 0.0, 0.7, 100.0] {
            let p = project_simplex(&[c; 5]);
            for v in p.as_slice() {
                assert_relative_eq!(*v, 0.2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn density_validation_catches_violations() {
        assert!(DensityVector::from_vec(vec![0.5, 0.5]).is_ok());
        assert!(DensityVector::from_vec(vec![0.6, 0.5]).is_err());
        assert!(DensityVector::from_vec(vec![1.5, -0.5]).is_err());
        assert!(DensityVector::from_vec(vec![]).is_err());
        let u = DensityVector::uniform(12);
        assert!(u.validate().is_ok());
    }

    proptest! {
        #[test]
        fn projection_matches_brute_force(
            v in prop::collection::vec(-5.0f64..5.0, 1..=6),
        ) {
            let fast = project_simplex(&v);
            let exact = brute_force_projection(&v);
            for (a, b) in fast.as_slice().iter().zip(&exact) {
                prop_assert!((a - b).abs() <= 1e-9, "fast {:?} vs exact {:?}", fast.as_slice(), exact);
            }
            prop_assert!(fast.validate().is_ok());
        }
    }
}
