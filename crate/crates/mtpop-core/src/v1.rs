//! Model V1 population: von Mises direction tuning and the linear
//! stimulus-to-response map.

use nalgebra::{DMatrix, DVector};

use crate::circ;
use crate::error::{Error, Result};
use crate::stimulus::{DirectionGrid, Stimulus};

/// Parameters of the V1 layer: `m_cells` direction-tuned units with preferred
/// directions uniformly spaced over the circle and a common tuning width.
#[derive(Debug, Clone, PartialEq)]
pub struct V1Params {
    m_cells: usize,
    sigma: f64,
    preferred_dirs_deg: Vec<f64>,
    baseline_b: f64,
}

impl V1Params {
    /// `sigma` is the tuning width in radians; preferred directions are
    /// `(360 / m_cells) * m` for `m = 1..=m_cells` (15 degrees apart at the
    /// default `m_cells = 24`).
    pub fn new(m_cells: usize, sigma: f64) -> Result<Self> {
        if m_cells == 0 {
            return Err(Error::Parameter("m_cells must be >= 1".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
        }
        let spacing = 360.0 / m_cells as f64;
        let preferred_dirs_deg = (1..=m_cells).map(|m| spacing * m as f64).collect();
        let baseline_b = (-2.0 / (sigma * sigma)).exp();
        Ok(Self { m_cells, sigma, preferred_dirs_deg, baseline_b })
    }

    pub fn m_cells(&self) -> usize {
        self.m_cells
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn preferred_dirs_deg(&self) -> &[f64] {
        &self.preferred_dirs_deg
    }

    /// Baseline `exp(-2 / sigma^2)` subtracted so the tuning curve spans
    /// exactly [0, 1].
    pub fn baseline_b(&self) -> f64 {
        self.baseline_b
    }
}

impl Default for V1Params {
    fn default() -> Self {
        Self::new(24, std::f64::consts::FRAC_PI_2).unwrap()
    }
}

/// Normalized von Mises activation of a unit preferring `c_deg`, probed at
/// `theta_deg`, with tuning width `sigma` (radians):
/// `(exp((cos d - 1) / sigma^2) - b) / (1 - b)` with `b = exp(-2 / sigma^2)`
/// and `d` the circular difference. Equals 1 at `d = 0` and 0 at `d = 180`.
pub fn von_mises_response(theta_deg: f64, c_deg: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let d = circ::signed_diff_deg(theta_deg, c_deg).to_radians();
    let sigma_sq = sigma * sigma;
    let b = (-2.0 / sigma_sq).exp();
    (((d.cos() - 1.0) / sigma_sq).exp() - b) / (1.0 - b)
}

/// Derivative of [`von_mises_response`] with respect to the probe direction,
/// per radian.
pub fn von_mises_derivative(theta_deg: f64, c_deg: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let d = circ::signed_diff_deg(theta_deg, c_deg).to_radians();
    let sigma_sq = sigma * sigma;
    let b = (-2.0 / sigma_sq).exp();
    ((d.cos() - 1.0) / sigma_sq).exp() * (-d.sin() / sigma_sq) / (1.0 - b)
}

/// Jacobian of the V1 response vector with respect to the stimulus's motion
/// directions: an `M x D` matrix whose column `j` is
/// `s_j * d v_m / d theta` at the j-th component direction (`D` = number of
/// stimulus components, derivative per radian). This is the tangent of the
/// stimulus family at the given stimulus, used by the direction-space Fisher
/// computation.
pub fn direction_jacobian(
    params: &V1Params,
    grid: &DirectionGrid,
    stimulus: &Stimulus,
) -> DMatrix<f64> {
    let positions = stimulus.nonzero_positions();
    let mut jac = DMatrix::zeros(params.m_cells(), positions.len());
    for (col, &pos) in positions.iter().enumerate() {
        let theta = grid.directions_deg()[pos];
        let intensity = stimulus.intensities()[pos];
        for (m, &c) in params.preferred_dirs_deg().iter().enumerate() {
            jac[(m, col)] = intensity * von_mises_derivative(theta, c, params.sigma());
        }
    }
    jac
}

/// Linear V1 response to a stimulus: `x_m = sum_i v_m(theta_i) * s_i`.
pub fn encode(params: &V1Params, grid: &DirectionGrid, stimulus: &Stimulus) -> DVector<f64> {
    debug_assert_eq!(stimulus.intensities().len(), grid.n_dirs());
    let dirs = grid.directions_deg();
    let mut x = DVector::zeros(params.m_cells());
    for &pos in stimulus.nonzero_positions() {
        let s_i = stimulus.intensities()[pos];
        let theta = dirs[pos];
        for (m, &c) in params.preferred_dirs_deg().iter().enumerate() {
            x[m] += von_mises_response(theta, c, params.sigma()) * s_i;
        }
    }
    x
}

/// [`encode`] over a raw intensity vector (any number of nonzero entries);
/// the response is linear in the intensities.
pub fn encode_intensities(params: &V1Params, grid: &DirectionGrid, s: &[f64]) -> DVector<f64> {
    assert_eq!(s.len(), grid.n_dirs(), "intensity vector must match the grid");
    let dirs = grid.directions_deg();
    let mut x = DVector::zeros(params.m_cells());
    for (i, &s_i) in s.iter().enumerate() {
        if s_i == 0.0 {
            continue;
        }
        for (m, &c) in params.preferred_dirs_deg().iter().enumerate() {
            x[m] += von_mises_response(dirs[i], c, params.sigma()) * s_i;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn peak_and_trough_normalization() {
        for sigma in [0.3, FRAC_PI_2, 2.0] {
            assert_eq!(von_mises_response(90.0, 90.0, sigma), 1.0);
            let trough = von_mises_response(270.0, 90.0, sigma);
            assert!(trough.abs() < 1e-15, "trough {trough} at sigma {sigma}");
        }
    }

    #[test]
    fn quarter_turn_value_at_default_width() {
        // independent evaluation of the closed form at sigma = pi/2, d = 90 deg:
        // exp(-4/pi^2) = 0.66679, b = exp(-8/pi^2) = 0.44460, ratio = 0.40004
        let sigma_sq = FRAC_PI_2 * FRAC_PI_2;
        let b = (-2.0 / sigma_sq).exp();
        let expected = ((-1.0 / sigma_sq).exp() - b) / (1.0 - b);
        assert_relative_eq!(expected, 0.4000432904300425, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.4001, epsilon = 1e-4);
        assert_relative_eq!(
            von_mises_response(180.0, 90.0, FRAC_PI_2),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn response_is_symmetric_in_the_circular_difference() {
        for delta in [7.0, 45.0, 133.0, 179.0] {
            let plus = von_mises_response(90.0 + delta, 90.0, FRAC_PI_2);
            let minus = von_mises_response(90.0 - delta, 90.0, FRAC_PI_2);
            assert_relative_eq!(plus, minus, epsilon = 1e-14);
        }
    }

    #[test]
    fn encode_peaks_at_preferred_direction() {
        let grid = DirectionGrid::new(24).unwrap();
        let params = V1Params::default();
        // grid index m points at the preferred direction of cell m-1
        let s = Stimulus::single(&grid, 5, 1.0).unwrap();
        let x = encode(&params, &grid, &s);
        assert_eq!(x[4], 1.0);
        assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn encode_zero_intensities_gives_zero_response() {
        let grid = DirectionGrid::new(24).unwrap();
        let params = V1Params::default();
        let x = encode_intensities(&params, &grid, &vec![0.0; 24]);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_is_additive_and_homogeneous() {
        let grid = DirectionGrid::new(24).unwrap();
        let params = V1Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..2.0)).collect();
            let b: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..2.0)).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
            let xa = encode_intensities(&params, &grid, &a);
            let xb = encode_intensities(&params, &grid, &b);
            let xs = encode_intensities(&params, &grid, &sum);
            assert_relative_eq!(xs, &xa + &xb, epsilon = 1e-12);

            let scaled: Vec<f64> = a.iter().map(|v| 3.5 * v).collect();
            let xc = encode_intensities(&params, &grid, &scaled);
            assert_relative_eq!(xc, 3.5 * &xa, epsilon = 1e-12);
        }
    }

    #[test]
    fn params_cache_the_baseline() {
        let p = V1Params::new(24, FRAC_PI_2).unwrap();
        assert_eq!(p.baseline_b(), (-2.0 / (FRAC_PI_2 * FRAC_PI_2)).exp());
        assert_eq!(p.preferred_dirs_deg().len(), 24);
        assert_eq!(p.preferred_dirs_deg()[0], 15.0);
        assert_eq!(p.preferred_dirs_deg()[23], 360.0);
    }

    #[test]
    fn params_reject_degenerate_inputs() {
        assert!(V1Params::new(0, 1.0).is_err());
        assert!(V1Params::new(24, 0.0).is_err());
        assert!(V1Params::new(24, -1.0).is_err());
    }

    #[test]
    fn direction_derivative_matches_finite_differences() {
        let step_deg = 1e-4;
        for (theta, c, sigma) in [(37.0, 90.0, FRAC_PI_2), (200.0, 15.0, 0.8), (90.0, 90.0, 1.3)] {
            let fd = (von_mises_response(theta + step_deg, c, sigma)
                - von_mises_response(theta - step_deg, c, sigma))
                / (2.0 * step_deg.to_radians());
            let analytic = von_mises_derivative(theta, c, sigma);
            assert_relative_eq!(analytic, fd, epsilon = 1e-8, max_relative = 1e-7);
        }
        // derivative vanishes at the peak and the trough
        assert_relative_eq!(von_mises_derivative(90.0, 90.0, FRAC_PI_2), 0.0, epsilon = 1e-15);
        assert_relative_eq!(von_mises_derivative(270.0, 90.0, FRAC_PI_2), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn direction_jacobian_columns_follow_the_components() {
        let grid = DirectionGrid::new(24).unwrap();
        let params = V1Params::default();
        let s = Stimulus::bidirectional(&grid, 2, 6, 0.5).unwrap();
        let jac = direction_jacobian(&params, &grid, &s);
        assert_eq!(jac.shape(), (24, 2));
        for (col, theta) in [(0usize, 30.0f64), (1, 90.0)] {
            for m in 0..24 {
                let c = params.preferred_dirs_deg()[m];
                assert_relative_eq!(
                    jac[(m, col)],
                    0.5 * von_mises_derivative(theta, c, params.sigma()),
                    epsilon = 1e-15
                );
            }
        }
    }

    proptest! {
        #[test]
        fn response_stays_in_unit_interval(
            theta in -720.0f64..720.0,
            c in -720.0f64..720.0,
            sigma in 0.05f64..4.0,
        ) {
            let v = von_mises_response(theta, c, sigma);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "v = {}", v);
        }
    }
}
