//! Numerical validation suites: finite-difference oracles for the Jacobian
//! and objective gradients, Monte Carlo agreement for the closed-form Fisher
//! matrix, concavity probes and restart agreement for the convex density
//! subproblem, and a brute-force oracle for the simplex projection.
//!
//! The `fast` level trims trial counts (with correspondingly relaxed Monte
//! Carlo tolerances); `full` runs the tolerances the project commits to.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::density::{project_simplex, DensityVector};
use crate::error::Result;
use crate::info::{fisher_matrix, mc_fisher_validate, InfoConfig};
use crate::mt::MTParams;
use crate::optim::{grad_q_with_parts, kkt_residual, objective_q, objective_q_raw, optimize_density, DensityOptOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level `{other}` (expected fast|full)")),
        }
    }
}

/// Outcome of one suite: the worst measured quantity against its threshold.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

impl SuiteResult {
    fn finish(name: &str, measured: f64, threshold: f64, detail: String, start: Instant) -> Self {
        Self {
            name: name.to_string(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    pub fn render_line(&self) -> String {
        format!(
            "suite={} pass={} measured={:.3e} threshold={:.3e} seconds={:.1} {}",
            self.name, self.passed, self.measured, self.threshold, self.seconds, self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub level: Level,
    pub suites: Vec<SuiteResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn to_json(&self) -> crate::error::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-entry relative error between two matrices, with denominators floored
/// at a thousandth of the largest entry so near-zero entries do not blow up
/// the ratio.
pub fn max_rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1e-12);
    let mut worst = 0.0f64;
    for (av, bv) in a.iter().zip(b.iter()) {
        let denom = av.abs().max(bv.abs()).max(1e-3 * scale);
        worst = worst.max((av - bv).abs() / denom);
    }
    worst
}

/// Largest per-entry relative error between two gradient blocks, with
/// denominators floored at a thousandth of the block scale (near-zero
/// entries are otherwise dominated by finite-difference cancellation noise).
pub fn max_rel_error_block(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(fd.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * scale))
        .fold(0.0, f64::max)
}

/// Central-difference Jacobian of the normalized MT response.
pub fn fd_jacobian(params: &MTParams, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let k = params.k_cells();
    let m = params.m_inputs();
    let mut jac = DMatrix::zeros(k, m);
    for col in 0..m {
        let mut xp = x.clone();
        xp[col] += step;
        let mut xm = x.clone();
        xm[col] -= step;
        let fp = params.activations(&xp).unwrap().normalized;
        let fm = params.activations(&xm).unwrap().normalized;
        for row in 0..k {
            jac[(row, col)] = (fp[row] - fm[row]) / (2.0 * step);
        }
    }
    jac
}

/// Random MT parameters with standard-normal weights and mild thresholds.
pub fn random_mt(k: usize, m: usize, rng: &mut ChaCha8Rng) -> MTParams {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let weights = DMatrix::from_fn(k, m, |_, _| normal.sample(rng));
    let thresholds = DVector::from_fn(k, |_, _| 0.5 * normal.sample(rng));
    MTParams::new(1.0, 0.1, weights, thresholds).unwrap()
}

pub fn random_x(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    DVector::from_fn(m, |_, _| normal.sample(rng))
}

fn interior_density(k: usize, rng: &mut ChaCha8Rng) -> DensityVector {
    let logits: Vec<f64> = (0..k).map(|_| 0.7 * rng.random_range(-1.0..1.0)).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    DensityVector::from_vec(logits.iter().map(|l| l.exp() / z).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Analytic MT Jacobian against central finite differences over random
/// models spanning M = 4..24, K = 2..12.
pub fn jacobian_suite(n_models: usize) -> SuiteResult {
    jacobian_suite_with(n_models, |params, x| params.jacobian(x).unwrap())
}

/// [`jacobian_suite`] with an injectable Jacobian implementation; the
/// negative-control tests hand in a corrupted one.
pub fn jacobian_suite_with<F>(n_models: usize, jacobian: F) -> SuiteResult
where
    F: Fn(&MTParams, &DVector<f64>) -> DMatrix<f64>,
{
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ac);
    let mut worst = 0.0f64;
    for _ in 0..n_models {
        let m = rng.random_range(4..=24);
        let k = rng.random_range(2..=12);
        let params = random_mt(k, m, &mut rng);
        let x = random_x(m, &mut rng);
        let analytic = jacobian(&params, &x);
        let fd = fd_jacobian(&params, &x, 1e-5);
        worst = worst.max(max_rel_error(&analytic, &fd));
    }
    SuiteResult::finish(
        "jacobian-fd",
        worst,
        1e-6,
        format!("{n_models} random models, central differences at 1e-5"),
        start,
    )
}

/// Closed-form Fisher matrix against the Monte Carlo estimator on small
/// random models (relative Frobenius error).
pub fn fisher_mc_suite(n_models: usize, n_trials: usize, tolerance: f64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf15);
    let mut worst = 0.0f64;
    for i in 0..n_models {
        let m = rng.random_range(2..=4);
        let k = rng.random_range(1..=3);
        let mt = random_mt(k, m, &mut rng);
        let x = random_x(m, &mut rng);
        let density = interior_density(k, &mut rng);
        let info = InfoConfig { n_population: 200.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let exact = fisher_matrix(&mt, &density, &info, &x, i).unwrap().j;
        let mc = mc_fisher_validate(&mt, &density, &info, &x, n_trials, 1000 + i as u64).unwrap();
        worst = worst.max((&mc - &exact).norm() / exact.norm().max(1e-12));
    }
    SuiteResult::finish(
        "fisher-mc",
        worst,
        tolerance,
        format!("{n_models} small models, {n_trials} Poisson trials each"),
        start,
    )
}

/// Analytic objective gradients against central finite differences on every
/// parameter block (weights, thresholds, densities).
pub fn grad_suite(n_models: usize) -> SuiteResult {
    let start = Instant::now();
    let step = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a4d);
    let lambda = 10.0;
    let mut worst = 0.0f64;
    for _ in 0..n_models {
        let m = rng.random_range(3..=5);
        let k = rng.random_range(2..=4);
        let mt = random_mt(k, m, &mut rng);
        let xs: Vec<DVector<f64>> = (0..5).map(|_| random_x(m, &mut rng)).collect();
        let density = interior_density(k, &mut rng);
        let info = InfoConfig { n_population: 200.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let (grads, _) = grad_q_with_parts(&mt, &density, &info, lambda, &xs).unwrap();

        let mut an_w = Vec::with_capacity(k * m);
        let mut fd_w = Vec::with_capacity(k * m);
        let mut an_b = Vec::with_capacity(k);
        let mut fd_b = Vec::with_capacity(k);
        let mut an_r = Vec::with_capacity(k);
        let mut fd_r = Vec::with_capacity(k);
        for row in 0..k {
            for col in 0..m {
                an_w.push(grads.weights[(row, col)]);
                fd_w.push({
                    let mut plus = mt.clone();
                    plus.weights_mut()[(row, col)] += step;
                    let mut minus = mt.clone();
                    minus.weights_mut()[(row, col)] -= step;
                    let qp = objective_q(&plus, &density, &info, lambda, &xs).unwrap().q;
                    let qm = objective_q(&minus, &density, &info, lambda, &xs).unwrap().q;
                    (qp - qm) / (2.0 * step)
                });
            }
            an_b.push(grads.thresholds[row]);
            fd_b.push({
                let mut plus = mt.clone();
                plus.thresholds_mut()[row] += step;
                let mut minus = mt.clone();
                minus.thresholds_mut()[row] -= step;
                let qp = objective_q(&plus, &density, &info, lambda, &xs).unwrap().q;
                let qm = objective_q(&minus, &density, &info, lambda, &xs).unwrap().q;
                (qp - qm) / (2.0 * step)
            });
            an_r.push(grads.rho[row]);
            fd_r.push({
                let mut plus = density.rho().clone();
                plus[row] += step;
                let mut minus = density.rho().clone();
                minus[row] -= step;
                let qp = objective_q_raw(&mt, &plus, &info, lambda, &xs).unwrap().q;
                let qm = objective_q_raw(&mt, &minus, &info, lambda, &xs).unwrap().q;
                (qp - qm) / (2.0 * step)
            });
        }
        worst = worst.max(max_rel_error_block(&an_w, &fd_w));
        worst = worst.max(max_rel_error_block(&an_b, &fd_b));
        worst = worst.max(max_rel_error_block(&an_r, &fd_r));

        // directional probes catch errors hiding in small entries
        for _ in 0..5 {
            let normal = Normal::new(0.0f64, 1.0).unwrap();
            let dir_w: DMatrix<f64> = DMatrix::from_fn(k, m, |_, _| normal.sample(&mut rng));
            let dir_b: DVector<f64> = DVector::from_fn(k, |_, _| normal.sample(&mut rng));
            let scale = (dir_w.norm_squared() + dir_b.norm_squared()).sqrt();
            let analytic_slope = (grads
                .weights
                .iter()
                .zip(dir_w.iter())
                .map(|(g, d)| g * d)
                .sum::<f64>()
                + grads.thresholds.dot(&dir_b))
                / scale;
            let fd_slope = {
                let mut plus = mt.clone();
                let mut minus = mt.clone();
                *plus.weights_mut() += &dir_w * (step / scale);
                *minus.weights_mut() -= &dir_w * (step / scale);
                *plus.thresholds_mut() += &dir_b * (step / scale);
                *minus.thresholds_mut() -= &dir_b * (step / scale);
                let qp = objective_q(&plus, &density, &info, lambda, &xs).unwrap().q;
                let qm = objective_q(&minus, &density, &info, lambda, &xs).unwrap().q;
                (qp - qm) / (2.0 * step)
            };
            worst = worst.max(max_rel_error_block(&[analytic_slope], &[fd_slope]));
        }
    }
    SuiteResult::finish(
        "gradient-fd",
        worst,
        1e-4,
        format!("{n_models} random models, all parameter blocks plus directional probes"),
        start,
    )
}

/// Concavity probes of the density objective: midpoint concavity of
/// `F(rho) = < ln det(J(rho) + gamma I) >` on random models and mixtures.
pub fn concavity_suite(n_probes: usize) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0c4);
    let mut worst = 0.0f64; // largest violation of the concavity inequality
    for _ in 0..n_probes {
        let m = rng.random_range(3..=5);
        let k = rng.random_range(2..=4);
        let mt = random_mt(k, m, &mut rng);
        let xs: Vec<DVector<f64>> = (0..4).map(|_| random_x(m, &mut rng)).collect();
        let info = InfoConfig { n_population: 200.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        // mean ln det = -2 * logdet_part of the lambda-free objective
        let f = |rho: &DVector<f64>| -> f64 {
            -2.0 * objective_q_raw(&mt, rho, &info, 0.0, &xs).unwrap().logdet_part
        };
        let r1 = interior_density(k, &mut rng);
        let r2 = interior_density(k, &mut rng);
        let t: f64 = rng.random_range(0.0..1.0);
        let mix = t * r1.rho() + (1.0 - t) * r2.rho();
        let lhs = f(&mix);
        let rhs = t * f(r1.rho()) + (1.0 - t) * f(r2.rho());
        worst = worst.max(rhs - lhs);
    }
    SuiteResult::finish(
        "density-concavity",
        worst,
        1e-9,
        format!("{n_probes} random midpoint probes"),
        start,
    )
}

/// Simplex projection against the exact support-enumeration oracle.
pub fn simplex_suite(n_cases: usize) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51e9);
    let mut worst = 0.0f64;
    for _ in 0..n_cases {
        let n = rng.random_range(1..=8);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let fast = project_simplex(&v);
        let exact = brute_force_projection(&v);
        for (a, b) in fast.as_slice().iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    SuiteResult::finish(
        "simplex-projection",
        worst,
        1e-9,
        format!("{n_cases} random vectors vs support enumeration"),
        start,
    )
}

/// Exact projection by enumerating candidate supports (exponential, test
/// sizes only).
pub fn brute_force_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 20);
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
    best.expect("some support is feasible").1
}

/// Density optimization from random restarts: objective values must agree
/// and every run must certify its KKT residual.
pub fn restart_suite(n_inits: usize) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e57);
    let m = 5;
    let k = 4;
    let mt = random_mt(k, m, &mut rng);
    let xs: Vec<DVector<f64>> = (0..30).map(|_| random_x(m, &mut rng)).collect();
    let info = InfoConfig { n_population: 200.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
    let lambda = 10.0;
    let opts = DensityOptOptions { max_iters: 4000, kkt_tol: 1e-6 };
    let mut objectives = Vec::new();
    let mut worst_residual = 0.0f64;
    for _ in 0..n_inits {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let init = project_simplex(&raw);
        match optimize_density(&mt, &info, lambda, &xs, &init, &opts) {
            Ok(density) => {
                let residual = kkt_residual(&mt, &density, &info, lambda, &xs).unwrap();
                worst_residual = worst_residual.max(residual);
                objectives.push(objective_q(&mt, &density, &info, lambda, &xs).unwrap().q);
            }
            Err(e) => {
                return SuiteResult {
                    name: "density-restarts".into(),
                    passed: false,
                    measured: f64::INFINITY,
                    threshold: 1e-6,
                    detail: format!("optimizer failed: {e}"),
                    seconds: start.elapsed().as_secs_f64(),
                };
            }
        }
    }
    let spread = objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    let measured = spread.max(worst_residual);
    SuiteResult::finish(
        "density-restarts",
        measured,
        1e-6,
        format!("{n_inits} restarts: objective spread {spread:.3e}, worst KKT {worst_residual:.3e}"),
        start,
    )
}

/// Run every suite at the given level.
pub fn run_all(level: Level) -> Result<ValidationReport> {
    let suites = match level {
        Level::Fast => vec![
            jacobian_suite(100),
            fisher_mc_suite(10, 200_000, 0.025),
            grad_suite(5),
            concavity_suite(100),
            simplex_suite(300),
            restart_suite(5),
        ],
        Level::Full => vec![
            jacobian_suite(100),
            fisher_mc_suite(10, 1_000_000, 0.01),
            grad_suite(10),
            concavity_suite(100),
            simplex_suite(1000),
            restart_suite(5),
        ],
    };
    Ok(ValidationReport { level, suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_suite_passes_and_catches_corruption() {
        let good = jacobian_suite(10);
        assert!(good.passed, "{}", good.render_line());

        let corrupted = jacobian_suite_with(10, |params, x| {
            let mut jac = params.jacobian(x).unwrap();
            jac[(0, 0)] += 0.01;
            jac
        });
        assert!(!corrupted.passed, "corrupted Jacobian must fail the suite");
    }

    #[test]
    fn grad_suite_smoke() {
        let result = grad_suite(2);
        assert!(result.passed, "{}", result.render_line());
    }

    #[test]
    fn concavity_suite_smoke() {
        let result = concavity_suite(20);
        assert!(result.passed, "{}", result.render_line());
    }

    #[test]
    fn simplex_suite_smoke() {
        let result = simplex_suite(50);
        assert!(result.passed, "{}", result.render_line());
    }

    #[test]
    fn restart_suite_smoke() {
        let result = restart_suite(3);
        assert!(result.passed, "{}", result.render_line());
    }

    #[test]
    fn report_serializes() {
        let report = ValidationReport { level: Level::Fast, suites: vec![jacobian_suite(2)] };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"level\":\"fast\""));
        assert!(json.contains("jacobian-fd"));
    }
}
