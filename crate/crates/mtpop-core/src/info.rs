//! Poisson Fisher information of the MT population, the regularized log-det
//! information estimate, and a Monte Carlo validator for the closed form.
//!
//! All information quantities are computed in the M-dimensional V1-response
//! space. Each MT cell type `k` is a subpopulation of `N * rho_k` independent
//! Poisson units with mean count `f_hat_k(x)` per trial, which gives the
//! closed-form Fisher matrix
//! `J(x) = N * sum_k rho_k * g_k g_k^T / f_hat_k` with `g_k = d f_hat_k / dx`.
//! The prior term of the regularized matrix is replaced by `gamma * I`, which
//! also keeps the log-determinant finite when `rank(J) <= K < M`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::density::DensityVector;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::mt::MTParams;
use crate::stimulus::StimulusBatch;

/// ln(2*pi*e)
pub const LN_2PI_E: f64 = 2.837877066409345;

/// Which stimulus description the Fisher matrix differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherSpace {
    /// The continuous motion-direction parameters of the stimulus (one per
    /// component, so J is 1x1 for single stimuli and 2x2 for pairs), chained
    /// through the V1 tuning derivative. This is the discriminability that
    /// rewards the tuning-curve structure and is the training default.
    Direction,
    /// The M-dimensional V1 response vector (J is M x M).
    V1Response,
}

impl std::str::FromStr for FisherSpace {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "direction" => Ok(FisherSpace::Direction),
            "v1" => Ok(FisherSpace::V1Response),
            other => Err(format!("unknown fisher_space `{other}` (expected direction|v1)")),
        }
    }
}

impl FisherSpace {
    pub fn label(&self) -> &'static str {
        match self {
            FisherSpace::Direction => "direction",
            FisherSpace::V1Response => "v1",
        }
    }
}

/// Scaling and regularization of the Fisher computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoConfig {
    /// Total neuron count N distributed over the subpopulations.
    pub n_population: f64,
    /// Ridge regularizer gamma added to the Fisher matrix in place of the
    /// (undefined) prior curvature term.
    pub gamma_reg: f64,
    /// Mean rates below this floor contribute nothing to the Fisher sum.
    pub rate_floor: f64,
}

impl InfoConfig {
    pub fn new(n_population: f64, gamma_reg: f64, rate_floor: f64) -> Result<Self> {
        if !(n_population >= 1.0) {
            return Err(Error::Parameter(format!(
                "n_population must be >= 1, got {n_population}"
            )));
        }
        if !(gamma_reg >= 0.0) {
            return Err(Error::Parameter(format!("gamma_reg must be >= 0, got {gamma_reg}")));
        }
        if !(rate_floor > 0.0) {
            return Err(Error::Parameter(format!("rate_floor must be > 0, got {rate_floor}")));
        }
        Ok(Self { n_population, gamma_reg, rate_floor })
    }
}

impl Default for InfoConfig {
    fn default() -> Self {
        Self { n_population: 1000.0, gamma_reg: 1e-3, rate_floor: 1e-9 }
    }
}

/// Fisher information of one stimulus.
#[derive(Debug, Clone)]
pub struct FisherReport {
    /// Fisher matrix `J(x)`, symmetric PSD with rank at most K.
    pub j: DMatrix<f64>,
    /// Regularized matrix `G = J + gamma * I`.
    pub g: DMatrix<f64>,
    /// `0.5 * ln det(G / (2 pi e))` in nats.
    pub logdet_term: f64,
    pub stimulus_id: usize,
}

/// Batch information estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoEstimate {
    /// Mean over the batch of `0.5 * ln det(G / (2 pi e))`, in nats.
    pub mean_logdet_nats: f64,
    /// Shannon entropy of the empirical discrete stimulus distribution
    /// (diagnostic bookkeeping, constant in the model parameters).
    pub entropy_h_nats: f64,
    /// `mean_logdet_nats + entropy_h_nats`.
    pub mi_nats: f64,
}

/// `ln det` of a symmetric positive-definite matrix via Cholesky; `None` when
/// the factorization fails.
pub(crate) fn spd_ln_det(m: &DMatrix<f64>) -> Option<f64> {
    Cholesky::new(m.clone()).map(|c| c.ln_determinant())
}

/// Fisher matrix from precomputed normalized rates and their Jacobian.
///
/// `fhat` has length K and `jac` is the `K x M` matrix whose row `k` is
/// `g_k = d f_hat_k / dx`. Subpopulations with `fhat[k] < rate_floor` or
/// `rho_k = 0` contribute zero.
pub fn fisher_from_parts(
    fhat: &DVector<f64>,
    jac: &DMatrix<f64>,
    density: &DensityVector,
    config: &InfoConfig,
    stimulus_id: usize,
) -> Result<FisherReport> {
    density.validate()?;
    if density.len() != fhat.len() {
        return Err(Error::Dimension { expected: fhat.len(), actual: density.len() });
    }
    if jac.nrows() != fhat.len() {
        return Err(Error::Dimension { expected: fhat.len(), actual: jac.nrows() });
    }
    let m = jac.ncols();
    let mut j = DMatrix::zeros(m, m);
    for k in 0..fhat.len() {
        let rho = density.rho()[k];
        if rho == 0.0 || fhat[k] < config.rate_floor {
            continue;
        }
        let alpha = config.n_population * rho / fhat[k];
        // scale the vector instead of the update so the rank-1 outer product
        // is bitwise symmetric
        let g_k = jac.row(k).transpose() * alpha.sqrt();
        j.ger(1.0, &g_k, &g_k, 1.0);
    }
    let mut g = j.clone();
    for d in 0..m {
        g[(d, d)] += config.gamma_reg;
    }
    let ln_det =
        spd_ln_det(&g).ok_or(Error::NotPositiveDefinite { stimulus_id })?;
    let logdet_term = 0.5 * (ln_det - m as f64 * LN_2PI_E);
    Ok(FisherReport { j, g, logdet_term, stimulus_id })
}

/// Closed-form Fisher matrix of the model at a V1 response vector `x`.
pub fn fisher_matrix(
    mt: &MTParams,
    density: &DensityVector,
    config: &InfoConfig,
    x: &DVector<f64>,
    stimulus_id: usize,
) -> Result<FisherReport> {
    let fwd = mt.forward(x)?;
    let jac = mt.jacobian_from(&fwd);
    fisher_from_parts(&fwd.fhat, &jac, density, config, stimulus_id)
}

/// Closed-form Fisher matrix with respect to the stimulus's motion
/// directions: `D x D` with one row per stimulus component, built by chaining
/// the normalized-response Jacobian through the V1 direction derivative.
pub fn fisher_direction(
    model: &Model,
    density: &DensityVector,
    config: &InfoConfig,
    stimulus: &crate::stimulus::Stimulus,
    stimulus_id: usize,
) -> Result<FisherReport> {
    let x = model.encode(stimulus);
    let tangent = crate::v1::direction_jacobian(&model.v1, &model.grid, stimulus); // M x D
    let fwd = model.mt.forward(&x)?;
    let jac = model.mt.jacobian_from(&fwd); // K x M
    let dir_jac = &jac * &tangent; // K x D
    fisher_from_parts(&fwd.fhat, &dir_jac, density, config, stimulus_id)
}

/// Monte Carlo estimate of the Fisher matrix directly from its definition.
///
/// Each trial draws the total spike count of every subpopulation,
/// `R_k ~ Poisson(N * rho_k * f_hat_k)`, forms the score
/// `sum_k (R_k / f_hat_k - N * rho_k) * g_k`, and averages the score outer
/// products. The estimator is unbiased for `J`. Subpopulations below the
/// rate floor are skipped, matching the closed form.
///
/// Deterministic for a fixed `(n_trials, seed)` regardless of thread count.
pub fn mc_fisher_validate(
    mt: &MTParams,
    density: &DensityVector,
    config: &InfoConfig,
    x: &DVector<f64>,
    n_trials: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let fwd = mt.forward(x)?;
    let jac = mt.jacobian_from(&fwd);
    mc_fisher_from_parts(&fwd.fhat, &jac, density, config, n_trials, seed)
}

/// [`mc_fisher_validate`] for the direction-space Fisher of a stimulus.
pub fn mc_fisher_validate_direction(
    model: &Model,
    density: &DensityVector,
    config: &InfoConfig,
    stimulus: &crate::stimulus::Stimulus,
    n_trials: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let x = model.encode(stimulus);
    let tangent = crate::v1::direction_jacobian(&model.v1, &model.grid, stimulus);
    let fwd = model.mt.forward(&x)?;
    let dir_jac = model.mt.jacobian_from(&fwd) * tangent;
    mc_fisher_from_parts(&fwd.fhat, &dir_jac, density, config, n_trials, seed)
}

fn mc_fisher_from_parts(
    fhat: &DVector<f64>,
    jac: &DMatrix<f64>,
    density: &DensityVector,
    config: &InfoConfig,
    n_trials: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    assert!(n_trials >= 10_000, "need at least 10^4 trials for a meaningful estimate");
    density.validate()?;
    let m = jac.ncols();

    struct Term {
        mean: f64,     // N * rho_k * f_hat_k
        inv_rate: f64, // 1 / f_hat_k
        offset: f64,   // N * rho_k
        g: DVector<f64>,
    }
    let terms: Vec<Term> = (0..fhat.len())
        .filter(|&k| density.rho()[k] > 0.0 && fhat[k] >= config.rate_floor)
        .map(|k| Term {
            mean: config.n_population * density.rho()[k] * fhat[k],
            inv_rate: 1.0 / fhat[k],
            offset: config.n_population * density.rho()[k],
            g: jac.row(k).transpose(),
        })
        .collect();

    // Fixed chunking with per-chunk RNG streams keeps the result independent
    // of the parallel schedule.
    let n_chunks = 64.min(n_trials);
    let sums: Vec<DMatrix<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * n_trials / n_chunks;
            let hi = (chunk + 1) * n_trials / n_chunks;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64 + 1);
            let mut acc = DMatrix::zeros(m, m);
            let mut score = DVector::zeros(m);
            let poissons: Vec<Poisson<f64>> =
                terms.iter().map(|t| Poisson::new(t.mean).expect("positive mean")).collect();
            for _ in lo..hi {
                score.fill(0.0);
                for (t, p) in terms.iter().zip(&poissons) {
                    let r = p.sample(&mut rng);
                    score.axpy(r * t.inv_rate - t.offset, &t.g, 1.0);
                }
                acc.ger(1.0, &score, &score, 1.0);
            }
            acc
        })
        .collect();

    let mut total = DMatrix::zeros(m, m);
    for s in sums {
        total += s;
    }
    Ok(total / n_trials as f64)
}

/// Per-stimulus `0.5 * ln det(G / (2 pi e))` over a set of V1 responses, in
/// input order.
pub fn batch_logdet_terms(
    mt: &MTParams,
    density: &DensityVector,
    config: &InfoConfig,
    xs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| Ok(fisher_matrix(mt, density, config, x, i)?.logdet_term))
        .collect()
}

/// Shannon entropy (nats) of the empirical distribution over distinct
/// stimuli in the batch.
pub fn stimulus_entropy_nats(batch: &StimulusBatch) -> f64 {
    let mut counts: BTreeMap<Vec<(usize, u64)>, usize> = BTreeMap::new();
    for s in &batch.stimuli {
        let key: Vec<(usize, u64)> = s
            .nonzero_positions()
            .iter()
            .map(|&p| (p, s.intensities()[p].to_bits()))
            .collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    let n = batch.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Asymptotic mutual-information estimate over a stimulus batch: the batch
/// mean of the per-stimulus log-det terms plus the entropy of the empirical
/// stimulus distribution. The Fisher matrices live in the V1-response space.
pub fn mi_asymptotic(
    model: &Model,
    density: &DensityVector,
    config: &InfoConfig,
    batch: &StimulusBatch,
) -> Result<InfoEstimate> {
    mi_asymptotic_in(FisherSpace::V1Response, model, density, config, batch)
}

/// [`mi_asymptotic`] with the Fisher space chosen explicitly.
pub fn mi_asymptotic_in(
    space: FisherSpace,
    model: &Model,
    density: &DensityVector,
    config: &InfoConfig,
    batch: &StimulusBatch,
) -> Result<InfoEstimate> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let terms: Vec<f64> = match space {
        FisherSpace::V1Response => {
            let xs = model.encode_batch(batch);
            batch_logdet_terms(&model.mt, density, config, &xs)?
        }
        FisherSpace::Direction => batch
            .stimuli
            .par_iter()
            .enumerate()
            .map(|(i, s)| Ok(fisher_direction(model, density, config, s, i)?.logdet_term))
            .collect::<Result<_>>()?,
    };
    // fixed summation order so the estimate does not depend on thread count
    let mean_logdet_nats = terms.iter().sum::<f64>() / terms.len() as f64;
    let entropy_h_nats = stimulus_entropy_nats(batch);
    Ok(InfoEstimate {
        mean_logdet_nats,
        entropy_h_nats,
        mi_nats: mean_logdet_nats + entropy_h_nats,
    })
}

/// Diagnostic CSV of per-stimulus Fisher reports: log-det term and the
/// extreme eigenvalues of `J`.
pub fn write_fisher_csv<W: Write>(
    reports: &[FisherReport],
    mut w: W,
    header_comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = header_comment {
        writeln!(w, "# {comment}")?;
    }
    writeln!(w, "stimulus_id,logdet_term,min_eig_j,max_eig_j")?;
    for r in reports {
        let eigs = r.j.clone().symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        writeln!(w, "{},{},{},{}", r.stimulus_id, r.logdet_term, min, max)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{sample_training_set, DirectionGrid, Stimulus};
    use crate::v1::V1Params;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::Normal;

    fn small_model(k: usize, m: usize, seed: u64) -> (MTParams, DVector<f64>, DensityVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let weights = DMatrix::from_fn(k, m, |_, _| normal.sample(&mut rng));
        let thresholds = DVector::from_fn(k, |_, _| 0.5 * normal.sample(&mut rng));
        let mt = MTParams::new(1.0, 0.1, weights, thresholds).unwrap();
        let x = DVector::from_fn(m, |_, _| normal.sample(&mut rng));
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let density = crate::density::project_simplex(&raw);
        (mt, x, density)
    }

    #[test]
    fn zero_weights_carry_no_information() {
        let mt = MTParams::new(1.0, 0.1, DMatrix::zeros(3, 4), DVector::zeros(3)).unwrap();
        let density = DensityVector::uniform(3);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let report =
            fisher_matrix(&mt, &density, &config, &DVector::from_element(4, 0.7), 0).unwrap();
        assert_eq!(report.j, DMatrix::zeros(4, 4));
        for d in 0..4 {
            assert_eq!(report.g[(d, d)], 1e-3);
        }
        assert_relative_eq!(
            report.logdet_term,
            0.5 * (4.0 * (1e-3f64).ln() - 4.0 * LN_2PI_E),
            epsilon = 1e-12
        );
    }

    #[test]
    fn scalar_toy_case() {
        // M = 1, K = 1, rho = 1, N = 100, fhat = 0.5, g = 0.2 -> J = 8
        let fhat = DVector::from_element(1, 0.5);
        let jac = DMatrix::from_element(1, 1, 0.2);
        let density = DensityVector::uniform(1);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 0.0, rate_floor: 1e-9 };
        let report = fisher_from_parts(&fhat, &jac, &density, &config, 0).unwrap();
        assert_relative_eq!(report.j[(0, 0)], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_floor_drops_silent_cells() {
        let fhat = DVector::from_vec(vec![0.5, 1e-12]);
        let jac = DMatrix::from_row_slice(2, 1, &[0.2, 0.3]);
        let density = DensityVector::uniform(2);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 0.0, rate_floor: 1e-9 };
        let report = fisher_from_parts(&fhat, &jac, &density, &config, 0).unwrap();
        // only the first cell contributes: 100 * 0.5 * 0.04 / 0.5 = 4
        assert_relative_eq!(report.j[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_zero_with_rank_deficient_j_reports_the_stimulus() {
        let mt = MTParams::new(1.0, 0.1, DMatrix::zeros(2, 3), DVector::zeros(2)).unwrap();
        let density = DensityVector::uniform(2);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 0.0, rate_floor: 1e-9 };
        let err = fisher_matrix(&mt, &density, &config, &DVector::zeros(3), 7).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { stimulus_id: 7 }));
    }

    #[test]
    fn diagonal_g_logdet() {
        // K = M unit-direction gradients make J exactly diagonal
        let diag = [0.5, 2.0, 9.0];
        let m = diag.len();
        let fhat = DVector::from_element(m, 0.5);
        let density = DensityVector::uniform(m);
        let n_pop = 100.0;
        let mut jac = DMatrix::zeros(m, m);
        for k in 0..m {
            // scale so n_pop * rho * g^2 / fhat = diag[k]
            jac[(k, k)] = (diag[k] * fhat[k] / (n_pop / m as f64)).sqrt();
        }
        let config = InfoConfig { n_population: n_pop, gamma_reg: 0.0, rate_floor: 1e-9 };
        let report = fisher_from_parts(&fhat, &jac, &density, &config, 0).unwrap();
        let expected: f64 = diag.iter().map(|a| 0.5 * (a / LN_2PI_E.exp()).ln()).sum();
        assert_relative_eq!(report.logdet_term, expected, epsilon = 1e-10);
    }

    #[test]
    fn fisher_matrix_is_symmetric_psd_with_bounded_rank() {
        for seed in 0..10 {
            let (mt, x, density) = small_model(3, 6, seed);
            let config = InfoConfig { n_population: 500.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
            let report = fisher_matrix(&mt, &density, &config, &x, 0).unwrap();
            assert_eq!(report.j, report.j.transpose());
            let eigs = report.j.clone().symmetric_eigenvalues();
            let positive = eigs.iter().filter(|&&e| e > 1e-8).count();
            assert!(positive <= 3, "rank {positive} exceeds K");
            assert!(eigs.iter().all(|&e| e >= -1e-10), "eigenvalues {eigs:?}");
        }
    }

    #[test]
    fn logdet_term_is_monotone_in_population_size() {
        let (mt, x, density) = small_model(3, 5, 4);
        let mut last = f64::NEG_INFINITY;
        for n in [10.0, 100.0, 1000.0, 10_000.0] {
            let config = InfoConfig { n_population: n, gamma_reg: 1e-3, rate_floor: 1e-9 };
            let term = fisher_matrix(&mt, &density, &config, &x, 0).unwrap().logdet_term;
            assert!(term >= last, "logdet term decreased: {term} < {last}");
            last = term;
        }
    }

    #[test]
    fn mc_estimate_is_exactly_zero_for_constant_rates() {
        let mt = MTParams::new(1.0, 0.1, DMatrix::zeros(2, 3), DVector::zeros(2)).unwrap();
        let density = DensityVector::uniform(2);
        let config = InfoConfig::default();
        let est =
            mc_fisher_validate(&mt, &density, &config, &DVector::zeros(3), 10_000, 1).unwrap();
        assert_eq!(est, DMatrix::zeros(3, 3));
    }

    #[test]
    fn mc_estimate_matches_scalar_toy() {
        // same toy as the closed-form test, via a real 1x1 model with the
        // parts injected through an equivalent MTParams is impractical, so
        // check the closed form against MC on a random 1-cell model instead.
        let (mt, x, _) = small_model(1, 1, 11);
        let density = DensityVector::uniform(1);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let exact = fisher_matrix(&mt, &density, &config, &x, 0).unwrap().j;
        let mc = mc_fisher_validate(&mt, &density, &config, &x, 100_000, 5).unwrap();
        assert_relative_eq!(mc[(0, 0)], exact[(0, 0)], max_relative = 0.02);
    }

    #[test]
    fn mc_agreement_on_small_random_model() {
        let (mt, x, density) = small_model(3, 4, 21);
        let config = InfoConfig { n_population: 200.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let exact = fisher_matrix(&mt, &density, &config, &x, 0).unwrap().j;
        let mc = mc_fisher_validate(&mt, &density, &config, &x, 1_000_000, 3).unwrap();
        let rel = (&mc - &exact).norm() / exact.norm();
        assert!(rel < 0.01, "relative Frobenius error {rel}");
    }

    #[test]
    fn mc_error_shrinks_with_more_trials() {
        let (mt, x, _) = small_model(1, 2, 33);
        let density = DensityVector::uniform(1);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 1e-3, rate_floor: 1e-9 };
        let exact = fisher_matrix(&mt, &density, &config, &x, 0).unwrap().j;
        let mut improved = 0;
        for seed in 0..10 {
            let coarse = mc_fisher_validate(&mt, &density, &config, &x, 10_000, seed).unwrap();
            let fine = mc_fisher_validate(&mt, &density, &config, &x, 1_000_000, seed).unwrap();
            let err_coarse = (&coarse - &exact).norm();
            let err_fine = (&fine - &exact).norm();
            if err_fine < err_coarse {
                improved += 1;
            }
        }
        assert!(improved >= 9, "only {improved}/10 seeds improved with more trials");
    }

    #[test]
    fn mc_is_deterministic_for_a_fixed_seed() {
        let (mt, x, density) = small_model(2, 3, 8);
        let config = InfoConfig::default();
        let a = mc_fisher_validate(&mt, &density, &config, &x, 20_000, 9).unwrap();
        let b = mc_fisher_validate(&mt, &density, &config, &x, 20_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mi_with_identity_scaled_g_reduces_to_the_entropy() {
        // zero weights -> J = 0; gamma = 2*pi*e makes G = 2*pi*e * I
        let grid = DirectionGrid::new(24).unwrap();
        let v1 = V1Params::default();
        let mt = MTParams::new(1.0, 0.1, DMatrix::zeros(12, 24), DVector::zeros(12)).unwrap();
        let model = Model::new(grid.clone(), v1, mt).unwrap();
        let density = DensityVector::uniform(12);
        let config =
            InfoConfig { n_population: 1000.0, gamma_reg: LN_2PI_E.exp(), rate_floor: 1e-9 };
        let batch = StimulusBatch {
            stimuli: vec![
                Stimulus::single(&grid, 1, 1.0).unwrap(),
                Stimulus::single(&grid, 7, 1.0).unwrap(),
            ],
            seed: 0,
            n_single: 2,
            n_bidir: 0,
        };
        let est = mi_asymptotic(&model, &density, &config, &batch).unwrap();
        assert_relative_eq!(est.mean_logdet_nats, 0.0, epsilon = 1e-10);
        assert_relative_eq!(est.entropy_h_nats, 2f64.ln(), epsilon = 1e-12);
        assert_eq!(est.mi_nats, est.mean_logdet_nats + est.entropy_h_nats);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let grid = DirectionGrid::new(24).unwrap();
        let model = Model::new(
            grid,
            V1Params::default(),
            MTParams::new(1.0, 0.1, DMatrix::zeros(12, 24), DVector::zeros(12)).unwrap(),
        )
        .unwrap();
        let density = DensityVector::uniform(12);
        let batch = StimulusBatch { stimuli: vec![], seed: 0, n_single: 0, n_bidir: 0 };
        assert!(matches!(
            mi_asymptotic(&model, &density, &InfoConfig::default(), &batch),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn entropy_of_uniform_singles_approaches_ln_n_dirs() {
        let grid = DirectionGrid::new(24).unwrap();
        let batch = sample_training_set(&grid, 50_000, 0, 3);
        let h = stimulus_entropy_nats(&batch);
        assert_relative_eq!(h, 24f64.ln(), epsilon = 5e-3);
    }

    #[test]
    fn fisher_csv_format() {
        let fhat = DVector::from_element(1, 0.5);
        let jac = DMatrix::from_element(1, 1, 0.2);
        let density = DensityVector::uniform(1);
        let config = InfoConfig { n_population: 100.0, gamma_reg: 0.0, rate_floor: 1e-9 };
        let report = fisher_from_parts(&fhat, &jac, &density, &config, 3).unwrap();
        let mut out = Vec::new();
        write_fisher_csv(&[report], &mut out, Some("seed=1")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# seed=1\nstimulus_id,logdet_term,min_eig_j,max_eig_j\n3,"));
    }
}
