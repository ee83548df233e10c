//! The trainable objective and its optimizers.
//!
//! The objective over a stimulus set is
//!
//! `Q = < -1/2 ln det G(x) + lambda * sum_k rho_k f_hat_k(x) >_x`
//!
//! with `G` the regularized Fisher matrix from [`crate::info`]. Minimizing Q
//! maximizes the log-det information estimate under an energy penalty. The
//! Fisher matrix can live in either supported space (see
//! [`FisherSpace`]): differentiating against the stimulus's motion
//! directions (the default; J is 1x1 or 2x2 per stimulus) or against the
//! full V1 response vector (J is M x M).
//!
//! Two optimizers cooperate:
//!
//! * the population density `rho` lives on the probability simplex where Q is
//!   convex; it is solved by projected gradient descent with a KKT residual
//!   certificate ([`optimize_density`]);
//! * weights and thresholds are trained by minibatch stochastic gradient
//!   with Adam-style per-parameter step sizes and an inverse-time decayed
//!   base step, re-optimizing the density exactly at a fixed period
//!   ([`train`]).

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::{project_simplex, DensityVector};
use crate::error::{Error, Result};
use crate::info::{FisherSpace, InfoConfig};
use crate::model::Model;
use crate::mt::MTParams;
use crate::stimulus::{DirectionGrid, StimulusBatch};
use crate::v1::{direction_jacobian, V1Params};

/// Training-loop configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Energy penalty coefficient lambda.
    pub lambda_energy: f64,
    pub minibatch_size: usize,
    pub max_iters: usize,
    /// Base step size at iteration 0.
    pub step_init: f64,
    /// Inverse-time decay: step(t) = step_init / (1 + step_decay * t).
    pub step_decay: f64,
    pub seed: u64,
    /// Which stimulus description the trained Fisher matrix differentiates
    /// against.
    pub fisher_space: FisherSpace,
    /// Iterations between exact density re-optimizations.
    pub density_update_period: usize,
    /// Stimuli used per density re-optimization (0 = the full batch).
    pub density_subsample: usize,
    /// Iteration budget of each in-loop density re-optimization.
    pub density_max_iters: usize,
    /// KKT tolerance of the in-loop density re-optimizations.
    pub density_kkt_tol: f64,
    /// Early stop when the smoothed objective changes by less than this
    /// relative amount over 100 iterations (0 disables).
    pub convergence_tol: f64,
    /// Invoke the checkpoint hook every this many iterations (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_energy: 10.0,
            minibatch_size: 64,
            max_iters: 20_000,
            step_init: 0.01,
            step_decay: 1e-3,
            seed: 1,
            fisher_space: FisherSpace::Direction,
            density_update_period: 200,
            density_subsample: 2048,
            density_max_iters: 400,
            density_kkt_tol: 1e-5,
            convergence_tol: 0.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_energy >= 0.0) {
            return Err(Error::Parameter("lambda_energy must be >= 0".into()));
        }
        if self.minibatch_size < 1 {
            return Err(Error::Parameter("minibatch_size must be >= 1".into()));
        }
        if !(self.step_init > 0.0) || !(self.step_decay >= 0.0) {
            return Err(Error::Parameter("step_init must be > 0 and step_decay >= 0".into()));
        }
        if self.density_update_period == 0 {
            return Err(Error::Parameter("density_update_period must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Encoded stimulus batches
// ---------------------------------------------------------------------------

/// A stimulus batch prepared for the objective: V1 response vectors, plus the
/// per-stimulus direction tangents (`M x D`) when the Fisher matrix lives in
/// direction space.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    xs: Vec<DVector<f64>>,
    tangents: Option<Vec<DMatrix<f64>>>,
}

/// Borrowed view of an [`EncodedBatch`] (or of a bare V1-response slice).
#[derive(Clone, Copy)]
pub struct EncodedView<'a> {
    xs: &'a [DVector<f64>],
    tangents: Option<&'a [DMatrix<f64>]>,
}

impl EncodedBatch {
    /// Encode a stimulus batch for the chosen Fisher space.
    pub fn from_batch(model: &Model, batch: &StimulusBatch, space: FisherSpace) -> Self {
        let xs = model.encode_batch(batch);
        let tangents = match space {
            FisherSpace::V1Response => None,
            FisherSpace::Direction => Some(
                batch
                    .stimuli
                    .par_iter()
                    .map(|s| direction_jacobian(&model.v1, &model.grid, s))
                    .collect(),
            ),
        };
        Self { xs, tangents }
    }

    /// Wrap bare V1 response vectors (V1-response Fisher space).
    pub fn v1_space(xs: Vec<DVector<f64>>) -> Self {
        Self { xs, tangents: None }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn view(&self) -> EncodedView<'_> {
        EncodedView { xs: &self.xs, tangents: self.tangents.as_deref() }
    }

    fn select(&self, indices: &[usize]) -> EncodedBatch {
        EncodedBatch {
            xs: indices.iter().map(|&i| self.xs[i].clone()).collect(),
            tangents: self
                .tangents
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
        }
    }
}

impl<'a> EncodedView<'a> {
    pub fn of_xs(xs: &'a [DVector<f64>]) -> Self {
        Self { xs, tangents: None }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn tangent(&self, i: usize) -> Option<&'a DMatrix<f64>> {
        self.tangents.map(|t| &t[i])
    }
}

/// Objective value split into its two parts; `q = logdet_part + energy_part`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParts {
    pub q: f64,
    /// `< -1/2 ln det G >` over the input set (carries the minus sign).
    pub logdet_part: f64,
    /// `lambda * < sum_k rho_k f_hat_k >`.
    pub energy_part: f64,
}

/// Gradients of Q with respect to the MT parameters and the density.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `K x M`, same layout as [`MTParams::weights`].
    pub weights: DMatrix<f64>,
    pub thresholds: DVector<f64>,
    /// Unconstrained partials with respect to rho (no simplex projection).
    pub rho: DVector<f64>,
}

/// One training-trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Minibatch estimate of Q at the current parameters.
    pub q: f64,
    pub logdet_part: f64,
    pub energy_part: f64,
    pub step: f64,
}

/// Per-iteration training history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub seed: u64,
}

impl TrainTrace {
    /// Moving average of the per-iteration Q estimates.
    pub fn smoothed_q(&self, window: usize) -> Vec<f64> {
        let q: Vec<f64> = self.rows.iter().map(|r| r.q).collect();
        smoothed(&q, window)
    }

    /// Largest rise of the smoothed objective over the whole trace
    /// (0 when the smoothed objective is nonincreasing).
    pub fn max_smoothed_rise(&self, window: usize) -> f64 {
        let sm = self.smoothed_q(window);
        let mut running_min = f64::INFINITY;
        let mut worst = 0.0f64;
        for v in sm {
            running_min = running_min.min(v);
            worst = worst.max(v - running_min);
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header_comment: Option<&str>) -> std::io::Result<()> {
        if let Some(comment) = header_comment {
            writeln!(w, "# {comment}")?;
        }
        writeln!(w, "iter,q,logdet_part,energy_part,step")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.iter, r.q, r.logdet_part, r.energy_part, r.step)?;
        }
        Ok(())
    }
}

fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    if values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for t in window..values.len() {
        sum += values[t] - values[t - window];
        out.push(sum / window as f64);
    }
    out
}

/// Divergence rule: the smoothed objective rose by more than ten times its
/// earlier magnitude over 500 iterations.
pub(crate) fn diverged(sm_earlier: f64, sm_now: f64) -> bool {
    sm_now - sm_earlier > 10.0 * sm_earlier.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Per-stimulus evaluation
// ---------------------------------------------------------------------------

/// Everything the objective and its gradients need at one stimulus. With a
/// direction tangent `T` (`M x D`), the Fisher rows are `T^T g_k` and the
/// solved vectors are pulled back as `h~_k = T G^-1 T^T g_k`, after which the
/// parameter-gradient algebra is identical to the V1-space case.
struct StimulusEval {
    ln_det: f64,
    /// `sum_k rho_k f_hat_k` (all cells, no rate floor).
    energy: f64,
    /// `q_k = g_k^T G^-1 g_k` (in the active space) for cells above the rate
    /// floor, else 0.
    quad: DVector<f64>,
    /// Pulled-back solved rows `h~_k` (`K x M`), zero for floored cells.
    solved: Option<DMatrix<f64>>,
    fwd: Option<crate::mt::MTForward>,
    active: Vec<bool>,
}

fn eval_stimulus(
    mt: &MTParams,
    rho: &DVector<f64>,
    info: &InfoConfig,
    x: &DVector<f64>,
    tangent: Option<&DMatrix<f64>>,
    stimulus_id: usize,
    want_grad: bool,
) -> Result<StimulusEval> {
    let k_cells = mt.k_cells();
    if rho.len() != k_cells {
        return Err(Error::Dimension { expected: k_cells, actual: rho.len() });
    }
    let fwd = mt.forward(x)?;
    let jac = mt.jacobian_from(&fwd);
    let ejac = match tangent {
        Some(t) => {
            debug_assert_eq!(t.nrows(), mt.m_inputs());
            &jac * t
        }
        None => jac,
    };
    let dim = ejac.ncols();
    let active: Vec<bool> = (0..k_cells).map(|k| fwd.fhat[k] >= info.rate_floor).collect();

    let mut g_mat = DMatrix::zeros(dim, dim);
    for k in 0..k_cells {
        if !active[k] || rho[k] == 0.0 {
            continue;
        }
        let alpha = info.n_population * rho[k] / fwd.fhat[k];
        if alpha > 0.0 {
            // scaling the vector keeps the outer product bitwise symmetric
            let g_k = ejac.row(k).transpose() * alpha.sqrt();
            g_mat.ger(1.0, &g_k, &g_k, 1.0);
        } else {
            // negative densities only appear in finite-difference probes of
            // the raw objective
            let g_k = ejac.row(k).transpose();
            g_mat.ger(alpha, &g_k, &g_k, 1.0);
        }
    }
    for d in 0..dim {
        g_mat[(d, d)] += info.gamma_reg;
    }
    let chol = Cholesky::new(g_mat).ok_or(Error::NotPositiveDefinite { stimulus_id })?;
    let ln_det = chol.ln_determinant();
    let energy = (0..k_cells).map(|k| rho[k] * fwd.fhat[k]).sum();

    let mut quad = DVector::zeros(k_cells);
    let mut solved = None;
    if want_grad {
        let mut h = DMatrix::zeros(k_cells, mt.m_inputs());
        for k in 0..k_cells {
            if !active[k] {
                continue;
            }
            let g_k = ejac.row(k).transpose();
            let h_k = chol.solve(&g_k);
            quad[k] = g_k.dot(&h_k);
            match tangent {
                Some(t) => h.row_mut(k).copy_from(&(t * &h_k).transpose()),
                None => h.row_mut(k).copy_from(&h_k.transpose()),
            }
        }
        solved = Some(h);
    }
    Ok(StimulusEval {
        ln_det,
        energy,
        quad,
        solved,
        fwd: if want_grad { Some(fwd) } else { None },
        active,
    })
}

/// Per-stimulus gradient of `-1/2 ln det G + lambda * sum rho f_hat` with
/// respect to the weights, thresholds, and (unconstrained) densities.
///
/// Every parameter acts through the sigmoid arguments `z_j = w_j . x - b_j`,
/// except for the weight vectors also appearing directly in the Jacobian rows
/// `g_k = du_pool_k w_k - f_hat_k sum_j du_pool_j w_j`; both paths are chained
/// analytically here and checked against finite differences in the tests.
fn accumulate_stimulus_grad(
    mt: &MTParams,
    rho: &DVector<f64>,
    info: &InfoConfig,
    lambda: f64,
    x: &DVector<f64>,
    eval: &StimulusEval,
    grad_w: &mut DMatrix<f64>,
    grad_b: &mut DVector<f64>,
    grad_rho: &mut DVector<f64>,
) {
    let k_cells = mt.k_cells();
    let m = mt.m_inputs();
    let fwd = eval.fwd.as_ref().expect("gradient evaluation");
    let h = eval.solved.as_ref().expect("gradient evaluation");
    let n_pop = info.n_population;

    // mix = sum_j du_pool_j w_j (the Jacobian's shared term)
    let mix = mt.weights().tr_mul(&fwd.du_pool);

    // Fisher-term coefficients; zero for cells below the rate floor.
    let mut coeff_a = DVector::zeros(k_cells); // N rho_k / f_hat_k
    let mut coeff_b = DVector::zeros(k_cells); // N rho_k q_k / (2 f_hat_k^2)
    for k in 0..k_cells {
        if eval.active[k] {
            coeff_a[k] = n_pop * rho[k] / fwd.fhat[k];
            coeff_b[k] = 0.5 * n_pop * rho[k] * eval.quad[k] / (fwd.fhat[k] * fwd.fhat[k]);
        }
    }

    // shared contractions over the active cells
    let mut h_sum = DVector::zeros(m); // sum_k coeff_a_k f_hat_k h~_k = N sum rho_k h~_k
    let mut dot_hw = DVector::zeros(k_cells); // h~_k . w_k
    let mut dot_hm = DVector::zeros(k_cells); // h~_k . mix
    let mut cross = 0.0; // sum_k coeff_a_k du_pool_k (h~_k . w_k)
    for k in 0..k_cells {
        if !eval.active[k] {
            continue;
        }
        let h_k = h.row(k);
        dot_hw[k] = h_k.transpose().dot(&mt.weights().row(k).transpose());
        dot_hm[k] = h_k.transpose().dot(&mix);
        h_sum.axpy(coeff_a[k] * fwd.fhat[k], &h_k.transpose(), 1.0);
        cross += coeff_a[k] * fwd.du_pool[k] * dot_hw[k];
    }
    let h_sum_dot_mix = h_sum.dot(&mix);
    // sum_k (coeff_b_k + lambda rho_k) f_hat_k
    let weighted_rate_sum: f64 =
        (0..k_cells).map(|k| (coeff_b[k] + lambda * rho[k]) * fwd.fhat[k]).sum();

    for j in 0..k_cells {
        let a_j = fwd.du_pool[j];
        let s2_j = fwd.d2u_pool[j];
        let h_sum_dot_wj = h_sum.dot(&mt.weights().row(j).transpose());
        // sum_k coeff_a_k h~_k . (d g_k / d z_j)
        let fisher_z = coeff_a[j] * (s2_j * dot_hw[j] - a_j * dot_hm[j]) - a_j * cross
            - s2_j * h_sum_dot_wj
            + 2.0 * a_j * h_sum_dot_mix;
        let dl_dz = -fisher_z + a_j * (coeff_b[j] + lambda * rho[j] - weighted_rate_sum);

        grad_b[j] += -dl_dz;
        // d g / d w_j direct term: -a_j (coeff_a_j h~_j - h_sum)
        for col in 0..m {
            let direct = -a_j * (coeff_a[j] * h[(j, col)] - h_sum[col]);
            grad_w[(j, col)] += dl_dz * x[col] + direct;
        }
        let fisher_rho =
            if eval.active[j] { -0.5 * n_pop * eval.quad[j] / fwd.fhat[j] } else { 0.0 };
        grad_rho[j] += fisher_rho + lambda * fwd.fhat[j];
    }
}

// ---------------------------------------------------------------------------
// Batch objective and gradient
// ---------------------------------------------------------------------------

/// Q over an encoded batch with a raw (unvalidated) density. Exposed for
/// derivative checks; use [`objective_q_in`] in normal code.
pub fn objective_q_raw_in(
    mt: &MTParams,
    rho: &DVector<f64>,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
) -> Result<QParts> {
    if enc.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let parts: Vec<(f64, f64)> = enc
        .xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let eval = eval_stimulus(mt, rho, info, x, enc.tangent(i), i, false)?;
            Ok((eval.ln_det, eval.energy))
        })
        .collect::<Result<_>>()?;
    // fixed summation order: independent of the worker schedule
    let n = parts.len() as f64;
    let logdet_part = parts.iter().map(|(ld, _)| -0.5 * ld).sum::<f64>() / n;
    let energy_part = lambda * parts.iter().map(|(_, e)| e).sum::<f64>() / n;
    Ok(QParts { q: logdet_part + energy_part, logdet_part, energy_part })
}

/// Q over V1 response vectors with a raw density (V1-response Fisher space).
pub fn objective_q_raw(
    mt: &MTParams,
    rho: &DVector<f64>,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<QParts> {
    objective_q_raw_in(mt, rho, info, lambda, EncodedView::of_xs(xs))
}

/// The training objective `Q` and its two parts, averaged over the batch.
pub fn objective_q_in(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
) -> Result<QParts> {
    density.validate()?;
    objective_q_raw_in(mt, density.rho(), info, lambda, enc)
}

/// [`objective_q_in`] over V1 response vectors (V1-response Fisher space).
pub fn objective_q(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<QParts> {
    objective_q_in(mt, density, info, lambda, EncodedView::of_xs(xs))
}

/// Gradient counterpart of [`objective_q_raw_in`] (no simplex validation).
pub fn grad_q_raw_in(
    mt: &MTParams,
    rho: &DVector<f64>,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
) -> Result<(Gradients, QParts)> {
    if enc.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let k_cells = mt.k_cells();
    let m = mt.m_inputs();
    let mut grad_w = DMatrix::zeros(k_cells, m);
    let mut grad_b = DVector::zeros(k_cells);
    let mut grad_rho = DVector::zeros(k_cells);
    let mut ld_sum = 0.0;
    let mut energy_sum = 0.0;
    for (i, x) in enc.xs.iter().enumerate() {
        let eval = eval_stimulus(mt, rho, info, x, enc.tangent(i), i, true)?;
        ld_sum += eval.ln_det;
        energy_sum += eval.energy;
        accumulate_stimulus_grad(
            mt, rho, info, lambda, x, &eval, &mut grad_w, &mut grad_b, &mut grad_rho,
        );
    }
    let n = enc.len() as f64;
    grad_w /= n;
    grad_b /= n;
    grad_rho /= n;
    let logdet_part = -0.5 * ld_sum / n;
    let energy_part = lambda * energy_sum / n;
    Ok((
        Gradients { weights: grad_w, thresholds: grad_b, rho: grad_rho },
        QParts { q: logdet_part + energy_part, logdet_part, energy_part },
    ))
}

/// Analytic gradients of Q averaged over the batch, with the objective parts
/// evaluated at the same parameters.
pub fn grad_q_with_parts_in(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
) -> Result<(Gradients, QParts)> {
    density.validate()?;
    grad_q_raw_in(mt, density.rho(), info, lambda, enc)
}

/// [`grad_q_with_parts_in`] over V1 response vectors.
pub fn grad_q_with_parts(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<(Gradients, QParts)> {
    grad_q_with_parts_in(mt, density, info, lambda, EncodedView::of_xs(xs))
}

/// Analytic gradients of Q with respect to weights, thresholds, and density
/// (V1-response Fisher space).
pub fn grad_q(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<Gradients> {
    Ok(grad_q_with_parts(mt, density, info, lambda, xs)?.0)
}

// ---------------------------------------------------------------------------
// Density optimization on the simplex
// ---------------------------------------------------------------------------

/// Options for [`optimize_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
}

impl Default for DensityOptOptions {
    fn default() -> Self {
        Self { max_iters: 2000, kkt_tol: 1e-6 }
    }
}

/// The density subproblem with the tuning parameters frozen: per stimulus we
/// precompute `d_k = sqrt(N / f_hat_k) g_k` (in the active Fisher space), so
/// that `G(rho) = sum_k rho_k d_k d_k^T + gamma I` and the objective is
/// `< -1/2 ln det G(rho) > + lambda * rho . fbar`.
struct DensityProblem {
    /// Per stimulus: matrix dimension, active cells, and their factors.
    factors: Vec<(usize, Vec<usize>, Vec<DVector<f64>>)>,
    fbar: DVector<f64>,
    gamma: f64,
    lambda: f64,
    k_cells: usize,
}

impl DensityProblem {
    fn new(mt: &MTParams, info: &InfoConfig, lambda: f64, enc: EncodedView<'_>) -> Result<Self> {
        if enc.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let k_cells = mt.k_cells();
        let per: Vec<((usize, Vec<usize>, Vec<DVector<f64>>), DVector<f64>)> = enc
            .xs
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let fwd = mt.forward(x)?;
                let jac = mt.jacobian_from(&fwd);
                let ejac = match enc.tangent(i) {
                    Some(t) => &jac * t,
                    None => jac,
                };
                let mut active = Vec::new();
                let mut d = Vec::new();
                for k in 0..k_cells {
                    if fwd.fhat[k] >= info.rate_floor {
                        active.push(k);
                        d.push(
                            ejac.row(k).transpose() * (info.n_population / fwd.fhat[k]).sqrt(),
                        );
                    }
                }
                Ok(((ejac.ncols(), active, d), fwd.fhat))
            })
            .collect::<Result<_>>()?;
        let mut fbar = DVector::zeros(k_cells);
        let mut factors = Vec::with_capacity(per.len());
        for (f, fhat) in per {
            fbar += fhat;
            factors.push(f);
        }
        fbar /= enc.len() as f64;
        Ok(Self { factors, fbar, gamma: info.gamma_reg, lambda, k_cells })
    }

    fn assemble(&self, rho: &DVector<f64>, idx: usize) -> DMatrix<f64> {
        let (dim, active, d) = &self.factors[idx];
        let mut g = DMatrix::zeros(*dim, *dim);
        for (pos, &k) in active.iter().enumerate() {
            if rho[k] > 0.0 {
                let v = &d[pos] * rho[k].sqrt();
                g.ger(1.0, &v, &v, 1.0);
            }
        }
        for i in 0..*dim {
            g[(i, i)] += self.gamma;
        }
        g
    }

    fn objective(&self, rho: &DVector<f64>) -> Result<f64> {
        let lds: Vec<f64> = (0..self.factors.len())
            .into_par_iter()
            .map(|i| {
                let g = self.assemble(rho, i);
                Cholesky::new(g)
                    .map(|c| c.ln_determinant())
                    .ok_or(Error::NotPositiveDefinite { stimulus_id: i })
            })
            .collect::<Result<_>>()?;
        let mean_ld = lds.iter().sum::<f64>() / lds.len() as f64;
        Ok(-0.5 * mean_ld + self.lambda * rho.dot(&self.fbar))
    }

    fn objective_and_grad(&self, rho: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let per: Vec<(f64, DVector<f64>)> = (0..self.factors.len())
            .into_par_iter()
            .map(|i| {
                let g = self.assemble(rho, i);
                let chol =
                    Cholesky::new(g).ok_or(Error::NotPositiveDefinite { stimulus_id: i })?;
                let ld = chol.ln_determinant();
                let (_, active, d) = &self.factors[i];
                let mut quad = DVector::zeros(self.k_cells);
                for (pos, &k) in active.iter().enumerate() {
                    quad[k] = d[pos].dot(&chol.solve(&d[pos]));
                }
                Ok((ld, quad))
            })
            .collect::<Result<_>>()?;
        let n = per.len() as f64;
        let mean_ld = per.iter().map(|(ld, _)| ld).sum::<f64>() / n;
        let mut grad = DVector::from_element(self.k_cells, 0.0);
        for (_, quad) in &per {
            grad.axpy(-0.5 / n, quad, 1.0);
        }
        grad += self.lambda * &self.fbar;
        Ok((-0.5 * mean_ld + self.lambda * rho.dot(&self.fbar), grad))
    }
}

/// Stationarity/complementary-slackness residual for minimizing over the
/// simplex: `max_k rho_k (grad_k - min_j grad_j)`; zero exactly at an
/// optimum of the convex subproblem.
fn residual_from(rho: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    let min_g = grad.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..rho.len()).map(|k| rho[k] * (grad[k] - min_g)).fold(0.0, f64::max)
}

/// KKT residual of the density subproblem at `density`.
pub fn kkt_residual_in(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
) -> Result<f64> {
    density.validate()?;
    let problem = DensityProblem::new(mt, info, lambda, enc)?;
    let (_, grad) = problem.objective_and_grad(density.rho())?;
    Ok(residual_from(density.rho(), &grad))
}

/// [`kkt_residual_in`] over V1 response vectors.
pub fn kkt_residual(
    mt: &MTParams,
    density: &DensityVector,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<f64> {
    kkt_residual_in(mt, density, info, lambda, EncodedView::of_xs(xs))
}

fn optimize_density_inner(
    problem: &DensityProblem,
    init: &DensityVector,
    opts: &DensityOptOptions,
) -> Result<(DensityVector, f64, bool)> {
    let mut rho = init.rho().clone();
    let (mut obj, mut grad) = problem.objective_and_grad(&rho)?;
    let mut step = 1.0;
    let mut residual = residual_from(&rho, &grad);
    for _ in 0..opts.max_iters {
        if residual <= opts.kkt_tol {
            return Ok((DensityVector::from_dvector_unchecked(rho), residual, true));
        }
        let mut moved = false;
        for _ in 0..60 {
            let candidate = project_simplex((&rho - step * &grad).as_slice());
            let dir = candidate.rho() - &rho;
            let slope = grad.dot(&dir);
            if dir.amax() < 1e-16 {
                break;
            }
            let cand_obj = problem.objective(candidate.rho())?;
            if cand_obj <= obj + 1e-4 * slope {
                rho = candidate.rho().clone();
                let refreshed = problem.objective_and_grad(&rho)?;
                obj = refreshed.0;
                grad = refreshed.1;
                residual = residual_from(&rho, &grad);
                step = (step * 2.0).min(1e8);
                moved = true;
                break;
            }
            step *= 0.25;
        }
        if !moved {
            break;
        }
    }
    let converged = residual <= opts.kkt_tol;
    Ok((DensityVector::from_dvector_unchecked(rho), residual, converged))
}

/// Solve the convex density subproblem by projected gradient descent with a
/// backtracking line search, until the KKT residual drops below
/// `opts.kkt_tol`. Non-convergence within the budget is an error.
pub fn optimize_density_in(
    mt: &MTParams,
    info: &InfoConfig,
    lambda: f64,
    enc: EncodedView<'_>,
    init: &DensityVector,
    opts: &DensityOptOptions,
) -> Result<DensityVector> {
    init.validate()?;
    if init.len() != mt.k_cells() {
        return Err(Error::Dimension { expected: mt.k_cells(), actual: init.len() });
    }
    let problem = DensityProblem::new(mt, info, lambda, enc)?;
    let (density, residual, converged) = optimize_density_inner(&problem, init, opts)?;
    if !converged {
        return Err(Error::DensityNonConvergence {
            iters: opts.max_iters,
            residual,
            tol: opts.kkt_tol,
        });
    }
    density.validate()?;
    Ok(density)
}

/// [`optimize_density_in`] over V1 response vectors.
pub fn optimize_density(
    mt: &MTParams,
    info: &InfoConfig,
    lambda: f64,
    xs: &[DVector<f64>],
    init: &DensityVector,
    opts: &DensityOptOptions,
) -> Result<DensityVector> {
    optimize_density_in(mt, info, lambda, EncodedView::of_xs(xs), init, opts)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Result of a training run, before persistence.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub density: DensityVector,
    pub trace: TrainTrace,
    /// Objective over the full batch at the final parameters.
    pub final_q: QParts,
}

struct AdamState {
    m_w: DMatrix<f64>,
    v_w: DMatrix<f64>,
    m_b: DVector<f64>,
    v_b: DVector<f64>,
    t: usize,
}

impl AdamState {
    fn new(k: usize, m: usize) -> Self {
        Self {
            m_w: DMatrix::zeros(k, m),
            v_w: DMatrix::zeros(k, m),
            m_b: DVector::zeros(k),
            v_b: DVector::zeros(k),
            t: 0,
        }
    }

    fn update(&mut self, mt: &mut MTParams, grads: &Gradients, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (idx, g) in grads.weights.iter().enumerate() {
            let m = &mut self.m_w[idx];
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            let v = &mut self.v_w[idx];
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let step = lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
            mt.weights_mut()[idx] -= step;
        }
        for (idx, g) in grads.thresholds.iter().enumerate() {
            let m = &mut self.m_b[idx];
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            let v = &mut self.v_b[idx];
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let step = lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
            mt.thresholds_mut()[idx] -= step;
        }
    }
}

/// Train weights and thresholds by minibatch stochastic gradient descent on
/// Q, with the density re-optimized exactly every
/// `density_update_period` iterations (and once more after the last step).
/// Deterministic for a fixed configuration.
pub fn train(
    cfg: &TrainConfig,
    info: &InfoConfig,
    grid: &DirectionGrid,
    v1: &V1Params,
    init_mt: MTParams,
    batch: &StimulusBatch,
) -> Result<TrainOutcome> {
    train_with_hook(cfg, info, grid, v1, init_mt, batch, |_, _, _| Ok(()))
}

/// [`train`] with a checkpoint hook, invoked every `cfg.checkpoint_every`
/// iterations (when nonzero) with the iteration number and current state.
pub fn train_with_hook<F>(
    cfg: &TrainConfig,
    info: &InfoConfig,
    grid: &DirectionGrid,
    v1: &V1Params,
    init_mt: MTParams,
    batch: &StimulusBatch,
    mut hook: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &Model, &DensityVector) -> Result<()>,
{
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let model = Model::new(grid.clone(), v1.clone(), init_mt)?;
    let enc = EncodedBatch::from_batch(&model, batch, cfg.fisher_space);
    let Model { grid, v1, mt } = model;
    let mut mt = mt;
    let k_cells = mt.k_cells();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2); // stream 1 is reserved for weight initialization
    let mut density = DensityVector::uniform(k_cells);
    let mut adam = AdamState::new(k_cells, mt.m_inputs());
    let mut trace = TrainTrace { rows: Vec::with_capacity(cfg.max_iters), seed: cfg.seed };

    let window = 50usize;
    let mut q_window: Vec<f64> = Vec::with_capacity(cfg.max_iters);
    let mut smoothed_series: Vec<f64> = Vec::new();

    let density_opts =
        DensityOptOptions { max_iters: cfg.density_max_iters, kkt_tol: cfg.density_kkt_tol };

    for iter in 0..cfg.max_iters {
        if iter > 0 && iter % cfg.density_update_period == 0 {
            density = reoptimize_density(&mt, info, cfg, &enc, &density, &density_opts, &mut rng)?;
        }

        // minibatch draw (uniform with replacement)
        let indices: Vec<usize> =
            (0..cfg.minibatch_size).map(|_| rng.random_range(0..enc.len())).collect();
        let minibatch = enc.select(&indices);
        let (grads, parts) =
            grad_q_with_parts_in(&mt, &density, info, cfg.lambda_energy, minibatch.view())?;
        let lr = cfg.step_init / (1.0 + cfg.step_decay * iter as f64);
        adam.update(&mut mt, &grads, lr);

        density.validate()?;
        trace.rows.push(TraceRow {
            iter,
            q: parts.q,
            logdet_part: parts.logdet_part,
            energy_part: parts.energy_part,
            step: lr,
        });

        // smoothed objective, divergence and convergence checks
        q_window.push(parts.q);
        let mut stop = false;
        if q_window.len() >= window {
            let start = q_window.len() - window;
            let sm = q_window[start..].iter().sum::<f64>() / window as f64;
            smoothed_series.push(sm);
            if smoothed_series.len() > 500 {
                let earlier = smoothed_series[smoothed_series.len() - 1 - 500];
                if diverged(earlier, sm) {
                    return Err(Error::Diverged {
                        iter,
                        from: earlier,
                        to: sm,
                        trace: Box::new(trace),
                    });
                }
            }
            if cfg.convergence_tol > 0.0 && smoothed_series.len() > 100 {
                let earlier = smoothed_series[smoothed_series.len() - 1 - 100];
                if (sm - earlier).abs() <= cfg.convergence_tol * sm.abs().max(1e-12) {
                    stop = true;
                }
            }
        }

        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            let snapshot_model = Model::new(grid.clone(), v1.clone(), mt.clone())?;
            hook(iter, &snapshot_model, &density)?;
        }
        if stop {
            break;
        }
    }

    // final exact density re-optimization for the returned model
    if cfg.max_iters > 0 {
        density = reoptimize_density(&mt, info, cfg, &enc, &density, &density_opts, &mut rng)?;
    }
    let final_q = objective_q_in(&mt, &density, info, cfg.lambda_energy, enc.view())?;
    let model = Model::new(grid, v1, mt)?;
    Ok(TrainOutcome { model, density, trace, final_q })
}

fn reoptimize_density(
    mt: &MTParams,
    info: &InfoConfig,
    cfg: &TrainConfig,
    enc: &EncodedBatch,
    current: &DensityVector,
    opts: &DensityOptOptions,
    rng: &mut ChaCha8Rng,
) -> Result<DensityVector> {
    let subsample: EncodedBatch;
    let view = if cfg.density_subsample > 0 && cfg.density_subsample < enc.len() {
        let indices: Vec<usize> =
            (0..cfg.density_subsample).map(|_| rng.random_range(0..enc.len())).collect();
        subsample = enc.select(&indices);
        subsample.view()
    } else {
        enc.view()
    };
    let problem = DensityProblem::new(mt, info, cfg.lambda_energy, view)?;
    // keep the best density found even when the KKT tolerance is not reached
    // within the in-loop budget; every accepted step still decreased Q
    let (density, _residual, _converged) = optimize_density_inner(&problem, current, opts)?;
    density.validate()?;
    Ok(density)
}
