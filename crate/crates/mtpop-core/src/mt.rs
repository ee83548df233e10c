//! Model MT layer: sigmoid raw responses, squared divisive normalization,
//! and the analytic Jacobian of the normalized response with respect to the
//! V1 input.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Parameters of the MT layer: `k_cells` subpopulation types, each with a
/// weight vector over the `m_inputs` V1 units and a threshold.
///
/// `weights` is `K x M`; row `k` is the weight vector of cell type `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MTParams {
    gain_a: f64,
    norm_eps: f64,
    weights: DMatrix<f64>,
    thresholds: DVector<f64>,
}

/// Raw and normalized responses for one input, with the Jacobian attached on
/// demand.
#[derive(Debug, Clone)]
pub struct MTActivations {
    /// Sigmoid responses `f`, each in [0, A].
    pub raw: DVector<f64>,
    /// Divisively normalized responses `f_hat = f^2 / (sum f^2 + eps)`.
    pub normalized: DVector<f64>,
    /// `K x M` matrix of `d f_hat / d x`, if requested.
    pub jacobian: Option<DMatrix<f64>>,
}

/// Per-input forward pass with the per-cell scalars shared by the Jacobian
/// and the objective gradients.
///
/// Writing `u_k = f_k^2` and `S = sum_k u_k + eps`:
/// `du_pool[k] = u_k' / S` (derivative with respect to the cell's sigmoid
/// argument, divided by the pool) and `d2u_pool[k] = u_k'' / S`.
#[derive(Debug, Clone)]
pub struct MTForward {
    pub raw: DVector<f64>,
    pub fhat: DVector<f64>,
    pub pool: f64,
    pub du_pool: DVector<f64>,
    pub d2u_pool: DVector<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MTParams {
    pub fn new(
        gain_a: f64,
        norm_eps: f64,
        weights: DMatrix<f64>,
        thresholds: DVector<f64>,
    ) -> Result<Self> {
        if !(gain_a > 0.0) {
            return Err(Error::Parameter(format!("gain_a must be > 0, got {gain_a}")));
        }
        if !(norm_eps > 0.0) {
            return Err(Error::Parameter(format!("norm_eps must be > 0, got {norm_eps}")));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Parameter("weights must be a nonempty K x M matrix".into()));
        }
        if thresholds.len() != weights.nrows() {
            return Err(Error::Dimension { expected: weights.nrows(), actual: thresholds.len() });
        }
        Ok(Self { gain_a, norm_eps, weights, thresholds })
    }

    /// Random initialization: weight entries i.i.d. normal with standard
    /// deviation `1 / sqrt(M)`, thresholds zero.
    pub fn random_init<R: Rng>(
        k_cells: usize,
        m_inputs: usize,
        gain_a: f64,
        norm_eps: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, 1.0 / (m_inputs as f64).sqrt()).unwrap();
        let weights = DMatrix::from_fn(k_cells, m_inputs, |_, _| normal.sample(rng));
        let thresholds = DVector::zeros(k_cells);
        Self::new(gain_a, norm_eps, weights, thresholds).expect("valid init")
    }

    pub fn k_cells(&self) -> usize {
        self.weights.nrows()
    }

    pub fn m_inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn gain_a(&self) -> f64 {
        self.gain_a
    }

    pub fn norm_eps(&self) -> f64 {
        self.norm_eps
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn thresholds(&self) -> &DVector<f64> {
        &self.thresholds
    }

    pub fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    pub fn thresholds_mut(&mut self) -> &mut DVector<f64> {
        &mut self.thresholds
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.m_inputs() {
            return Err(Error::Dimension { expected: self.m_inputs(), actual: x.len() });
        }
        Ok(())
    }

    /// Raw sigmoid responses `f_k = A / (1 + exp(-w_k . x + b_k))`.
    pub fn raw(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        let z = &self.weights * x - &self.thresholds;
        Ok(z.map(|zk| self.gain_a * sigmoid(zk)))
    }

    /// Squared divisive normalization `f_hat_k = f_k^2 / (sum f^2 + eps)`.
    pub fn normalized_from_raw(&self, f: &DVector<f64>) -> DVector<f64> {
        let pool: f64 = f.iter().map(|v| v * v).sum::<f64>() + self.norm_eps;
        f.map(|v| v * v / pool)
    }

    pub fn activations(&self, x: &DVector<f64>) -> Result<MTActivations> {
        let raw = self.raw(x)?;
        let normalized = self.normalized_from_raw(&raw);
        Ok(MTActivations { raw, normalized, jacobian: None })
    }

    pub fn activations_with_jacobian(&self, x: &DVector<f64>) -> Result<MTActivations> {
        let fwd = self.forward(x)?;
        let jacobian = self.jacobian_from(&fwd);
        Ok(MTActivations { raw: fwd.raw, normalized: fwd.fhat, jacobian: Some(jacobian) })
    }

    /// Forward pass exposing the pool and derivative scalars.
    pub fn forward(&self, x: &DVector<f64>) -> Result<MTForward> {
        self.check_input(x)?;
        let raw = self.raw(x)?;
        let pool: f64 = raw.iter().map(|v| v * v).sum::<f64>() + self.norm_eps;
        let fhat = raw.map(|v| v * v / pool);
        let a = self.gain_a;
        // u = f^2, u' = 2 f^2 (1 - f/A), u'' = u' (2 - 3 f/A)
        let du_pool =
            DVector::from_fn(raw.len(), |k, _| 2.0 * raw[k] * raw[k] * (1.0 - raw[k] / a) / pool);
        let d2u_pool = DVector::from_fn(raw.len(), |k, _| du_pool[k] * (2.0 - 3.0 * raw[k] / a));
        Ok(MTForward { raw, fhat, pool, du_pool, d2u_pool })
    }

    /// Jacobian rows from a forward pass:
    /// `g_k = du_pool[k] * w_k - fhat[k] * m`, with `m = sum_j du_pool[j] w_j`.
    pub fn jacobian_from(&self, fwd: &MTForward) -> DMatrix<f64> {
        let k_cells = self.k_cells();
        let m_inputs = self.m_inputs();
        let mix = self.weights.tr_mul(&fwd.du_pool); // sum_j du_pool[j] w_j
        DMatrix::from_fn(k_cells, m_inputs, |k, m| {
            fwd.du_pool[k] * self.weights[(k, m)] - fwd.fhat[k] * mix[m]
        })
    }

    /// `K x M` Jacobian of the normalized responses with respect to the V1
    /// input, `d f_hat_k / d x_m`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let fwd = self.forward(x)?;
        Ok(self.jacobian_from(&fwd))
    }
}
