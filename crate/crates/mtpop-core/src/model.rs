//! The full feedforward model: direction grid, V1 layer, MT layer.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mt::MTParams;
use crate::stimulus::{DirectionGrid, Stimulus, StimulusBatch};
use crate::v1;
use crate::v1::V1Params;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: DirectionGrid,
    pub v1: V1Params,
    pub mt: MTParams,
}

impl Model {
    pub fn new(grid: DirectionGrid, v1: V1Params, mt: MTParams) -> Result<Self> {
        if mt.m_inputs() != v1.m_cells() {
            return Err(Error::Dimension { expected: v1.m_cells(), actual: mt.m_inputs() });
        }
        Ok(Self { grid, v1, mt })
    }

    /// V1 response vector for one stimulus.
    pub fn encode(&self, stimulus: &Stimulus) -> DVector<f64> {
        v1::encode(&self.v1, &self.grid, stimulus)
    }

    /// V1 response vectors for a whole batch, in batch order.
    pub fn encode_batch(&self, batch: &StimulusBatch) -> Vec<DVector<f64>> {
        batch.stimuli.par_iter().map(|s| self.encode(s)).collect()
    }

    /// Normalized MT responses to one stimulus.
    pub fn response(&self, stimulus: &Stimulus) -> Result<DVector<f64>> {
        Ok(self.mt.activations(&self.encode(stimulus))?.normalized)
    }
}
