//! Model persistence: a self-describing JSON snapshot with exact float
//! round-trips (serde_json prints the shortest decimal that parses back to
//! the same bits).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::DensityVector;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::mt::MTParams;
use crate::stimulus::DirectionGrid;
use crate::util::write_atomic;
use crate::v1::V1Params;

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct V1Snapshot {
    m_cells: usize,
    sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MtSnapshot {
    gain_a: f64,
    norm_eps: f64,
    /// Row-per-cell weight vectors, `K x M`.
    weights: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
}

/// Complete persisted state of a trained (or initial) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    n_dirs: usize,
    v1: V1Snapshot,
    mt: MtSnapshot,
    density: Vec<f64>,
    pub provenance: Provenance,
}

impl ModelSnapshot {
    pub fn from_parts(model: &Model, density: &DensityVector, provenance: Provenance) -> Self {
        let k = model.mt.k_cells();
        let m = model.mt.m_inputs();
        let weights = (0..k)
            .map(|row| (0..m).map(|col| model.mt.weights()[(row, col)]).collect())
            .collect();
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            n_dirs: model.grid.n_dirs(),
            v1: V1Snapshot { m_cells: model.v1.m_cells(), sigma: model.v1.sigma() },
            mt: MtSnapshot {
                gain_a: model.mt.gain_a(),
                norm_eps: model.mt.norm_eps(),
                weights,
                thresholds: model.mt.thresholds().iter().cloned().collect(),
            },
            density: density.as_slice().to_vec(),
            provenance,
        }
    }

    /// Rebuild the model and density, revalidating every invariant.
    pub fn to_parts(&self) -> Result<(Model, DensityVector)> {
        if self.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported format_version {} (expected {})",
                self.format_version, SNAPSHOT_FORMAT_VERSION
            )));
        }
        let grid = DirectionGrid::new(self.n_dirs)?;
        let v1 = V1Params::new(self.v1.m_cells, self.v1.sigma)?;
        let k = self.mt.weights.len();
        if k == 0 {
            return Err(Error::Snapshot("snapshot has no MT cells".into()));
        }
        let m = self.mt.weights[0].len();
        if self.mt.weights.iter().any(|row| row.len() != m) {
            return Err(Error::Snapshot("ragged weight rows".into()));
        }
        let weights = DMatrix::from_fn(k, m, |r, c| self.mt.weights[r][c]);
        let thresholds = DVector::from_vec(self.mt.thresholds.clone());
        let mt = MTParams::new(self.mt.gain_a, self.mt.norm_eps, weights, thresholds)?;
        let model = Model::new(grid, v1, mt)?;
        let density = DensityVector::from_vec(self.density.clone())?;
        if density.len() != k {
            return Err(Error::Dimension { expected: k, actual: density.len() });
        }
        Ok((model, density))
    }

    pub fn k_cells(&self) -> usize {
        self.mt.weights.len()
    }

    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json_string()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let snapshot: ModelSnapshot = serde_json::from_str(&text)?;
        if snapshot.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported format_version {} (expected {})",
                snapshot.format_version, SNAPSHOT_FORMAT_VERSION
            )));
        }
        Ok(snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arbitrary_model(seed: u64) -> (Model, DensityVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = DirectionGrid::new(24).unwrap();
        let v1 = V1Params::new(24, std::f64::consts::FRAC_PI_2).unwrap();
        let mt = MTParams::random_init(12, 24, 1.0, 0.1, &mut rng);
        let raw: Vec<f64> = (0..12).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
        let density = crate::density::project_simplex(&raw);
        (Model::new(grid, v1, mt).unwrap(), density)
    }

    #[test]
    fn roundtrip_through_file_is_bit_exact() {
        let (model, density) = arbitrary_model(1);
        let snapshot = ModelSnapshot::from_parts(
            &model,
            &density,
            Provenance { config_hash: "abc".into(), seed: 7, iterations: 42 },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        snapshot.save(&path).unwrap();
        let loaded = ModelSnapshot::load(&path).unwrap();
        assert_eq!(snapshot, loaded);

        let (model2, density2) = loaded.to_parts().unwrap();
        assert_eq!(model.mt, model2.mt);
        assert_eq!(model.v1, model2.v1);
        assert_eq!(model.grid, model2.grid);
        assert_eq!(density, density2);
    }

    #[test]
    fn rejects_unknown_format_version() {
        let (model, density) = arbitrary_model(2);
        let mut snapshot = ModelSnapshot::from_parts(
            &model,
            &density,
            Provenance { config_hash: String::new(), seed: 0, iterations: 0 },
        );
        snapshot.format_version = 9;
        assert!(matches!(snapshot.to_parts(), Err(Error::Snapshot(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn json_roundtrip_preserves_every_bit(seed in any::<u64>()) {
            let (model, density) = arbitrary_model(seed);
            let snapshot = ModelSnapshot::from_parts(
                &model,
                &density,
                Provenance { config_hash: "h".into(), seed, iterations: 1 },
            );
            let text = snapshot.to_json_string().unwrap();
            let parsed: ModelSnapshot = serde_json::from_str(&text).unwrap();
            let (model2, density2) = parsed.to_parts().unwrap();
            // bitwise comparison of every stored float
            for (a, b) in model.mt.weights().iter().zip(model2.mt.weights().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in density.as_slice().iter().zip(density2.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(model.v1.sigma().to_bits(), model2.v1.sigma().to_bits());
        }
    }
}
