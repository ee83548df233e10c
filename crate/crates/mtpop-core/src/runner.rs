//! End-to-end training driver shared by the CLI and the test suites: builds
//! the model pieces from a [`RunConfig`], trains, and assembles the snapshot
//! with provenance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::Result;
use crate::mt::MTParams;
use crate::optim::{train_with_hook, QParts, TrainTrace};
use crate::snapshot::{ModelSnapshot, Provenance};
use crate::stimulus::sample_training_set_mixed;

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub snapshot: ModelSnapshot,
    pub trace: TrainTrace,
    pub final_q: QParts,
}

/// Train a model exactly as the CLI `train` command does. Deterministic for
/// a fixed configuration: the RNG seed covers weight initialization (stream
/// 1), the training loop (stream 2), and the stimulus sampler.
pub fn run_training(cfg: &RunConfig) -> Result<RunArtifacts> {
    run_training_with_hook(cfg, |_, _| Ok(()))
}

/// [`run_training`] invoking `hook(iteration, snapshot)` at every checkpoint
/// (see [`crate::optim::TrainConfig::checkpoint_every`]).
pub fn run_training_with_hook<F>(cfg: &RunConfig, mut hook: F) -> Result<RunArtifacts>
where
    F: FnMut(usize, &ModelSnapshot) -> Result<()>,
{
    let grid = cfg.build_grid()?;
    let v1 = cfg.build_v1()?;
    let info = cfg.info()?;
    let train_cfg = cfg.train_config();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(1);
    let init_mt =
        MTParams::random_init(cfg.k_cells, cfg.m_cells, cfg.gain_a, cfg.norm_eps, &mut init_rng);

    let batch = sample_training_set_mixed(
        &grid,
        cfg.n_single,
        cfg.n_bidir,
        cfg.seed,
        cfg.stimulus_intensity,
        cfg.bidir_intensity,
    );

    let config_hash = cfg.config_hash();
    let outcome = train_with_hook(
        &train_cfg,
        &info,
        &grid,
        &v1,
        init_mt,
        &batch,
        |iter, model, density| {
            let snapshot = ModelSnapshot::from_parts(
                model,
                density,
                Provenance {
                    config_hash: config_hash.clone(),
                    seed: cfg.seed,
                    iterations: iter as u64 + 1,
                },
            );
            hook(iter, &snapshot)
        },
    )?;

    let iterations = outcome.trace.rows.len() as u64;
    let snapshot = ModelSnapshot::from_parts(
        &outcome.model,
        &outcome.density,
        Provenance { config_hash, seed: cfg.seed, iterations },
    );
    Ok(RunArtifacts { snapshot, trace: outcome.trace, final_q: outcome.final_q })
}
