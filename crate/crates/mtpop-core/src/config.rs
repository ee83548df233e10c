//! Run configuration: a flat `key = value` text format with every tunable of
//! the pipeline, range-checked at load, unknown keys rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::ClassifyOptions;
use crate::error::{Error, Result};
use crate::info::{FisherSpace, InfoConfig};
use crate::optim::TrainConfig;
use crate::stimulus::DirectionGrid;
use crate::util::fnv1a64_hex;
use crate::v1::V1Params;

/// Every tunable of the pipeline. Defaults fix the model at 24 grid
/// directions, 24 V1 cells of width pi/2, 12 MT cell types, normalization
/// constant 0.1, energy penalty 10, and the full 180,000 + 36,000 training
/// set; the remaining knobs (regularizer, population size, schedules,
/// classifier thresholds) carry the documented defaults below.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_dirs: usize,
    pub m_cells: usize,
    /// V1 tuning width, radians.
    pub sigma: f64,
    pub k_cells: usize,
    pub gain_a: f64,
    pub norm_eps: f64,
    pub lambda_energy: f64,
    pub gamma_reg: f64,
    pub n_population: f64,
    pub rate_floor: f64,
    /// Space of the trained/evaluated Fisher matrix: `direction` (per-
    /// component motion directions) or `v1` (the V1 response vector).
    pub fisher_space: FisherSpace,
    pub n_single: usize,
    pub n_bidir: usize,
    pub stimulus_intensity: f64,
    /// Per-component intensity of bidirectional stimuli (two overlapping
    /// motion fields may share the energy of a single one).
    pub bidir_intensity: f64,
    pub seed: u64,
    pub minibatch_size: usize,
    pub max_iters: usize,
    pub step_init: f64,
    pub step_decay: f64,
    pub density_update_period: usize,
    pub density_subsample: usize,
    pub density_max_iters: usize,
    pub density_kkt_tol: f64,
    pub convergence_tol: f64,
    pub checkpoint_every: usize,
    pub eval_n_single: usize,
    pub eval_n_bidir: usize,
    pub eval_seed: u64,
    pub prominence_frac: f64,
    pub bias_tol_deg: f64,
    pub activity_floor_frac: f64,
    /// Bidirectional separations for classification; the first is the
    /// reference separation.
    pub separations_deg: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_dirs: 24,
            m_cells: 24,
            sigma: std::f64::consts::FRAC_PI_2,
            k_cells: 12,
            gain_a: 1.0,
            norm_eps: 0.1,
            lambda_energy: 10.0,
            gamma_reg: 1e-3,
            n_population: 1000.0,
            rate_floor: 1e-9,
            fisher_space: FisherSpace::Direction,
            n_single: 180_000,
            n_bidir: 36_000,
            stimulus_intensity: 1.0,
            bidir_intensity: 1.0,
            seed: 1,
            minibatch_size: 64,
            max_iters: 20_000,
            step_init: 0.01,
            step_decay: 1e-3,
            density_update_period: 200,
            density_subsample: 2048,
            density_max_iters: 400,
            density_kkt_tol: 1e-5,
            convergence_tol: 0.0,
            checkpoint_every: 0,
            eval_n_single: 10_000,
            eval_n_bidir: 2_000,
            eval_seed: 90_001,
            prominence_frac: 0.2,
            bias_tol_deg: 7.5,
            activity_floor_frac: 0.01,
            separations_deg: vec![60.0],
        }
    }
}

macro_rules! parse_keys {
    ($cfg:ident, $key:ident, $value:ident, $err:ident; $($name:ident : $kind:tt),* $(,)?) => {
        match $key {
            $(stringify!($name) => parse_keys!(@set $cfg, $name, $value, $err, $kind),)*
            _ => return Err($err(format!("unknown key `{}`", $key))),
        }
    };
    (@set $cfg:ident, $name:ident, $value:ident, $err:ident, scalar) => {
        $cfg.$name = $value
            .parse()
            .map_err(|_| $err(format!("invalid value `{}` for {}", $value, stringify!($name))))?
    };
    (@set $cfg:ident, $name:ident, $value:ident, $err:ident, list) => {
        $cfg.$name = $value
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| $err(format!("invalid value `{}` for {}", $value, stringify!($name))))?
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parse the `key = value` format. Lines starting with `#` and blank
    /// lines are ignored; keys may not repeat; errors carry the line number.
    pub fn parse(text: &str, path_label: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Config {
                path: path_label.to_string(),
                line: lineno,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".to_string()))?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            parse_keys!(cfg, key, value, err;
                n_dirs: scalar,
                m_cells: scalar,
                sigma: scalar,
                k_cells: scalar,
                gain_a: scalar,
                norm_eps: scalar,
                lambda_energy: scalar,
                gamma_reg: scalar,
                n_population: scalar,
                rate_floor: scalar,
                fisher_space: scalar,
                n_single: scalar,
                n_bidir: scalar,
                stimulus_intensity: scalar,
                bidir_intensity: scalar,
                seed: scalar,
                minibatch_size: scalar,
                max_iters: scalar,
                step_init: scalar,
                step_decay: scalar,
                density_update_period: scalar,
                density_subsample: scalar,
                density_max_iters: scalar,
                density_kkt_tol: scalar,
                convergence_tol: scalar,
                checkpoint_every: scalar,
                eval_n_single: scalar,
                eval_n_bidir: scalar,
                eval_seed: scalar,
                prominence_frac: scalar,
                bias_tol_deg: scalar,
                activity_floor_frac: scalar,
                separations_deg: list,
            );
        }
        cfg.validate(path_label)?;
        Ok(cfg)
    }

    /// Range checks over the whole configuration.
    pub fn validate(&self, path_label: &str) -> Result<()> {
        let err = |msg: String| Error::Config { path: path_label.to_string(), line: 0, msg };
        if self.n_dirs < 2 || 360 % self.n_dirs != 0 {
            return Err(err(format!("n_dirs = {} must divide 360", self.n_dirs)));
        }
        if self.m_cells == 0 || self.k_cells == 0 {
            return Err(err("m_cells and k_cells must be >= 1".into()));
        }
        let positives = [
            ("sigma", self.sigma),
            ("gain_a", self.gain_a),
            ("norm_eps", self.norm_eps),
            ("stimulus_intensity", self.stimulus_intensity),
            ("bidir_intensity", self.bidir_intensity),
            ("step_init", self.step_init),
            ("rate_floor", self.rate_floor),
            ("density_kkt_tol", self.density_kkt_tol),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(err(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negatives = [
            ("lambda_energy", self.lambda_energy),
            ("gamma_reg", self.gamma_reg),
            ("step_decay", self.step_decay),
            ("convergence_tol", self.convergence_tol),
        ];
        for (name, v) in non_negatives {
            if !(v >= 0.0) {
                return Err(err(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.n_population >= 1.0) {
            return Err(err(format!("n_population must be >= 1, got {}", self.n_population)));
        }
        if self.minibatch_size == 0 || self.density_update_period == 0 {
            return Err(err("minibatch_size and density_update_period must be >= 1".into()));
        }
        if !(self.prominence_frac > 0.0 && self.prominence_frac <= 1.0) {
            return Err(err(format!(
                "prominence_frac must be in (0, 1], got {}",
                self.prominence_frac
            )));
        }
        if !(self.bias_tol_deg >= 0.0 && self.bias_tol_deg < 180.0) {
            return Err(err(format!("bias_tol_deg must be in [0, 180), got {}", self.bias_tol_deg)));
        }
        if !(self.activity_floor_frac >= 0.0 && self.activity_floor_frac < 1.0) {
            return Err(err(format!(
                "activity_floor_frac must be in [0, 1), got {}",
                self.activity_floor_frac
            )));
        }
        if self.separations_deg.is_empty() {
            return Err(err("separations_deg must name at least one separation".into()));
        }
        let grid = DirectionGrid::new(self.n_dirs).map_err(|e| err(e.to_string()))?;
        for &sep in &self.separations_deg {
            if grid.separation_steps(sep).is_none() {
                return Err(err(format!(
                    "separation {sep} deg is not representable on a {}-direction grid",
                    self.n_dirs
                )));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<DirectionGrid> {
        DirectionGrid::new(self.n_dirs)
    }

    pub fn build_v1(&self) -> Result<V1Params> {
        V1Params::new(self.m_cells, self.sigma)
    }

    pub fn info(&self) -> Result<InfoConfig> {
        InfoConfig::new(self.n_population, self.gamma_reg, self.rate_floor)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda_energy: self.lambda_energy,
            minibatch_size: self.minibatch_size,
            max_iters: self.max_iters,
            step_init: self.step_init,
            step_decay: self.step_decay,
            seed: self.seed,
            fisher_space: self.fisher_space,
            density_update_period: self.density_update_period,
            density_subsample: self.density_subsample,
            density_max_iters: self.density_max_iters,
            density_kkt_tol: self.density_kkt_tol,
            convergence_tol: self.convergence_tol,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            prominence_frac: self.prominence_frac,
            bias_tol_deg: self.bias_tol_deg,
            activity_floor_frac: self.activity_floor_frac,
            probe_intensity: self.stimulus_intensity,
            bidir_probe_intensity: self.bidir_intensity,
        }
    }

    /// Canonical `key = value` rendering of the full configuration, in fixed
    /// key order; identical settings render identically no matter how the
    /// config file was formatted.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("n_dirs", self.n_dirs.to_string());
        put("m_cells", self.m_cells.to_string());
        put("sigma", self.sigma.to_string());
        put("k_cells", self.k_cells.to_string());
        put("gain_a", self.gain_a.to_string());
        put("norm_eps", self.norm_eps.to_string());
        put("lambda_energy", self.lambda_energy.to_string());
        put("gamma_reg", self.gamma_reg.to_string());
        put("n_population", self.n_population.to_string());
        put("rate_floor", self.rate_floor.to_string());
        put("fisher_space", self.fisher_space.label().to_string());
        put("n_single", self.n_single.to_string());
        put("n_bidir", self.n_bidir.to_string());
        put("stimulus_intensity", self.stimulus_intensity.to_string());
        put("bidir_intensity", self.bidir_intensity.to_string());
        put("seed", self.seed.to_string());
        put("minibatch_size", self.minibatch_size.to_string());
        put("max_iters", self.max_iters.to_string());
        put("step_init", self.step_init.to_string());
        put("step_decay", self.step_decay.to_string());
        put("density_update_period", self.density_update_period.to_string());
        put("density_subsample", self.density_subsample.to_string());
        put("density_max_iters", self.density_max_iters.to_string());
        put("density_kkt_tol", self.density_kkt_tol.to_string());
        put("convergence_tol", self.convergence_tol.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("eval_n_single", self.eval_n_single.to_string());
        put("eval_n_bidir", self.eval_n_bidir.to_string());
        put("eval_seed", self.eval_seed.to_string());
        put("prominence_frac", self.prominence_frac.to_string());
        put("bias_tol_deg", self.bias_tol_deg.to_string());
        put("activity_floor_frac", self.activity_floor_frac.to_string());
        put(
            "separations_deg",
            self.separations_deg
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out
    }

    /// Hash of the canonical configuration, stamped into every output file.
    pub fn config_hash(&self) -> String {
        fnv1a64_hex(self.canonical_string().as_bytes())
    }

    /// Provenance comment for output headers.
    pub fn provenance_comment(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate("default").unwrap();
        assert_eq!(cfg.n_dirs, 24);
        assert_eq!(cfg.k_cells, 12);
        assert_eq!(cfg.lambda_energy, 10.0);
        assert_eq!(cfg.norm_eps, 0.1);
        assert_eq!(cfg.sigma, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn parses_overrides_and_lists() {
        let text = "# comment\n\nk_cells = 6\nseparations_deg = 30, 60, 90\nseed=99\n";
        let cfg = RunConfig::parse(text, "test.cfg").unwrap();
        assert_eq!(cfg.k_cells, 6);
        assert_eq!(cfg.separations_deg, vec![30.0, 60.0, 90.0]);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.n_dirs, 24); // untouched default
    }

    #[test]
    fn unknown_key_reports_the_line() {
        let text = "k_cells = 6\nnot_a_key = 1\n";
        let err = RunConfig::parse(text, "test.cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("test.cfg:2"), "message: {msg}");
        assert!(msg.contains("not_a_key"), "message: {msg}");
    }

    #[test]
    fn bad_value_reports_the_line() {
        let text = "\nmax_iters = soon\n";
        let err = RunConfig::parse(text, "cfg").unwrap_err();
        assert!(err.to_string().contains("cfg:2"), "message: {err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = "seed = 1\nseed = 2\n";
        assert!(RunConfig::parse(text, "cfg").is_err());
    }

    #[test]
    fn range_checks_fire() {
        assert!(RunConfig::parse("n_dirs = 7\n", "cfg").is_err());
        assert!(RunConfig::parse("norm_eps = 0\n", "cfg").is_err());
        assert!(RunConfig::parse("lambda_energy = -1\n", "cfg").is_err());
        assert!(RunConfig::parse("separations_deg = 17\n", "cfg").is_err());
        assert!(RunConfig::parse("prominence_frac = 1.5\n", "cfg").is_err());
    }

    #[test]
    fn canonical_string_is_format_independent() {
        let a = RunConfig::parse("seed = 7\nk_cells=6\n", "a").unwrap();
        let b = RunConfig::parse("# different layout\nk_cells = 6\n\nseed=7\n", "b").unwrap();
        assert_eq!(a.canonical_string(), b.canonical_string());
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig::parse("seed = 8\nk_cells=6\n", "c").unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn canonical_string_reparses_to_the_same_config() {
        let mut cfg = RunConfig::default();
        cfg.sigma = 1.2345678901234567;
        cfg.gamma_reg = 3e-7;
        cfg.separations_deg = vec![30.0, 60.0];
        let round = RunConfig::parse(&cfg.canonical_string(), "canon").unwrap();
        assert_eq!(cfg, round);
    }
}
