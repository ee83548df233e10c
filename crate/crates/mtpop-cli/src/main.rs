//! Batch command-line surface: train models, evaluate the information
//! estimate, classify tuning curves, export plot data, and run the numerical
//! validation suites.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
//! 3 validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use mtpop_core::analysis::{population_summary, write_curves_csv};
use mtpop_core::config::RunConfig;
use mtpop_core::error::Error;
use mtpop_core::info::{fisher_matrix, mi_asymptotic_in};
use mtpop_core::runner::run_training_with_hook;
use mtpop_core::snapshot::ModelSnapshot;
use mtpop_core::stimulus::sample_training_set_mixed;
use mtpop_core::util::write_atomic;
use mtpop_core::validate::{run_all, Level};

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

impl From<LevelArg> for Level {
    fn from(level: LevelArg) -> Self {
        match level {
            LevelArg::Fast => Level::Fast,
            LevelArg::Full => Level::Full,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mtpop",
    about = "Information-maximizing population-coding model of motion direction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run configuration; writes the snapshot and trace.
    Train {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Output directory for snapshot.json and trace.csv.
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
        /// Override the configuration's RNG seed.
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
    },
    /// Evaluate the mutual-information estimate of a snapshot on a fresh
    /// stimulus batch.
    Eval {
        #[arg(long, value_name = "PATH")]
        snapshot: PathBuf,
        /// Run configuration (defaults apply when omitted).
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Classify every cell's tuning-curve shape and export curves + summary.
    Classify {
        #[arg(long, value_name = "PATH")]
        snapshot: PathBuf,
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Bidirectional separation in degrees (repeatable; first is the
        /// reference). Defaults to the configuration's list.
        #[arg(long = "separation", value_name = "DEG")]
        separations: Vec<f64>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Export the training stimulus batch as CSV (plus per-stimulus Fisher
    /// diagnostics when a snapshot is given).
    Export {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "PATH")]
        snapshot: Option<PathBuf>,
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Run the numerical validation suites.
    Validate {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit code for usage errors is 2; this tool reserves
            // 2 for numerical failures, so map usage problems to 1 (keeping 0
            // for --help/--version).
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NotPositiveDefinite { .. }
        | Error::DensityNonConvergence { .. }
        | Error::Diverged { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Command::Eval { snapshot, config, out } => cmd_eval(&snapshot, config.as_deref(), &out),
        Command::Classify { snapshot, config, separations, out } => {
            cmd_classify(&snapshot, config.as_deref(), &separations, &out)
        }
        Command::Export { config, snapshot, seed, out } => {
            cmd_export(&config, snapshot.as_deref(), seed, &out)
        }
        Command::Validate { level, out } => cmd_validate(level.into(), &out),
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_train(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode, Error> {
    let cfg = load_config(config_path, seed)?;
    std::fs::create_dir_all(out)?;
    let started = Instant::now();
    let out_dir = out.to_path_buf();
    let result = run_training_with_hook(&cfg, |iter, snapshot| {
        snapshot.save(&out_dir.join(format!("checkpoint-{:06}.json", iter + 1)))
    });
    let artifacts = match result {
        Ok(artifacts) => artifacts,
        Err(Error::Diverged { iter, from, to, trace }) => {
            // keep the trace for diagnosis, then report the failure
            let mut buf = Vec::new();
            trace.write_csv(&mut buf, Some(&cfg.provenance_comment()))?;
            write_atomic(&out.join("trace.csv"), &buf)?;
            return Err(Error::Diverged { iter, from, to, trace });
        }
        Err(e) => return Err(e),
    };
    let runtime = started.elapsed().as_secs_f64();

    artifacts.snapshot.save(&out.join("snapshot.json"))?;
    let mut buf = Vec::new();
    artifacts.trace.write_csv(&mut buf, Some(&cfg.provenance_comment()))?;
    write_atomic(&out.join("trace.csv"), &buf)?;

    println!(
        "train: final_q={:.6} logdet_part={:.6} energy_part={:.6} iters={} runtime={:.1}s seed={}",
        artifacts.final_q.q,
        artifacts.final_q.logdet_part,
        artifacts.final_q.energy_part,
        artifacts.snapshot.provenance.iterations,
        runtime,
        cfg.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn check_compatible(cfg: &RunConfig, snapshot: &ModelSnapshot) -> Result<(), Error> {
    if cfg.n_dirs != snapshot.n_dirs() {
        return Err(Error::Dimension { expected: snapshot.n_dirs(), actual: cfg.n_dirs });
    }
    if cfg.k_cells != snapshot.k_cells() {
        return Err(Error::Dimension { expected: snapshot.k_cells(), actual: cfg.k_cells });
    }
    Ok(())
}

fn cmd_eval(snapshot_path: &Path, config: Option<&Path>, out: &Path) -> Result<ExitCode, Error> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let snapshot = ModelSnapshot::load(snapshot_path)?;
    check_compatible(&cfg, &snapshot)?;
    let (model, density) = snapshot.to_parts()?;
    let info = cfg.info()?;
    let batch = sample_training_set_mixed(
        &model.grid,
        cfg.eval_n_single,
        cfg.eval_n_bidir,
        cfg.eval_seed,
        cfg.stimulus_intensity,
        cfg.bidir_intensity,
    );
    let est = mi_asymptotic_in(cfg.fisher_space, &model, &density, &info, &batch)?;

    println!(
        "eval: mi_nats={:.6} mean_logdet_nats={:.6} entropy_h_nats={:.6} fisher_space={} stimuli={}",
        est.mi_nats,
        est.mean_logdet_nats,
        est.entropy_h_nats,
        cfg.fisher_space.label(),
        batch.len()
    );
    std::fs::create_dir_all(out)?;
    let comment = format!(
        "config_hash={} seed={} eval_seed={}",
        snapshot.provenance.config_hash, snapshot.provenance.seed, cfg.eval_seed
    );
    let text = format!(
        "# {comment}\nmi_nats,mean_logdet_nats,entropy_h_nats,fisher_space\n{},{},{},{}\n",
        est.mi_nats,
        est.mean_logdet_nats,
        est.entropy_h_nats,
        cfg.fisher_space.label()
    );
    write_atomic(&out.join("eval.csv"), text.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(
    snapshot_path: &Path,
    config: Option<&Path>,
    separations: &[f64],
    out: &Path,
) -> Result<ExitCode, Error> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let snapshot = ModelSnapshot::load(snapshot_path)?;
    let (model, density) = snapshot.to_parts()?;
    let separations: Vec<f64> =
        if separations.is_empty() { cfg.separations_deg.clone() } else { separations.to_vec() };
    let summary =
        population_summary(&model, Some(&density), &separations, &cfg.classify_options())?;

    std::fs::create_dir_all(out)?;
    let comment = format!(
        "config_hash={} seed={} reference_separation_deg={}",
        snapshot.provenance.config_hash, snapshot.provenance.seed, summary.reference_separation_deg
    );
    let mut buf = Vec::new();
    summary.write_summary_csv(&mut buf, Some(&comment))?;
    write_atomic(&out.join("summary.csv"), &buf)?;
    let mut buf = Vec::new();
    write_curves_csv(&summary.curves, &mut buf, Some(&comment))?;
    write_atomic(&out.join("curves.csv"), &buf)?;
    let table = summary.render_table();
    write_atomic(&out.join("summary.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(
    config_path: &Path,
    snapshot: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<ExitCode, Error> {
    let cfg = load_config(config_path, seed)?;
    let grid = cfg.build_grid()?;
    let batch = sample_training_set_mixed(
        &grid,
        cfg.n_single,
        cfg.n_bidir,
        cfg.seed,
        cfg.stimulus_intensity,
        cfg.bidir_intensity,
    );
    std::fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    batch.write_csv(&grid, &mut buf, Some(&cfg.provenance_comment()))?;
    write_atomic(&out.join("stimuli.csv"), &buf)?;
    println!("export: wrote {} stimuli", batch.len());

    if let Some(snapshot_path) = snapshot {
        let snapshot = ModelSnapshot::load(snapshot_path)?;
        check_compatible(&cfg, &snapshot)?;
        let (model, density) = snapshot.to_parts()?;
        let info = cfg.info()?;
        let eval_batch = sample_training_set_mixed(
            &model.grid,
            cfg.eval_n_single,
            cfg.eval_n_bidir,
            cfg.eval_seed,
            cfg.stimulus_intensity,
            cfg.bidir_intensity,
        );
        let mut reports = Vec::with_capacity(eval_batch.len());
        for (i, s) in eval_batch.stimuli.iter().enumerate() {
            let x = model.encode(s);
            reports.push(fisher_matrix(&model.mt, &density, &info, &x, i)?);
        }
        let mut buf = Vec::new();
        mtpop_core::info::write_fisher_csv(&reports, &mut buf, Some(&cfg.provenance_comment()))?;
        write_atomic(&out.join("fisher.csv"), &buf)?;
        println!("export: wrote {} fisher reports", reports.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(level: Level, out: &Path) -> Result<ExitCode, Error> {
    let report = run_all(level)?;
    for suite in &report.suites {
        println!("{}", suite.render_line());
    }
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("validation.json"), report.to_json()?.as_bytes())?;
    if report.all_passed() {
        println!("validate: all suites passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("validate: FAILED");
        Ok(ExitCode::from(3))
    }
}
