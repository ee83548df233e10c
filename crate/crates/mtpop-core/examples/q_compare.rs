// decisive probe: Q of the trained (flat) model vs a hand-built tuned model
use mtpop_core::config::RunConfig;
use mtpop_core::density::DensityVector;
use mtpop_core::model::Model;
use mtpop_core::mt::MTParams;
use mtpop_core::optim::{objective_q, optimize_density, DensityOptOptions};
use mtpop_core::runner::run_training;
use mtpop_core::v1::von_mises_response;
use nalgebra::{DMatrix, DVector};

fn tuned_model(cfg: &RunConfig, amp: f64, width: f64, base: f64, thr: f64) -> Model {
    let grid = cfg.build_grid().unwrap();
    let v1 = cfg.build_v1().unwrap();
    let weights = DMatrix::from_fn(cfg.k_cells, cfg.m_cells, |k, m| {
        let center = 360.0 * (k + 1) as f64 / cfg.k_cells as f64;
        let dir = 360.0 * (m + 1) as f64 / cfg.m_cells as f64;
        amp * (von_mises_response(dir, center, width) - base)
    });
    let thresholds = DVector::from_element(cfg.k_cells, thr);
    let mt = MTParams::new(cfg.gain_a, cfg.norm_eps, weights, thresholds).unwrap();
    Model::new(grid, v1, mt).unwrap()
}

fn main() {
    let gamma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.gamma_reg = gamma;
    cfg.n_single = 18_000;
    cfg.n_bidir = 3_600;
    cfg.max_iters = 20_000;
    cfg.density_update_period = 500;
    cfg.density_subsample = 1024;
    cfg.density_max_iters = 200;
    cfg.density_kkt_tol = 1e-5;
    cfg.validate("probe").unwrap();
    let info = cfg.info().unwrap();

    let out = run_training(&cfg).unwrap();
    let (flat_model, flat_density) = out.snapshot.to_parts().unwrap();
    let batch = mtpop_core::stimulus::sample_training_set(&flat_model.grid, 18_000, 3_600, cfg.seed);
    let xs = flat_model.encode_batch(&batch);
    let q_flat = objective_q(&flat_model.mt, &flat_density, &info, cfg.lambda_energy, &xs).unwrap();
    println!("gamma {gamma}");
    println!("trained(flat): q {:+.3} logdet {:+.3} energy {:+.3}", q_flat.q, q_flat.logdet_part, q_flat.energy_part);

    let opts = DensityOptOptions { max_iters: 300, kkt_tol: 1e-5 };
    for (amp, width, base, thr) in [
        (6.0, 0.7, 0.25, 2.0),
        (12.0, 0.7, 0.25, 4.0),
        (25.0, 0.5, 0.2, 8.0),
        (50.0, 0.5, 0.2, 15.0),
        (100.0, 0.4, 0.15, 30.0),
    ] {
        let model = tuned_model(&cfg, amp, width, base, thr);
        let xs = model.encode_batch(&batch);
        let d0 = DensityVector::uniform(cfg.k_cells);
        let density = optimize_density(&model.mt, &info, cfg.lambda_energy, &xs[..2000], &d0, &opts)
            .unwrap_or(d0);
        let q = objective_q(&model.mt, &density, &info, cfg.lambda_energy, &xs).unwrap();
        // peak response of cell 0
        let uni = mtpop_core::analysis::unidirectional_curve(&model, 0).unwrap();
        println!("tuned amp {amp:>5.1} thr {thr:>4.1}: q {:+.3} logdet {:+.3} energy {:+.3} peak {:.3} width {:.0}",
            q.q, q.logdet_part, q.energy_part, uni.peak_value(), uni.half_width_deg());
    }
}
