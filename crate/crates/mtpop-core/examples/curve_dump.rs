use mtpop_core::analysis::{bidirectional_curve, unidirectional_curve};
use mtpop_core::config::RunConfig;
use mtpop_core::runner::run_training;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    cfg.gain_a = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    cfg.n_single = 18_000;
    cfg.n_bidir = 3_600;
    cfg.max_iters = 20_000;
    cfg.density_update_period = 5_000;
    cfg.density_subsample = 1024;
    cfg.density_max_iters = 200;
    cfg.density_kkt_tol = 1e-5;
    cfg.validate("dump").unwrap();
    let out = run_training(&cfg).unwrap();
    let (model, density) = out.snapshot.to_parts().unwrap();
    for k in 0..12 {
        if density.rho()[k] == 0.0 { continue; }
        let uni = unidirectional_curve(&model, k).unwrap();
        let bi = bidirectional_curve(&model, k, 60.0).unwrap();
        let fmt = |v: &[f64]| v.iter().map(|r| format!("{:4.0}", r * 100.0)).collect::<Vec<_>>().join(" ");
        println!("cell {k:>2} rho {:.3}", density.rho()[k]);
        println!("  uni({:3.0}..): {}", uni.abscissa_deg[0], fmt(&uni.responses));
        println!("  bi ({:3.0}..): {}", bi.abscissa_deg[0], fmt(&bi.responses));
    }
}
