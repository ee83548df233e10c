// probe: does an O(1) regularizer (prior-curvature scale) let tuning emerge?
use mtpop_core::analysis::{population_summary, ClassifyOptions};
use mtpop_core::config::RunConfig;
use mtpop_core::runner::run_training;

fn main() {
    let gamma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let iters: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(6000);
    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.gamma_reg = gamma;
    cfg.n_single = 18_000;
    cfg.n_bidir = 3_600;
    cfg.max_iters = iters;
    cfg.density_update_period = 500;
    cfg.density_subsample = 1024;
    cfg.density_max_iters = 200;
    cfg.density_kkt_tol = 1e-5;
    cfg.separations_deg = vec![60.0, 30.0, 90.0];
    cfg.validate("probe").unwrap();
    let out = run_training(&cfg).unwrap();
    let (model, density) = out.snapshot.to_parts().unwrap();
    let summary = population_summary(&model, Some(&density), &cfg.separations_deg, &ClassifyOptions::default()).unwrap();
    println!("gamma {gamma} iters {iters}: final Q {:.3} counts {:?} classified {}",
        out.final_q.q, summary.counts(), summary.classified_total());
    for c in summary.cells.iter() {
        println!("  cell {:>2} rho {:.3} {:?} uni_pk {:.3} bi_pk {:.3} uni_w {:.0} bi_w {:.0} offsets {:?}",
            c.cell_index, c.rho.unwrap(),
            c.class.map(|cl| format!("{:?} {:+.0}", cl.kind, cl.peak_offset_deg)),
            c.uni_peak_rate, c.bi_peak_rate, c.uni_half_width_deg, c.bi_half_width_deg,
            c.offsets_by_separation.iter().map(|(_, o)| *o).collect::<Vec<_>>());
    }
}
