// scratch experiment: desk-scale training dynamics and shape emergence
use std::time::Instant;

use mtpop_core::analysis::{population_summary, ClassifyOptions};
use mtpop_core::config::RunConfig;
use mtpop_core::density::DensityVector;
use mtpop_core::info::{mi_asymptotic_in, FisherSpace};
use mtpop_core::runner::run_training;
use mtpop_core::stimulus::sample_training_set;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let iters: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let n_pop: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1000.0);

    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.n_single = 18_000;
    cfg.n_bidir = 3_600;
    cfg.max_iters = iters;
    cfg.n_population = n_pop;
    cfg.density_update_period = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    cfg.density_subsample = 1024;
    cfg.density_max_iters = 200;
    cfg.density_kkt_tol = 1e-5;
    cfg.separations_deg = vec![60.0, 30.0, 90.0];
    cfg.validate("desk").unwrap();

    let t0 = Instant::now();
    let out = run_training(&cfg).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();

    let (model, density) = out.snapshot.to_parts().unwrap();
    let info = cfg.info().unwrap();
    let eval = sample_training_set(&model.grid, 4000, 800, 777);

    // initial model for comparison
    let mut cfg0 = cfg.clone();
    cfg0.max_iters = 0;
    let init = run_training(&cfg0).unwrap();
    let (model0, _) = init.snapshot.to_parts().unwrap();
    let d0 = DensityVector::uniform(cfg.k_cells);

    let mi0 = mi_asymptotic_in(FisherSpace::Direction, &model0, &d0, &info, &eval).unwrap();
    let mi1 = mi_asymptotic_in(FisherSpace::Direction, &model, &density, &info, &eval).unwrap();

    let summary =
        population_summary(&model, Some(&density), &cfg.separations_deg, &ClassifyOptions::default())
            .unwrap();

    let q_first = out.trace.rows.first().map(|r| r.q).unwrap_or(f64::NAN);
    let q0 = out.trace.smoothed_q(50).first().cloned().unwrap_or(f64::NAN);
    let q1 = out.trace.smoothed_q(50).last().cloned().unwrap_or(f64::NAN);
    println!("  first raw Q {q_first:.3}");
    println!("seed {seed} iters {iters} n_pop {n_pop}: train {train_secs:.1}s");
    println!("  smoothed Q {q0:.3} -> {q1:.3}, max rise {:.4}", out.trace.max_smoothed_rise(50));
    println!("  final Q parts: logdet {:.3} energy {:.3}", out.final_q.logdet_part, out.final_q.energy_part);
    println!("  mean_logdet init {:.4} -> final {:.4}  (mi {:.4} -> {:.4})",
        mi0.mean_logdet_nats, mi1.mean_logdet_nats, mi0.mi_nats, mi1.mi_nats);
    println!("  density: {:?}", density.as_slice().iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    println!("  counts (sym, cw, ccw, double): {:?} of {} classified", summary.counts(), summary.classified_total());
    println!("  fractions: {:?}", summary.fractions().map(|f| (f * 100.0).round() / 100.0));
    println!("  lower peak frac {:.2}, widths {:?}, consistency {:?}",
        summary.lower_peak_fraction(), summary.mean_half_widths_deg(), summary.bias_consistency());
    for c in &summary.cells {
        println!("    cell {:>2} rho {:.3} {:?} uni_pk {:.3} bi_pk {:.3} offsets {:?}",
            c.cell_index, c.rho.unwrap(),
            c.class.map(|cl| format!("{:?} {:+.0}", cl.kind, cl.peak_offset_deg)),
            c.uni_peak_rate, c.bi_peak_rate,
            c.offsets_by_separation.iter().map(|(_, o)| *o).collect::<Vec<_>>());
    }
}
