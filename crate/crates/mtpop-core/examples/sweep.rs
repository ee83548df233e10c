// configuration sweep scored against the qualitative acceptance targets
use mtpop_core::analysis::{classify_shape, ClassifyThresholds, CurveKind, ShapeKind, TuningCurve};
use mtpop_core::config::RunConfig;
use mtpop_core::model::Model;
use mtpop_core::mt::MTParams;
use mtpop_core::optim::{train, TrainConfig};
use mtpop_core::stimulus::{sample_training_set_scaled, Stimulus, StimulusBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct RunStats {
    counts: [usize; 4],
    classified: usize,
    lower_frac: f64,
    uni_w: f64,
    bi_w: f64,
    bi_w_all: f64,
    consistent: usize,
    biased: usize,
}

fn curves(model: &Model, k: usize, sep_deg: f64, bi_int: f64) -> (TuningCurve, TuningCurve) {
    let n = model.grid.n_dirs();
    let steps = model.grid.separation_steps(sep_deg).unwrap();
    let mut uni = Vec::new();
    for i in 1..=n {
        let s = Stimulus::single(&model.grid, i, 1.0).unwrap();
        uni.push(model.response(&s).unwrap()[k]);
    }
    let mut bi = Vec::new();
    let mut absc = Vec::new();
    for a in 1..=n {
        let b = (a - 1 + steps) % n + 1;
        let s = Stimulus::bidirectional(&model.grid, a, b, bi_int).unwrap();
        absc.push(s.midline_deg(&model.grid).unwrap());
        bi.push(model.response(&s).unwrap()[k]);
    }
    (
        TuningCurve { cell_index: k, kind: CurveKind::Unidirectional,
            abscissa_deg: model.grid.directions_deg().to_vec(), responses: uni },
        TuningCurve { cell_index: k, kind: CurveKind::Bidirectional { separation_deg: sep_deg },
            abscissa_deg: absc, responses: bi },
    )
}

fn run_one(seed: u64, bi_int: f64, iters: usize, period: usize, n_pop: f64, floor: f64) -> RunStats {
    let mut cfg = RunConfig::default();
    cfg.n_population = n_pop;
    cfg.gain_a = std::env::args().nth(8).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    cfg.gamma_reg = std::env::args().nth(9).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let grid = cfg.build_grid().unwrap();
    let v1 = cfg.build_v1().unwrap();
    let info = cfg.info().unwrap();

    let singles = sample_training_set_scaled(&grid, 18_000, 0, seed, 1.0);
    let pairs = sample_training_set_scaled(&grid, 0, 3_600, seed.wrapping_add(17), bi_int);
    let mut stimuli = singles.stimuli;
    stimuli.extend(pairs.stimuli);
    let batch = StimulusBatch { stimuli, seed, n_single: 18_000, n_bidir: 3_600 };

    let mut tc = TrainConfig::default();
    tc.seed = seed;
    tc.max_iters = iters;
    tc.density_update_period = period;
    tc.density_subsample = 1024;
    tc.density_max_iters = 200;
    tc.density_kkt_tol = 1e-5;
    tc.step_init = std::env::args().nth(7).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    tc.minibatch_size = std::env::args().nth(10).and_then(|s| s.parse().ok()).unwrap_or(64);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let init = MTParams::random_init(cfg.k_cells, cfg.m_cells, cfg.gain_a, cfg.norm_eps, &mut rng);
    let out = train(&tc, &info, &grid, &v1, init, &batch).unwrap();
    let model = &out.model;

    let seps = [60.0, 30.0, 90.0];
    let mut all: Vec<(usize, Vec<(TuningCurve, TuningCurve)>)> = Vec::new();
    let mut pop_max = 0.0f64;
    for k in 0..cfg.k_cells {
        if out.density.rho()[k] == 0.0 { continue; }
        let cs: Vec<_> = seps.iter().map(|&s| curves(model, k, s, bi_int)).collect();
        for (u, b) in &cs {
            pop_max = pop_max.max(u.peak_value()).max(b.peak_value());
        }
        all.push((k, cs));
    }
    let thr = ClassifyThresholds { prominence_frac: 0.2, bias_tol_deg: 7.5, activity_floor: floor * pop_max };

    let mut stats = RunStats { counts: [0; 4], classified: 0, lower_frac: 0.0, uni_w: 0.0, bi_w: 0.0, bi_w_all: 0.0, consistent: 0, biased: 0 };
    let mut lower = 0usize;
    for (_, cs) in &all {
        let (u, b) = &cs[0];
        let Some(class) = classify_shape(u, b, &thr) else { continue };
        let slot = match class.kind {
            ShapeKind::SymmetricSinglePeak => 0,
            ShapeKind::ClockwiseBias => 1,
            ShapeKind::CounterclockwiseBias => 2,
            ShapeKind::DoublePeaked => 3,
        };
        stats.counts[slot] += 1;
        stats.classified += 1;
        if b.peak_value() <= u.peak_value() { lower += 1; }
        stats.uni_w += u.half_width_deg();
        stats.bi_w += b.half_width_deg();
        stats.bi_w_all += cs.iter().map(|(_, b2)| b2.half_width_deg()).sum::<f64>() / cs.len() as f64;
        if slot == 1 || slot == 2 {
            stats.biased += 1;
            let sign = class.peak_offset_deg.signum();
            let ok = cs[1..].iter().all(|(u2, b2)| {
                let off = mtpop_core::circ::signed_diff_deg(b2.peak_abscissa_deg(), u2.peak_abscissa_deg());
                off * sign >= 0.0
            });
            if ok { stats.consistent += 1; }
        }
    }
    if stats.classified > 0 {
        stats.lower_frac = lower as f64 / stats.classified as f64;
        stats.uni_w /= stats.classified as f64;
        stats.bi_w /= stats.classified as f64;
        stats.bi_w_all /= stats.classified as f64;
    }
    stats
}

fn main() {
    let bi_int: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let iters: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let period: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(5_000);
    let n_pop: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(1000.0);
    let floor: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let _nseeds: usize = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(5);

    let mut runs = Vec::new();
    for seed in 1..=5u64 {
        runs.push(run_one(seed, bi_int, iters, period, n_pop, floor));
    }
    let n_classes_ok = runs.iter().filter(|r| r.counts.iter().filter(|&&c| c > 0).count() >= 3).count();
    let plurality: Vec<bool> = runs
        .iter()
        .map(|r| r.counts[0] > r.counts[1] && r.counts[0] > r.counts[2] && r.counts[0] > r.counts[3])
        .collect();
    let sym_ok: Vec<bool> = runs
        .iter()
        .zip(&plurality)
        .map(|(r, &p)| {
            let frac = r.counts[0] as f64 / r.classified.max(1) as f64;
            p && (frac - 0.5).abs() <= 0.25
        })
        .collect();
    let accepted = sym_ok.iter().filter(|&&b| b).count();
    let c8 = runs.iter().filter(|r| r.lower_frac >= 0.75 && r.bi_w > r.uni_w).count();
    let c8_lower = runs.iter().filter(|r| r.lower_frac >= 0.75).count();
    let c8_width = runs.iter().filter(|r| r.bi_w > r.uni_w).count();
    let c9 = runs
        .iter()
        .filter(|r| r.biased == 0 || r.consistent * 2 > r.biased)
        .count();
    println!("bi={bi_int} iters={iters} period={period} N={n_pop} floor={floor}");
    for (i, r) in runs.iter().enumerate() {
        println!(
            "  seed {}: counts {:?}/{} lower {:.2} w {:.1}/{:.1} (all seps {:.1}) cons {}/{}",
            i + 1, r.counts, r.classified, r.lower_frac, r.uni_w, r.bi_w, r.bi_w_all, r.consistent, r.biased
        );
    }
    println!("  C7: classes>=3 in {n_classes_ok}/5 (need 4), sym-accepted {accepted}/5 (need 3)");
    println!("  C8: both-ok {c8}/5 (lower {c8_lower}, width {c8_width}) | C9: {c9}/5");
}
