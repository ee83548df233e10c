// probe: bidirectional components at half intensity (sum matches singles)
use mtpop_core::analysis::{classify_shape, ClassifyThresholds, CurveKind, ShapeKind, TuningCurve};
use mtpop_core::config::RunConfig;
use mtpop_core::info::FisherSpace;
use mtpop_core::model::Model;
use mtpop_core::mt::MTParams;
use mtpop_core::optim::{train, EncodedBatch, TrainConfig};
use mtpop_core::stimulus::{sample_training_set_scaled, Stimulus, StimulusBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn curves(model: &Model, k: usize, sep_steps: usize, bi_intensity: f64) -> (TuningCurve, TuningCurve) {
    let n = model.grid.n_dirs();
    let mut uni = Vec::new();
    for i in 1..=n {
        let s = Stimulus::single(&model.grid, i, 1.0).unwrap();
        uni.push(model.response(&s).unwrap()[k]);
    }
    let mut bi = Vec::new();
    let mut absc = Vec::new();
    for a in 1..=n {
        let b = (a - 1 + sep_steps) % n + 1;
        let s = Stimulus::bidirectional(&model.grid, a, b, bi_intensity).unwrap();
        absc.push(s.midline_deg(&model.grid).unwrap());
        bi.push(model.response(&s).unwrap()[k]);
    }
    (
        TuningCurve { cell_index: k, kind: CurveKind::Unidirectional,
            abscissa_deg: model.grid.directions_deg().to_vec(), responses: uni },
        TuningCurve { cell_index: k, kind: CurveKind::Bidirectional { separation_deg: sep_steps as f64 * model.grid.spacing_deg() },
            abscissa_deg: absc, responses: bi },
    )
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let bi_int: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let mut cfg = RunConfig::default();
    cfg.n_population = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(1000.0);
    cfg.gamma_reg = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let grid = cfg.build_grid().unwrap();
    let v1 = cfg.build_v1().unwrap();
    let info = cfg.info().unwrap();

    // training set: singles at 1.0, pairs at bi_int per component
    let singles = sample_training_set_scaled(&grid, 18_000, 0, seed, 1.0);
    let pairs = sample_training_set_scaled(&grid, 0, 3_600, seed.wrapping_add(17), bi_int);
    let mut stimuli = singles.stimuli;
    stimuli.extend(pairs.stimuli);
    let batch = StimulusBatch { stimuli, seed, n_single: 18_000, n_bidir: 3_600 };

    let info2 = cfg.info().unwrap();
    let _ = info2;
    let mut tc = TrainConfig::default();
    tc.seed = seed;
    tc.max_iters = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    tc.density_update_period = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    tc.density_subsample = 1024;
    tc.density_max_iters = 200;
    tc.density_kkt_tol = 1e-5;
    tc.fisher_space = FisherSpace::Direction;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let init = MTParams::random_init(cfg.k_cells, cfg.m_cells, cfg.gain_a, cfg.norm_eps, &mut rng);
    let out = train(&tc, &info, &grid, &v1, init, &batch).unwrap();

    // classify with pair probes at bi_int
    let model = &out.model;
    let pop_max = {
        let mut m = 0.0f64;
        for k in 0..cfg.k_cells {
            let (u, b) = curves(model, k, 4, bi_int);
            m = m.max(u.peak_value()).max(b.peak_value());
        }
        m
    };
    let thr = ClassifyThresholds { prominence_frac: 0.2, bias_tol_deg: 7.5, activity_floor: 0.01 * pop_max };
    let mut counts = [0usize; 4];
    let mut lower = 0;
    let mut total = 0;
    let mut uni_w_sum = 0.0;
    let mut bi_w_sum = 0.0;
    println!("seed {seed} bi_intensity {bi_int}: final Q {:.3}", out.final_q.q);
    for k in 0..cfg.k_cells {
        if out.density.rho()[k] == 0.0 { continue; }
        let (u, b) = curves(model, k, 4, bi_int);
        if let Some(class) = classify_shape(&u, &b, &thr) {
            let slot = match class.kind {
                ShapeKind::SymmetricSinglePeak => 0,
                ShapeKind::ClockwiseBias => 1,
                ShapeKind::CounterclockwiseBias => 2,
                ShapeKind::DoublePeaked => 3,
            };
            counts[slot] += 1;
            total += 1;
            if b.peak_value() <= u.peak_value() { lower += 1; }
            uni_w_sum += u.half_width_deg();
            bi_w_sum += b.half_width_deg();
            println!("  cell {:>2} rho {:.3} {:?} off {:+.0} uni_pk {:.3} bi_pk {:.3} uni_w {:.0} bi_w {:.0}",
                k, out.density.rho()[k], class.kind, class.peak_offset_deg,
                u.peak_value(), b.peak_value(), u.half_width_deg(), b.half_width_deg());
        }
    }
    println!("  counts {:?} of {} | lower {:.2} | widths uni {:.1} bi {:.1}",
        counts, total, lower as f64 / total.max(1) as f64,
        uni_w_sum / total.max(1) as f64, bi_w_sum / total.max(1) as f64);
}
