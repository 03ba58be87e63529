use implicit_sketch::calibrate::{calibrate, CalibrationGrid};
use implicit_sketch::hadamard::aggregate_norm;
use implicit_sketch::hashing::derive_seed;
use implicit_sketch::sketches::simulated::{perturb_factor, perturb_linear};
use implicit_sketch::stream::generate;
use implicit_sketch::{
    BitHash, Calibration, ExactHistogram, GeneratorMode, HadamardFunction, IMMatrixSketch, PairCounts,
    StableL1VectorSketch, StreamEvent,
};

const L1: HadamardFunction = HadamardFunction::AbsValue;

#[test]
fn independent_streams_converge_to_product() {
    let seeds = 20;
    let close = (0..seeds)
        .filter(|&s| {
            let events = generate(&GeneratorMode::Independent, 16, 1_000_000, s).unwrap();
            ExactHistogram::from_events(16, &events).unwrap().exact_distance(L1).unwrap() <= 0.05
        })
        .count();
    assert!(close as f64 >= 0.95 * seeds as f64, "{close}/{seeds}");
}

#[test]
fn ba2_on_two_row_stream_matches_every_mask() {
    let events = [StreamEvent::new(1, 1), StreamEvent::new(2, 2)];
    let h = ExactHistogram::from_events(2, &events).unwrap();
    for bits in [[false, false], [true, false], [false, true], [true, true]] {
        let mask = BitHash::from_bits(bits.to_vec()).unwrap();
        let want = h.view().unwrap().masked_cell_weight(L1, &mask).unwrap();
        assert_eq!(want, 0.5 * bits.iter().filter(|&&b| b).count() as f64);
        let mut s = IMMatrixSketch::new(2, mask, 1, 9).unwrap();
        for e in events {
            s.ingest(e).unwrap();
        }
        let a = h.view().unwrap().to_explicit();
        let per_rep = s.rep_values().unwrap()[0];
        let x = implicit_sketch::sketches::CoefficientFamily::truncated(derive_seed(9, 1), 1, 1e6);
        let y = implicit_sketch::sketches::CoefficientFamily::truncated(derive_seed(9, 2), 1, 1e6);
        let brute: f64 = (1..=2)
            .filter(|&i| bits[i - 1])
            .flat_map(|i| (1..=2).map(move |j| (i, j)))
            .map(|(i, j)| x.value(0, i) * y.value(0, j) * a.get(i, j))
            .sum();
        assert!((per_rep - brute).abs() <= 1e-12);
    }
}

#[test]
fn ba1_planted_aggregate_coordinate() {
    let n = 8;
    let mode = GeneratorMode::PlantedRows { weights: vec![0.6] };
    let trials = 200;
    let mut ok = 0;
    for t in 0..trials {
        let events = generate(&mode, n, 5000, t).unwrap();
        let a = ExactHistogram::from_events(n, &events).unwrap().view().unwrap().to_explicit();
        let mask = BitHash::new(derive_seed(t, 1), n).unwrap();
        let exact = aggregate_norm(L1, &a, &mask).unwrap();
        let mut s = StableL1VectorSketch::new(n, mask, 512, derive_seed(t, 2)).unwrap();
        s.ingest_counts(&PairCounts::from_events(n, &events).unwrap()).unwrap();
        if (s.estimate().unwrap() - exact).abs() <= 0.1 * exact + 1e-12 {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.9 * trials as f64, "{ok}/{trials}");
}

#[test]
fn ba2_brackets_perfect_dependence() {
    let n = 16;
    let r = Calibration::default().r(n);
    let trials = 200;
    let mut inside = 0;
    let mut halves = 0;
    for t in 0..trials {
        let events = generate(&GeneratorMode::PerfectDependence, n, 5000, t).unwrap();
        let h = ExactHistogram::from_events(n, &events).unwrap();
        let batch = PairCounts::from_events(n, &events).unwrap();
        let run = |mask: BitHash| {
            let want = h.view().unwrap().masked_cell_weight(L1, &mask).unwrap();
            let mut s = IMMatrixSketch::new(n, mask, 222, derive_seed(t, 5)).unwrap();
            s.ingest_counts(&batch).unwrap();
            let ratio = s.estimate().unwrap() / want;
            (1.0 / r..=r).contains(&ratio)
        };
        if run(BitHash::ones(n)) {
            inside += 1;
        }
        let split = BitHash::new(derive_seed(t, 6), n).unwrap();
        if !split.support().len().is_multiple_of(n) && run(split.clone()) && run(split.complement()) {
            halves += 1;
        }
    }
    assert!(inside as f64 >= 0.9 * trials as f64, "{inside}/{trials}");
    assert!(halves as f64 >= 0.8 * trials as f64, "{halves}/{trials}");
}

#[test]
fn injected_failures_occur_at_rate_delta() {
    let draws = 10_000;
    let out = (0..draws).filter(|&s| {
        let v = perturb_factor(1.0, 4.0, 0.1, s);
        !(0.25..=4.0).contains(&v)
    });
    let f = out.count() as f64 / draws as f64;
    assert!((f - 0.1).abs() <= 0.01, "factor injector {f}");
    let out = (0..draws).filter(|&s| {
        let v = perturb_linear(1.0, 0.2, 0.1, s);
        !(0.8..=1.2).contains(&v)
    });
    let f = out.count() as f64 / draws as f64;
    assert!((f - 0.1).abs() <= 0.01, "linear injector {f}");
}

#[test]
fn calibration_is_stable_under_more_trials() {
    let base = CalibrationGrid { trials: 50, seed: 3, ..CalibrationGrid::default() };
    let more = CalibrationGrid { trials: 100, ..base.clone() };
    let a = calibrate(&base).unwrap().calibration.c_r;
    let b = calibrate(&more).unwrap().calibration.c_r;
    assert!((a - b).abs() <= 0.1 * b, "c_r {a} vs {b}");
}
