use implicit_sketch::hashing::derive_seed;
use implicit_sketch::recsum::{recursive_sum_offline, simulate_exact, LevelMasks};
use implicit_sketch::sketches::SimulatedBlackbox;
use implicit_sketch::stream::{generate, planted_rows};
use implicit_sketch::{
    BitHash, Calibration, ExactHistogram, GeneratorMode, HadamardFunction, HeavyRowsConfig, HeavyRowsSketch,
    KeyRowConfig, KeyRowSketch, PairCounts, RecursiveSum, RecursiveSumConfig, Regime, StreamEvent, WeightVector,
};

const L1: HadamardFunction = HadamardFunction::AbsValue;

fn heavy_config(n: usize, alpha: f64, seed: u64) -> HeavyRowsConfig {
    HeavyRowsConfig::new(n, alpha, 0.3, &Calibration::default(), &Regime::practical(), seed).unwrap()
}

fn row_weights(n: usize, events: &[StreamEvent]) -> Vec<f64> {
    ExactHistogram::from_events(n, events).unwrap().view().unwrap().row_weights(L1)
}

#[test]
fn key_row_search_is_deterministic() {
    let n = 16;
    let events = generate(&GeneratorMode::PlantedRows { weights: vec![0.7] }, n, 3000, 4).unwrap();
    let cfg = KeyRowConfig::new(n, 0.3, &Calibration::default(), &Regime::practical(), 8).unwrap();
    let run = || {
        let mut s = KeyRowSketch::new(n, BitHash::ones(n), cfg.clone()).unwrap();
        s.ingest_events(&events).unwrap();
        s.outcome()
    };
    assert_eq!(run(), run());
}

#[test]
fn single_row_mass_is_covered() {
    let n = 16;
    let trials = 200;
    let mut ok = 0;
    for t in 0..trials {
        let r = 1 + (t as usize % n);
        let c = 1 + ((t as usize * 7) % n);
        let mut events: Vec<StreamEvent> = (0..500).map(|k| StreamEvent::new(r, 1 + (k * 5 + c) % n)).collect();
        events.extend((0..100).map(|k| StreamEvent::new(1 + (k % n), 1 + (k * 3) % n)));
        let v = row_weights(n, &events);
        let mut s = HeavyRowsSketch::new(n, heavy_config(n, 0.1, t)).unwrap();
        s.ingest_events(&events).unwrap();
        if s.cover().weight(r).is_some_and(|w| (w - v[r - 1]).abs() <= 0.3 * v[r - 1]) {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.95 * trials as f64, "{ok}/{trials}");
}

#[test]
fn planted_heavy_rows_are_listed() {
    let n = 16;
    let mode = GeneratorMode::PlantedRows { weights: vec![0.25, 0.15, 0.10] };
    let trials = 100;
    let mut ok = 0;
    for t in 0..trials {
        let events = generate(&mode, n, 20_000, t).unwrap();
        let mut s = HeavyRowsSketch::new(n, heavy_config(n, 0.1, derive_seed(t, 1))).unwrap();
        s.ingest_events(&events).unwrap();
        let cover = s.cover();
        if planted_rows(n, 3, t).into_iter().all(|r| cover.weight(r).is_some()) {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.9 * trials as f64, "{ok}/{trials}");
}

#[test]
fn heavy_rows_merge_matches_single_pass() {
    let n = 16;
    let events = generate(&GeneratorMode::Mixture { lambda: 0.5 }, n, 4000, 2).unwrap();
    let cfg = heavy_config(n, 0.1, 5);
    let mut whole = HeavyRowsSketch::new(n, cfg.clone()).unwrap();
    whole.ingest_events(&events).unwrap();
    let mut left = HeavyRowsSketch::new(n, cfg.clone()).unwrap();
    let mut right = HeavyRowsSketch::new(n, cfg).unwrap();
    left.ingest_events(&events[..1500]).unwrap();
    right.ingest_events(&events[1500..]).unwrap();
    left.merge(&right).unwrap();
    let (a, b) = (whole.cover(), left.cover());
    assert_eq!(a.indices().collect::<Vec<_>>(), b.indices().collect::<Vec<_>>());
    for (x, y) in a.pairs().iter().zip(b.pairs()) {
        assert!((x.1 - y.1).abs() <= 1e-9 * x.1.max(1.0));
    }
}

#[test]
fn single_row_sum_is_unbiased() {
    let n = 8;
    let u = WeightVector(vec![0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let runs = 200_000u64;
    let sum: f64 = (0..runs)
        .map(|s| {
            let hashes = (0..3).map(|l| BitHash::new(derive_seed(s, l), n).unwrap()).collect();
            // α above 1 keeps every cover empty, so only the sampling term remains.
            simulate_exact(&u, &LevelMasks::from_hashes(hashes).unwrap(), 1.5, u64::MAX)
        })
        .sum();
    let mean = sum / runs as f64;
    assert!((mean - 3.0).abs() <= 0.02 * 3.0, "mean {mean}");
}

#[test]
fn recursive_sum_merge_matches_single_pass() {
    let n = 32;
    let events = generate(&GeneratorMode::Mixture { lambda: 0.3 }, n, 6000, 11).unwrap();
    let cfg = RecursiveSumConfig::new(n, 0.3, Calibration::default(), Regime::practical(), 3).unwrap();
    let mut whole = RecursiveSum::new(cfg.clone()).unwrap();
    whole.ingest_batch(&PairCounts::from_events(n, &events).unwrap());
    let mut left = RecursiveSum::new(cfg.clone()).unwrap();
    let mut right = RecursiveSum::new(cfg).unwrap();
    left.ingest_events(&events[..2000]).unwrap();
    right.ingest_events(&events[2000..]).unwrap();
    left.merge(&right).unwrap();
    let (a, b) = (whole.estimate(), left.estimate());
    assert!((a.result - b.result).abs() <= 1e-9, "{} vs {}", a.result, b.result);
    let exact = ExactHistogram::from_events(n, &events).unwrap().exact_distance(L1).unwrap();
    assert!((a.result - exact).abs() <= 0.3 * exact);
}

#[test]
fn offline_sum_handles_fractional_powers() {
    let n = 16;
    let g = HadamardFunction::abs_power(0.5).unwrap();
    let events = generate(&GeneratorMode::Mixture { lambda: 0.7 }, n, 5000, 6).unwrap();
    let a = ExactHistogram::from_events(n, &events).unwrap().view().unwrap().to_explicit();
    let truth = implicit_sketch::hadamard::matrix_norm(g, &a);
    let cfg = RecursiveSumConfig::new(n, 0.2, Calibration::default(), Regime::practical(), 1).unwrap();
    let bb = SimulatedBlackbox::exact(a.clone(), g);
    let est = recursive_sum_offline(&a, g, &bb, &cfg).unwrap();
    assert!((est.result - truth).abs() <= 0.2 * truth, "{} vs {truth}", est.result);
}
