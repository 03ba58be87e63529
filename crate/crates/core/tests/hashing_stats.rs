use implicit_sketch::{BitHash, BucketHash};

const SEEDS: u64 = 100_000;

#[test]
fn bit_hash_pairs_are_independent() {
    let mut both = 0u64;
    let mut first = 0u64;
    for seed in 0..SEEDS {
        let h = BitHash::new(seed, 8).unwrap();
        first += h.eval(2) as u64;
        both += (h.eval(2) & h.eval(5)) as u64;
    }
    let p = both as f64 / SEEDS as f64;
    assert!((p - 0.25).abs() <= 0.01, "Pr[H(2)=1 ∧ H(5)=1] = {p}");
    let q = first as f64 / SEEDS as f64;
    assert!((q - 0.5).abs() <= 0.01, "Pr[H(2)=1] = {q}");
}

#[test]
fn bucket_hash_pairs_are_independent() {
    let mut hits = 0u64;
    let mut counts = [0u64; 8];
    for seed in 0..SEEDS {
        let h = BucketHash::new(seed, 64, 8).unwrap();
        counts[h.bucket(1) as usize - 1] += 1;
        if h.bucket(1) == 3 && h.bucket(2) == 5 {
            hits += 1;
        }
    }
    let p = hits as f64 / SEEDS as f64;
    assert!((p - 1.0 / 64.0).abs() <= 0.003, "Pr[H(1)=3 ∧ H(2)=5] = {p}");
    for c in counts {
        let f = c as f64 / SEEDS as f64;
        assert!((f - 0.125).abs() <= 0.01, "bucket frequency {f}");
    }
}

#[test]
fn buckets_stay_in_range() {
    for seed in 0..200 {
        let h = BucketHash::new(seed, 1000, 37).unwrap();
        assert!((1..=1000).all(|i| (1..=37).contains(&h.bucket(i))));
    }
}
