//! Seeded Cauchy coefficients, recomputed on demand and never stored.
//!
//! Coefficient `(t, j)` is `tan(π(u − ½))` for a uniform `u` hashed from
//! `(seed, t, j)`. Stratified families spread each index's `k` uniforms over
//! the `k` strata `[s/k, (s+1)/k)` through an index-specific affine
//! permutation `s = (a_j·t + b_j) mod k`: within one repetition the
//! coefficients stay independent standard Cauchy variates, while across
//! repetitions they are antithetic, which tightens the median.

use std::f64::consts::PI;

use crate::hashing::{derive_seed, mix64, unit_open};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientFamily {
    seed: u64,
    reps: usize,
    truncation: Option<f64>,
    stratified: bool,
}

impl CoefficientFamily {
    /// Untruncated, stratified across repetitions.
    pub fn stratified(seed: u64, reps: usize) -> Self {
        Self { seed, reps, truncation: None, stratified: true }
    }

    /// Independent across repetitions, magnitudes clamped to `truncation`.
    pub fn truncated(seed: u64, reps: usize, truncation: f64) -> Self {
        Self { seed, reps, truncation: Some(truncation), stratified: false }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    #[inline]
    fn index_hash(&self, idx: usize) -> u64 {
        derive_seed(self.seed, idx as u64)
    }

    /// Affine permutation `(a, b)` of `0..k` for one index.
    fn permutation(&self, h: u64) -> (u64, u64) {
        let k = self.reps as u64;
        if k <= 1 {
            return (0, 0);
        }
        let b = mix64(h ^ 0x5bd1_e995) % k;
        let mut c = 0u64;
        loop {
            let a = 1 + mix64(h ^ c.wrapping_mul(0x2545_f491_4f6c_dd1d)) % (k - 1);
            if gcd(a, k) == 1 {
                return (a, b);
            }
            c += 1;
        }
    }

    #[inline]
    fn finish(&self, u: f64) -> f64 {
        let c = (PI * (u - 0.5)).tan();
        match self.truncation {
            Some(t) => c.clamp(-t, t),
            None => c,
        }
    }

    #[inline]
    fn jitter(h: u64, rep: usize) -> f64 {
        unit_open(mix64(h ^ mix64(rep as u64 + 1)))
    }

    /// Coefficient of index `idx` in repetition `rep`.
    pub fn value(&self, rep: usize, idx: usize) -> f64 {
        debug_assert!(rep < self.reps);
        let h = self.index_hash(idx);
        let u = if self.stratified {
            let (a, b) = self.permutation(h);
            let k = self.reps as u64;
            let stratum = ((a as u128 * rep as u128 + b as u128) % k as u128) as f64;
            (stratum + Self::jitter(h, rep)) * (1.0 / k as f64)
        } else {
            Self::jitter(h, rep)
        };
        self.finish(u)
    }

    /// All `k` coefficients of index `idx`.
    pub fn fill(&self, idx: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.reps);
        let h = self.index_hash(idx);
        if self.stratified {
            let (a, b) = self.permutation(h);
            let k = self.reps as u64;
            let inv_k = 1.0 / k as f64;
            let mut stratum = b;
            for (rep, c) in out.iter_mut().enumerate() {
                *c = self.finish((stratum as f64 + Self::jitter(h, rep)) * inv_k);
                stratum += a;
                if stratum >= k {
                    stratum %= k;
                }
            }
        } else {
            for (rep, c) in out.iter_mut().enumerate() {
                *c = self.finish(Self::jitter(h, rep));
            }
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Median of `|values|`, averaging the middle pair for even lengths.
pub fn median_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().map(f64::abs).collect();
    if v.is_empty() {
        return 0.0;
    }
    let len = v.len();
    let mid = len / 2;
    let (lo, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if len.is_multiple_of(2) {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    } else {
        upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_matches_value() {
        for fam in [CoefficientFamily::stratified(11, 37), CoefficientFamily::truncated(11, 37, 1e6)] {
            let mut buf = vec![0.0; 37];
            for idx in [1usize, 2, 99] {
                fam.fill(idx, &mut buf);
                for (rep, &c) in buf.iter().enumerate() {
                    assert_eq!(c, fam.value(rep, idx));
                }
            }
        }
    }

    #[test]
    fn stratification_covers_every_stratum() {
        let k = 64;
        let fam = CoefficientFamily::stratified(5, k);
        for idx in 1..20 {
            let mut strata: Vec<usize> = (0..k)
                .map(|rep| {
                    let u = fam.value(rep, idx).atan() / PI + 0.5;
                    (u * k as f64).floor() as usize
                })
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn truncation_clamps() {
        let fam = CoefficientFamily::truncated(3, 5000, 2.0);
        assert!((0..5000).all(|t| fam.value(t, 7).abs() <= 2.0));
    }

    #[test]
    fn median_abs_small_cases() {
        assert_eq!(median_abs([3.0, -1.0, 2.0]), 2.0);
        assert_eq!(median_abs([-4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median_abs([]), 0.0);
    }

    #[test]
    fn median_abs_of_cauchy_is_one() {
        let fam = CoefficientFamily::truncated(17, 20_001, f64::INFINITY);
        let med = median_abs((0..20_001).map(|t| fam.value(t, 1)));
        assert!((med - 1.0).abs() < 0.05, "median {med}");
    }
}
