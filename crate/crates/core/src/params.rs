//! Constants the algorithms leave asymptotic, pinned to concrete values.
//!
//! Two regimes are provided. `Faithful` follows the asymptotic formulas with
//! unit constants and is only affordable for tiny `n`. `Practical` caps the
//! bucket count at `bucket_factor·⌈1/α⌉` and divides the bipartition count by
//! `iteration_divisor`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default `c_r` in `r(n) = max(2, c_r·ln n)`.
pub const DEFAULT_C_R: f64 = 4.0;

/// Default BA1 repetition constant: `k ≥ c₁·ε′⁻²·ln(1/δ₁)`.
pub const DEFAULT_C1: f64 = 16.0;

/// Default BA2 repetition constant: `k′ ≥ c₂·ln(1/δ₂)`.
pub const DEFAULT_C2: f64 = 64.0;

/// Default BA2 failure probability.
pub const DEFAULT_DELTA2: f64 = 1.0 / 32.0;

/// Magnitude cap on BA2 coefficients.
pub const BA2_TRUNCATION: f64 = 1e6;

/// Cap on rows tracked exactly at the deepest recursive-sum level (practical).
pub const PRACTICAL_F0_CAP: usize = 4096;

/// Cap on rows tracked exactly at the deepest recursive-sum level (faithful).
pub const FAITHFUL_F0_CAP: u64 = 10_000_000_000;

/// Empirical approximation factor of BA2, `r(n) = max(2, c_r·ln n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_r: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { c_r: DEFAULT_C_R }
    }
}

impl Calibration {
    pub fn new(c_r: f64) -> Result<Self> {
        if !(c_r.is_finite() && c_r >= 0.0) {
            return Err(Error::config(format!("c_r must be finite and non-negative, got {c_r}")));
        }
        Ok(Self { c_r })
    }

    pub fn r(&self, n: usize) -> f64 {
        (self.c_r * (n.max(1) as f64).ln()).max(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PracticalScaling {
    pub bucket_factor: u64,
    pub iteration_divisor: f64,
}

impl Default for PracticalScaling {
    fn default() -> Self {
        Self { bucket_factor: 64, iteration_divisor: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Faithful,
    Practical(PracticalScaling),
}

impl Regime {
    pub fn practical() -> Self {
        Regime::Practical(PracticalScaling::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Faithful => "faithful",
            Regime::Practical(_) => "practical",
        }
    }

    /// Number of random bipartitions `N` in the key-row search.
    pub fn iterations(&self, n: usize) -> usize {
        let base = (8.0 * log2(n)).ceil();
        let scaled = match self {
            Regime::Faithful => base,
            Regime::Practical(s) => (base / s.iteration_divisor.max(1.0)).ceil(),
        };
        (scaled as usize).max(16)
    }

    /// Bucket count `τ` for the heavy-rows search.
    pub fn buckets(&self, n: usize, alpha: f64, rho: f64) -> u64 {
        let faithful = (4.0 * rho * log2(n).max(1.0) / (alpha * alpha)).ceil();
        let faithful = if faithful.is_finite() { faithful.min(MAX_BUCKETS as f64) as u64 } else { MAX_BUCKETS };
        match self {
            Regime::Faithful => faithful.max(1),
            Regime::Practical(s) => {
                let cap = (s.bucket_factor as f64 * (1.0 / alpha).ceil()).min(MAX_BUCKETS as f64) as u64;
                faithful.min(cap).max(1)
            }
        }
    }

    pub fn f0_cap(&self) -> u64 {
        match self {
            Regime::Faithful => FAITHFUL_F0_CAP,
            Regime::Practical(_) => PRACTICAL_F0_CAP as u64,
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithful" => Ok(Regime::Faithful),
            "practical" => Ok(Regime::practical()),
            _ => Err(Error::config(format!("unknown regime '{s}' (expected faithful or practical)"))),
        }
    }
}

/// Upper bound on any bucket count; keeps `τ` below the hash modulus.
pub const MAX_BUCKETS: u64 = 1 << 60;

pub fn log2(n: usize) -> f64 {
    (n.max(1) as f64).log2()
}

/// Recursive-sum depth `φ = max(1, ⌈log₂ n⌉)`.
pub fn levels(n: usize) -> usize {
    (log2(n).ceil() as usize).max(1)
}

/// BA1 repetitions for `(ε′, δ₁)`: `⌈c₁·ε′⁻²·ln(1/δ₁)⌉`.
pub fn ba1_reps(eps: f64, delta: f64, c1: f64) -> usize {
    ((c1 / (eps * eps)) * (1.0 / delta).ln()).ceil().max(1.0) as usize
}

/// BA2 repetitions for `δ₂`: `⌈c₂·ln(1/δ₂)⌉`.
pub fn ba2_reps(delta: f64, c2: f64) -> usize {
    (c2 * (1.0 / delta).ln()).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_of_n() {
        let c = Calibration::default();
        assert_eq!(c.r(1), 2.0);
        assert!((c.r(16) - 4.0 * 16f64.ln()).abs() < 1e-12);
        assert_eq!(Calibration::new(0.1).unwrap().r(16), 2.0);
        assert!(Calibration::new(f64::NAN).is_err());
    }

    #[test]
    fn level_counts() {
        assert_eq!(levels(1), 1);
        assert_eq!(levels(2), 1);
        assert_eq!(levels(256), 8);
        assert_eq!(levels(257), 9);
    }

    #[test]
    fn iteration_counts() {
        let r = Regime::practical();
        assert_eq!(r.iterations(2), 16);
        assert_eq!(r.iterations(16), 32);
        assert_eq!(r.iterations(64), 48);
        assert_eq!(Regime::Faithful.iterations(1024), 80);
    }

    #[test]
    fn bucket_counts() {
        let practical = Regime::practical();
        assert_eq!(practical.buckets(16, 0.1, 50.0), 640);
        let faithful = Regime::Faithful.buckets(8, 0.5, 2.0);
        assert_eq!(faithful, (4.0 * 2.0 * 3.0 / 0.25) as u64);
        assert!(practical.buckets(8, 0.5, 2.0) <= faithful);
        assert_eq!(Regime::Faithful.buckets(1 << 20, 1e-9, 1e9), MAX_BUCKETS);
    }

    #[test]
    fn rep_floors() {
        assert_eq!(ba2_reps(DEFAULT_DELTA2, DEFAULT_C2), 222);
        assert_eq!(ba1_reps(0.1, 0.1, 2.0), 461);
    }
}
