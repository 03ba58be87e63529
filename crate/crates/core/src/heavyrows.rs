//! Find-Heavy-Rows: an `(α, ε)`-cover of the row weights.
//!
//! A pairwise-independent hash spreads rows over `τ` buckets. With enough
//! buckets every α-heavy row lands in a bucket where it is a key row, and
//! the per-bucket key-row search reports it with a `(1±ε)` weight.
//!
//! In one pass, each event is routed by the bucket of its row. Buckets are
//! materialized only once a row in them sees an event; a bucket without
//! events has all-zero BA2 values and cannot report a row.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::hadamard::{thresholds, WeightVector};
use crate::hashing::{derive_seed, BitHash, BucketHash};
use crate::keyrow::{find_key_row, KeyRowBank, KeyRowCell, KeyRowConfig, KeyRowOutcome};
use crate::params::{levels, Calibration, Regime};
use crate::sketches::Blackboxes;
use crate::stream::{PairCounts, StreamEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyRowsConfig {
    pub alpha: f64,
    pub buckets: u64,
    pub rho: f64,
    /// Failure budget of the whole cover.
    pub delta: f64,
    pub keyrow: KeyRowConfig,
    pub seed: u64,
}

impl HeavyRowsConfig {
    pub fn new(n: usize, alpha: f64, eps: f64, calibration: &Calibration, regime: &Regime, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("α must lie in (0, 1), got {alpha}")));
        }
        let th = thresholds(n, eps, calibration)?;
        let cfg = Self {
            alpha,
            buckets: regime.buckets(n, alpha, th.rho),
            rho: th.rho,
            delta: 1.0 / levels(n).max(2) as f64,
            keyrow: KeyRowConfig::new(n, eps, calibration, regime, derive_seed(seed, 2))?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("α must lie in (0, 1), got {}", self.alpha)));
        }
        if self.buckets == 0 {
            return Err(Error::config("heavy-rows search needs at least one bucket"));
        }
        self.keyrow.validate()
    }

    pub fn bucket_hash(&self, n: usize) -> Result<BucketHash> {
        BucketHash::new(derive_seed(self.seed, 1), n, self.buckets)
    }
}

/// Distinct `(row, weight)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pairs: Vec<(usize, f64)>,
}

impl Cover {
    pub fn new(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::domain("cover lists a row twice"));
        }
        if pairs.iter().any(|&(i, w)| i == 0 || !(w >= 0.0)) {
            return Err(Error::domain("cover rows are 1-based with non-negative weights"));
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn weight(&self, i: usize) -> Option<f64> {
        self.pairs.binary_search_by_key(&i, |p| p.0).ok().map(|k| self.pairs[k].1)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }
}

/// Both cover clauses against the exact weights: every listed weight is
/// within `(1±ε)` of its row, and every α-heavy row is listed.
pub fn cover_check(q: &Cover, v: &WeightVector, alpha: f64, eps: f64) -> bool {
    let accurate =
        q.pairs.iter().all(|&(i, w)| i <= v.len() && (1.0 - eps) * v.get(i) <= w && w <= (1.0 + eps) * v.get(i));
    accurate && v.alpha_heavy(alpha).into_iter().all(|i| q.weight(i).is_some())
}

/// The search against arbitrary blackboxes, over the rows admitted by
/// `outer`.
pub fn find_heavy_rows<B: Blackboxes + ?Sized>(bb: &B, outer: &BitHash, cfg: &HeavyRowsConfig) -> Result<Cover> {
    cfg.validate()?;
    let hash = cfg.bucket_hash(bb.n())?;
    let mut buckets: Vec<u64> = outer.support().into_iter().map(|i| hash.bucket(i)).collect();
    buckets.sort_unstable();
    buckets.dedup();
    let mut pairs = Vec::new();
    for k in buckets {
        let mask = outer.had(&hash.indicator(k))?;
        if let KeyRowOutcome::Found { index, weight } = find_key_row(bb, &mask, &cfg.keyrow)? {
            pairs.push((index, weight));
        }
    }
    Cover::new(pairs)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverDiagnostics {
    /// Buckets that received at least one event.
    pub active_buckets: usize,
    pub cover_size: usize,
    /// Mean fraction of undecided bipartitions over active buckets.
    pub abstention_rate: f64,
}

/// One-pass heavy-rows search over the rows admitted by an outer mask.
#[derive(Debug, Clone)]
pub struct HeavyRowsSketch {
    n: usize,
    cfg: HeavyRowsConfig,
    outer: BitHash,
    hash: BucketHash,
    bank: KeyRowBank,
    cells: Vec<KeyRowCell>,
    slots: HashMap<u64, usize>,
}

impl HeavyRowsSketch {
    pub fn new(n: usize, cfg: HeavyRowsConfig) -> Result<Self> {
        Self::with_outer(BitHash::ones(n.max(1)), n, cfg)
    }

    pub fn with_outer(outer: BitHash, n: usize, cfg: HeavyRowsConfig) -> Result<Self> {
        cfg.validate()?;
        if outer.n() != n {
            return Err(Error::domain(format!("mask over [{}] for a stream over [{n}]", outer.n())));
        }
        let hash = cfg.bucket_hash(n)?;
        let bank = KeyRowBank::new(n, cfg.keyrow.clone())?;
        Ok(Self { n, cfg, outer, hash, bank, cells: Vec::new(), slots: HashMap::new() })
    }

    pub fn config(&self) -> &HeavyRowsConfig {
        &self.cfg
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.n, &[e])?);
        Ok(())
    }

    pub fn ingest_events(&mut self, events: &[StreamEvent]) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.n, events)?);
        Ok(())
    }

    pub fn ingest_batch(&mut self, batch: &PairCounts) {
        let mut routed = Vec::new();
        for (k, g) in batch.rows.iter().enumerate() {
            if !self.outer.admits(g.row) {
                continue;
            }
            let bucket = self.hash.bucket(g.row);
            let slot = match self.slots.get(&bucket) {
                Some(&s) => s,
                None => {
                    self.cells.push(self.bank.new_cell());
                    self.slots.insert(bucket, self.cells.len() - 1);
                    self.cells.len() - 1
                }
            };
            routed.push((k, slot));
        }
        self.bank.ingest(batch, &routed, &mut self.cells);
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.cfg != other.cfg || self.outer != other.outer {
            return Err(Error::config("heavy-rows sketches differ in configuration or mask"));
        }
        self.bank.merge(&other.bank)?;
        for (&bucket, &s) in &other.slots {
            match self.slots.get(&bucket) {
                Some(&mine) => self.cells[mine].merge(&other.cells[s]),
                None => {
                    self.cells.push(other.cells[s].clone());
                    self.slots.insert(bucket, self.cells.len() - 1);
                }
            }
        }
        Ok(())
    }

    pub fn cover(&self) -> Cover {
        self.cover_with_diagnostics().0
    }

    pub fn cover_with_diagnostics(&self) -> (Cover, CoverDiagnostics) {
        let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); self.cells.len()];
        for i in 1..=self.n {
            if self.outer.admits(i) {
                if let Some(&s) = self.slots.get(&self.hash.bucket(i)) {
                    candidates[s].push(i);
                }
            }
        }
        let mut pairs = Vec::new();
        let mut abstention = 0.0;
        for (cell, rows) in self.cells.iter().zip(&candidates) {
            abstention += self.bank.abstention_rate(cell);
            if let KeyRowOutcome::Found { index, weight } = self.bank.decide(cell, rows) {
                pairs.push((index, weight));
            }
        }
        let cover = Cover::new(pairs).expect("buckets partition the rows");
        let diag = CoverDiagnostics {
            active_buckets: self.cells.len(),
            cover_size: cover.len(),
            abstention_rate: if self.cells.is_empty() { 0.0 } else { abstention / self.cells.len() as f64 },
        };
        (cover, diag)
    }

    pub fn active_buckets(&self) -> usize {
        self.cells.len()
    }

    pub fn space_bytes(&self) -> usize {
        self.bank.bank_bytes() + self.cells.len() * (self.bank.cell_bytes() + 16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_clauses() {
        let v = WeightVector(vec![5.0, 3.0, 0.1, 0.1]);
        let exact = Cover::new(vec![(1, 5.0), (2, 3.0)]).unwrap();
        assert!(cover_check(&exact, &v, 0.2, 0.1));
        assert!(!cover_check(&Cover::new(vec![(1, 5.0)]).unwrap(), &v, 0.2, 0.1));
        assert!(!cover_check(&Cover::new(vec![(1, 5.0), (2, 3.0 * 0.8)]).unwrap(), &v, 0.2, 0.1));
        assert!(cover_check(&Cover::empty(), &WeightVector(vec![1.0; 4]), 0.5, 0.1));
    }

    #[test]
    fn cover_rejects_duplicates() {
        assert!(Cover::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(Cover::new(vec![(0, 1.0)]).is_err());
        assert!(Cover::new(vec![(2, -1.0)]).is_err());
    }

    #[test]
    fn config_sizes_buckets() {
        let cfg = HeavyRowsConfig::new(16, 0.1, 0.3, &Calibration::default(), &Regime::practical(), 1).unwrap();
        assert_eq!(cfg.buckets, 640);
        assert!(HeavyRowsConfig::new(16, 1.0, 0.3, &Calibration::default(), &Regime::practical(), 1).is_err());
    }
}
