use crate::hashing::BitHash;
use crate::params::{ba1_reps, DEFAULT_C1};
use crate::stream::{PairCounts, StreamEvent};
use crate::{Error, Result};

use super::cauchy::{median_abs, CoefficientFamily};

/// BA1: a `(1±ε′)` estimate of `‖J·I_H·A‖₁`, the L₁ norm of the column sums
/// of the row-masked implicit matrix.
///
/// Per repetition `t` it keeps `A1 = Σ H(i)·c_j`, `A2 = Σ c_j` and the shared
/// counter `F_S = Σ H(i)`; then `A1/m − F_S·A2/m² = Σ_j c_j·v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StableL1VectorSketch {
    pub(crate) n: usize,
    pub(crate) mask: BitHash,
    pub(crate) family: CoefficientFamily,
    pub(crate) a1: Vec<f64>,
    pub(crate) a2: Vec<f64>,
    pub(crate) f_s: u64,
    pub(crate) m: u64,
}

impl StableL1VectorSketch {
    pub fn new(n: usize, mask: BitHash, reps: usize, seed: u64) -> Result<Self> {
        if n == 0 || mask.n() != n {
            return Err(Error::domain(format!("mask over [{}] for a sketch over [{n}]", mask.n())));
        }
        if reps == 0 {
            return Err(Error::config("BA1 needs at least one repetition"));
        }
        Ok(Self {
            n,
            mask,
            family: CoefficientFamily::stratified(seed, reps),
            a1: vec![0.0; reps],
            a2: vec![0.0; reps],
            f_s: 0,
            m: 0,
        })
    }

    /// Like [`new`](Self::new), rejecting `reps` below `⌈c₁·ε′⁻²·ln(1/δ₁)⌉`.
    pub fn with_guarantee(
        n: usize,
        mask: BitHash,
        reps: usize,
        eps: f64,
        delta: f64,
        c1: f64,
        seed: u64,
    ) -> Result<Self> {
        check_ba1_floor(reps, eps, delta, c1)?;
        Self::new(n, mask, reps, seed)
    }

    /// The default-constant repetition count for `(ε′, δ₁)`.
    pub fn for_accuracy(n: usize, mask: BitHash, eps: f64, delta: f64, seed: u64) -> Result<Self> {
        check_unit("ε′", eps)?;
        check_unit("δ₁", delta)?;
        Self::new(n, mask, ba1_reps(eps, delta, DEFAULT_C1), seed)
    }

    pub fn reps(&self) -> usize {
        self.family.reps()
    }

    pub fn seed(&self) -> u64 {
        self.family.seed()
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn mask(&self) -> &BitHash {
        &self.mask
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_weighted(e, 1)
    }

    pub fn ingest_weighted(&mut self, e: StreamEvent, count: u64) -> Result<()> {
        e.check(self.n)?;
        let w = count as f64;
        let admitted = self.mask.admits(e.i);
        for (t, (a1, a2)) in self.a1.iter_mut().zip(self.a2.iter_mut()).enumerate() {
            let c = self.family.value(t, e.j);
            *a2 += w * c;
            if admitted {
                *a1 += w * c;
            }
        }
        if admitted {
            self.f_s += count;
        }
        self.m += count;
        Ok(())
    }

    /// Ingests an aggregated batch; equal to ingesting its events one by one
    /// up to floating-point summation order.
    pub fn ingest_counts(&mut self, batch: &PairCounts) -> Result<()> {
        if let Some(&(j, _)) = batch.cols.last() {
            if j > self.n {
                return Err(Error::OutOfRange { i: 1, j, n: self.n });
            }
        }
        let mut masked = vec![0u64; batch.cols.len()];
        for g in &batch.rows {
            if g.row > self.n {
                return Err(Error::OutOfRange { i: g.row, j: 1, n: self.n });
            }
            if self.mask.admits(g.row) {
                self.f_s += g.count;
                for &(col, c) in &batch.entries[g.start..g.end] {
                    masked[col as usize] += c;
                }
            }
        }
        let mut coeffs = vec![0.0; self.reps()];
        for (&(j, total), &hit) in batch.cols.iter().zip(&masked) {
            self.family.fill(j, &mut coeffs);
            let (w, h) = (total as f64, hit as f64);
            for ((a1, a2), &c) in self.a1.iter_mut().zip(self.a2.iter_mut()).zip(&coeffs) {
                *a2 += w * c;
                *a1 += h * c;
            }
        }
        self.m += batch.total;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n || self.family != other.family || self.mask != other.mask {
            return Err(Error::config("BA1 sketches differ in domain, seed, repetitions or mask"));
        }
        for (a, b) in self.a1.iter_mut().zip(&other.a1) {
            *a += b;
        }
        for (a, b) in self.a2.iter_mut().zip(&other.a2) {
            *a += b;
        }
        self.f_s += other.f_s;
        self.m += other.m;
        Ok(())
    }

    /// Per-repetition values `A1/m − F_S·A2/m²`.
    pub fn rep_values(&self) -> Result<Vec<f64>> {
        if self.m == 0 {
            return Err(Error::EmptyStream);
        }
        let m = self.m as f64;
        let fs = self.f_s as f64;
        Ok(self.a1.iter().zip(&self.a2).map(|(a1, a2)| ba1_value(*a1, *a2, fs, m)).collect())
    }

    /// Median over repetitions of the absolute per-repetition values.
    pub fn estimate(&self) -> Result<f64> {
        Ok(median_abs(self.rep_values()?))
    }

    pub fn space_bytes(&self) -> usize {
        8 * (self.a1.len() + self.a2.len() + 2)
    }
}

#[inline]
pub(crate) fn ba1_value(a1: f64, a2: f64, f_s: f64, m: f64) -> f64 {
    a1 / m - f_s * a2 / (m * m)
}

pub(crate) fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::config(format!("{name} must lie in (0, 1), got {x}")));
    }
    Ok(())
}

pub fn check_ba1_floor(reps: usize, eps: f64, delta: f64, c1: f64) -> Result<()> {
    check_unit("ε′", eps)?;
    check_unit("δ₁", delta)?;
    let floor = ba1_reps(eps, delta, c1);
    if reps < floor {
        return Err(Error::config(format!(
            "BA1 with {reps} repetitions is below the floor {floor} for ε′ = {eps}, δ₁ = {delta}, c₁ = {c1}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(pairs: &[(usize, usize)]) -> Vec<StreamEvent> {
        pairs.iter().map(|&(i, j)| StreamEvent::new(i, j)).collect()
    }

    #[test]
    fn empty_mask_samples_nothing() {
        let mut s = StableL1VectorSketch::new(4, BitHash::zeros(4), 8, 1).unwrap();
        for e in events(&[(1, 2), (3, 3), (4, 1)]) {
            s.ingest(e).unwrap();
        }
        assert!(s.a1.iter().all(|&a| a == 0.0));
        assert_eq!(s.f_s, 0);
        assert_eq!(s.estimate().unwrap(), 0.0);
    }

    #[test]
    fn single_event_unrolls() {
        let mut s = StableL1VectorSketch::new(2, BitHash::ones(2), 4, 9).unwrap();
        s.ingest(StreamEvent::new(1, 1)).unwrap();
        for t in 0..4 {
            let c = s.family.value(t, 1);
            assert_eq!((s.a1[t], s.a2[t]), (c, c));
        }
        assert_eq!(s.f_s, 1);
    }

    #[test]
    fn batch_matches_sequential() {
        let evs = events(&[(1, 2), (3, 3), (1, 2), (4, 1), (2, 2)]);
        let mask = BitHash::new(4, 4).unwrap();
        let mut a = StableL1VectorSketch::new(4, mask.clone(), 16, 2).unwrap();
        let mut b = a.clone();
        for &e in &evs {
            a.ingest(e).unwrap();
        }
        b.ingest_counts(&PairCounts::from_events(4, &evs).unwrap()).unwrap();
        for (x, y) in a.rep_values().unwrap().iter().zip(b.rep_values().unwrap()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn floors_and_errors() {
        assert!(StableL1VectorSketch::with_guarantee(4, BitHash::ones(4), 100, 0.1, 0.1, 16.0, 1).is_err());
        assert!(StableL1VectorSketch::with_guarantee(4, BitHash::ones(4), 461, 0.1, 0.1, 2.0, 1).is_ok());
        assert!(StableL1VectorSketch::new(4, BitHash::ones(3), 4, 1).is_err());
        let s = StableL1VectorSketch::new(4, BitHash::ones(4), 4, 1).unwrap();
        assert_eq!(s.estimate(), Err(Error::EmptyStream));
        let mut s = s;
        assert!(s.ingest(StreamEvent::new(5, 1)).is_err());
    }
}
