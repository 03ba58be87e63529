use crate::hashing::{derive_seed, BitHash};
use crate::params::{ba2_reps, BA2_TRUNCATION, DEFAULT_C2};
use crate::stream::{PairCounts, StreamEvent};
use crate::{Error, Result};

use super::cauchy::{median_abs, CoefficientFamily};
use super::stable::check_unit;

/// Row and column coefficient families of one BA2 instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ba2Family {
    pub x: CoefficientFamily,
    pub y: CoefficientFamily,
}

impl Ba2Family {
    pub fn new(seed: u64, reps: usize, truncation: f64) -> Self {
        Self {
            x: CoefficientFamily::truncated(derive_seed(seed, 1), reps, truncation),
            y: CoefficientFamily::truncated(derive_seed(seed, 2), reps, truncation),
        }
    }

    pub fn reps(&self) -> usize {
        self.x.reps()
    }
}

/// BA2: a coarse estimate of `‖I_H·A‖₁`, the entrywise L₁ norm of the
/// row-masked implicit matrix, by the double-Cauchy bilinear sketch.
///
/// Per repetition it keeps `B1 = Σ H(i)·x_i·y_j`, `B2 = Σ H(i)·x_i` and
/// `B3 = Σ y_j`; then `B1/m − B2·B3/m² = Σ_{H(i)=1} Σ_j x_i·y_j·a_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct IMMatrixSketch {
    pub(crate) n: usize,
    pub(crate) mask: BitHash,
    pub(crate) seed: u64,
    pub(crate) family: Ba2Family,
    pub(crate) b1: Vec<f64>,
    pub(crate) b2: Vec<f64>,
    pub(crate) b3: Vec<f64>,
    pub(crate) m: u64,
}

impl IMMatrixSketch {
    pub fn new(n: usize, mask: BitHash, reps: usize, seed: u64) -> Result<Self> {
        Self::with_truncation(n, mask, reps, BA2_TRUNCATION, seed)
    }

    pub fn with_truncation(n: usize, mask: BitHash, reps: usize, truncation: f64, seed: u64) -> Result<Self> {
        if n == 0 || mask.n() != n {
            return Err(Error::domain(format!("mask over [{}] for a sketch over [{n}]", mask.n())));
        }
        if reps == 0 {
            return Err(Error::config("BA2 needs at least one repetition"));
        }
        if !(truncation > 0.0) {
            return Err(Error::config(format!("truncation bound must be positive, got {truncation}")));
        }
        Ok(Self {
            n,
            mask,
            seed,
            family: Ba2Family::new(seed, reps, truncation),
            b1: vec![0.0; reps],
            b2: vec![0.0; reps],
            b3: vec![0.0; reps],
            m: 0,
        })
    }

    /// Like [`new`](Self::new), rejecting `reps` below `⌈c₂·ln(1/δ₂)⌉`.
    pub fn with_guarantee(n: usize, mask: BitHash, reps: usize, delta: f64, c2: f64, seed: u64) -> Result<Self> {
        check_ba2_floor(reps, delta, c2)?;
        Self::new(n, mask, reps, seed)
    }

    /// The default-constant repetition count for `δ₂`.
    pub fn for_failure(n: usize, mask: BitHash, delta: f64, seed: u64) -> Result<Self> {
        check_unit("δ₂", delta)?;
        Self::new(n, mask, ba2_reps(delta, DEFAULT_C2), seed)
    }

    pub fn reps(&self) -> usize {
        self.family.reps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn mask(&self) -> &BitHash {
        &self.mask
    }

    pub fn truncation(&self) -> f64 {
        self.family.x.truncation().unwrap_or(f64::INFINITY)
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_weighted(e, 1)
    }

    pub fn ingest_weighted(&mut self, e: StreamEvent, count: u64) -> Result<()> {
        e.check(self.n)?;
        let w = count as f64;
        let admitted = self.mask.admits(e.i);
        for t in 0..self.reps() {
            let y = self.family.y.value(t, e.j);
            self.b3[t] += w * y;
            if admitted {
                let x = self.family.x.value(t, e.i);
                self.b1[t] += w * x * y;
                self.b2[t] += w * x;
            }
        }
        self.m += count;
        Ok(())
    }

    pub fn ingest_counts(&mut self, batch: &PairCounts) -> Result<()> {
        if let Some(&(j, _)) = batch.cols.last() {
            if j > self.n {
                return Err(Error::OutOfRange { i: 1, j, n: self.n });
            }
        }
        if let Some(g) = batch.rows.last() {
            if g.row > self.n {
                return Err(Error::OutOfRange { i: g.row, j: 1, n: self.n });
            }
        }
        let rows: Vec<_> = batch.rows.iter().filter(|g| self.mask.admits(g.row)).collect();
        let mut y = vec![0.0; batch.cols.len()];
        for t in 0..self.reps() {
            let mut b3 = 0.0;
            for (yc, &(j, total)) in y.iter_mut().zip(&batch.cols) {
                *yc = self.family.y.value(t, j);
                b3 += total as f64 * *yc;
            }
            self.b3[t] += b3;
            for g in &rows {
                let s: f64 = batch.entries[g.start..g.end].iter().map(|&(col, c)| c as f64 * y[col as usize]).sum();
                let x = self.family.x.value(t, g.row);
                self.b1[t] += x * s;
                self.b2[t] += x * g.count as f64;
            }
        }
        self.m += batch.total;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n || self.family != other.family || self.mask != other.mask {
            return Err(Error::config("BA2 sketches differ in domain, seed, repetitions or mask"));
        }
        for (acc, src) in [(&mut self.b1, &other.b1), (&mut self.b2, &other.b2), (&mut self.b3, &other.b3)] {
            for (a, b) in acc.iter_mut().zip(src) {
                *a += b;
            }
        }
        self.m += other.m;
        Ok(())
    }

    /// Per-repetition values `B1/m − B2·B3/m²`.
    pub fn rep_values(&self) -> Result<Vec<f64>> {
        if self.m == 0 {
            return Err(Error::EmptyStream);
        }
        let m = self.m as f64;
        Ok((0..self.reps()).map(|t| ba2_value(self.b1[t], self.b2[t], self.b3[t], m)).collect())
    }

    pub fn estimate(&self) -> Result<f64> {
        Ok(median_abs(self.rep_values()?))
    }

    pub fn space_bytes(&self) -> usize {
        8 * (3 * self.reps() + 1)
    }
}

#[inline]
pub(crate) fn ba2_value(b1: f64, b2: f64, b3: f64, m: f64) -> f64 {
    b1 / m - b2 * b3 / (m * m)
}

pub fn check_ba2_floor(reps: usize, delta: f64, c2: f64) -> Result<()> {
    check_unit("δ₂", delta)?;
    let floor = ba2_reps(delta, c2);
    if reps < floor {
        return Err(Error::config(format!(
            "BA2 with {reps} repetitions is below the floor {floor} for δ₂ = {delta}, c₂ = {c2}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_accumulates_only_columns() {
        let mut s = IMMatrixSketch::new(3, BitHash::zeros(3), 8, 1).unwrap();
        s.ingest(StreamEvent::new(1, 2)).unwrap();
        s.ingest(StreamEvent::new(3, 1)).unwrap();
        assert!(s.b1.iter().chain(&s.b2).all(|&b| b == 0.0));
        assert!(s.b3.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn single_event_unrolls() {
        let mut s = IMMatrixSketch::new(3, BitHash::ones(3), 4, 3).unwrap();
        s.ingest(StreamEvent::new(2, 3)).unwrap();
        for t in 0..4 {
            let (x, y) = (s.family.x.value(t, 2), s.family.y.value(t, 3));
            assert_eq!((s.b1[t], s.b2[t], s.b3[t]), (x * y, x, y));
        }
    }

    #[test]
    fn n_one_stream_is_zero() {
        let mut s = IMMatrixSketch::for_failure(1, BitHash::ones(1), 1.0 / 32.0, 5).unwrap();
        for _ in 0..10 {
            s.ingest(StreamEvent::new(1, 1)).unwrap();
        }
        assert!(s.estimate().unwrap().abs() < 1e-9);
    }

    #[test]
    fn floor_enforced() {
        assert!(IMMatrixSketch::with_guarantee(4, BitHash::ones(4), 221, 1.0 / 32.0, 64.0, 1).is_err());
        assert!(IMMatrixSketch::with_guarantee(4, BitHash::ones(4), 222, 1.0 / 32.0, 64.0, 1).is_ok());
    }
}
