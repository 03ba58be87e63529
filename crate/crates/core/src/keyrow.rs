//! Find-Key-Row: locate a row whose weight dominates all others combined.
//!
//! `N` random bipartitions `H_ℓ` split the masked rows in two. BA2 sizes
//! both halves; when one half is `τ` times the other, the key row (if any)
//! must sit in it, and the bipartition casts bit `b_ℓ` for that side.
//! A row matching at least `3N/4` of the bits is reported and weighed with
//! BA1 on the whole mask, since a key row carries almost all of the masked
//! aggregate.
//!
//! The search runs either offline against any [`Blackboxes`] or in one pass
//! over a stream: all `2N` BA2 instances and the BA1 instance share the
//! events, with the two halves of each bipartition sharing coefficients.

use serde::{Deserialize, Serialize};

use crate::hadamard::thresholds;
use crate::hashing::{derive_seed, BitHash};
use crate::params::{
    ba1_reps, ba2_reps, levels, Calibration, Regime, BA2_TRUNCATION, DEFAULT_C1, DEFAULT_C2, DEFAULT_DELTA2,
};
use crate::sketches::{
    ba1_value, ba2_value, check_ba1_floor, check_ba2_floor, check_unit, median_abs, Ba2Family, Blackboxes,
    CoefficientFamily,
};
use crate::stream::{PairCounts, StreamEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRowConfig {
    /// Number of bipartitions `N`.
    pub iterations: usize,
    /// Separation factor `τ(n, ε)`.
    pub tau_thresh: f64,
    pub eps: f64,
    /// BA1 failure probability; BA1 runs at `ε′ = ε/2`.
    pub delta1: f64,
    pub delta2: f64,
    pub vote_fraction: f64,
    pub abstain_fraction: f64,
    pub c1: f64,
    pub c2: f64,
    pub ba1_reps: usize,
    pub ba2_reps: usize,
    pub truncation: f64,
    pub seed: u64,
}

impl KeyRowConfig {
    /// Defaults for domain size `n`: `δ₁ = 1/max(2, ⌈log₂ n⌉)²`, `δ₂ = 1/32`
    /// and repetition counts at their floors.
    pub fn new(n: usize, eps: f64, calibration: &Calibration, regime: &Regime, seed: u64) -> Result<Self> {
        check_unit("ε", eps).map_err(|_| Error::domain(format!("ε must lie in (0, 1), got {eps}")))?;
        let th = thresholds(n, eps, calibration)?;
        let phi = levels(n).max(2) as f64;
        let delta1 = 1.0 / (phi * phi);
        let cfg = Self {
            iterations: regime.iterations(n),
            tau_thresh: th.tau,
            eps,
            delta1,
            delta2: DEFAULT_DELTA2,
            vote_fraction: 0.75,
            abstain_fraction: 2.0 / 3.0,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            ba1_reps: ba1_reps(eps / 2.0, delta1, DEFAULT_C1),
            ba2_reps: ba2_reps(DEFAULT_DELTA2, DEFAULT_C2),
            truncation: BA2_TRUNCATION,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets BA1 to `(ε′, δ₁) = (ε/2, delta1)` with constant `c1`, at the floor.
    pub fn with_ba1(mut self, delta1: f64, c1: f64) -> Self {
        self.delta1 = delta1;
        self.c1 = c1;
        self.ba1_reps = ba1_reps(self.eps / 2.0, delta1, c1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::config(format!("ε must lie in (0, 1), got {}", self.eps)));
        }
        if self.iterations == 0 {
            return Err(Error::config("key-row search needs N >= 1"));
        }
        if !(self.vote_fraction > 0.5 && self.vote_fraction <= 1.0) {
            return Err(Error::config(format!("vote fraction must lie in (1/2, 1], got {}", self.vote_fraction)));
        }
        if !(self.abstain_fraction > 0.0 && self.abstain_fraction <= 1.0) {
            return Err(Error::config(format!("abstain fraction must lie in (0, 1], got {}", self.abstain_fraction)));
        }
        if !(self.tau_thresh >= 1.0) {
            return Err(Error::config(format!("τ must be >= 1, got {}", self.tau_thresh)));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::config("truncation bound must be positive"));
        }
        check_ba1_floor(self.ba1_reps, self.eps / 2.0, self.delta1, self.c1)?;
        check_ba2_floor(self.ba2_reps, self.delta2, self.c2)
    }

    /// The bipartition `H_ℓ`, `ℓ ∈ 0..N`.
    pub fn split(&self, n: usize, l: usize) -> Result<BitHash> {
        BitHash::new(derive_seed(self.seed, 0x100 + l as u64), n)
    }

    fn ba2_family(&self, l: usize) -> Ba2Family {
        Ba2Family::new(derive_seed(self.seed, 0x200 + l as u64), self.ba2_reps, self.truncation)
    }

    fn ba1_family(&self) -> CoefficientFamily {
        CoefficientFamily::stratified(derive_seed(self.seed, 0x300), self.ba1_reps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeyRowOutcome {
    NoKeyRow,
    Found { index: usize, weight: f64 },
}

impl KeyRowOutcome {
    /// `(−1, 0)` or `(i, ũ_i)`.
    pub fn as_pair(&self) -> (i64, f64) {
        match *self {
            KeyRowOutcome::NoKeyRow => (-1, 0.0),
            KeyRowOutcome::Found { index, weight } => (index as i64, weight),
        }
    }

    pub fn index(&self) -> Option<usize> {
        match *self {
            KeyRowOutcome::Found { index, .. } => Some(index),
            KeyRowOutcome::NoKeyRow => None,
        }
    }
}

/// `b_ℓ`: 0 if the `H_ℓ = 0` half dominates, 1 if the `H_ℓ = 1` half does,
/// 2 if neither is `τ` times the other. An all-zero pair is undecided.
pub fn split_decision(y0: f64, y1: f64, tau: f64) -> u8 {
    if y0 > 0.0 && y0 >= tau * y1 {
        0
    } else if y1 > 0.0 && y1 >= tau * y0 {
        1
    } else {
        2
    }
}

/// The lowest-index row whose match count reaches `vote_fraction·N`;
/// `counts[i − 1]` belongs to row `i`.
pub fn vote_tally(counts: &[usize], cfg: &KeyRowConfig) -> Option<usize> {
    let need = cfg.vote_fraction * cfg.iterations as f64;
    counts.iter().position(|&c| c as f64 >= need).map(|p| p + 1)
}

/// Turns per-bipartition estimates `(y0, y1)` into a row, restricted to
/// `candidates` (ascending rows admitted by the mask).
fn resolve(cfg: &KeyRowConfig, splits: &[BitHash], y: &[(f64, f64)], candidates: &[usize]) -> Option<usize> {
    let bits: Vec<u8> = y.iter().map(|&(y0, y1)| split_decision(y0, y1, cfg.tau_thresh)).collect();
    let abstained = bits.iter().filter(|&&b| b == 2).count();
    if abstained as f64 >= cfg.abstain_fraction * cfg.iterations as f64 {
        return None;
    }
    let need = cfg.vote_fraction * cfg.iterations as f64;
    candidates.iter().copied().find(|&i| {
        let matches = splits.iter().zip(&bits).filter(|(h, &b)| b != 2 && h.eval(i) == b).count();
        matches as f64 >= need
    })
}

/// The search against arbitrary blackboxes, for the rows admitted by `h`.
pub fn find_key_row<B: Blackboxes + ?Sized>(bb: &B, h: &BitHash, cfg: &KeyRowConfig) -> Result<KeyRowOutcome> {
    cfg.validate()?;
    let n = bb.n();
    if h.n() != n {
        return Err(Error::domain(format!("mask over [{}] for blackboxes over [{n}]", h.n())));
    }
    let splits: Vec<BitHash> = (0..cfg.iterations).map(|l| cfg.split(n, l)).collect::<Result<_>>()?;
    let mut y = Vec::with_capacity(cfg.iterations);
    for split in &splits {
        let y1 = bb.ba2(&h.had(split)?)?;
        let y0 = bb.ba2(&h.had(&split.complement())?)?;
        y.push((y0, y1));
    }
    match resolve(cfg, &splits, &y, &h.support()) {
        Some(index) => Ok(KeyRowOutcome::Found { index, weight: bb.ba1(h)? }),
        None => Ok(KeyRowOutcome::NoKeyRow),
    }
}

/// Streaming state shared by every mask searched over one stream: the
/// bipartitions, coefficient families and the mask-independent
/// accumulators (`B3` per bipartition, `A2`, `m`).
#[derive(Debug, Clone)]
pub(crate) struct KeyRowBank {
    n: usize,
    cfg: KeyRowConfig,
    splits: Vec<BitHash>,
    ba2: Vec<Ba2Family>,
    ba1: CoefficientFamily,
    b3: Vec<f64>,
    a2: Vec<f64>,
    m: u64,
}

/// Per-mask accumulators: `B1`, `B2` for both halves of every bipartition,
/// and `A1`, `F_S`.
#[derive(Debug, Clone)]
pub(crate) struct KeyRowCell {
    b1: Vec<f64>,
    b2: Vec<f64>,
    a1: Vec<f64>,
    f_s: u64,
}

impl KeyRowBank {
    pub fn new(n: usize, cfg: KeyRowConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::domain("key-row search needs n >= 1"));
        }
        let splits = (0..cfg.iterations).map(|l| cfg.split(n, l)).collect::<Result<_>>()?;
        let ba2 = (0..cfg.iterations).map(|l| cfg.ba2_family(l)).collect();
        Ok(Self {
            n,
            splits,
            ba2,
            ba1: cfg.ba1_family(),
            b3: vec![0.0; cfg.iterations * cfg.ba2_reps],
            a2: vec![0.0; cfg.ba1_reps],
            m: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &KeyRowConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn new_cell(&self) -> KeyRowCell {
        let len = 2 * self.cfg.iterations * self.cfg.ba2_reps;
        KeyRowCell { b1: vec![0.0; len], b2: vec![0.0; len], a1: vec![0.0; self.cfg.ba1_reps], f_s: 0 }
    }

    pub fn cell_bytes(&self) -> usize {
        8 * (4 * self.cfg.iterations * self.cfg.ba2_reps + self.cfg.ba1_reps + 1)
    }

    pub fn bank_bytes(&self) -> usize {
        8 * (self.b3.len() + self.a2.len() + 1) + self.splits.len() * 32
    }

    /// Ingests a batch; rows routed to `Some(c)` update `cells[c]`, all
    /// events update the shared accumulators.
    pub fn ingest(&mut self, batch: &PairCounts, routed: &[(usize, usize)], cells: &mut [KeyRowCell]) {
        self.m += batch.total;
        self.ingest_ba1(batch, routed, cells);
        self.ingest_ba2(batch, routed, cells);
    }

    fn ingest_ba1(&mut self, batch: &PairCounts, routed: &[(usize, usize)], cells: &mut [KeyRowCell]) {
        let mut per_col: Vec<Vec<(usize, u64)>> = vec![Vec::new(); batch.cols.len()];
        for &(g, c) in routed {
            let group = &batch.rows[g];
            cells[c].f_s += group.count;
            for &(col, cnt) in &batch.entries[group.start..group.end] {
                per_col[col as usize].push((c, cnt));
            }
        }
        let mut coeffs = vec![0.0; self.cfg.ba1_reps];
        for (&(j, total), hits) in batch.cols.iter().zip(&per_col) {
            self.ba1.fill(j, &mut coeffs);
            axpy(&mut self.a2, total as f64, &coeffs);
            for &(c, cnt) in hits {
                axpy(&mut cells[c].a1, cnt as f64, &coeffs);
            }
        }
    }

    fn ingest_ba2(&mut self, batch: &PairCounts, routed: &[(usize, usize)], cells: &mut [KeyRowCell]) {
        let k = self.cfg.ba2_reps;
        let mut y = vec![0.0; batch.cols.len() * k];
        let mut x = vec![0.0; k];
        let mut s = vec![0.0; k];
        for (l, fam) in self.ba2.iter().enumerate() {
            for (yc, &(j, total)) in y.chunks_exact_mut(k).zip(&batch.cols) {
                fam.y.fill(j, yc);
                axpy(&mut self.b3[l * k..(l + 1) * k], total as f64, yc);
            }
            for &(g, c) in routed {
                let group = &batch.rows[g];
                s.fill(0.0);
                for &(col, cnt) in &batch.entries[group.start..group.end] {
                    let col = col as usize;
                    axpy(&mut s, cnt as f64, &y[col * k..(col + 1) * k]);
                }
                fam.x.fill(group.row, &mut x);
                let side = self.splits[l].eval(group.row) as usize;
                let off = (2 * l + side) * k;
                let cell = &mut cells[c];
                let w = group.count as f64;
                for t in 0..k {
                    cell.b1[off + t] += x[t] * s[t];
                    cell.b2[off + t] += w * x[t];
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n || self.cfg != other.cfg {
            return Err(Error::config("key-row states differ in domain or configuration"));
        }
        add(&mut self.b3, &other.b3);
        add(&mut self.a2, &other.a2);
        self.m += other.m;
        Ok(())
    }

    /// BA2 estimates `(y0, y1)` for every bipartition of one cell.
    pub fn estimates(&self, cell: &KeyRowCell) -> Vec<(f64, f64)> {
        let k = self.cfg.ba2_reps;
        let m = self.m as f64;
        (0..self.cfg.iterations)
            .map(|l| {
                let side = |s: usize| {
                    let off = (2 * l + s) * k;
                    median_abs((0..k).map(|t| ba2_value(cell.b1[off + t], cell.b2[off + t], self.b3[l * k + t], m)))
                };
                (side(0), side(1))
            })
            .collect()
    }

    pub fn weight(&self, cell: &KeyRowCell) -> f64 {
        let m = self.m as f64;
        let fs = cell.f_s as f64;
        median_abs(cell.a1.iter().zip(&self.a2).map(|(&a1, &a2)| ba1_value(a1, a2, fs, m)))
    }

    /// The outcome for one cell whose mask admits exactly `candidates`.
    pub fn decide(&self, cell: &KeyRowCell, candidates: &[usize]) -> KeyRowOutcome {
        if self.m == 0 {
            return KeyRowOutcome::NoKeyRow;
        }
        let y = self.estimates(cell);
        match resolve(&self.cfg, &self.splits, &y, candidates) {
            Some(index) => KeyRowOutcome::Found { index, weight: self.weight(cell) },
            None => KeyRowOutcome::NoKeyRow,
        }
    }

    /// Fraction of undecided bipartitions in one cell.
    pub fn abstention_rate(&self, cell: &KeyRowCell) -> f64 {
        if self.m == 0 {
            return 1.0;
        }
        let y = self.estimates(cell);
        let undecided = y.iter().filter(|&&(y0, y1)| split_decision(y0, y1, self.cfg.tau_thresh) == 2).count();
        undecided as f64 / y.len() as f64
    }
}

impl KeyRowCell {
    pub fn merge(&mut self, other: &Self) {
        add(&mut self.b1, &other.b1);
        add(&mut self.b2, &other.b2);
        add(&mut self.a1, &other.a1);
        self.f_s += other.f_s;
    }
}

#[inline]
fn axpy(acc: &mut [f64], w: f64, v: &[f64]) {
    for (a, &x) in acc.iter_mut().zip(v) {
        *a += w * x;
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, &x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// One-pass key-row search for the rows admitted by a fixed mask.
#[derive(Debug, Clone)]
pub struct KeyRowSketch {
    bank: KeyRowBank,
    mask: BitHash,
    cell: KeyRowCell,
}

impl KeyRowSketch {
    pub fn new(n: usize, mask: BitHash, cfg: KeyRowConfig) -> Result<Self> {
        if mask.n() != n {
            return Err(Error::domain(format!("mask over [{}] for a stream over [{n}]", mask.n())));
        }
        let bank = KeyRowBank::new(n, cfg)?;
        let cell = bank.new_cell();
        Ok(Self { bank, mask, cell })
    }

    pub fn config(&self) -> &KeyRowConfig {
        self.bank.config()
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.bank.n(), &[e])?);
        Ok(())
    }

    pub fn ingest_events(&mut self, events: &[StreamEvent]) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.bank.n(), events)?);
        Ok(())
    }

    /// Ingests a batch built over the same domain.
    pub fn ingest_batch(&mut self, batch: &PairCounts) {
        let routed: Vec<(usize, usize)> =
            batch.rows.iter().enumerate().filter(|(_, g)| self.mask.admits(g.row)).map(|(k, _)| (k, 0)).collect();
        self.bank.ingest(batch, &routed, std::slice::from_mut(&mut self.cell));
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.mask != other.mask {
            return Err(Error::config("key-row sketches differ in mask"));
        }
        self.bank.merge(&other.bank)?;
        self.cell.merge(&other.cell);
        Ok(())
    }

    pub fn outcome(&self) -> KeyRowOutcome {
        self.bank.decide(&self.cell, &self.mask.support())
    }

    /// BA2 estimates `(y0, y1)` per bipartition.
    pub fn estimates(&self) -> Vec<(f64, f64)> {
        self.bank.estimates(&self.cell)
    }

    pub fn space_bytes(&self) -> usize {
        self.bank.bank_bytes() + self.bank.cell_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::{ExplicitMatrix, HadamardFunction};
    use crate::sketches::SimulatedBlackbox;

    fn cfg(n: usize) -> KeyRowConfig {
        KeyRowConfig::new(n, 0.3, &Calibration::default(), &Regime::practical(), 7).unwrap().with_ba1(0.1, 1.0)
    }

    #[test]
    fn decisions() {
        assert_eq!(split_decision(0.0, 0.0, 10.0), 2);
        assert_eq!(split_decision(100.0, 1.0, 10.0), 0);
        assert_eq!(split_decision(1.0, 100.0, 10.0), 1);
        assert_eq!(split_decision(5.0, 1.0, 10.0), 2);
        assert_eq!(split_decision(3.0, 0.0, 10.0), 0);
    }

    #[test]
    fn tally() {
        let c = cfg(4);
        let n = c.iterations;
        assert_eq!(vote_tally(&[n, 0, 0], &c), Some(1));
        assert_eq!(vote_tally(&[n / 2, n / 2], &c), None);
        assert_eq!(vote_tally(&[0, n, n], &c), Some(2));
    }

    #[test]
    fn config_checks() {
        let mut c = cfg(16);
        assert!(c.validate().is_ok());
        c.vote_fraction = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg(16);
        c.ba2_reps = 10;
        assert!(c.validate().is_err());
        assert!(KeyRowConfig::new(16, 1.0, &Calibration::default(), &Regime::practical(), 1).is_err());
    }

    #[test]
    fn offline_planted_key_row() {
        let mut a = ExplicitMatrix::zeros(8);
        a.row_mut(3).copy_from_slice(&[0.4, -0.1, -0.1, -0.05, -0.05, -0.05, -0.03, -0.02]);
        let bb = SimulatedBlackbox::exact(a, HadamardFunction::AbsValue);
        let out = find_key_row(&bb, &BitHash::ones(8), &cfg(8)).unwrap();
        assert_eq!(out.index(), Some(3));
        let KeyRowOutcome::Found { weight, .. } = out else { unreachable!() };
        assert!((weight - 0.8).abs() < 1e-12);
    }

    #[test]
    fn offline_zero_matrix() {
        let bb = SimulatedBlackbox::exact(ExplicitMatrix::zeros(4), HadamardFunction::AbsValue);
        assert_eq!(find_key_row(&bb, &BitHash::ones(4), &cfg(4)).unwrap(), KeyRowOutcome::NoKeyRow);
        assert_eq!(KeyRowOutcome::NoKeyRow.as_pair(), (-1, 0.0));
    }

    #[test]
    fn streaming_single_row() {
        let events: Vec<_> = (1..=8).flat_map(|j| [StreamEvent::new(2, j), StreamEvent::new(5, 1)]).collect();
        let mask = BitHash::from_rows(8, &[2, 3, 4]).unwrap();
        let mut s = KeyRowSketch::new(8, mask, cfg(8)).unwrap();
        s.ingest_events(&events).unwrap();
        assert_eq!(s.outcome().index(), Some(2));
    }

    #[test]
    fn streaming_merge_matches_single_pass() {
        let events: Vec<_> = (0..40).map(|k| StreamEvent::new(1 + k % 3, 1 + (k * 7) % 4)).collect();
        let mask = BitHash::ones(4);
        let mut whole = KeyRowSketch::new(4, mask.clone(), cfg(4)).unwrap();
        whole.ingest_events(&events).unwrap();
        let mut left = KeyRowSketch::new(4, mask.clone(), cfg(4)).unwrap();
        let mut right = KeyRowSketch::new(4, mask, cfg(4)).unwrap();
        left.ingest_events(&events[..17]).unwrap();
        right.ingest_events(&events[17..]).unwrap();
        left.merge(&right).unwrap();
        for ((a0, a1), (b0, b1)) in whole.estimates().into_iter().zip(left.estimates()) {
            assert!((a0 - b0).abs() <= 1e-9 * (1.0 + a0) && (a1 - b1).abs() <= 1e-9 * (1.0 + a1));
        }
        assert_eq!(whole.outcome().index(), left.outcome().index());
    }
}
