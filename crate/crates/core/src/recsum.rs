//! Recursive Sum: `(1±ε)·Σ_i u_i` from per-level heavy-row covers.
//!
//! Level `j` keeps the rows admitted by `H₁·…·H_j` (level 0 keeps all).
//! The deepest level `φ` is small enough to sum exactly; each shallower
//! level doubles the estimate of the level below, which is unbiased for
//! its surviving half, and corrects the rows its cover knows exactly:
//!
//! ```text
//! Y_j = 2·Y_{j+1} + Σ_{(i, w) ∈ Q_j} (1 − 2·H_{j+1}(i))·w
//! ```
//!
//! A covered row surviving into level `j+1` is counted twice by the
//! doubling and once removed; a covered row dropped by `H_{j+1}` is added
//! once. Either way it contributes `w` with no sampling variance.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hadamard::{masked_norm, ExplicitMatrix, HadamardFunction, WeightVector};
use crate::hashing::{derive_seed, BitHash};
use crate::heavyrows::{find_heavy_rows, Cover, CoverDiagnostics, HeavyRowsConfig, HeavyRowsSketch};
use crate::params::{levels, Calibration, Regime};
use crate::sketches::{check_unit, Blackboxes};
use crate::stream::{PairCounts, StreamEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursiveSumConfig {
    pub n: usize,
    pub eps: f64,
    /// Depth `φ = max(1, ⌈log₂ n⌉)`.
    pub phi: usize,
    /// Per-level heaviness `α = ε²/φ³`.
    pub alpha: f64,
    pub level_delta: f64,
    /// The estimate is 0 when more rows than this survive to level `φ`.
    pub f0_cap: u64,
    pub regime: Regime,
    pub calibration: Calibration,
    pub seed: u64,
    /// Heavy-rows configuration of levels `0..φ`.
    pub heavy: Vec<HeavyRowsConfig>,
}

impl RecursiveSumConfig {
    pub fn new(n: usize, eps: f64, calibration: Calibration, regime: Regime, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("recursive sum needs n >= 1"));
        }
        check_unit("ε", eps).map_err(|_| Error::domain(format!("ε must lie in (0, 1), got {eps}")))?;
        let phi = levels(n);
        let alpha = eps * eps / (phi as f64).powi(3);
        let heavy = (0..phi)
            .map(|j| HeavyRowsConfig::new(n, alpha, eps, &calibration, &regime, derive_seed(seed, 0x1000 + j as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            eps,
            phi,
            alpha,
            level_delta: 1.0 / phi as f64,
            f0_cap: regime.f0_cap(),
            regime,
            calibration,
            seed,
            heavy,
        })
    }

    /// Applies `f` to the key-row configuration of every level.
    pub fn map_keyrow(mut self, f: impl Fn(&mut crate::keyrow::KeyRowConfig)) -> Self {
        for h in &mut self.heavy {
            f(&mut h.keyrow);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.heavy.len() != self.phi || self.phi == 0 {
            return Err(Error::config(format!("{} heavy-rows levels for φ = {}", self.heavy.len(), self.phi)));
        }
        self.heavy.iter().try_for_each(HeavyRowsConfig::validate)
    }

    pub fn masks(&self) -> Result<LevelMasks> {
        let hashes = (1..=self.phi)
            .map(|j| BitHash::new(derive_seed(self.seed, 0x10 + j as u64), self.n))
            .collect::<Result<Vec<_>>>()?;
        LevelMasks::from_hashes(hashes)
    }
}

/// `H₁ … H_φ` and the nested effective masks `H₁·…·H_j`, `j = 0..=φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMasks {
    hashes: Vec<BitHash>,
    effective: Vec<BitHash>,
}

impl LevelMasks {
    pub fn from_hashes(hashes: Vec<BitHash>) -> Result<Self> {
        let Some(first) = hashes.first() else {
            return Err(Error::domain("recursive sum needs at least one level"));
        };
        let mut effective = vec![BitHash::ones(first.n())];
        for h in &hashes {
            let next = effective.last().unwrap().had(h)?;
            effective.push(next);
        }
        Ok(Self { hashes, effective })
    }

    pub fn phi(&self) -> usize {
        self.hashes.len()
    }

    /// `H_j`, `j ∈ 1..=φ`.
    pub fn hash(&self, j: usize) -> &BitHash {
        &self.hashes[j - 1]
    }

    /// The mask of level `j ∈ 0..=φ`.
    pub fn level(&self, j: usize) -> &BitHash {
        &self.effective[j]
    }
}

/// `Y_j` for `j = φ, …, 0` from `Y_φ` and the covers of levels `0..φ`;
/// `result[j] = Y_j`.
pub fn combine(base: f64, covers: &[Cover], masks: &LevelMasks) -> Vec<f64> {
    let phi = masks.phi();
    assert_eq!(covers.len(), phi, "one cover per level below φ");
    let mut y = vec![0.0; phi + 1];
    y[phi] = base;
    for j in (0..phi).rev() {
        let next = masks.hash(j + 1);
        let correction: f64 = covers[j].pairs().iter().map(|&(i, w)| (1.0 - 2.0 * next.eval(i) as f64) * w).sum();
        y[j] = 2.0 * y[j + 1] + correction;
    }
    y
}

/// The α-heavy rows of the level-`j` weights with exact weights.
pub fn exact_cover(u: &WeightVector, level: &BitHash, alpha: f64) -> Cover {
    let masked = WeightVector((1..=u.len()).map(|i| if level.admits(i) { u.get(i) } else { 0.0 }).collect());
    Cover::new(masked.alpha_heavy(alpha).into_iter().map(|i| (i, masked.get(i))).collect())
        .expect("heavy rows are distinct")
}

/// Recursive Sum over exact weights with exact covers; returns `Y_0`.
pub fn simulate_exact(u: &WeightVector, masks: &LevelMasks, alpha: f64, f0_cap: u64) -> f64 {
    let phi = masks.phi();
    let deepest = masks.level(phi);
    let survivors: Vec<usize> = (1..=u.len()).filter(|&i| deepest.admits(i) && u.get(i) != 0.0).collect();
    if survivors.len() as u64 > f0_cap {
        return 0.0;
    }
    let base = survivors.iter().map(|&i| u.get(i)).sum();
    let covers: Vec<Cover> = (0..phi).map(|j| exact_cover(u, masks.level(j), alpha)).collect();
    combine(base, &covers, masks)[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    #[serde(flatten)]
    pub cover: CoverDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimate {
    /// `y[j] = Y_j`.
    pub y: Vec<f64>,
    pub result: f64,
    /// Rows tracked exactly at level `φ`.
    pub f0: u64,
    /// Set when `f0` exceeded the cap and the estimate was forced to 0.
    pub f0_overflow: bool,
    pub levels: Vec<LevelDiagnostics>,
}

/// Exact `f_ij` for rows surviving every mask, plus the column counts the
/// weights of those rows need.
#[derive(Debug, Clone)]
struct BaseCounter {
    n: usize,
    cap: u64,
    rows: HashMap<usize, HashMap<usize, u64>>,
    cols: Vec<u64>,
    m: u64,
    overflow: bool,
}

impl BaseCounter {
    fn new(n: usize, cap: u64) -> Self {
        Self { n, cap, rows: HashMap::new(), cols: vec![0; n], m: 0, overflow: false }
    }

    fn ingest(&mut self, batch: &PairCounts, mask: &BitHash) {
        self.m += batch.total;
        for &(j, c) in &batch.cols {
            self.cols[j - 1] += c;
        }
        for g in &batch.rows {
            if self.overflow || !mask.admits(g.row) {
                continue;
            }
            if !self.rows.contains_key(&g.row) && self.rows.len() as u64 >= self.cap {
                self.overflow = true;
                self.rows.clear();
                continue;
            }
            let row = self.rows.entry(g.row).or_default();
            for &(col, c) in &batch.entries[g.start..g.end] {
                *row.entry(batch.cols[col as usize].0).or_insert(0) += c;
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        self.m += other.m;
        for (a, b) in self.cols.iter_mut().zip(&other.cols) {
            *a += b;
        }
        self.overflow |= other.overflow;
        for (&i, row) in &other.rows {
            if self.overflow {
                break;
            }
            if !self.rows.contains_key(&i) && self.rows.len() as u64 >= self.cap {
                self.overflow = true;
                break;
            }
            let mine = self.rows.entry(i).or_default();
            for (&j, &c) in row {
                *mine.entry(j).or_insert(0) += c;
            }
        }
        if self.overflow {
            self.rows.clear();
        }
    }

    /// `Σ_{surviving i} Σ_j g(f_ij/m − f_i·f_j/m²)`.
    fn total(&self, g: HadamardFunction) -> f64 {
        if self.m == 0 {
            return 0.0;
        }
        let m = self.m as f64;
        self.rows
            .values()
            .map(|row| {
                let fi: u64 = row.values().sum();
                let fi = fi as f64;
                (1..=self.n)
                    .map(|j| {
                        let fij = row.get(&j).copied().unwrap_or(0) as f64;
                        g.eval(fij / m - fi * self.cols[j - 1] as f64 / (m * m))
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    fn space_bytes(&self) -> usize {
        let cells: usize = self.rows.values().map(|r| r.len()).sum();
        8 * (self.n + 1) + 24 * self.rows.len() + 16 * cells
    }
}

/// One-pass Recursive Sum for `g = |x|` over a pair stream.
#[derive(Debug, Clone)]
pub struct RecursiveSum {
    cfg: RecursiveSumConfig,
    masks: LevelMasks,
    levels: Vec<HeavyRowsSketch>,
    base: BaseCounter,
}

impl RecursiveSum {
    pub fn new(cfg: RecursiveSumConfig) -> Result<Self> {
        cfg.validate()?;
        let masks = cfg.masks()?;
        let levels = cfg
            .heavy
            .iter()
            .enumerate()
            .map(|(j, h)| HeavyRowsSketch::with_outer(masks.level(j).clone(), cfg.n, h.clone()))
            .collect::<Result<Vec<_>>>()?;
        let base = BaseCounter::new(cfg.n, cfg.f0_cap);
        Ok(Self { cfg, masks, levels, base })
    }

    pub fn config(&self) -> &RecursiveSumConfig {
        &self.cfg
    }

    pub fn masks(&self) -> &LevelMasks {
        &self.masks
    }

    pub fn m(&self) -> u64 {
        self.base.m
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.cfg.n, &[e])?);
        Ok(())
    }

    pub fn ingest_events(&mut self, events: &[StreamEvent]) -> Result<()> {
        self.ingest_batch(&PairCounts::from_events(self.cfg.n, events)?);
        Ok(())
    }

    /// Ingests a batch built over `[n]`.
    pub fn ingest_batch(&mut self, batch: &PairCounts) {
        self.levels.par_iter_mut().for_each(|level| level.ingest_batch(batch));
        self.base.ingest(batch, self.masks.level(self.cfg.phi));
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.cfg != other.cfg {
            return Err(Error::config("recursive-sum states differ in configuration"));
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.merge(b)?;
        }
        self.base.merge(&other.base);
        Ok(())
    }

    pub fn estimate(&self) -> FinalEstimate {
        let phi = self.cfg.phi;
        if self.base.m == 0 {
            return FinalEstimate { y: vec![0.0; phi + 1], result: 0.0, f0: 0, f0_overflow: false, levels: Vec::new() };
        }
        let results: Vec<(Cover, CoverDiagnostics)> =
            self.levels.par_iter().map(HeavyRowsSketch::cover_with_diagnostics).collect();
        let levels =
            results.iter().enumerate().map(|(level, (_, d))| LevelDiagnostics { level, cover: d.clone() }).collect();
        let f0 = if self.base.overflow { self.cfg.f0_cap + 1 } else { self.base.rows.len() as u64 };
        if self.base.overflow {
            return FinalEstimate { y: vec![0.0; phi + 1], result: 0.0, f0, f0_overflow: true, levels };
        }
        let covers: Vec<Cover> = results.into_iter().map(|(c, _)| c).collect();
        let y = combine(self.base.total(HadamardFunction::AbsValue), &covers, &self.masks);
        FinalEstimate { result: y[0], y, f0, f0_overflow: false, levels }
    }

    /// Bytes held by all accumulators, counters and hash descriptions.
    pub fn space_bytes(&self) -> usize {
        self.levels.iter().map(HeavyRowsSketch::space_bytes).sum::<usize>()
            + self.base.space_bytes()
            + 32 * self.masks.phi()
    }
}

/// Recursive Sum over an explicit matrix with blackbox queries, for any `g`.
/// `Y_φ` is summed exactly from the matrix.
pub fn recursive_sum_offline<B: Blackboxes + Sync + ?Sized>(
    a: &ExplicitMatrix,
    g: HadamardFunction,
    bb: &B,
    cfg: &RecursiveSumConfig,
) -> Result<FinalEstimate> {
    cfg.validate()?;
    if a.n() != cfg.n || bb.n() != cfg.n {
        return Err(Error::domain("matrix, blackboxes and configuration disagree on n"));
    }
    let masks = cfg.masks()?;
    let phi = cfg.phi;
    let deepest = masks.level(phi);
    let f0 = (1..=cfg.n).filter(|&i| deepest.admits(i) && a.row(i).iter().any(|&x| x != 0.0)).count() as u64;
    let covers = (0..phi)
        .into_par_iter()
        .map(|j| find_heavy_rows(bb, masks.level(j), &cfg.heavy[j]))
        .collect::<Result<Vec<_>>>()?;
    let levels = covers
        .iter()
        .enumerate()
        .map(|(level, c)| LevelDiagnostics {
            level,
            cover: CoverDiagnostics { active_buckets: 0, cover_size: c.len(), abstention_rate: 0.0 },
        })
        .collect();
    if f0 > cfg.f0_cap {
        return Ok(FinalEstimate { y: vec![0.0; phi + 1], result: 0.0, f0, f0_overflow: true, levels });
    }
    let y = combine(masked_norm(g, a, deepest)?, &covers, &masks);
    Ok(FinalEstimate { result: y[0], y, f0, f0_overflow: false, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth() {
        let c = |n| RecursiveSumConfig::new(n, 0.2, Calibration::default(), Regime::practical(), 1).unwrap();
        assert_eq!(c(1).phi, 1);
        assert_eq!(c(256).phi, 8);
        assert_eq!(c(16).masks().unwrap(), c(16).masks().unwrap());
        assert!(RecursiveSumConfig::new(4, 1.0, Calibration::default(), Regime::practical(), 1).is_err());
    }

    #[test]
    fn masks_nest() {
        let cfg = RecursiveSumConfig::new(64, 0.2, Calibration::default(), Regime::practical(), 3).unwrap();
        let masks = cfg.masks().unwrap();
        for j in 0..masks.phi() {
            for i in 1..=64 {
                assert!(!masks.level(j + 1).admits(i) || masks.level(j).admits(i));
            }
        }
    }

    #[test]
    fn exact_covers_reproduce_the_sum_when_everything_is_heavy() {
        let u = WeightVector(vec![1.0, 2.0, 3.0, 4.0]);
        let masks = LevelMasks::from_hashes(vec![BitHash::new(1, 4).unwrap(), BitHash::new(2, 4).unwrap()]).unwrap();
        assert!((simulate_exact(&u, &masks, 0.01, 4096) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_unrolls() {
        let u = WeightVector(vec![0.0, 5.0]);
        let h = BitHash::from_bits(vec![true, false]).unwrap();
        let masks = LevelMasks::from_hashes(vec![h]).unwrap();
        let empty = [Cover::empty()];
        assert_eq!(combine(0.0, &empty, &masks), vec![0.0, 0.0]);
        assert_eq!(simulate_exact(&u, &masks, 0.5, 10), 5.0);
        let u = WeightVector(vec![1.0, 5.0]);
        assert_eq!(simulate_exact(&u, &masks, 0.9, 10), 2.0);
        assert_eq!(simulate_exact(&u, &masks, 0.9, 0), 0.0);
    }

    #[test]
    fn empty_stream_is_zero() {
        let cfg = RecursiveSumConfig::new(4, 0.3, Calibration::default(), Regime::practical(), 1)
            .unwrap()
            .map_keyrow(|k| *k = k.clone().with_ba1(0.1, 1.0));
        let est = RecursiveSum::new(cfg).unwrap().estimate();
        assert_eq!(est.result, 0.0);
    }
}
