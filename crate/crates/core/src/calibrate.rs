//! Empirical fit of `c_r` in `r(n) = max(2, c_r·ln n)`.
//!
//! Each trial runs BA2 with the full mask on a generated stream and records
//! the factor `max(est/exact, exact/est)`. A trial is covered by `c` when
//! `max(2, c·ln n)` reaches its factor; the fit is the smallest `c` covering
//! a `1 − δ₂` fraction of the trials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hadamard::HadamardFunction;
use crate::hashing::{derive_seed, BitHash};
use crate::params::{ba2_reps, Calibration, DEFAULT_C2, DEFAULT_DELTA2};
use crate::sketches::IMMatrixSketch;
use crate::stream::{generate, ExactHistogram, GeneratorMode, PairCounts};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub sizes: Vec<usize>,
    pub families: Vec<GeneratorMode>,
    /// Trials per `(n, family)` cell.
    pub trials: usize,
    pub m: usize,
    pub delta2: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            sizes: vec![16, 64],
            families: vec![
                GeneratorMode::PerfectDependence,
                GeneratorMode::Mixture { lambda: 0.5 },
                GeneratorMode::Independent,
            ],
            trials: 100,
            m: 10_000,
            delta2: DEFAULT_DELTA2,
            reps: ba2_reps(DEFAULT_DELTA2, DEFAULT_C2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    /// Trials with a non-zero oracle value.
    pub trials: usize,
    /// Fraction of trials inside `[1/r, r]` under the fitted `c_r`.
    pub coverage: f64,
    pub worst_factor: f64,
}

/// The `c` that trial with factor `f` at size `n` needs.
pub fn required_c(n: usize, factor: f64) -> f64 {
    if factor <= 2.0 {
        0.0
    } else {
        let ln = (n as f64).ln();
        if ln > 0.0 {
            factor / ln
        } else {
            f64::INFINITY
        }
    }
}

/// Approximation factor of one BA2 run, `None` when the oracle is 0.
pub fn trial_factor(mode: &GeneratorMode, n: usize, m: usize, reps: usize, seed: u64) -> Result<Option<f64>> {
    let events = generate(mode, n, m, derive_seed(seed, 1))?;
    let exact = ExactHistogram::from_events(n, &events)?.exact_distance(HadamardFunction::AbsValue)?;
    if exact <= 0.0 {
        return Ok(None);
    }
    let mut sketch = IMMatrixSketch::new(n, BitHash::ones(n), reps, derive_seed(seed, 2))?;
    sketch.ingest_counts(&PairCounts::from_events(n, &events)?)?;
    let est = sketch.estimate()?;
    Ok(Some(if est > 0.0 { (est / exact).max(exact / est) } else { f64::INFINITY }))
}

pub fn calibrate(grid: &CalibrationGrid) -> Result<CalibrationReport> {
    if grid.sizes.is_empty() || grid.families.is_empty() || grid.trials == 0 {
        return Err(Error::config("calibration grid is empty"));
    }
    if !(grid.delta2 > 0.0 && grid.delta2 < 1.0) {
        return Err(Error::config(format!("δ₂ must lie in (0, 1), got {}", grid.delta2)));
    }
    let cells: Vec<(usize, usize, &GeneratorMode, usize)> = grid
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(a, &n)| {
            grid.families
                .iter()
                .enumerate()
                .flat_map(move |(b, mode)| (0..grid.trials).map(move |t| (a * 1000 + b, n, mode, t)))
        })
        .collect();
    let samples = cells
        .par_iter()
        .map(|&(cell, n, mode, t)| {
            let seed = derive_seed(derive_seed(grid.seed, cell as u64), t as u64);
            Ok(trial_factor(mode, n, grid.m, grid.reps, seed)?.map(|f| (n, f)))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<(usize, f64)> = samples.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::config("every calibration trial had a zero oracle value"));
    }
    let mut needed: Vec<f64> = samples.iter().map(|&(n, f)| required_c(n, f)).collect();
    needed.sort_by(f64::total_cmp);
    let rank = ((1.0 - grid.delta2) * needed.len() as f64).ceil().max(1.0) as usize - 1;
    let c_r = needed[rank.min(needed.len() - 1)];
    let calibration = Calibration::new(c_r)?;
    let covered = samples.iter().filter(|&&(n, f)| f <= calibration.r(n)).count();
    Ok(CalibrationReport {
        calibration,
        trials: samples.len(),
        coverage: covered as f64 / samples.len() as f64,
        worst_factor: samples.iter().map(|s| s.1).fold(0.0, f64::max),
    })
}
