//! Hadamard functions and exact norms, weights and row predicates on explicit
//! matrices.

use serde::{Deserialize, Serialize};

use crate::hashing::BitHash;
use crate::params::Calibration;
use crate::{Error, Result};

/// An even, subadditive, non-negative scalar map with `g(0) = 0`, applied
/// entrywise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HadamardFunction {
    /// `g(x) = |x|`.
    AbsValue,
    /// `g(x) = |x|^p` for `0 < p ≤ 1`.
    AbsPower(f64),
}

impl HadamardFunction {
    pub fn abs_power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("|x|^p needs 0 < p <= 1, got {p}")));
        }
        Ok(if p == 1.0 { Self::AbsValue } else { Self::AbsPower(p) })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::AbsValue => x.abs(),
            Self::AbsPower(p) => x.abs().powf(p),
        }
    }

    pub fn is_l1(&self) -> bool {
        matches!(self, Self::AbsValue)
    }
}

impl std::fmt::Display for HadamardFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::AbsValue => write!(f, "l1"),
            Self::AbsPower(p) => write!(f, "lp:{p}"),
        }
    }
}

impl std::str::FromStr for HadamardFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "abs" => Ok(Self::AbsValue),
            _ => {
                let p = s
                    .strip_prefix("lp:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::domain(format!("unknown Hadamard function '{s}' (expected l1 or lp:<p>)")))?;
                Self::abs_power(p)
            }
        }
    }
}

/// A dense `n × n` matrix, row-major, with 1-based accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ExplicitMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::domain("matrix must be square"));
            }
            entries.extend(row);
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("matrix entries must be finite"));
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[(i - 1) * self.n + (j - 1)] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[(i - 1) * self.n..i * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.entries[(i - 1) * n..i * n]
    }
}

/// Row weights `u_i = Σ_j g(a_ij)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weight of row `i` (1-based).
    pub fn get(&self, i: usize) -> f64 {
        self.0[i - 1]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.0.len() {
            return Err(Error::domain(format!("row {i} outside [1, {}]", self.0.len())));
        }
        Ok(())
    }

    /// Rows with `u_i > α·Σu`, ascending.
    pub fn alpha_heavy(&self, alpha: f64) -> Vec<usize> {
        let bound = alpha * self.total();
        (1..=self.0.len()).filter(|&i| self.get(i) > bound).collect()
    }
}

/// `‖g[A]‖₁ = Σ_i Σ_j g(a_ij)`.
pub fn matrix_norm(g: HadamardFunction, a: &ExplicitMatrix) -> f64 {
    a.entries.iter().map(|&x| g.eval(x)).sum()
}

pub fn row_weights(g: HadamardFunction, a: &ExplicitMatrix) -> WeightVector {
    WeightVector((1..=a.n).map(|i| a.row(i).iter().map(|&x| g.eval(x)).sum()).collect())
}

/// The row-masked aggregate vector `J·I_H·A`, i.e. `v_j = Σ_{i: H(i)=1} a_ij`.
pub fn aggregate_vector(a: &ExplicitMatrix, mask: &BitHash) -> Result<Vec<f64>> {
    if mask.n() != a.n {
        return Err(Error::domain(format!("mask over [{}] applied to {}x{} matrix", mask.n(), a.n, a.n)));
    }
    let mut v = vec![0.0; a.n];
    for i in (1..=a.n).filter(|&i| mask.admits(i)) {
        for (acc, x) in v.iter_mut().zip(a.row(i)) {
            *acc += x;
        }
    }
    Ok(v)
}

/// `‖g[J·I_H·A]‖₁ = Σ_j g(Σ_{i: H(i)=1} a_ij)`, the quantity BA1 estimates.
pub fn aggregate_norm(g: HadamardFunction, a: &ExplicitMatrix, mask: &BitHash) -> Result<f64> {
    Ok(aggregate_vector(a, mask)?.into_iter().map(|x| g.eval(x)).sum())
}

/// `‖g[I_H·A]‖₁`, the quantity BA2 estimates.
pub fn masked_norm(g: HadamardFunction, a: &ExplicitMatrix, mask: &BitHash) -> Result<f64> {
    if mask.n() != a.n {
        return Err(Error::domain(format!("mask over [{}] applied to {}x{} matrix", mask.n(), a.n, a.n)));
    }
    Ok((1..=a.n).filter(|&i| mask.admits(i)).map(|i| a.row(i).iter().map(|&x| g.eval(x)).sum::<f64>()).sum())
}

/// `u_i > α·‖u‖₁`.
pub fn is_alpha_heavy(u: &WeightVector, i: usize, alpha: f64) -> Result<bool> {
    u.check_index(i)?;
    Ok(u.get(i) > alpha * u.total())
}

/// `u_i > ρ·(‖u‖₁ − u_i)`. At most one row qualifies when `ρ ≥ 1`.
pub fn is_key_row(u: &WeightVector, i: usize, rho: f64) -> Result<bool> {
    u.check_index(i)?;
    let ui = u.get(i);
    Ok(ui > rho * (u.total() - ui))
}

/// The two decision thresholds of the key-row search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Key-row dominance factor, `r⁴(n)/ε`.
    pub rho: f64,
    /// Bipartition separation factor, `2048·r²(n)/ε`.
    pub tau: f64,
}

/// Multiplier in `τ(n, ε) = TAU_CONSTANT·r²(n)/ε`; the smallest value that
/// satisfies every separation inequality in the case analysis.
pub const TAU_CONSTANT: f64 = 2048.0;

pub fn thresholds_for_r(r: f64, eps: f64) -> Result<Thresholds> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1], got {eps}")));
    }
    if !(r >= 1.0) {
        return Err(Error::domain(format!("r(n) must be >= 1, got {r}")));
    }
    Ok(Thresholds { rho: r.powi(4) / eps, tau: TAU_CONSTANT * r * r / eps })
}

pub fn thresholds(n: usize, eps: f64, calibration: &Calibration) -> Result<Thresholds> {
    thresholds_for_r(calibration.r(n), eps)
}
