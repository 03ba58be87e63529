//! Blackboxes over explicit matrices: the exact value times seeded noise
//! inside the advertised bracket, or an out-of-bracket value with
//! probability `δ`. They let the reduction run for any `g`, including
//! `|x|^p` where no streaming sketch exists.

use crate::hadamard::{aggregate_norm, masked_norm, ExplicitMatrix, HadamardFunction};
use crate::hashing::{derive_seed, mix64, unit_open, BitHash};
use crate::Result;

use super::Blackboxes;

/// `(1±ε′)` noise around `‖g[J·I_H·A]‖₁`.
pub fn sim_ba1(
    a: &ExplicitMatrix,
    g: HadamardFunction,
    mask: &BitHash,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    let exact = aggregate_norm(g, a, mask)?;
    Ok(perturb_linear(exact, eps, delta, seed))
}

/// `r`-factor noise around `‖g[I_H·A]‖₁`.
pub fn sim_ba2(a: &ExplicitMatrix, g: HadamardFunction, mask: &BitHash, r: f64, delta: f64, seed: u64) -> Result<f64> {
    let exact = masked_norm(g, a, mask)?;
    Ok(perturb_factor(exact, r, delta, seed))
}

/// Uniform multiplicative noise in `[1−ε, 1+ε]`; with probability `δ`
/// returns `3·(1+ε)·exact + 1`, above the bracket.
pub fn perturb_linear(exact: f64, eps: f64, delta: f64, seed: u64) -> f64 {
    let (fail, u) = draws(seed);
    if fail < delta {
        return 3.0 * (1.0 + eps) * exact + 1.0;
    }
    exact * (1.0 - eps + 2.0 * eps * u)
}

/// Log-uniform multiplicative noise in `[1/r, r]`; with probability `δ`
/// returns `3·r·exact + 1`, above the bracket.
pub fn perturb_factor(exact: f64, r: f64, delta: f64, seed: u64) -> f64 {
    let (fail, u) = draws(seed);
    if fail < delta {
        return 3.0 * r * exact + 1.0;
    }
    exact * r.powf(2.0 * u - 1.0)
}

fn draws(seed: u64) -> (f64, f64) {
    (unit_open(mix64(seed ^ 0xfa11)), unit_open(mix64(seed ^ 0x0015e)))
}

/// Both blackboxes over one explicit matrix. Each query's noise is seeded
/// by the blackbox seed and the evaluated mask, so repeated queries with
/// the same mask agree.
#[derive(Debug, Clone)]
pub struct SimulatedBlackbox {
    pub matrix: ExplicitMatrix,
    pub g: HadamardFunction,
    pub eps1: f64,
    pub delta1: f64,
    pub r: f64,
    pub delta2: f64,
    pub seed: u64,
}

impl SimulatedBlackbox {
    /// Noise-free blackboxes returning the exact values.
    pub fn exact(matrix: ExplicitMatrix, g: HadamardFunction) -> Self {
        Self { matrix, g, eps1: 0.0, delta1: 0.0, r: 1.0, delta2: 0.0, seed: 0 }
    }

    fn query_seed(&self, tag: u64, mask: &BitHash) -> u64 {
        let fingerprint = mask.support().iter().fold(0u64, |h, &i| mix64(h ^ i as u64));
        derive_seed(derive_seed(self.seed, tag), fingerprint)
    }
}

impl Blackboxes for SimulatedBlackbox {
    fn n(&self) -> usize {
        self.matrix.n()
    }

    fn ba1(&self, mask: &BitHash) -> Result<f64> {
        sim_ba1(&self.matrix, self.g, mask, self.eps1, self.delta1, self.query_seed(1, mask))
    }

    fn ba2(&self, mask: &BitHash) -> Result<f64> {
        sim_ba2(&self.matrix, self.g, mask, self.r, self.delta2, self.query_seed(2, mask))
    }
}
