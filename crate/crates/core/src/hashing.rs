//! Seeded pairwise-independent hash families over `[n] = {1, …, n}`.
//!
//! Both families evaluate the degree-1 polynomial `(a·x + b) mod p` over the
//! Mersenne prime `p = 2⁶¹ − 1`, with `(a, b)` drawn uniformly from `Z_p`.
//! [`BitHash`] reduces the result to `{0, 1}` by its low bit, [`BucketHash`]
//! reduces it to `[τ]` by floor-scaling. Nothing is tabulated: every value is
//! recomputed from the coefficients on demand.
//!
//! [`BitHash`] also carries the algebra the estimators compose: complements,
//! entrywise (HAD) products, bucket indicators and explicit 0/1 vectors.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// The field modulus, `2⁶¹ − 1`.
pub const PRIME: u64 = (1 << 61) - 1;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed for sub-stream `tag` of `parent`.
///
/// All randomness in the crate hangs off one master seed through this
/// function, so every experiment is replayable from `(seed, tags)`.
#[inline]
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix64(parent ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Maps a 64-bit hash to the open interval `(0, 1)`.
#[inline]
pub fn unit_open(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn reduce(x: u128) -> u64 {
    let p = PRIME as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    let mut r = r as u64;
    if r >= PRIME {
        r -= PRIME;
    }
    r
}

#[inline]
fn affine(a: u64, b: u64, x: u64) -> u64 {
    reduce(a as u128 * x as u128 + b as u128)
}

fn draw_coefficients(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.gen_range(0..PRIME), rng.gen_range(0..PRIME))
}

/// A pairwise-independent hash `H: [n] → [τ]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketHash {
    seed: u64,
    n: usize,
    tau: u64,
    a: u64,
    b: u64,
}

impl BucketHash {
    pub fn new(seed: u64, n: usize, tau: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("bucket hash needs n >= 1"));
        }
        if tau == 0 || tau >= PRIME {
            return Err(Error::domain(format!("bucket count {tau} outside [1, 2^61)")));
        }
        let (a, b) = draw_coefficients(seed);
        Ok(Self { seed, n, tau, a, b })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn buckets(&self) -> u64 {
        self.tau
    }

    /// Bucket of row `i`, in `1..=τ`.
    #[inline]
    pub fn bucket(&self, i: usize) -> u64 {
        let v = affine(self.a, self.b, i as u64);
        ((v as u128 * self.tau as u128) / PRIME as u128) as u64 + 1
    }

    /// The indicator `H_k(i) = 1 ⟺ H(i) = k` as a [`BitHash`].
    pub fn indicator(&self, k: u64) -> BitHash {
        BitHash { n: self.n, inverted: false, kind: Kind::Bucket { hash: Arc::new(self.clone()), bucket: k } }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Affine { seed: u64, a: u64, b: u64 },
    Constant(bool),
    Bucket { hash: Arc<BucketHash>, bucket: u64 },
    Explicit(Arc<[bool]>),
    Product(Arc<[BitHash]>),
}

/// A 0/1 function on `[n]`.
///
/// Usually a seeded pairwise-independent hash, but any 0/1 vector is a valid
/// row mask for the estimators, so constants, explicit vectors and bucket
/// indicators share the type. Complement and HAD products compose freely.
#[derive(Debug, Clone, PartialEq)]
pub struct BitHash {
    n: usize,
    inverted: bool,
    kind: Kind,
}

impl BitHash {
    /// A uniform pairwise-independent hash `H: [n] → {0, 1}`.
    pub fn new(seed: u64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("bit hash needs n >= 1"));
        }
        let (a, b) = draw_coefficients(seed);
        Ok(Self { n, inverted: false, kind: Kind::Affine { seed, a, b } })
    }

    pub fn ones(n: usize) -> Self {
        Self { n, inverted: false, kind: Kind::Constant(true) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, inverted: false, kind: Kind::Constant(false) }
    }

    /// An explicit mask; `bits[i - 1]` is the value at row `i`.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::domain("explicit mask needs n >= 1"));
        }
        Ok(Self { n: bits.len(), inverted: false, kind: Kind::Explicit(bits.into()) })
    }

    /// The mask admitting exactly `rows` (1-based).
    pub fn from_rows(n: usize, rows: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in rows {
            if i == 0 || i > n {
                return Err(Error::domain(format!("row {i} outside [1, {n}]")));
            }
            bits[i - 1] = true;
        }
        Self::from_bits(bits)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    /// The seed of a plain seeded hash, `None` for derived masks.
    pub fn seed(&self) -> Option<u64> {
        match self.kind {
            Kind::Affine { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Constant value, if the mask is a constant.
    pub fn constant(&self) -> Option<bool> {
        match self.kind {
            Kind::Constant(v) => Some(v ^ self.inverted),
            _ => None,
        }
    }

    #[inline]
    pub fn admits(&self, i: usize) -> bool {
        debug_assert!(i >= 1 && i <= self.n, "row {i} outside [1, {}]", self.n);
        let raw = match &self.kind {
            Kind::Affine { a, b, .. } => affine(*a, *b, i as u64) & 1 == 1,
            Kind::Constant(v) => *v,
            Kind::Bucket { hash, bucket } => hash.bucket(i) == *bucket,
            Kind::Explicit(bits) => bits[i - 1],
            Kind::Product(factors) => factors.iter().all(|f| f.admits(i)),
        };
        raw ^ self.inverted
    }

    #[inline]
    pub fn eval(&self, i: usize) -> u8 {
        self.admits(i) as u8
    }

    /// All values `H(1), …, H(n)`.
    pub fn evaluate(&self) -> Vec<u8> {
        (1..=self.n).map(|i| self.eval(i)).collect()
    }

    /// Rows with `H(i) = 1`, ascending.
    pub fn support(&self) -> Vec<usize> {
        (1..=self.n).filter(|&i| self.admits(i)).collect()
    }

    /// `H̄(i) = 1 − H(i)`.
    pub fn complement(&self) -> Self {
        Self { n: self.n, inverted: !self.inverted, kind: self.kind.clone() }
    }

    /// Entrywise product `HAD(self, other)`.
    pub fn had(&self, other: &BitHash) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::domain(format!("HAD of masks over different domains ({} vs {})", self.n, other.n)));
        }
        let mut factors = Vec::new();
        for h in [self, other] {
            match (&h.kind, h.inverted) {
                (Kind::Product(inner), false) => factors.extend(inner.iter().cloned()),
                (Kind::Constant(v), inv) if v ^ inv => {}
                _ => factors.push(h.clone()),
            }
        }
        Ok(match factors.len() {
            0 => Self::ones(self.n),
            1 => factors.pop().unwrap(),
            _ => Self { n: self.n, inverted: false, kind: Kind::Product(factors.into()) },
        })
    }

    /// Serializable description: `(seed, inverted)` for seeded hashes and
    /// `constant` for constant masks.
    pub(crate) fn descriptor(&self) -> Option<MaskDescriptor> {
        match self.kind {
            Kind::Affine { seed, .. } => Some(MaskDescriptor::Seeded { seed, inverted: self.inverted }),
            Kind::Constant(v) => Some(MaskDescriptor::Constant(v ^ self.inverted)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MaskDescriptor {
    Constant(bool),
    Seeded { seed: u64, inverted: bool },
}

impl MaskDescriptor {
    pub(crate) fn build(self, n: usize) -> Result<BitHash> {
        match self {
            MaskDescriptor::Constant(true) => Ok(BitHash::ones(n)),
            MaskDescriptor::Constant(false) => Ok(BitHash::zeros(n)),
            MaskDescriptor::Seeded { seed, inverted } => {
                let h = BitHash::new(seed, n)?;
                Ok(if inverted { h.complement() } else { h })
            }
        }
    }
}
