//! Versioned binary checkpoints for the two sketches.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    "ISKS"
//! version  u16
//! kind     u8        1 = BA1, 2 = BA2
//! mask     u8 tag    0 = all-zero, 1 = all-one, 2 = seeded
//!          u64 seed, u8 inverted   (seeded masks only)
//! n, k, seed          u64 each
//! truncation          f64         (+∞ for BA1)
//! counters            u64 each    BA1: m, F_S    BA2: m
//! accumulators        f64 each    BA1: A1[k], A2[k]    BA2: B1[k], B2[k], B3[k]
//! ```
//!
//! Only constant and plain seeded masks are serializable; derived masks
//! (products, bucket indicators, explicit vectors) are rebuilt by callers.

use crate::hashing::{BitHash, MaskDescriptor};
use crate::{Error, Result};

use super::im::Ba2Family;
use super::{CoefficientFamily, IMMatrixSketch, StableL1VectorSketch};

const MAGIC: &[u8; 4] = b"ISKS";
pub const VERSION: u16 = 1;
const KIND_BA1: u8 = 1;
const KIND_BA2: u8 = 2;

/// A sketch decoded from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Stable(StableL1VectorSketch),
    Im(IMMatrixSketch),
}

impl StableL1VectorSketch {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::header(KIND_BA1, &self.mask)?;
        w.u64(self.n as u64);
        w.u64(self.reps() as u64);
        w.u64(self.seed());
        w.f64(f64::INFINITY);
        w.u64(self.m);
        w.u64(self.f_s);
        w.f64s(&self.a1);
        w.f64s(&self.a2);
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match decode(bytes)? {
            Checkpoint::Stable(s) => Ok(s),
            Checkpoint::Im(_) => Err(Error::Checkpoint("expected a BA1 checkpoint, found BA2".into())),
        }
    }
}

impl IMMatrixSketch {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::header(KIND_BA2, &self.mask)?;
        w.u64(self.n as u64);
        w.u64(self.reps() as u64);
        w.u64(self.seed);
        w.f64(self.truncation());
        w.u64(self.m);
        w.f64s(&self.b1);
        w.f64s(&self.b2);
        w.f64s(&self.b3);
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match decode(bytes)? {
            Checkpoint::Im(s) => Ok(s),
            Checkpoint::Stable(_) => Err(Error::Checkpoint("expected a BA2 checkpoint, found BA1".into())),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let descriptor = match r.u8()? {
        0 => MaskDescriptor::Constant(false),
        1 => MaskDescriptor::Constant(true),
        2 => MaskDescriptor::Seeded { seed: r.u64()?, inverted: r.u8()? != 0 },
        t => return Err(Error::Checkpoint(format!("unknown mask tag {t}"))),
    };
    let n = r.u64()? as usize;
    let k = r.u64()? as usize;
    let seed = r.u64()?;
    let truncation = r.f64()?;
    if n == 0 || k == 0 {
        return Err(Error::Checkpoint("zero domain or repetition count".into()));
    }
    let mask = descriptor.build(n).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let out = match kind {
        KIND_BA1 => {
            let (m, f_s) = (r.u64()?, r.u64()?);
            let (a1, a2) = (r.f64s(k)?, r.f64s(k)?);
            Checkpoint::Stable(StableL1VectorSketch {
                n,
                mask,
                family: CoefficientFamily::stratified(seed, k),
                a1,
                a2,
                f_s,
                m,
            })
        }
        KIND_BA2 => {
            let m = r.u64()?;
            let (b1, b2, b3) = (r.f64s(k)?, r.f64s(k)?, r.f64s(k)?);
            Checkpoint::Im(IMMatrixSketch { n, mask, seed, family: Ba2Family::new(seed, k, truncation), b1, b2, b3, m })
        }
        t => return Err(Error::Checkpoint(format!("unknown sketch kind {t}"))),
    };
    if !r.0.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: u8, mask: &BitHash) -> Result<Self> {
        let mut w = Writer(MAGIC.to_vec());
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.0.push(kind);
        match mask.descriptor() {
            Some(MaskDescriptor::Constant(v)) => w.0.push(v as u8),
            Some(MaskDescriptor::Seeded { seed, inverted }) => {
                w.0.push(2);
                w.u64(seed);
                w.0.push(inverted as u8);
            }
            None => return Err(Error::Checkpoint("only constant or seeded masks can be checkpointed".into())),
        }
        Ok(w)
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.0.len() < len {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.0.split_at(len);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamEvent;

    #[test]
    fn round_trips() {
        let mask = BitHash::new(3, 6).unwrap().complement();
        let mut a = StableL1VectorSketch::new(6, mask.clone(), 9, 4).unwrap();
        let mut b = IMMatrixSketch::new(6, BitHash::ones(6), 9, 4).unwrap();
        for (i, j) in [(1, 2), (6, 6), (3, 1)] {
            a.ingest(StreamEvent::new(i, j)).unwrap();
            b.ingest(StreamEvent::new(i, j)).unwrap();
        }
        assert_eq!(StableL1VectorSketch::from_bytes(&a.to_bytes().unwrap()).unwrap(), a);
        assert_eq!(IMMatrixSketch::from_bytes(&b.to_bytes().unwrap()).unwrap(), b);
        assert!(IMMatrixSketch::from_bytes(&a.to_bytes().unwrap()).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let s = IMMatrixSketch::new(4, BitHash::zeros(4), 3, 1).unwrap();
        let bytes = s.to_bytes().unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
        let derived = BitHash::from_rows(4, &[1, 2]).unwrap();
        assert!(IMMatrixSketch::new(4, derived, 3, 1).unwrap().to_bytes().is_err());
    }
}
