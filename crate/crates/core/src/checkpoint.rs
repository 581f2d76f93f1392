//! `WSCK` checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "WSCK"            4 bytes
//! version           u16 (= 1)
//! flags             u8   bit0 average, bit1 first moment, bit2 second moment
//! segment count     u32
//! per segment:      name length u16, UTF-8 name, rank u8, rank x u64 dims
//! payloads:         theta, then each flagged set, as f64 values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Segment};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

const FLAG_AVERAGE: u8 = 1;
const FLAG_M: u8 = 2;
const FLAG_V: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub theta: ParameterSet<T>,
    pub average: Option<ParameterSet<T>>,
    pub m: Option<ParameterSet<T>>,
    pub v: Option<ParameterSet<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(theta: ParameterSet<T>) -> Self {
        Self {
            theta,
            average: None,
            m: None,
            v: None,
        }
    }

    fn extras(&self) -> [(u8, Option<&ParameterSet<T>>); 3] {
        [
            (FLAG_AVERAGE, self.average.as_ref()),
            (FLAG_M, self.m.as_ref()),
            (FLAG_V, self.v.as_ref()),
        ]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(64 + 8 * self.theta.len() * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mut flags = 0u8;
        for (flag, set) in self.extras() {
            if let Some(set) = set {
                self.theta.check_layout(set)?;
                flags |= flag;
            }
        }
        out.push(flags);
        let segs = self.theta.segments();
        out.extend_from_slice(&u32::try_from(segs.len()).map_err(|_| Error::Shape("too many segments".into()))?.to_le_bytes());
        for seg in segs {
            let name = seg.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::Shape(format!("segment name too long: {}", seg.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            let rank = u8::try_from(seg.shape.len()).map_err(|_| Error::Shape(format!("rank too high: {}", seg.name)))?;
            out.push(rank);
            for &d in &seg.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        let mut payload = |set: &ParameterSet<T>| {
            for &x in set.values() {
                out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
            }
        };
        payload(&self.theta);
        for (_, set) in self.extras() {
            if let Some(set) = set {
                payload(set);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad magic, expected WSCK"));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let flags = r.take(1, "flags")?[0];
        if flags & !(FLAG_AVERAGE | FLAG_M | FLAG_V) != 0 {
            return Err(Error::format(6, format!("unknown flag bits {flags:#04x}")));
        }
        let count = u32::from_le_bytes(r.array("segment count")?) as usize;
        let mut segments = Vec::with_capacity(count.min(1 << 16));
        let mut offset = 0usize;
        for _ in 0..count {
            let at = r.pos as u64;
            let len = u16::from_le_bytes(r.array("name length")?) as usize;
            let name = std::str::from_utf8(r.take(len, "segment name")?)
                .map_err(|_| Error::format(at + 2, "segment name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.array("dimension")?);
                shape.push(usize::try_from(d).map_err(|_| Error::format(r.pos as u64 - 8, "dimension too large"))?);
            }
            let seg = Segment { name, shape, offset };
            offset = offset
                .checked_add(seg.len())
                .ok_or_else(|| Error::format(at, "parameter count overflows"))?;
            segments.push(seg);
        }
        let mut payload = |what: &str| -> Result<ParameterSet<T>> {
            let need = offset
                .checked_mul(8)
                .ok_or_else(|| Error::format(r.pos as u64, "payload size overflows"))?;
            let raw = r.take(need, what)?;
            let flat = raw
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
                .collect();
            ParameterSet::from_parts(segments.clone(), flat)
        };
        let theta = payload("theta payload")?;
        let average = (flags & FLAG_AVERAGE != 0).then(|| payload("average payload")).transpose()?;
        let m = (flags & FLAG_M != 0).then(|| payload("first-moment payload")).transpose()?;
        let v = (flags & FLAG_V != 0).then(|| payload("second-moment payload")).transpose()?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { theta, average, m, v })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.encode()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated {what} at byte {}", self.pos),
            )),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }
}
