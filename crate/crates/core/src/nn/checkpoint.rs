//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "TSNN"
//! version    u32      1
//! n_entries  u32
//! entry*:
//!   name_len u16, name (utf-8)
//!   kind     u8       0 = network, 1 = vector
//!   dtype    u8       4 = f32, 8 = f64
//!   network: activation u8 (0 tanh, 1 relu), n_sizes u32, sizes u32*,
//!            n_params u64, params
//!   vector:  len u64, values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Mlp, NnError, Scalar};

const MAGIC: &[u8; 4] = b"TSNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointEntry {
    Net32(Mlp<f32>),
    Net64(Mlp<f64>),
    Vector(Vec<f64>),
}

/// Ordered list of named entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, CheckpointEntry)>,
}

fn err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(err("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn values<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>, NnError> {
        let w = T::DTYPE_TAG as usize;
        let raw = self.take(n.checked_mul(w).ok_or_else(|| err("length overflow"))?)?;
        Ok(raw.chunks_exact(w).map(T::read_le).collect())
    }
}

fn write_net<T: Scalar>(out: &mut Vec<u8>, net: &Mlp<T>) {
    out.push(T::DTYPE_TAG);
    out.push(net.hidden_activation().tag());
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for &p in net.params() {
        p.write_le(out);
    }
}

fn read_net<T: Scalar>(r: &mut Reader) -> Result<Mlp<T>, NnError> {
    let act = Activation::from_tag(r.u8()?).ok_or_else(|| err("unknown activation"))?;
    let n_sizes = r.u32()? as usize;
    let sizes = (0..n_sizes).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    let n_params = r.u64()? as usize;
    let params = r.values::<T>(n_params)?;
    Mlp::from_parts(sizes, act, params)
}

impl Checkpoint {
    pub fn push(&mut self, name: &str, entry: CheckpointEntry) {
        self.entries.push((name.to_string(), entry));
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn net32(&self, name: &str) -> Result<&Mlp<f32>, NnError> {
        match self.get(name) {
            Some(CheckpointEntry::Net32(n)) => Ok(n),
            _ => Err(err(format!("missing f32 network '{name}'"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64], NnError> {
        match self.get(name) {
            Some(CheckpointEntry::Vector(v)) => Ok(v),
            _ => Err(err(format!("missing vector '{name}'"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                CheckpointEntry::Net32(n) => {
                    out.push(0);
                    write_net(&mut out, n);
                }
                CheckpointEntry::Net64(n) => {
                    out.push(0);
                    write_net(&mut out, n);
                }
                CheckpointEntry::Vector(v) => {
                    out.push(1);
                    out.push(8);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for &x in v {
                        x.write_le(&mut out);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| err("bad name"))?;
            let kind = r.u8()?;
            let dtype = r.u8()?;
            let entry = match (kind, dtype) {
                (0, 4) => CheckpointEntry::Net32(read_net(&mut r)?),
                (0, 8) => CheckpointEntry::Net64(read_net(&mut r)?),
                (1, 8) => {
                    let len = r.u64()? as usize;
                    CheckpointEntry::Vector(r.values::<f64>(len)?)
                }
                _ => return Err(err(format!("unknown entry kind {kind}/{dtype}"))),
            };
            entries.push((name, entry));
        }
        if r.pos != buf.len() {
            return Err(err("trailing bytes"));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn save_load_forward_is_bit_identical(seed in 0u64..1000, hidden in 1usize..20, relu in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let act = if relu { Activation::Relu } else { Activation::Tanh };
            let net: Mlp<f32> = Mlp::new(&[5, hidden, 3], act, 1.0, &mut rng).unwrap();
            let net64: Mlp<f64> = Mlp::new(&[2, 3], act, 1.0, &mut rng).unwrap();
            let mut ck = Checkpoint::default();
            ck.push("net", CheckpointEntry::Net32(net.clone()));
            ck.push("net64", CheckpointEntry::Net64(net64.clone()));
            ck.push("stats", CheckpointEntry::Vector(vec![seed as f64, -0.5, f64::MAX]));
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            prop_assert_eq!(&back, &ck);
            let x = Matrix::from_vec(2, 5, (0..10).map(|i| i as f32 * 0.1 - 0.3).collect()).unwrap();
            let a = net.predict(&x).unwrap();
            let b = back.net32("net").unwrap().predict(&x).unwrap();
            prop_assert_eq!(
                a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut ck = Checkpoint::default();
        ck.push("v", CheckpointEntry::Vector(vec![1.0]));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
