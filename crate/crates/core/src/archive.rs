//! `.avnw` weight archives.
//!
//! Little-endian layout: `b"AVNW"`, `u32` version, `u32` tensor count; per
//! tensor a `u16` name length, the UTF-8 name, a `u8` trainable flag, a `u8`
//! rank, `rank` × `u64` dims and the `f32` payload in row-major order; then a
//! `u32` length and the UTF-8 `key=value` text of the training config.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{load_pretrained, AvNet, LoadReport, ParameterStore};
use crate::tensor::Tensor;
use crate::train::TrainConfig;

pub const MAGIC: [u8; 4] = *b"AVNW";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightArchive {
    /// Parameters and buffers, in model order.
    pub store: ParameterStore<f32>,
    pub config: TrainConfig,
}

impl WeightArchive {
    pub fn from_model(model: &AvNet<f32>, config: &TrainConfig) -> Self {
        let mut store = model.store().clone();
        store.zero_grads();
        Self { store, config: config.clone() }
    }

    /// Builds a model from the archived config and loads every tensor
    /// strictly.
    pub fn to_model(&self) -> Result<AvNet<f32>> {
        let mut model = AvNet::build(self.config.model.clone(), self.config.seed)?;
        let report = load_pretrained(&mut model, &self.store, true)?;
        if report.loaded.len() != model.store().len() {
            return Err(Error::StrictLoad(format!(
                "archive holds {} of the model's {} tensors",
                report.loaded.len(),
                model.store().len()
            )));
        }
        Ok(model)
    }

    pub fn apply_to(&self, model: &mut AvNet<f32>, strict: bool) -> Result<LoadReport> {
        load_pretrained(model, &self.store, strict)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.store.len()).map_err(|_| Error::Archive("too many tensors".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (_, e) in self.store.iter() {
            let name = e.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::Archive(format!("name too long: {}", e.name)))?;
            let rank = u8::try_from(e.value.rank()).map_err(|_| Error::Archive(format!("rank too large: {}", e.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(u8::from(e.trainable));
            out.push(rank);
            for &d in e.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in e.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let text = self.config.to_kv();
        let len = u32::try_from(text.len()).map_err(|_| Error::Archive("config text too long".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        Ok(out)
    }

    /// Parses a complete archive. Nothing is returned unless every byte
    /// checks out.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Archive("bad magic, not an .avnw file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Archive(format!("unsupported version {version}, expected {VERSION}")));
        }
        let count = r.u32()?;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = core::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Archive("tensor name is not UTF-8".into()))?;
            let name = String::from(name);
            let trainable = match r.u8()? {
                0 => false,
                1 => true,
                f => return Err(Error::Archive(format!("{name}: bad trainable flag {f}"))),
            };
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Archive(format!("{name}: dim too large")))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4).map(|_| n))
                .ok_or_else(|| Error::Archive(format!("{name}: shape {shape:?} overflows")))?;
            let payload = r.take(numel * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(&name, Tensor::new(&shape, data)?, trainable)?;
        }
        let len = r.u32()? as usize;
        let text = core::str::from_utf8(r.take(len)?).map_err(|_| Error::Archive("config text is not UTF-8".into()))?;
        let config = TrainConfig::from_kv(text)?;
        if r.pos != bytes.len() {
            return Err(Error::Archive(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { store, config })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
