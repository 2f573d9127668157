//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "NUWAVCKP"
//! version          u32      (currently 1)
//! config_len       u32
//! config           config_len bytes of compact JSON (ModelConfig)
//! train_step       u64
//! n_tensors        u32
//! n_tensors times:
//!   name_len       u16
//!   name           name_len bytes, UTF-8
//!   ndim           u8
//!   dims           ndim x u32
//!   values         prod(dims) x f32
//! has_optimizer    u8 (0 or 1)
//! if has_optimizer:
//!   lr, beta1, beta2, eps   4 x f64
//!   step_count              u64
//!   first moments           for each tensor, prod(dims) x f32
//!   second moments          for each tensor, prod(dims) x f32
//! crc32            u32      IEEE CRC-32 of every preceding byte
//! ```
//!
//! Values are stored at 32-bit precision, so save -> load -> save is
//! byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{ModelConfig, NuWaveNetwork};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NUWAVCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub network: NuWaveNetwork<T>,
    pub optimizer: Option<AdamState<T>>,
    pub train_step: u64,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64)).collect())
    }
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, t: &Tensor<T>) {
    for v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(self.network.config())?;
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&self.train_step.to_le_bytes());

        out.extend_from_slice(&(self.network.params().len() as u32).to_le_bytes());
        for (name, t) in self.network.named_params() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put_f32s(&mut out, t);
        }

        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                let AdamConfig { lr, beta1, beta2, eps } = state.config;
                for v in [lr, beta1, beta2, eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&state.step_count.to_le_bytes());
                for m in state.first_moment.iter().chain(&state.second_moment) {
                    put_f32s(&mut out, m);
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)?;
        let train_step = r.u64()?;

        let n = r.u32()? as usize;
        let mut named = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            let data = r.f32s(numel)?;
            named.push((name, Tensor::new(shape, data)?));
        }
        let network = NuWaveNetwork::from_named(config, named)?;

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
                let step_count = r.u64()?;
                let read_set = |r: &mut Reader| {
                    network
                        .params()
                        .iter()
                        .map(|p| Tensor::new(p.shape().to_vec(), r.f32s(p.numel())?))
                        .collect::<Result<Vec<_>>>()
                };
                let first_moment = read_set(&mut r)?;
                let second_moment = read_set(&mut r)?;
                Some(AdamState { config, step_count, first_moment, second_moment })
            }
            flag => return Err(Error::Checkpoint(format!("bad optimizer flag {flag}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { network, optimizer, train_step })
    }

    /// Values as they will be read back: every float rounded through `f32`.
    pub fn at_stored_precision(&self) -> Result<Self> {
        Self::from_bytes(&self.to_bytes()?)
    }

    /// Fails with [`Error::ConfigMismatch`] if the stored model config differs
    /// from `expected`.
    pub fn expect_config(&self, expected: &ModelConfig) -> Result<()> {
        let found = self.network.config();
        if found != expected {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint config {found:?} differs from the run config {expected:?}"
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint<T: Scalar>(checkpoint: &Checkpoint<T>, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

/// Reads a checkpoint; with `expected` set, the stored config must match it.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint<T>> {
    let ckpt = Checkpoint::from_bytes(&fs::read(path)?)?;
    if let Some(cfg) = expected {
        ckpt.expect_config(cfg)?;
    }
    Ok(ckpt)
}
