//! Binary factor-model checkpoint.
//!
//! Little-endian layout, version 1:
//!
//! ```text
//! magic            8 bytes  "CFPXCKPT"
//! version          u32      1
//! dim              u32
//! n_users          u32
//! n_items          u32
//! iterations       u32
//! regularization   f64
//! init_scale       f64
//! seed             u64
//! user ids         n_users x u32 (ascending)
//! item ids         n_items x u32 (ascending)
//! user factors     n_users x dim x f64, row-major
//! item factors     n_items x dim x f64, row-major
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use cfprox_core::mf::{FactorModel, TrainConfig};
use cfprox_core::{ItemId, UserId};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"CFPXCKPT";
pub const VERSION: u32 = 1;

pub fn encode(model: &FactorModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(
        48 + 4 * (model.users().len() + model.items().len())
            + 8 * (model.user_factors().len() + model.item_factors().len()),
    );
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        c.embedding_dim as u32,
        model.users().len() as u32,
        model.items().len() as u32,
        c.iterations as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.regularization.to_le_bytes());
    out.extend_from_slice(&c.init_scale.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    for u in model.users() {
        out.extend_from_slice(&u.0.to_le_bytes());
    }
    for i in model.items() {
        out.extend_from_slice(&i.0.to_le_bytes());
    }
    for x in model.user_factors().iter().chain(model.item_factors()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        let end = self.at + N;
        let bytes = self
            .buf
            .get(self.at..end)
            .ok_or_else(|| format!("truncated checkpoint at byte {}", self.at))?;
        self.at = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<FactorModel, String> {
    let mut c = Cursor { buf: bytes, at: 0 };
    if &c.take::<8>()? != MAGIC {
        return Err("not a cfprox checkpoint (bad magic)".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let dim = c.u32()? as usize;
    let n_users = c.u32()? as usize;
    let n_items = c.u32()? as usize;
    let iterations = c.u32()? as usize;
    let config = TrainConfig {
        embedding_dim: dim,
        iterations,
        regularization: c.f64()?,
        init_scale: c.f64()?,
        seed: c.u64()?,
    };
    let expected = c.at + 4 * (n_users + n_items) + 8 * dim * (n_users + n_items);
    if bytes.len() != expected {
        return Err(format!(
            "checkpoint is {} bytes, header implies {expected}",
            bytes.len()
        ));
    }
    let users = (0..n_users)
        .map(|_| c.u32().map(UserId))
        .collect::<std::result::Result<_, _>>()?;
    let items = (0..n_items)
        .map(|_| c.u32().map(ItemId))
        .collect::<std::result::Result<_, _>>()?;
    let uf = (0..n_users * dim)
        .map(|_| c.f64())
        .collect::<std::result::Result<_, _>>()?;
    let itf = (0..n_items * dim)
        .map(|_| c.f64())
        .collect::<std::result::Result<_, _>>()?;
    FactorModel::from_parts(config, users, items, uf, itf).map_err(|e| e.to_string())
}

pub fn save(model: &FactorModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<FactorModel> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::Data(format!("{}: {m}", path.display())))
}
