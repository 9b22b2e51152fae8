//! Weight file format.
//!
//! Little-endian binary: magic "MOPE", format version u32, tensor count
//! u32, then per tensor: name length u16 + UTF-8 name, rank u8, dims u32
//! each, raw 32-bit float payload. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MopeError, Result};
use crate::graph::{ParamKey, ParamStore};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MOPE";
pub const FORMAT_VERSION: u32 = 1;

/// Logical rank of a stored tensor: vector parameters (bias, gamma, beta)
/// are written rank 1, everything else rank 4.
fn logical_dims(key: &ParamKey, t: &Tensor) -> Vec<u32> {
    let s = t.shape();
    match key.role {
        crate::graph::ParamRole::Weight => {
            vec![s.n as u32, s.c as u32, s.h as u32, s.w as u32]
        }
        _ => vec![s.w as u32],
    }
}

pub fn save_weights(params: &ParamStore, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (key, tensor) in params.iter() {
        let name = key.name();
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let dims = logical_dims(key, tensor);
        out.write_all(&[dims.len() as u8])?;
        for d in &dims {
            out.write_all(&d.to_le_bytes())?;
        }
        for v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    /// Read exactly `buf.len()` bytes; a short read is a truncation at
    /// `context`.
    fn fill(&mut self, buf: &mut [u8], context: &str) -> Result<()> {
        let mut done = 0;
        while done < buf.len() {
            let n = self.inner.read(&mut buf[done..])?;
            if n == 0 {
                return Err(MopeError::Truncated(context.to_string()));
            }
            done += n;
        }
        Ok(())
    }

    fn u16_le(&mut self, context: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.fill(&mut b, context)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32_le(&mut self, context: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, context)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u8(&mut self, context: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b, context)?;
        Ok(b[0])
    }
}

pub fn load_weights(path: &Path) -> Result<ParamStore> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.fill(&mut magic, "<header>")?;
    if &magic != MAGIC {
        return Err(MopeError::BadMagic);
    }
    let version = r.u32_le("<header>")?;
    if version != FORMAT_VERSION {
        return Err(MopeError::UnsupportedVersion(version));
    }
    let count = r.u32_le("<header>")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let placeholder = format!("<tensor {i}>");
        let name_len = r.u16_le(&placeholder)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.fill(&mut name_bytes, &placeholder)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| MopeError::Parse(format!("tensor {i} has a non-UTF8 name")))?;
        let key = ParamKey::parse(&name).ok_or_else(|| MopeError::UnknownTensor(name.clone()))?;
        let rank = r.u8(&name)? as usize;
        if rank == 0 || rank > 4 {
            return Err(MopeError::Parse(format!(
                "tensor {name:?} has unsupported rank {rank}"
            )));
        }
        let mut dims = [1usize; 4];
        for d in 0..rank {
            dims[4 - rank + d] = r.u32_le(&name)? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let mut data = vec![0.0f32; shape.numel()];
        for v in data.iter_mut() {
            let mut b = [0u8; 4];
            r.fill(&mut b, &name)?;
            *v = f32::from_le_bytes(b);
        }
        store.insert(key, Tensor::from_vec(shape, data)?);
    }
    Ok(store)
}
