//! `RODW` weight files: magic, `u32` version, then one record per parameter
//! tensor (`u16` name length, name, `u8` rank, `u32` extents, `f32` payload),
//! all little-endian, until end of file.

use std::io::{Read, Write};

use crate::error::{NnError, Result};
use crate::model::{ModelConfig, RodnetModel};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RODW";
pub const VERSION: u32 = 1;

/// Upper bound on elements per tensor, so a corrupt header cannot trigger a
/// huge allocation.
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| NnError::Checkpoint(format!("name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u8::try_from(t.rank()).map_err(|_| NnError::Checkpoint(format!("rank too large for {name}")))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| NnError::Checkpoint(format!("extent too large in {name}")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean EOF before the first byte.
fn read_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(NnError::Checkpoint("truncated record".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    if read_or_eof(r, buf)? {
        Ok(())
    } else {
        Err(NnError::Checkpoint(format!("unexpected end of file reading {what}")))
    }
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<NamedTensor>> {
    let mut head = [0u8; 8];
    read_exact(&mut r, &mut head, "header")?;
    if &head[..4] != MAGIC {
        return Err(NnError::Checkpoint("bad magic, not a RODW file".into()));
    }
    let version = u32::from_le_bytes(head[4..].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 2];
        if !read_or_eof(&mut r, &mut len)? {
            break;
        }
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        let mut count: usize = 1;
        for _ in 0..rank[0] {
            let mut d = [0u8; 4];
            read_exact(&mut r, &mut d, "extent")?;
            let d = u32::from_le_bytes(d) as usize;
            count = count
                .checked_mul(d)
                .filter(|&c| c <= MAX_ELEMENTS)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {name} is implausibly large")))?;
            shape.push(d);
        }
        // Grow with the bytes actually present so a lying header cannot force
        // a huge allocation.
        let mut payload = Vec::new();
        (&mut r)
            .take(count as u64 * 4)
            .read_to_end(&mut payload)
            .map_err(NnError::from)?;
        if payload.len() != count * 4 {
            return Err(NnError::Checkpoint("unexpected end of file reading payload".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor =
            Tensor::from_vec(&shape, data).map_err(|e| NnError::Checkpoint(format!("tensor {name}: {e}")))?;
        out.push(NamedTensor { name, tensor });
    }
    Ok(out)
}

pub fn save_model<W: Write>(w: W, model: &RodnetModel<f32>) -> Result<()> {
    write_tensors(w, &model.named_params())
}

/// Rebuilds the architecture from `config` and fills it from a weight file.
/// Names, order and shapes must agree exactly.
pub fn load_model<R: Read>(r: R, config: ModelConfig) -> Result<RodnetModel<f32>> {
    let tensors = read_tensors(r)?;
    let mut model = RodnetModel::<f32>::new(config)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != tensors.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint holds {} tensors, model configuration needs {}",
            tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), t) in expected.iter().zip(&tensors) {
        if *name != t.name || shape.as_slice() != t.tensor.shape() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint/config mismatch: expected {name} {shape:?}, found {} {:?}",
                t.name,
                t.tensor.shape()
            )));
        }
    }
    for (dst, t) in model.params_mut().into_iter().zip(tensors) {
        *dst = t.tensor;
    }
    Ok(model)
}
