//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic `UPFM`
//!   u16 version (currently 1)
//!   u32 spec_len, then spec_len bytes of ModelSpec JSON
//!   u32 parameter count, then per parameter:
//!     u32 name_len, name bytes (UTF-8)
//!     u32 rank, rank * u32 dims
//!     numel * f64 values

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{ParamStore, Tensor};

use super::{ModelError, ModelSpec, Result};

const VERSION: u16 = 1;

pub fn save_checkpoint(path: &Path, spec: &ModelSpec, params: &ParamStore) -> Result<()> {
    let io = |e: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(b"UPFM").map_err(io)?;
    f.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    let spec_json = serde_json::to_vec(spec).expect("spec serializes");
    f.write_all(&(spec_json.len() as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&spec_json).map_err(io)?;

    let snap = params.snapshot();
    f.write_all(&(snap.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, value) in &snap {
        f.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        f.write_all(name.as_bytes()).map_err(io)?;
        f.write_all(&(value.shape().len() as u32).to_le_bytes()).map_err(io)?;
        for &d in value.shape() {
            f.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(value.numel() * 8);
        for &v in value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, BTreeMap<String, Tensor>)> {
    let io = |e: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let bad = |reason: &str| ModelError::BadCheckpoint {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut f = std::fs::File::open(path).map_err(io)?;

    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(io)?;
    if &magic != b"UPFM" {
        return Err(bad("bad magic"));
    }
    let mut v = [0u8; 2];
    f.read_exact(&mut v).map_err(io)?;
    if u16::from_le_bytes(v) != VERSION {
        return Err(bad("unsupported version"));
    }

    let read_u32 = |f: &mut std::fs::File| -> Result<u32> {
        let mut b = [0u8; 4];
        f.read_exact(&mut b).map_err(io)?;
        Ok(u32::from_le_bytes(b))
    };

    let spec_len = read_u32(&mut f)? as usize;
    let mut spec_buf = vec![0u8; spec_len];
    f.read_exact(&mut spec_buf).map_err(io)?;
    let spec: ModelSpec =
        serde_json::from_slice(&spec_buf).map_err(|e| bad(&format!("bad spec json: {e}")))?;

    let count = read_u32(&mut f)? as usize;
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut f)? as usize;
        let mut name_buf = vec![0u8; name_len];
        f.read_exact(&mut name_buf).map_err(io)?;
        let name = String::from_utf8(name_buf).map_err(|_| bad("non-utf8 parameter name"))?;
        let rank = read_u32(&mut f)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut f)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut buf = vec![0u8; numel * 8];
        f.read_exact(&mut buf).map_err(io)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor =
            Tensor::new(shape, data).map_err(|e| bad(&format!("bad tensor for {name}: {e}")))?;
        params.insert(name, tensor);
    }
    Ok((spec, params))
}
