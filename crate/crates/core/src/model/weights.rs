//! SDLW weights file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "SDLW"
//! version u32      currently 1
//! then, repeated until end of file:
//!   name_len u32
//!   name     name_len bytes of UTF-8
//!   rank     u32
//!   dims     rank x u32
//!   data     prod(dims) x f32, raw little-endian bits
//! ```
//!
//! Save writes tensors in model traversal order; load validates every record
//! against the target model before touching it, so a truncated or mismatched
//! file never leaves a partially-updated model behind.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Model;

pub const SDLW_MAGIC: &[u8; 4] = b"SDLW";
pub const SDLW_VERSION: u32 = 1;

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(SDLW_MAGIC)?;
    out.write_all(&SDLW_VERSION.to_le_bytes())?;
    let mut err = None;
    model.visit_tensors(&mut |name, tensor| {
        if err.is_some() {
            return;
        }
        if let Err(e) = write_record(&mut out, &name, tensor) {
            err = Some(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    out.flush()?;
    Ok(())
}

fn write_record(out: &mut impl Write, name: &str, tensor: &Tensor) -> Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(tensor.dims().len() as u32).to_le_bytes())?;
    for &d in tensor.dims() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in tensor.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated SDLW file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads every record of an SDLW file into a name -> tensor map.
pub fn read_weight_records(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != SDLW_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}: not an SDLW weights file"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != SDLW_VERSION {
        return Err(Error::Format(format!(
            "unsupported SDLW version {version} (expected {SDLW_VERSION})"
        )));
    }
    let mut map = BTreeMap::new();
    while !r.is_empty() {
        let name_len = read_u32(&mut r, "tensor name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact_or(&mut r, &mut name_bytes, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r, "tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r, "tensor dims")? as usize);
        }
        let count: usize = dims.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b = [0u8; 4];
            read_exact_or(&mut r, &mut b, &format!("data of {name:?}"))?;
            data.push(f32::from_le_bytes(b));
        }
        let tensor = Tensor::new(&dims, data)
            .map_err(|e| Error::Format(format!("tensor {name:?}: {e}")))?;
        if map.insert(name.clone(), tensor).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name:?}")));
        }
    }
    Ok(map)
}

/// Loads an SDLW file into `model`. Every model tensor must be present with
/// a matching shape and the file must contain nothing else; validation runs
/// completely before the first assignment.
pub fn load_weights(path: &Path, model: &mut Model) -> Result<()> {
    let records = read_weight_records(path)?;

    // Validation pass.
    let mut missing: Option<String> = None;
    let mut mismatch: Option<(String, String, String)> = None;
    let mut seen = 0usize;
    model.visit_tensors(&mut |name, tensor| {
        if missing.is_some() || mismatch.is_some() {
            return;
        }
        match records.get(&name) {
            None => missing = Some(name),
            Some(rec) => {
                if rec.dims() != tensor.dims() {
                    mismatch = Some((name, tensor.shape().to_string(), rec.shape().to_string()));
                } else {
                    seen += 1;
                }
            }
        }
    });
    if let Some(name) = missing {
        return Err(Error::Format(format!(
            "weights file is missing tensor {name:?}"
        )));
    }
    if let Some((name, want, got)) = mismatch {
        return Err(Error::Shape(format!(
            "tensor {name:?}: model expects {want}, file has {got}"
        )));
    }
    if seen != records.len() {
        let model_names: std::collections::BTreeSet<String> = {
            let mut s = std::collections::BTreeSet::new();
            model.visit_tensors(&mut |name, _| {
                s.insert(name);
            });
            s
        };
        let extra = records
            .keys()
            .find(|k| !model_names.contains(*k))
            .cloned()
            .unwrap_or_default();
        return Err(Error::Format(format!(
            "weights file contains tensor {extra:?} not present in the model"
        )));
    }

    // Commit pass.
    model.visit_tensors_mut(&mut |name, tensor| {
        *tensor = records[&name].clone();
    });
    Ok(())
}
