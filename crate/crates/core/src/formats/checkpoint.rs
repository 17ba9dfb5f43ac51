//! Model checkpoints in a DRT1 container.
//!
//! ```text
//! "DRT1"
//! u32 0xFFFF_FFFF          container marker (never a valid tensor rank)
//! u32 manifest_len, manifest_len bytes of JSON manifest
//! u32 tensor_count
//! tensor_count × { u32 name_len, name (UTF-8), DRT1 tensor }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DripError, Result};
use crate::formats::drt1::{read_exact, read_tensor, read_u32, write_tensor, Tensor, MAGIC};
use crate::training::{ModelBundle, ModelConfig, NamedTensor};

pub const CONTAINER_MARKER: u32 = u32::MAX;
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u32 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub model: ModelConfig,
    /// Forward problem the model was trained for, e.g. `"deblur"`.
    pub task: Option<String>,
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &ModelBundle, task: Option<&str>) -> Result<()> {
    let manifest = Manifest { version: FORMAT_VERSION, model: model.config, task: task.map(str::to_owned) };
    let json = serde_json::to_vec(&manifest).map_err(|e| DripError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&CONTAINER_MARKER.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let tensors = model.named_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        write_tensor(w, &Tensor::new(t.dims, t.data)?)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ModelBundle, Manifest)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "checkpoint magic")?;
    if &magic != MAGIC || read_u32(r, "container marker")? != CONTAINER_MARKER {
        return Err(DripError::Format("not a DRT1 checkpoint".into()));
    }
    let len = read_u32(r, "manifest length")?;
    if len > MAX_HEADER {
        return Err(DripError::Format("manifest too large".into()));
    }
    let mut json = vec![0u8; len as usize];
    read_exact(r, &mut json, "manifest")?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| DripError::Format(format!("manifest: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(DripError::Format(format!("unsupported checkpoint version {}", manifest.version)));
    }
    let count = read_u32(r, "tensor count")?;
    if count > MAX_HEADER {
        return Err(DripError::Format("too many tensors".into()));
    }
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n = read_u32(r, "tensor name length")?;
        if n > MAX_HEADER {
            return Err(DripError::Format("tensor name too long".into()));
        }
        let mut name = vec![0u8; n as usize];
        read_exact(r, &mut name, "tensor name")?;
        let name = String::from_utf8(name).map_err(|_| DripError::Format("tensor name is not UTF-8".into()))?;
        let t = read_tensor(r)?;
        tensors.push(NamedTensor { name, dims: t.dims, data: t.data });
    }
    let mut model = ModelBundle::zeros(manifest.model)
        .map_err(|e| DripError::Format(format!("manifest describes an invalid model: {e}")))?;
    model.load_tensors(&tensors)?;
    Ok((model, manifest))
}

pub fn save_checkpoint(path: &Path, model: &ModelBundle, task: Option<&str>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, model, task)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, Manifest)> {
    read_checkpoint(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
