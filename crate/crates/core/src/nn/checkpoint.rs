//! Checkpoint file format. A checkpoint is the magic `PMIC`, a little-
//! endian u32 header length, a JSON header naming the architecture and the
//! exact parameter/buffer shapes, then every value as little-endian f64 in
//! visitation order. Shapes in the header let the loader refuse a file
//! that does not match the model it is being loaded into, rather than
//! silently reinterpreting bytes.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PMIC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub backbone: String,
    pub band: String,
    pub embedding_dim: usize,
    pub input_side: usize,
    pub param_shapes: Vec<Vec<usize>>,
    pub buffer_shapes: Vec<Vec<usize>>,
    /// Echo of the training configuration that produced the weights, for
    /// audit; never interpreted on load.
    pub train_config: Option<serde_json::Value>,
}

/// Writes header plus the given arrays (parameters first, then buffers).
pub fn save_checkpoint(
    path: &Path,
    header: &CheckpointHeader,
    params: &[&ArrayD<f64>],
    buffers: &[&ArrayD<f64>],
) -> Result<()> {
    debug_assert_eq!(header.param_shapes.len(), params.len());
    debug_assert_eq!(header.buffer_shapes.len(), buffers.len());
    let header_bytes = serde_json::to_vec(header).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: format!("header serialization: {e}"),
    })?;
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    file.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    file.write_all(&(header_bytes.len() as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    file.write_all(&header_bytes).map_err(|e| Error::io(path, e))?;
    for array in params.iter().chain(buffers.iter()) {
        for &v in array.iter() {
            file.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    file.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads only the header, leaving the weight blob untouched. Cheap enough
/// to call per file when scanning a directory of checkpoints.
pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| fail("file too short for magic".to_string()))?;
    if &magic != MAGIC {
        return Err(fail(format!("bad magic {magic:?}, not a checkpoint")));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| fail("file too short for header length".to_string()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| fail("file too short for header".to_string()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| fail(format!("header parse: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} unsupported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    Ok(header)
}

/// Reads a checkpoint back; array shapes come from the header.
pub fn load_checkpoint(
    path: &Path,
) -> Result<(CheckpointHeader, Vec<ArrayD<f64>>, Vec<ArrayD<f64>>)> {
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| fail("file too short for magic".to_string()))?;
    if &magic != MAGIC {
        return Err(fail(format!("bad magic {magic:?}, not a checkpoint")));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| fail("file too short for header length".to_string()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| fail("file too short for header".to_string()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| fail(format!("header parse: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} unsupported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }

    let mut read_arrays = |shapes: &[Vec<usize>]| -> Result<Vec<ArrayD<f64>>> {
        shapes
            .iter()
            .map(|shape| {
                let count: usize = shape.iter().product();
                let mut data = vec![0.0f64; count];
                let mut buf = [0u8; 8];
                for slot in &mut data {
                    file.read_exact(&mut buf)
                        .map_err(|_| fail("data section truncated".to_string()))?;
                    *slot = f64::from_le_bytes(buf);
                }
                ArrayD::from_shape_vec(shape.clone(), data)
                    .map_err(|e| fail(format!("shape mismatch in data: {e}")))
            })
            .collect()
    };
    let params = read_arrays(&header.param_shapes)?;
    let buffers = read_arrays(&header.buffer_shapes)?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(fail("trailing bytes after data section".to_string()));
    }
    Ok((header, params, buffers))
}
