//! Debug dump: a 16-byte header of four little-endian `u32` extents
//! (N, C, H, W) followed by the elements as little-endian `f32`.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

pub fn write_dump<W: Write>(t: &Tensor, mut w: W) -> Result<()> {
    for d in t.shape() {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<Tensor> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    let mut shape = [0usize; 4];
    for (i, d) in shape.iter_mut().enumerate() {
        *d = u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().expect("4 bytes")) as usize;
    }
    let mut bytes = vec![0u8; numel(&shape) * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Tensor::from_vec(shape, data).map_err(|e| TensorError::Format(e.to_string()))
}
