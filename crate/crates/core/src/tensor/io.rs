//! Binary tensor files: a 16-byte header of four little-endian `u32` dims
//! (B, C, H, W) followed by the values as little-endian `f64`.

use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub fn write_tensor<W: Write>(mut out: W, t: &Tensor) -> Result<(), TensorError> {
    let (b, c, h, w) = t.dims4()?;
    for d in [b, c, h, w] {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<Tensor, TensorError> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    let dims: Vec<usize> = header
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(TensorError::Format(format!(
            "header {dims:?} needs {} data bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor::from_fn(&[1, 2, 3, 2], |i| (i as f64).sin() / 3.0);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 16 + 12 * 8);
        assert_eq!(read_tensor(&buf[..]).unwrap(), t);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let t = Tensor::zeros(&[1, 1, 2, 2]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        buf.pop();
        assert!(matches!(read_tensor(&buf[..]), Err(TensorError::Format(_))));
    }
}
