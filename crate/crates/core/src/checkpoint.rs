//! Velocity-network checkpoint files.
//!
//! Layout, all little-endian:
//!   magic "PFLW" | version u32 | n_dims u32 | layer_dims u32… |
//!   time_features u32 | activation u8 | weights f64… | biases f64…
//!
//! Weights are written row-major in layer order, then all biases in layer
//! order. Round-trips are bit-exact.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, VelocityFieldParams};
use crate::numerics::{Matrix, Vector};

const MAGIC: &[u8; 4] = b"PFLW";
const VERSION: u32 = 1;

pub fn write_checkpoint(params: &VelocityFieldParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    encode(params, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<VelocityFieldParams> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

pub fn encode(params: &VelocityFieldParams, out: &mut Vec<u8>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(params.layer_dims.len() as u32).to_le_bytes())?;
    for &d in &params.layer_dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&(params.time_features as u32).to_le_bytes())?;
    out.write_all(&[params.activation.tag()])?;
    for w in &params.weights {
        for &v in w.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for b in &params.biases {
        for &v in b.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<VelocityFieldParams> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Config("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let n_dims = r.u32()? as usize;
    if n_dims < 2 || n_dims > 64 {
        return Err(Error::Config(format!("implausible layer count {n_dims}")));
    }
    let mut layer_dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        layer_dims.push(r.u32()? as usize);
    }
    let time_features = r.u32()? as usize;
    let activation = Activation::from_tag(r.u8()?)?;

    let data_dim = *layer_dims.last().unwrap();
    if layer_dims[0] != data_dim + 2 * time_features + 1 {
        return Err(Error::Config(format!(
            "input dim {} inconsistent with data dim {} and {} time features",
            layer_dims[0], data_dim, time_features
        )));
    }

    let mut weights = Vec::with_capacity(n_dims - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut data = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            data.push(r.f64()?);
        }
        weights.push(Matrix::new(fan_out, fan_in, data)?);
    }
    let mut biases = Vec::with_capacity(n_dims - 1);
    for w in layer_dims.windows(2) {
        let fan_out = w[1];
        let mut data = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            data.push(r.f64()?);
        }
        biases.push(Vector::new(data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Config(format!(
            "trailing bytes in checkpoint: {} of {} consumed",
            r.pos,
            bytes.len()
        )));
    }
    Ok(VelocityFieldParams { layer_dims, weights, biases, time_features, activation })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Config("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = RngState::new(17);
        let p = VelocityFieldParams::init(4, &[8, 8], 2, &mut rng);
        let mut buf = Vec::new();
        encode(&p, &mut buf).unwrap();
        let q = decode(&buf).unwrap();
        assert_eq!(p, q);
        let mut buf2 = Vec::new();
        encode(&q, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut rng = RngState::new(18);
        let p = VelocityFieldParams::init(2, &[4], 1, &mut rng);
        let mut buf = Vec::new();
        encode(&p, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());

        let truncated = &buf[..buf.len() - 3];
        assert!(decode(truncated).is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let mut rng = RngState::new(19);
        let p = VelocityFieldParams::init(2, &[6], 3, &mut rng);
        let dir = std::env::temp_dir().join("pflow-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.pflw");
        write_checkpoint(&p, &path).unwrap();
        let q = read_checkpoint(&path).unwrap();
        assert_eq!(p, q);
    }
}
