//! Binary observation records.
//!
//! Same endian convention as checkpoints (everything little-endian):
//!   magic "PFOB" | version u32 | kind tag u8 | kind params |
//!   noise_sigma f64 | y len u32 + f64… | ground truth flag u8 [+ data] |
//!   restored flag u8 [+ data]
//!
//! A solve appends its final image by rewriting the record with the
//! `restored` field set.

use std::path::Path;

use crate::degrade::{LinearOperator, Observation, OperatorKind};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

const MAGIC: &[u8; 4] = b"PFOB";
const VERSION: u32 = 1;

const TAG_IDENTITY: u8 = 0;
const TAG_BLUR: u8 = 1;
const TAG_DOWNSAMPLE: u8 = 2;
const TAG_RANDOM_MASK: u8 = 3;
const TAG_BOX_MASK: u8 = 4;
const TAG_DENSE: u8 = 5;

/// An observation plus the optional image a solver produced from it.
#[derive(Debug, Clone)]
pub struct ObservationRecord {
    pub observation: Observation,
    pub restored: Option<Vector>,
}

pub fn write_observation(record: &ObservationRecord, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    encode(record, &mut buf);
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_observation(path: &Path) -> Result<ObservationRecord> {
    decode(&std::fs::read(path)?)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_vector(out: &mut Vec<u8>, v: &Vector) {
    push_u32(out, v.dim() as u32);
    for &x in v.as_slice() {
        push_f64(out, x);
    }
}

pub fn encode(record: &ObservationRecord, out: &mut Vec<u8>) {
    let obs = &record.observation;
    out.extend_from_slice(MAGIC);
    push_u32(out, VERSION);
    match &obs.operator.kind {
        OperatorKind::IdentityDenoise { n } => {
            out.push(TAG_IDENTITY);
            push_u32(out, *n as u32);
        }
        OperatorKind::GaussianBlur { height, width, kernel_size, kernel_sigma, .. } => {
            out.push(TAG_BLUR);
            push_u32(out, *height as u32);
            push_u32(out, *width as u32);
            push_u32(out, *kernel_size as u32);
            push_f64(out, *kernel_sigma);
        }
        OperatorKind::Downsample { height, width, factor } => {
            out.push(TAG_DOWNSAMPLE);
            push_u32(out, *height as u32);
            push_u32(out, *width as u32);
            push_u32(out, *factor as u32);
        }
        OperatorKind::RandomMask { height, width, mask_ratio, mask_seed, .. } => {
            out.push(TAG_RANDOM_MASK);
            push_u32(out, *height as u32);
            push_u32(out, *width as u32);
            push_f64(out, *mask_ratio);
            push_u64(out, *mask_seed);
        }
        OperatorKind::BoxMask { height, width, box_height, box_width, .. } => {
            out.push(TAG_BOX_MASK);
            push_u32(out, *height as u32);
            push_u32(out, *width as u32);
            push_u32(out, *box_height as u32);
            push_u32(out, *box_width as u32);
        }
        OperatorKind::Dense { matrix } => {
            out.push(TAG_DENSE);
            push_u32(out, matrix.rows() as u32);
            push_u32(out, matrix.cols() as u32);
            for &x in matrix.as_slice() {
                push_f64(out, x);
            }
        }
    }
    push_f64(out, obs.operator.noise_sigma);
    push_vector(out, &obs.y);
    match &obs.ground_truth {
        Some(gt) => {
            out.push(1);
            push_vector(out, gt);
        }
        None => out.push(0),
    }
    match &record.restored {
        Some(r) => {
            out.push(1);
            push_vector(out, r);
        }
        None => out.push(0),
    }
}

pub fn decode(bytes: &[u8]) -> Result<ObservationRecord> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Config("not an observation record (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Config(format!("unsupported observation version {version}")));
    }
    let tag = r.u8()?;
    let kind = match tag {
        TAG_IDENTITY => {
            let n = r.u32()? as usize;
            OperatorKind::IdentityDenoise { n }
        }
        TAG_BLUR => {
            let h = r.u32()? as usize;
            let w = r.u32()? as usize;
            let k = r.u32()? as usize;
            let s = r.f64()?;
            // rebuild via the constructor so the dense matrix is consistent
            LinearOperator::gaussian_blur(h, w, k, s, 0.0)?.kind
        }
        TAG_DOWNSAMPLE => {
            let h = r.u32()? as usize;
            let w = r.u32()? as usize;
            let f = r.u32()? as usize;
            OperatorKind::Downsample { height: h, width: w, factor: f }
        }
        TAG_RANDOM_MASK => {
            let h = r.u32()? as usize;
            let w = r.u32()? as usize;
            let ratio = r.f64()?;
            let seed = r.u64()?;
            LinearOperator::random_mask(h, w, ratio, seed, 0.0)?.kind
        }
        TAG_BOX_MASK => {
            let h = r.u32()? as usize;
            let w = r.u32()? as usize;
            let bh = r.u32()? as usize;
            let bw = r.u32()? as usize;
            LinearOperator::box_mask(h, w, bh, bw, 0.0)?.kind
        }
        TAG_DENSE => {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64()?);
            }
            OperatorKind::Dense { matrix: Matrix::new(rows, cols, data)? }
        }
        other => return Err(Error::Config(format!("unknown operator tag {other}"))),
    };
    let noise_sigma = r.f64()?;
    let operator = LinearOperator { kind, noise_sigma };
    let y = r.vector()?;
    if y.dim() != operator.out_dim() {
        return Err(Error::Config(format!(
            "observation dim {} does not match operator output dim {}",
            y.dim(),
            operator.out_dim()
        )));
    }
    let ground_truth = if r.u8()? == 1 { Some(r.vector()?) } else { None };
    let restored = if r.u8()? == 1 { Some(r.vector()?) } else { None };
    if r.pos != bytes.len() {
        return Err(Error::Config("trailing bytes in observation record".into()));
    }
    Ok(ObservationRecord {
        observation: Observation { y, operator, ground_truth },
        restored,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Config("observation record truncated".into()));
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
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn vector(&mut self) -> Result<Vector> {
        let n = self.u32()? as usize;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        Ok(Vector::new(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::task_preset;
    use crate::numerics::{sample_standard_normal, RngState};

    #[test]
    fn roundtrip_every_kind() {
        let mut rng = RngState::new(1000);
        let ops = vec![
            task_preset("denoise").unwrap(),
            task_preset("blur").unwrap(),
            task_preset("sr").unwrap(),
            task_preset("random-inpaint").unwrap(),
            task_preset("box-inpaint").unwrap(),
            LinearOperator::dense(Matrix::new(1, 2, vec![0.5, 0.5]).unwrap(), 0.05),
        ];
        for op in ops {
            let x = sample_standard_normal(&mut rng, op.in_dim());
            let obs = op.degrade(&x, &mut rng).unwrap();
            let record = ObservationRecord {
                observation: obs,
                restored: Some(sample_standard_normal(&mut rng, op.in_dim())),
            };
            let mut buf = Vec::new();
            encode(&record, &mut buf);
            let back = decode(&buf).unwrap();
            assert_eq!(back.observation.operator, record.observation.operator);
            assert_eq!(back.observation.y.as_slice(), record.observation.y.as_slice());
            assert_eq!(
                back.observation.ground_truth.as_ref().unwrap().as_slice(),
                record.observation.ground_truth.as_ref().unwrap().as_slice()
            );
            assert_eq!(
                back.restored.as_ref().unwrap().as_slice(),
                record.restored.as_ref().unwrap().as_slice()
            );
            // bit-exact re-encode
            let mut buf2 = Vec::new();
            encode(&back, &mut buf2);
            assert_eq!(buf, buf2);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"nope").is_err());
        let record = ObservationRecord {
            observation: Observation {
                y: Vector::zeros(4),
                operator: LinearOperator::identity(4, 0.0),
                ground_truth: None,
            },
            restored: None,
        };
        let mut buf = Vec::new();
        encode(&record, &mut buf);
        buf.truncate(buf.len() - 1);
        assert!(decode(&buf).is_err());
    }
}
