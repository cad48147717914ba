//! Synthetic target distributions.
//!
//! Four samplers stand in for the data distribution: three classic 2D toys
//! and a procedural 16x16 grayscale shapes dataset. Every sample lands in
//! [-1, 1]^d and sampling is deterministic given the stream state.

use crate::error::{Error, Result};
use crate::numerics::{RngState, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    GaussMixture2d,
    TwoMoons2d,
    Checkerboard2d,
    SynthGray16,
}

impl DatasetKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gauss-mixture-2d" => Ok(DatasetKind::GaussMixture2d),
            "two-moons-2d" => Ok(DatasetKind::TwoMoons2d),
            "checkerboard-2d" => Ok(DatasetKind::Checkerboard2d),
            "synth-gray-16x16" => Ok(DatasetKind::SynthGray16),
            other => Err(Error::Config(format!(
                "unknown dataset '{other}'; valid: gauss-mixture-2d, two-moons-2d, checkerboard-2d, synth-gray-16x16"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::GaussMixture2d => "gauss-mixture-2d",
            DatasetKind::TwoMoons2d => "two-moons-2d",
            DatasetKind::Checkerboard2d => "checkerboard-2d",
            DatasetKind::SynthGray16 => "synth-gray-16x16",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetKind::SynthGray16 => 256,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub kind: DatasetKind,
}

impl ToyDataset {
    pub fn new(kind: DatasetKind) -> Self {
        ToyDataset { kind }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn sample(&self, rng: &mut RngState) -> Vector {
        match self.kind {
            DatasetKind::GaussMixture2d => sample_gauss_mixture(rng),
            DatasetKind::TwoMoons2d => sample_two_moons(rng),
            DatasetKind::Checkerboard2d => sample_checkerboard(rng),
            DatasetKind::SynthGray16 => sample_synth_gray(rng),
        }
    }

    pub fn sample_batch(&self, n: usize, rng: &mut RngState) -> Vec<Vector> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

fn clamp_unit(v: &mut Vector) {
    for i in 0..v.dim() {
        v[i] = v[i].clamp(-1.0, 1.0);
    }
}

/// Eight Gaussians on a circle of radius 0.75, std 0.05.
fn sample_gauss_mixture(rng: &mut RngState) -> Vector {
    let k = rng.next_index(8);
    let angle = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
    let mut v = Vector::new(vec![
        0.75 * angle.cos() + 0.05 * rng.next_normal(),
        0.75 * angle.sin() + 0.05 * rng.next_normal(),
    ]);
    clamp_unit(&mut v);
    v
}

/// Two interleaved half-circles with noise 0.05, rescaled into the unit box.
fn sample_two_moons(rng: &mut RngState) -> Vector {
    let theta = std::f64::consts::PI * rng.next_uniform();
    let (mut x, mut y) = if rng.next_u64() & 1 == 0 {
        (theta.cos(), theta.sin())
    } else {
        (1.0 - theta.cos(), 0.5 - theta.sin())
    };
    x += 0.05 * rng.next_normal();
    y += 0.05 * rng.next_normal();
    // raw range: x in [-1, 2], y in [-0.5, 1]
    let mut v = Vector::new(vec![(x - 0.5) / 1.6, (y - 0.25) / 0.85]);
    clamp_unit(&mut v);
    v
}

/// Uniform over the black cells of a 4x4 checkerboard on [-1, 1]^2.
fn sample_checkerboard(rng: &mut RngState) -> Vector {
    loop {
        let i = rng.next_index(4);
        let j = rng.next_index(4);
        if (i + j) % 2 == 0 {
            let x = -1.0 + 0.5 * (i as f64 + rng.next_uniform());
            let y = -1.0 + 0.5 * (j as f64 + rng.next_uniform());
            let mut v = Vector::new(vec![x, y]);
            clamp_unit(&mut v);
            return v;
        }
    }
}

const IMG: usize = 16;
const SUBSAMPLES: usize = 3;

#[derive(Clone, Copy)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (x - cx) / rx;
                let dy = (y - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
        }
    }
}

/// Procedurally rendered anti-aliased shapes on a dark background.
fn sample_synth_gray(rng: &mut RngState) -> Vector {
    let background = -1.0 + 0.4 * rng.next_uniform();
    let mut img = vec![background; IMG * IMG];
    let n_shapes = 1 + rng.next_index(2);
    for _ in 0..n_shapes {
        let cx = 3.0 + 10.0 * rng.next_uniform();
        let cy = 3.0 + 10.0 * rng.next_uniform();
        let intensity = 0.1 + 0.9 * rng.next_uniform();
        let shape = if rng.next_u64() & 1 == 0 {
            Shape::Ellipse {
                cx,
                cy,
                rx: 2.0 + 4.0 * rng.next_uniform(),
                ry: 2.0 + 4.0 * rng.next_uniform(),
            }
        } else {
            Shape::Rect {
                cx,
                cy,
                hw: 1.5 + 3.5 * rng.next_uniform(),
                hh: 1.5 + 3.5 * rng.next_uniform(),
            }
        };
        for py in 0..IMG {
            for px in 0..IMG {
                // coverage by subsampling
                let mut hits = 0;
                for sy in 0..SUBSAMPLES {
                    for sx in 0..SUBSAMPLES {
                        let x = px as f64 + (sx as f64 + 0.5) / SUBSAMPLES as f64;
                        let y = py as f64 + (sy as f64 + 0.5) / SUBSAMPLES as f64;
                        if shape.contains(x, y) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let cov = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                    let p = &mut img[py * IMG + px];
                    *p = (1.0 - cov) * *p + cov * intensity;
                }
            }
        }
    }
    let mut v = Vector::new(img);
    clamp_unit(&mut v);
    v
}
