//! Linear degradation operators: y = Hx + n.
//!
//! Every operator exposes an exact adjoint satisfying ⟨Hx, r⟩ = ⟨x, Hᵀr⟩,
//! which the data-fidelity gradient relies on. Images are flattened
//! row-major; 2D kinds carry (height, width) metadata.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// Identity observation; degradation is the additive noise alone.
    IdentityDenoise { n: usize },
    /// Dense convolution matrix with reflective padding, kernel L1-normalized.
    GaussianBlur {
        height: usize,
        width: usize,
        kernel_size: usize,
        kernel_sigma: f64,
        matrix: Matrix,
    },
    /// Block-mean downsampling by an integer factor.
    Downsample { height: usize, width: usize, factor: usize },
    /// Keep a random subset of pixels; the rest are unobserved.
    RandomMask {
        height: usize,
        width: usize,
        mask_ratio: f64,
        mask_seed: u64,
        keep: Vec<usize>,
    },
    /// Remove a centered box; observe everything outside it.
    BoxMask {
        height: usize,
        width: usize,
        box_height: usize,
        box_width: usize,
        keep: Vec<usize>,
    },
    /// Arbitrary explicit matrix; used for low-dimensional task analogs
    /// and oracle constructions.
    Dense { matrix: Matrix },
}

/// A linear forward operator with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub kind: OperatorKind,
    pub noise_sigma: f64,
}

/// A degraded measurement, optionally paired with the ground truth that
/// produced it (for evaluation only; solvers never see it).
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: Vector,
    pub operator: LinearOperator,
    pub ground_truth: Option<Vector>,
}

fn reflect(i: isize, n: usize) -> usize {
    // symmetric reflection: -1 -> 0, n -> n-1
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn blur_matrix(height: usize, width: usize, kernel_size: usize, kernel_sigma: f64) -> Matrix {
    let n = height * width;
    let half = (kernel_size / 2) as isize;
    // L1-normalized Gaussian kernel
    let mut kernel = Vec::with_capacity(kernel_size * kernel_size);
    let mut total = 0.0;
    for dy in -half..=half {
        for dx in -half..=half {
            let w = (-((dy * dy + dx * dx) as f64) / (2.0 * kernel_sigma * kernel_sigma)).exp();
            kernel.push(w);
            total += w;
        }
    }
    for w in kernel.iter_mut() {
        *w /= total;
    }

    let mut m = Matrix::zeros(n, n);
    for r in 0..height {
        for c in 0..width {
            let out_idx = r * width + c;
            let mut ki = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let sr = reflect(r as isize + dy, height);
                    let sc = reflect(c as isize + dx, width);
                    m[(out_idx, sr * width + sc)] += kernel[ki];
                    ki += 1;
                }
            }
        }
    }
    m
}

fn mask_keep_set(n: usize, mask_ratio: f64, seed: u64) -> Vec<usize> {
    let masked = ((n as f64) * mask_ratio).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = RngState::new(seed);
    // Fisher-Yates; the first `masked` entries are dropped
    for i in (1..n).rev() {
        let j = rng.next_index(i + 1);
        indices.swap(i, j);
    }
    let mut keep: Vec<usize> = indices[masked..].to_vec();
    keep.sort_unstable();
    keep
}

fn box_keep_set(height: usize, width: usize, box_height: usize, box_width: usize) -> Vec<usize> {
    let top = (height - box_height) / 2;
    let left = (width - box_width) / 2;
    let mut keep = Vec::with_capacity(height * width - box_height * box_width);
    for r in 0..height {
        for c in 0..width {
            let inside = r >= top && r < top + box_height && c >= left && c < left + box_width;
            if !inside {
                keep.push(r * width + c);
            }
        }
    }
    keep
}

impl LinearOperator {
    pub fn identity(n: usize, noise_sigma: f64) -> Self {
        LinearOperator { kind: OperatorKind::IdentityDenoise { n }, noise_sigma }
    }

    pub fn gaussian_blur(
        height: usize,
        width: usize,
        kernel_size: usize,
        kernel_sigma: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if kernel_size % 2 == 0 || kernel_size == 0 {
            return Err(Error::Config("blur kernel size must be odd".into()));
        }
        if kernel_size / 2 >= height.min(width) {
            return Err(Error::Config("blur kernel larger than the image".into()));
        }
        Ok(LinearOperator {
            kind: OperatorKind::GaussianBlur {
                height,
                width,
                kernel_size,
                kernel_sigma,
                matrix: blur_matrix(height, width, kernel_size, kernel_sigma),
            },
            noise_sigma,
        })
    }

    pub fn downsample(height: usize, width: usize, factor: usize, noise_sigma: f64) -> Result<Self> {
        if factor == 0 || height % factor != 0 || width % factor != 0 {
            return Err(Error::Config(format!(
                "downsample factor {factor} must divide {height}x{width}"
            )));
        }
        Ok(LinearOperator {
            kind: OperatorKind::Downsample { height, width, factor },
            noise_sigma,
        })
    }

    pub fn random_mask(
        height: usize,
        width: usize,
        mask_ratio: f64,
        mask_seed: u64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&mask_ratio) {
            return Err(Error::Config(format!("mask ratio {mask_ratio} not in [0,1)")));
        }
        let keep = mask_keep_set(height * width, mask_ratio, mask_seed);
        if keep.is_empty() {
            return Err(Error::Config("mask leaves no observed pixels".into()));
        }
        Ok(LinearOperator {
            kind: OperatorKind::RandomMask { height, width, mask_ratio, mask_seed, keep },
            noise_sigma,
        })
    }

    pub fn box_mask(
        height: usize,
        width: usize,
        box_height: usize,
        box_width: usize,
        noise_sigma: f64,
    ) -> Result<Self> {
        if box_height > height || box_width > width {
            return Err(Error::Config("box larger than the image".into()));
        }
        Ok(LinearOperator {
            kind: OperatorKind::BoxMask {
                height,
                width,
                box_height,
                box_width,
                keep: box_keep_set(height, width, box_height, box_width),
            },
            noise_sigma,
        })
    }

    pub fn dense(matrix: Matrix, noise_sigma: f64) -> Self {
        LinearOperator { kind: OperatorKind::Dense { matrix }, noise_sigma }
    }

    pub fn in_dim(&self) -> usize {
        match &self.kind {
            OperatorKind::IdentityDenoise { n } => *n,
            OperatorKind::GaussianBlur { height, width, .. } => height * width,
            OperatorKind::Downsample { height, width, .. } => height * width,
            OperatorKind::RandomMask { height, width, .. } => height * width,
            OperatorKind::BoxMask { height, width, .. } => height * width,
            OperatorKind::Dense { matrix } => matrix.cols(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            OperatorKind::IdentityDenoise { n } => *n,
            OperatorKind::GaussianBlur { height, width, .. } => height * width,
            OperatorKind::Downsample { height, width, factor } => (height / factor) * (width / factor),
            OperatorKind::RandomMask { keep, .. } => keep.len(),
            OperatorKind::BoxMask { keep, .. } => keep.len(),
            OperatorKind::Dense { matrix } => matrix.rows(),
        }
    }

    /// y = Hx.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.in_dim() {
            return Err(Error::Contract(format!(
                "operator expects {}-vector, got {}",
                self.in_dim(),
                x.dim()
            )));
        }
        match &self.kind {
            OperatorKind::IdentityDenoise { .. } => Ok(x.clone()),
            OperatorKind::GaussianBlur { matrix, .. } => matrix.matvec(x),
            OperatorKind::Downsample { height, width, factor } => {
                let (oh, ow) = (height / factor, width / factor);
                let scale = 1.0 / (factor * factor) as f64;
                let mut out = vec![0.0; oh * ow];
                for r in 0..*height {
                    for c in 0..*width {
                        out[(r / factor) * ow + (c / factor)] += x[r * width + c] * scale;
                    }
                }
                Ok(Vector::new(out))
            }
            OperatorKind::RandomMask { keep, .. } | OperatorKind::BoxMask { keep, .. } => {
                Ok(Vector::new(keep.iter().map(|&i| x[i]).collect()))
            }
            OperatorKind::Dense { matrix } => matrix.matvec(x),
        }
    }

    /// Hᵀr; satisfies the inner-product identity exactly by construction.
    pub fn adjoint(&self, r: &Vector) -> Result<Vector> {
        if r.dim() != self.out_dim() {
            return Err(Error::Contract(format!(
                "adjoint expects {}-vector, got {}",
                self.out_dim(),
                r.dim()
            )));
        }
        match &self.kind {
            OperatorKind::IdentityDenoise { .. } => Ok(r.clone()),
            OperatorKind::GaussianBlur { matrix, .. } => matrix.matvec_transposed(r),
            OperatorKind::Downsample { height, width, factor } => {
                let ow = width / factor;
                let scale = 1.0 / (factor * factor) as f64;
                let mut out = vec![0.0; height * width];
                for r_out in 0..*height {
                    for c_out in 0..*width {
                        out[r_out * width + c_out] =
                            r[(r_out / factor) * ow + (c_out / factor)] * scale;
                    }
                }
                Ok(Vector::new(out))
            }
            OperatorKind::RandomMask { keep, .. } | OperatorKind::BoxMask { keep, .. } => {
                let mut out = vec![0.0; self.in_dim()];
                for (j, &i) in keep.iter().enumerate() {
                    out[i] = r[j];
                }
                Ok(Vector::new(out))
            }
            OperatorKind::Dense { matrix } => matrix.matvec_transposed(r),
        }
    }

    /// y = Hx + σz with z ~ N(0, I); keeps the ground truth for scoring.
    pub fn degrade(&self, x: &Vector, rng: &mut RngState) -> Result<Observation> {
        let clean = self.apply(x)?;
        let y = if self.noise_sigma > 0.0 {
            let mut y = clean;
            for i in 0..y.dim() {
                y[i] += self.noise_sigma * rng.next_normal();
            }
            y
        } else {
            clean
        };
        Ok(Observation { y, operator: self.clone(), ground_truth: Some(x.clone()) })
    }

    /// Zero-filled pullback of an observation into image space; the
    /// "degraded input" baseline that restoration is scored against.
    pub fn naive_reconstruction(&self, y: &Vector) -> Result<Vector> {
        match &self.kind {
            // each observed block mean is replicated, not re-scaled
            OperatorKind::Downsample { height, width, factor } => {
                let ow = width / factor;
                let mut out = vec![0.0; height * width];
                for r in 0..*height {
                    for c in 0..*width {
                        out[r * width + c] = y[(r / factor) * ow + (c / factor)];
                    }
                }
                Ok(Vector::new(out))
            }
            _ => self.adjoint(y),
        }
    }
}

/// The standard task names at 16x16 scale.
pub const TASK_NAMES: [&str; 5] = ["denoise", "blur", "sr", "random-inpaint", "box-inpaint"];

/// Scaled presets of the five restoration tasks on 16x16 images.
///
/// `mask_seed` only affects `random-inpaint`; sweep harnesses derive it from
/// the experiment seed so each cell sees a fresh mask.
pub fn task_preset_seeded(name: &str, mask_seed: u64) -> Result<LinearOperator> {
    const H: usize = 16;
    const W: usize = 16;
    match name {
        "denoise" => Ok(LinearOperator::identity(H * W, 0.2)),
        // 61x61 sigma 3.0 at 256 scales to 7x7 sigma ~0.75 at 16
        "blur" => LinearOperator::gaussian_blur(H, W, 7, 0.75, 0.05),
        "sr" => LinearOperator::downsample(H, W, 4, 0.05),
        "random-inpaint" => LinearOperator::random_mask(H, W, 0.7, mask_seed, 0.01),
        // 80^2 of 256^2 is ~9.8% area; 5x5 of 16x16 matches
        "box-inpaint" => LinearOperator::box_mask(H, W, 5, 5, 0.05),
        other => Err(Error::Config(format!(
            "unknown task preset '{other}'; valid names: {}",
            TASK_NAMES.join(", ")
        ))),
    }
}

pub fn task_preset(name: &str) -> Result<LinearOperator> {
    task_preset_seeded(name, 0)
}

/// Two-dimensional analogs of the five tasks, for diagnostics on toy flows.
pub fn toy_preset_2d(name: &str) -> Result<LinearOperator> {
    match name {
        "denoise" => Ok(LinearOperator::identity(2, 0.2)),
        "blur" => Ok(LinearOperator::dense(
            Matrix::new(2, 2, vec![0.75, 0.25, 0.25, 0.75])?,
            0.05,
        )),
        "sr" => Ok(LinearOperator::dense(Matrix::new(1, 2, vec![0.5, 0.5])?, 0.05)),
        "random-inpaint" => Ok(LinearOperator::dense(Matrix::new(1, 2, vec![1.0, 0.0])?, 0.01)),
        "box-inpaint" => Ok(LinearOperator::dense(Matrix::new(1, 2, vec![0.0, 1.0])?, 0.05)),
        other => Err(Error::Config(format!(
            "unknown 2d task analog '{other}'; valid names: {}",
            TASK_NAMES.join(", ")
        ))),
    }
}
