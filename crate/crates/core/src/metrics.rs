//! Reconstruction and distribution metrics.
//!
//! PSNR uses peak-to-peak 2 because images live in [-1, 1]; every CSV header
//! downstream records that convention. SSIM is the windowed index with
//! stabilizers scaled to the same range; its luminance term compares mean
//! differences, which makes the index invariant under a common intensity
//! shift. Energy distance serves as the two-sample oracle for generative
//! quality.

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// PSNR cap applied when inputs are (nearly) identical.
pub const PSNR_CAP_DB: f64 = 100.0;
/// Peak-to-peak range of the [-1, 1] image convention.
pub const DATA_RANGE: f64 = 2.0;

pub fn mse(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "mse: dims differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.dim() as f64;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// 10·log10(range² / MSE), capped at 100 dB; identical inputs hit the cap.
pub fn psnr(a: &Vector, b: &Vector) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (DATA_RANGE * DATA_RANGE / m).log10()).min(PSNR_CAP_DB))
}

const SSIM_C1: f64 = (0.01 * DATA_RANGE) * (0.01 * DATA_RANGE);
const SSIM_C2: f64 = (0.03 * DATA_RANGE) * (0.03 * DATA_RANGE);

/// Mean local structural similarity over all valid windows (no padding).
///
/// Inputs are square images flattened row-major. Moments are computed in
/// centered form so that adding the same constant to both images leaves the
/// index unchanged to rounding.
pub fn ssim(a: &Vector, b: &Vector, window: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "ssim: dims differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let side = (a.dim() as f64).sqrt().round() as usize;
    if side * side != a.dim() {
        return Err(Error::Config(format!(
            "ssim expects square images, got {} pixels",
            a.dim()
        )));
    }
    if window % 2 == 0 || window == 0 {
        return Err(Error::Config(format!("ssim window must be odd, got {window}")));
    }
    if side < window {
        return Err(Error::Config(format!(
            "image side {side} smaller than window {window}"
        )));
    }

    let npix = (window * window) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(side - window) {
        for left in 0..=(side - window) {
            let mut ma = 0.0;
            let mut mb = 0.0;
            for r in top..top + window {
                for c in left..left + window {
                    ma += a[r * side + c];
                    mb += b[r * side + c];
                }
            }
            ma /= npix;
            mb /= npix;
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for r in top..top + window {
                for c in left..left + window {
                    let da = a[r * side + c] - ma;
                    let db = b[r * side + c] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= npix;
            vb /= npix;
            cov /= npix;

            let dm = ma - mb;
            let luminance = SSIM_C1 / (dm * dm + SSIM_C1);
            let contrast_structure = (2.0 * cov + SSIM_C2) / (va + vb + SSIM_C2);
            total += luminance * contrast_structure;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Energy distance between two samples (V-statistic form):
/// 2·E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖.
pub fn energy_distance(xs: &[Vector], ys: &[Vector]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Contract("energy distance needs non-empty samples".into()));
    }
    let cross = mean_pairwise(xs, ys);
    let within_x = mean_pairwise(xs, xs);
    let within_y = mean_pairwise(ys, ys);
    Ok(2.0 * cross - within_x - within_y)
}

fn mean_pairwise(xs: &[Vector], ys: &[Vector]) -> f64 {
    let mut total = 0.0;
    for x in xs {
        for y in ys {
            total += x.sub(y).norm();
        }
    }
    total / (xs.len() * ys.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_standard_normal, RngState};

    #[test]
    fn psnr_identical_hits_cap() {
        let a = Vector::new(vec![0.1, -0.5, 0.9, 0.0]);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn psnr_known_values() {
        // MSE 4 (full swing) -> 0 dB
        let a = Vector::new(vec![1.0; 4]);
        let b = Vector::new(vec![-1.0; 4]);
        assert!((psnr(&a, &b).unwrap() - 0.0).abs() < 1e-12);
        // MSE 0.04 -> 20 dB
        let c = Vector::new(vec![0.2; 4]);
        let d = Vector::new(vec![0.0; 4]);
        assert!((psnr(&c, &d).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric() {
        let mut rng = RngState::new(70);
        let a = sample_standard_normal(&mut rng, 16);
        let b = sample_standard_normal(&mut rng, 16);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_decreases_with_noise_scale() {
        // averaged over 50 seeds per scale; monotone in expectation
        let mut rng = RngState::new(71);
        let base = sample_standard_normal(&mut rng, 64).scale(0.3);
        let scales = [0.01, 0.05, 0.1, 0.3];
        let mut means = Vec::new();
        for &s in &scales {
            let mut acc = 0.0;
            for seed in 0..50 {
                let mut noise_rng = RngState::new(9000 + seed);
                let noisy = base.axpy(s, &sample_standard_normal(&mut noise_rng, 64));
                acc += psnr(&base, &noisy).unwrap();
            }
            means.push(acc / 50.0);
        }
        for w in means.windows(2) {
            assert!(w[0] > w[1], "psnr means not decreasing: {means:?}");
        }
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let mut rng = RngState::new(72);
        let a = sample_standard_normal(&mut rng, 64).scale(0.4);
        assert_eq!(ssim(&a, &a, 5).unwrap(), 1.0);
    }

    #[test]
    fn ssim_anticorrelated_is_nonpositive() {
        let mut rng = RngState::new(73);
        let mut a = sample_standard_normal(&mut rng, 256).scale(0.5);
        // zero the global mean
        let mean = a.as_slice().iter().sum::<f64>() / 256.0;
        for i in 0..256 {
            a[i] -= mean;
        }
        let b = a.scale(-1.0);
        assert!(ssim(&a, &b, 7).unwrap() <= 0.0);
    }

    #[test]
    fn ssim_invariant_to_common_shift() {
        let mut rng = RngState::new(74);
        let a = sample_standard_normal(&mut rng, 256).scale(0.3);
        let b = a.axpy(0.1, &sample_standard_normal(&mut rng, 256));
        let base = ssim(&a, &b, 7).unwrap();
        let shift = 0.4;
        let a2 = Vector::new(a.as_slice().iter().map(|v| v + shift).collect());
        let b2 = Vector::new(b.as_slice().iter().map(|v| v + shift).collect());
        let shifted = ssim(&a2, &b2, 7).unwrap();
        assert!((base - shifted).abs() <= 1e-9, "{base} vs {shifted}");
    }

    #[test]
    fn ssim_matches_windowed_recomputation() {
        // independent reference: recompute each window from scratch with
        // naive two-pass moments
        let mut rng = RngState::new(75);
        let a = sample_standard_normal(&mut rng, 256).scale(0.4);
        let b = sample_standard_normal(&mut rng, 256).scale(0.4);
        let window = 7;
        let got = ssim(&a, &b, window).unwrap();

        let side = 16;
        let mut total = 0.0;
        let mut count = 0;
        for top in 0..=side - window {
            for left in 0..=side - window {
                let mut pa = Vec::new();
                let mut pb = Vec::new();
                for r in top..top + window {
                    for c in left..left + window {
                        pa.push(a[r * side + c]);
                        pb.push(b[r * side + c]);
                    }
                }
                let n = pa.len() as f64;
                let ma = pa.iter().sum::<f64>() / n;
                let mb = pb.iter().sum::<f64>() / n;
                let va = pa.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
                let vb = pb.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / n;
                let cov = pa
                    .iter()
                    .zip(&pb)
                    .map(|(x, y)| (x - ma) * (y - mb))
                    .sum::<f64>()
                    / n;
                let l = SSIM_C1 / ((ma - mb) * (ma - mb) + SSIM_C1);
                let cs = (2.0 * cov + SSIM_C2) / (va + vb + SSIM_C2);
                total += l * cs;
                count += 1;
            }
        }
        let want = total / count as f64;
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn ssim_rejects_bad_shapes() {
        let a = Vector::zeros(15);
        assert!(ssim(&a, &a, 3).is_err()); // not square
        let b = Vector::zeros(16);
        assert!(ssim(&b, &b, 4).is_err()); // even window
        assert!(ssim(&b, &b, 7).is_err()); // window > side
    }

    #[test]
    fn energy_distance_same_distribution_is_small() {
        let mut rng = RngState::new(76);
        let xs: Vec<Vector> = (0..200).map(|_| sample_standard_normal(&mut rng, 2)).collect();
        let ys: Vec<Vector> = (0..200).map(|_| sample_standard_normal(&mut rng, 2)).collect();
        let zs: Vec<Vector> = (0..200)
            .map(|_| sample_standard_normal(&mut rng, 2).axpy(3.0, &Vector::new(vec![1.0, 0.0])))
            .collect();
        let same = energy_distance(&xs, &ys).unwrap();
        let diff = energy_distance(&xs, &zs).unwrap();
        assert!(same < 0.1, "same-distribution distance {same}");
        assert!(diff > 10.0 * same, "shifted distance {diff} vs {same}");
    }
}
