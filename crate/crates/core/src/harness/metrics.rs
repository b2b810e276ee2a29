//! PSNR and windowed SSIM.

use super::HarnessError;
use crate::tensor::Tensor;

/// SSIM window edge.
pub const SSIM_WINDOW: usize = 8;

fn check_shapes(op: &'static str, x: &Tensor, y: &Tensor) -> Result<(), HarnessError> {
    if x.shape() != y.shape() {
        return Err(HarnessError::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op,
            left: x.shape().to_vec(),
            right: y.shape().to_vec(),
        }));
    }
    Ok(())
}

pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64, HarnessError> {
    check_shapes("mse", x, y)?;
    let n = x.numel().max(1) as f64;
    Ok(x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `10·log10(MAX² / MSE)`; identical inputs give `+∞`.
pub fn psnr(x: &Tensor, y: &Tensor, max_value: f64) -> Result<f64, HarnessError> {
    let m = mse(x, y)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    // 10·log10(MAX²/MSE), split so exact powers of ten stay exact
    Ok(20.0 * max_value.log10() - 10.0 * m.log10())
}

/// Mean SSIM over 8×8 uniform windows (stride 1), channels and batch.
/// Uses population statistics within each window.
pub fn ssim(x: &Tensor, y: &Tensor, max_value: f64) -> Result<f64, HarnessError> {
    check_shapes("ssim", x, y)?;
    let (b, c, h, w) = x.dims4()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(HarnessError::Config(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (xd, yd) = (x.data(), y.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for plane in 0..b * c {
        let base = plane * h * w;
        for wy in 0..=h - SSIM_WINDOW {
            for wx in 0..=w - SSIM_WINDOW {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    let row = base + (wy + dy) * w + wx;
                    for (&a, &bv) in xd[row..row + SSIM_WINDOW].iter().zip(&yd[row..row + SSIM_WINDOW]) {
                        sx += a;
                        sy += bv;
                        sxx += a * a;
                        syy += bv * bv;
                        sxy += a * bv;
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = sxx / n - mx * mx;
                let vy = syy / n - my * my;
                let cov = sxy / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_known_mse_is_20db() {
        // four of 100 pixels off by 0.5: MSE = 0.01
        let x = Tensor::zeros(&[1, 1, 10, 10]);
        let y = Tensor::from_fn(&[1, 1, 10, 10], |i| if i % 25 == 0 { 0.5 } else { 0.0 });
        assert_eq!(mse(&x, &y).unwrap(), 0.01);
        assert_eq!(psnr(&x, &y, 1.0).unwrap(), 20.0);
        assert!(psnr(&x, &x, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn ssim_identity_and_constants() {
        let x = Tensor::from_fn(&[1, 2, 9, 11], |i| ((i * 37) % 17) as f64 / 17.0);
        assert_eq!(ssim(&x, &x, 1.0).unwrap(), 1.0);
        let c = Tensor::full(&[1, 1, 8, 8], 0.4);
        assert_eq!(ssim(&c, &c, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn small_image_is_rejected() {
        let x = Tensor::zeros(&[1, 1, 7, 20]);
        assert!(ssim(&x, &x, 1.0).is_err());
    }
}
