//! Reconstruction metrics.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Mean squared error over every entry.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let sse: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / pred.len() as f64)
}

/// Peak signal-to-noise ratio for signals with unit peak.
pub fn psnr(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    Ok(psnr_from_mse(mse_loss(pred, target)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    -10.0 * mse.log10()
}

/// PSNR after quantizing the prediction to 8 bits (clamped to `[0, 1]`).
pub fn psnr_quantized(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    let q = pred.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
    psnr(q.view(), target)
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, unit dynamic range, averaged over the valid
/// region and over channels.
///
/// Images are flattened `width·height × channels` with the column index
/// varying fastest.
pub fn ssim(pred: ArrayView2<f64>, target: ArrayView2<f64>, width: usize, height: usize) -> Result<f64> {
    if pred.dim() != target.dim() || pred.nrows() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "ssim needs two {}×{} images, got {:?} and {:?}",
            width,
            height,
            pred.dim(),
            target.dim()
        )));
    }
    const R: usize = 5;
    if width <= 2 * R || height <= 2 * R {
        return Err(Error::ShapeMismatch("ssim needs images larger than 11×11".into()));
    }
    let w: Vec<f64> = {
        let raw: Vec<f64> = (0..=2 * R)
            .map(|i| {
                let d = i as f64 - R as f64;
                (-d * d / (2.0 * 1.5 * 1.5)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..pred.ncols() {
        let img = |a: ArrayView2<f64>| Array2::from_shape_fn((height, width), |(r, c)| a[[r * width + c, ch]]);
        let (x, y) = (img(pred), img(target));
        let blur = |a: &Array2<f64>| separable_valid(a, &w);
        let (mx, my) = (blur(&x), blur(&y));
        let sxx = blur(&(&x * &x));
        let syy = blur(&(&y * &y));
        let sxy = blur(&(&x * &y));
        let mut acc = 0.0;
        for ((((&a, &b), &xx), &yy), &xy) in mx.iter().zip(&my).zip(&sxx).zip(&syy).zip(&sxy) {
            let (vx, vy, cov) = (xx - a * a, yy - b * b, xy - a * b);
            acc += ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / pred.ncols() as f64)
}

fn separable_valid(a: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let k = w.len();
    let (h, wd) = a.dim();
    let rows = Array2::from_shape_fn((h, wd + 1 - k), |(r, c)| (0..k).map(|i| w[i] * a[[r, c + i]]).sum::<f64>());
    Array2::from_shape_fn((h + 1 - k, wd + 1 - k), |(r, c)| {
        (0..k).map(|i| w[i] * rows[[r + i, c]]).sum::<f64>()
    })
}
