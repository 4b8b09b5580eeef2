//! Gaussian scale-space queries without retraining.
//!
//! Convolving `exp(i2π f·x)` with `N(0, Σ)` scales it by
//! `exp(-½(2π)² fᵀΣf)`, since frequencies are stored in cycles. Attenuating
//! every encoding this way is exact for single encodings but misses the
//! cross terms of products, which [`correction_term`] approximates per term.

use std::f64::consts::TAU;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};

use crate::complex::{ComplexBatch, ComplexMatrix};
use crate::model::{encode, evaluate, EvalOptions, Encoding, PnfModel, Slot, TermId};
use crate::source::{CoordSource, PointSource};
use crate::{Error, Result};

/// A symmetric positive-semidefinite covariance in squared domain units.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    m: Array2<f64>,
}

impl Covariance {
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || n == 0 {
            return Err(Error::InvalidCovariance(format!("covariance must be square, got {:?}", m.dim())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("covariance has non-finite entries".into()));
        }
        let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidCovariance(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        check_psd(&m, 1e-12 * scale)?;
        Ok(Covariance { m })
    }

    pub fn zeros(dim: usize) -> Self {
        Covariance {
            m: Array2::zeros((dim, dim)),
        }
    }

    /// `var · I`.
    pub fn isotropic(dim: usize, var: f64) -> Result<Self> {
        Self::new(Array2::eye(dim) * var)
    }

    /// Isotropic blur of `sigma_px` pixels on a grid of `n` pixels per unit.
    pub fn from_pixels(dim: usize, sigma_px: f64, n: usize) -> Result<Self> {
        let s = sigma_px / n as f64;
        Self::isotropic(dim, s * s)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    /// `vᵀΣv`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += v[i] * self.m[[i, j]] * v[j];
            }
        }
        s
    }

    /// Gaussian attenuation of frequency `f` in cycles per unit.
    pub fn attenuation(&self, f: &[f64]) -> f64 {
        (-0.5 * TAU * TAU * self.quad(f)).exp()
    }
}

/// `LDLᵀ` without pivoting; a PSD matrix has non-negative pivots and a zero
/// pivot forces the rest of its column to vanish.
fn check_psd(m: &Array2<f64>, tol: f64) -> Result<()> {
    let n = m.nrows();
    let mut l = Array2::<f64>::eye(n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        d[j] = m[[j, j]] - (0..j).map(|k| l[[j, k]] * l[[j, k]] * d[k]).sum::<f64>();
        if d[j] < -tol {
            return Err(Error::InvalidCovariance(format!("negative pivot {:.3e}", d[j])));
        }
        for i in j + 1..n {
            let v = m[[i, j]] - (0..j).map(|k| l[[i, k]] * l[[j, k]] * d[k]).sum::<f64>();
            if d[j] <= tol {
                if v.abs() > tol {
                    return Err(Error::InvalidCovariance("not positive semidefinite".into()));
                }
                l[[i, j]] = 0.0;
            } else {
                l[[i, j]] = v / d[j];
            }
        }
    }
    Ok(())
}

fn check_dim(model_dim: usize, sigma: &Covariance) -> Result<()> {
    if sigma.dim() != model_dim {
        return Err(Error::DimensionMismatch {
            expected: model_dim,
            got: sigma.dim(),
        });
    }
    Ok(())
}

fn attenuations(e: &Encoding, sigma: &Covariance) -> Vec<f64> {
    e.freqs.rows().into_iter().map(|f| sigma.attenuation(f.as_slice().expect("contiguous row"))).collect()
}

/// Plain encoding with each column scaled by its Gaussian attenuation.
pub fn integrated_encoding(e: &Encoding, x: ArrayView2<f64>, sigma: &Covariance) -> Result<ComplexBatch> {
    check_dim(e.dim(), sigma)?;
    let mut out = encode(e, x)?;
    out.scale_columns(&attenuations(e, sigma));
    Ok(out)
}

/// Per-term interference correction
/// `exp(-½(2π)² dᵀΣd Σ_{a≠b} r̄_a r̄_b)` over ordered pairs of the factor
/// radii: the shell radius `lo_k` and the half-widths `Δ_l/2` of the chain
/// stages up to `k`. `d` is the branch fan direction.
pub fn correction_term(model: &PnfModel, id: TermId, sigma: &Covariance) -> Result<f64> {
    check_dim(model.dim(), sigma)?;
    model.term_band(id)?;
    let spec = &model.branches[id.branch].spec;
    let deltas = spec.chain_deltas();
    let mut radii = vec![spec.term_bands[id.term].0];
    radii.extend(deltas[..=id.term].iter().map(|d| d / 2.0));
    let sum: f64 = radii.iter().sum();
    let squares: f64 = radii.iter().map(|r| r * r).sum();
    let cross = sum * sum - squares;
    let dd = sigma.quad(spec.fan.dir.components());
    Ok((-0.5 * TAU * TAU * dd * cross).exp())
}

/// Shell factors then chain factors for one branch, by term.
type BranchFactors = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Wraps a source and attenuates every encoding it serves.
pub struct Attenuated<'a, S: ?Sized> {
    inner: &'a S,
    factors: Vec<BranchFactors>,
}

impl<'a, S: CoordSource + ?Sized> Attenuated<'a, S> {
    pub fn new(model: &PnfModel, inner: &'a S, sigma: &Covariance) -> Result<Self> {
        check_dim(model.dim(), sigma)?;
        let factors = model
            .branches
            .iter()
            .map(|b| {
                (
                    b.shell.iter().map(|e| attenuations(e, sigma)).collect(),
                    b.chain.iter().map(|e| attenuations(e, sigma)).collect(),
                )
            })
            .collect();
        Ok(Attenuated { inner, factors })
    }
}

impl<S: CoordSource + ?Sized> CoordSource for Attenuated<'_, S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn encode(&self, branch: usize, slot: Slot, enc: &Encoding, rows: Range<usize>) -> ComplexMatrix {
        let mut out = self.inner.encode(branch, slot, enc, rows);
        let (shell, chain) = &self.factors[branch];
        let f = match slot {
            Slot::Shell(k) => &shell[k],
            Slot::Chain(k) => &chain[k],
        };
        out.scale_columns(f);
        out
    }
}

/// Blurred model output over any coordinate source. With `corrected` each
/// term is also scaled by its [`correction_term`].
pub fn scale_query_source<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    sigma: &Covariance,
    corrected: bool,
    opts: EvalOptions,
) -> Result<Array2<f64>> {
    let att = Attenuated::new(model, src, sigma)?;
    let mut gains = model.unit_gains();
    if corrected {
        for id in model.term_ids() {
            gains[id.branch][id.term] = correction_term(model, id, sigma)?;
        }
    }
    Ok(evaluate(model, &att, &gains, opts).total)
}

/// Blurred model output at `x` (`n × dim`), `n × channels`.
pub fn scale_query(model: &PnfModel, x: ArrayView2<f64>, sigma: &Covariance) -> Result<Array2<f64>> {
    let src = PointSource::new(x, model.dim())?;
    scale_query_source(model, &src, sigma, true, EvalOptions::default())
}

/// As [`scale_query`] without the interference correction.
pub fn scale_query_uncorrected(model: &PnfModel, x: ArrayView2<f64>, sigma: &Covariance) -> Result<Array2<f64>> {
    let src = PointSource::new(x, model.dim())?;
    scale_query_source(model, &src, sigma, false, EvalOptions::default())
}

/// Separable Gaussian blur of an image stored `width·height × channels`,
/// kernel truncated at `4σ` and half-sample reflection at the borders.
pub fn gaussian_blur(values: &Array2<f64>, width: usize, height: usize, sigma_px: f64) -> Result<Array2<f64>> {
    if values.nrows() != width * height {
        return Err(Error::ShapeMismatch(format!("{} samples for a {width}×{height} image", values.nrows())));
    }
    if !(sigma_px >= 0.0 && sigma_px.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma_px}")));
    }
    if sigma_px == 0.0 {
        return Ok(values.clone());
    }
    let radius = (4.0 * sigma_px + 0.5) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-0.5 * (t as f64 / sigma_px).powi(2)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let m = i.rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };
    let pass = |src: &Array2<f64>, along_x: bool| {
        let mut out = Array2::zeros(src.dim());
        for y in 0..height {
            for x in 0..width {
                for (t, k) in (-radius..=radius).zip(&kernel) {
                    let p = if along_x {
                        y * width + reflect(x as isize + t, width)
                    } else {
                        reflect(y as isize + t, height) * width + x
                    };
                    for c in 0..src.ncols() {
                        out[[y * width + x, c]] += k * src[[p, c]];
                    }
                }
            }
        }
        out
    };
    Ok(pass(&pass(values, true), false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use ndarray::array;

    #[test]
    fn covariance_checks() {
        assert!(Covariance::new(array![[1.0, 0.5], [0.5, 1.0]]).is_ok());
        assert!(Covariance::new(array![[1.0, 1.0], [1.0, 1.0]]).is_ok());
        assert!(Covariance::new(array![[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(Covariance::new(array![[1.0, 0.1], [0.0, 1.0]]).is_err());
        assert!(Covariance::new(array![[0.0, 0.1], [0.1, 1.0]]).is_err());
        assert!(Covariance::new(array![[-1e-3]]).is_err());
        assert!(Covariance::new(Array2::zeros((2, 2))).is_ok());
    }

    #[test]
    fn one_cycle_attenuation() {
        let s = Covariance::isotropic(1, 1.0 / (TAU * TAU)).unwrap();
        assert!((s.attenuation(&[1.0]) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(s.attenuation(&[0.0]), 1.0);
    }

    #[test]
    fn reflect_blur_keeps_constants() {
        let v = Array2::from_elem((16 * 8, 1), 0.3);
        let b = gaussian_blur(&v, 16, 8, 1.7).unwrap();
        assert!(b.iter().all(|x| (x - 0.3).abs() < 1e-14));
    }

    #[test]
    fn blur_matches_direct_sum() {
        let (w, h) = (9, 7);
        let v = Array2::from_shape_fn((w * h, 1), |(p, _)| ((p * 37) % 11) as f64);
        let s = 0.8;
        let b = gaussian_blur(&v, w, h, s).unwrap();
        // 2D direct sum with the same truncation and mirrored indices
        let r = (4.0 * s + 0.5) as isize;
        let mir = |i: isize, n: isize| if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
        let g = |t: isize| (-0.5 * (t as f64 / s).powi(2)).exp();
        let z: f64 = (-r..=r).map(g).sum();
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let p = mir(y + dy, h as isize) * w as isize + mir(x + dx, w as isize);
                        acc += g(dx) * g(dy) * v[[p as usize, 0]];
                    }
                }
                acc /= z * z;
                assert!((acc - b[[(y * w as isize + x) as usize, 0]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_is_forward() {
        let mut c = ModelConfig::default_image();
        c.hidden = 4;
        c.fans = Some(vec![0, 3]);
        let m = PnfModel::init(&c).unwrap();
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) % 13) as f64 / 13.0 - 0.5);
        let a = m.forward(x.view()).unwrap();
        let b = scale_query(&m, x.view(), &Covariance::zeros(2)).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12));
        for id in m.term_ids() {
            assert_eq!(correction_term(&m, id, &Covariance::zeros(2)).unwrap(), 1.0);
        }
    }
}
