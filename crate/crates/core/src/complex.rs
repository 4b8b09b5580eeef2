//! Complex matrices and the handful of products the network and its reverse
//! pass need.
//!
//! A matrix with `c` complex columns is stored as one real `rows × 2c` array
//! `[re | im]`, so every complex product below is a single real GEMM against
//! the real embedding of the other operand.
//!
//! Gradients of the real loss with respect to a complex quantity `z = a + ib`
//! are carried as `g = ∂L/∂a + i ∂L/∂b`. Under that convention the backward
//! rule of `y = x·w` is `g_x = g_y·conj(w)` and `g_w = conj(x)·g_y`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    data: Array2<f64>,
    cols: usize,
}

/// Rows are batch entries, columns are features.
pub type ComplexBatch = ComplexMatrix;

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            data: Array2::zeros((rows, 2 * cols)),
            cols,
        }
    }

    pub fn from_parts(re: ArrayView2<f64>, im: ArrayView2<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::ShapeMismatch(format!(
                "real part {:?} vs imaginary part {:?}",
                re.dim(),
                im.dim()
            )));
        }
        let mut m = ComplexMatrix::zeros(re.nrows(), re.ncols());
        m.re_mut().assign(&re);
        m.im_mut().assign(&im);
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows(), self.cols)
    }

    /// Number of complex entries.
    pub fn len(&self) -> usize {
        self.rows() * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn re(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., ..self.cols])
    }

    pub fn im(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., self.cols..])
    }

    pub fn re_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let c = self.cols;
        self.data.slice_mut(s![.., ..c])
    }

    pub fn im_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let c = self.cols;
        self.data.slice_mut(s![.., c..])
    }

    /// The `[re | im]` storage.
    pub fn raw(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    /// Row `r` as `(re, im)` slices.
    pub fn row(&self, r: usize) -> (&[f64], &[f64]) {
        let row = self.data.row(r).to_slice().expect("rows are contiguous");
        row.split_at(self.cols)
    }

    pub fn row_mut(&mut self, r: usize) -> (&mut [f64], &mut [f64]) {
        let c = self.cols;
        let row = self.data.row_mut(r).into_slice().expect("rows are contiguous");
        row.split_at_mut(c)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.data[[r, c]], self.data[[r, c + self.cols]])
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[[r, c]] = v.re;
        self.data[[r, c + self.cols]] = v.im;
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    /// `self ⊙= other`
    pub fn hadamard_assign(&mut self, other: &ComplexMatrix) {
        for r in 0..self.rows() {
            let (ar, ai) = self.row_mut(r);
            let (br, bi) = other.row(r);
            for f in 0..ar.len() {
                let re = ar[f] * br[f] - ai[f] * bi[f];
                ai[f] = ar[f] * bi[f] + ai[f] * br[f];
                ar[f] = re;
            }
        }
    }

    /// `self ⊙= conj(other)`
    pub fn hadamard_conj_assign(&mut self, other: &ComplexMatrix) {
        for r in 0..self.rows() {
            let (ar, ai) = self.row_mut(r);
            let (br, bi) = other.row(r);
            for f in 0..ar.len() {
                let re = ar[f] * br[f] + ai[f] * bi[f];
                ai[f] = ai[f] * br[f] - ar[f] * bi[f];
                ar[f] = re;
            }
        }
    }

    /// Scales column `f` by `k[f]`.
    pub fn scale_columns(&mut self, k: &[f64]) {
        for r in 0..self.rows() {
            let (ar, ai) = self.row_mut(r);
            for f in 0..ar.len() {
                ar[f] *= k[f];
                ai[f] *= k[f];
            }
        }
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &ComplexMatrix) {
        self.data += &other.data;
    }

    pub fn scale(&mut self, k: f64) {
        self.data *= k;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Real embedding `[[Wr, -Wi], [Wi, Wr]]` (`2·rows × 2·cols`).
    fn embedding(&self) -> Array2<f64> {
        let (o, i) = self.dim();
        let mut e = Array2::zeros((2 * o, 2 * i));
        e.slice_mut(s![..o, ..i]).assign(&self.re());
        e.slice_mut(s![..o, i..]).assign(&self.im().mapv(|v| -v));
        e.slice_mut(s![o.., ..i]).assign(&self.im());
        e.slice_mut(s![o.., i..]).assign(&self.re());
        e
    }
}

/// `out = x · wᵀ` for a batch `x` (rows × in) and weights `w` (out × in).
///
/// With `E` the real embedding of `w`, `[yr | yi] = [xr | xi] · Eᵀ`.
pub fn matmul_t(x: &ComplexMatrix, w: &ComplexMatrix, out: &mut ComplexMatrix) {
    let e = w.embedding();
    general_mat_mul(1.0, &x.data, &e.t(), 0.0, &mut out.data);
}

/// Allocating form of [`matmul_t`].
pub fn mul_t(x: &ComplexMatrix, w: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(x.rows(), w.rows());
    matmul_t(x, w, &mut out);
    out
}

/// Backward of [`matmul_t`] with respect to `x`: `gx += gy · conj(w)`,
/// which is `[gr | gi] · E`.
pub fn add_grad_input(gy: &ComplexMatrix, w: &ComplexMatrix, gx: &mut ComplexMatrix) {
    let e = w.embedding();
    general_mat_mul(1.0, &gy.data, &e, 1.0, &mut gx.data);
}

/// Backward of [`matmul_t`] with respect to `w`: `gw += gyᵀ · conj(x)`.
///
/// One GEMM forms all four blocks `[gr | gi]ᵀ · [xr | xi]`; the real part is
/// `grᵀxr + giᵀxi` and the imaginary part `giᵀxr - grᵀxi`.
pub fn add_grad_weight(gy: &ComplexMatrix, x: &ComplexMatrix, gw: &mut ComplexMatrix) {
    let (o, i) = (gy.cols, x.cols);
    let mut blocks = Array2::zeros((2 * o, 2 * i));
    general_mat_mul(1.0, &gy.data.t(), &x.data, 0.0, &mut blocks);
    let b = |r: std::ops::Range<usize>, c: std::ops::Range<usize>| blocks.slice(s![r, c]);
    let re = &b(0..o, 0..i) + &b(o..2 * o, i..2 * i);
    let im = &b(o..2 * o, 0..i) - &b(0..o, i..2 * i);
    let mut gr = gw.re_mut();
    gr += &re;
    let mut gi = gw.im_mut();
    gi += &im;
}

/// Real readout `Re(s · oᵀ)`, accumulated into `out` with factor `gain`:
/// `[sr | si] · [or | -oi]ᵀ`.
pub fn add_real_readout(s: &ComplexMatrix, o: &ComplexMatrix, gain: f64, out: &mut Array2<f64>) {
    let mut r = o.data.clone();
    r.slice_mut(s![.., o.cols..]).mapv_inplace(|v| -v);
    general_mat_mul(gain, &s.data, &r.t(), 1.0, out);
}

/// Backward of the real readout for a real upstream gradient `g`
/// (rows × channels): returns `g · conj(o)` and accumulates `gᵀ · conj(s)`
/// into `go`.
pub fn real_readout_backward(
    g: ArrayView2<f64>,
    s: &ComplexMatrix,
    o: &ComplexMatrix,
    go: &mut ComplexMatrix,
) -> ComplexMatrix {
    let mut conj_o = o.data.clone();
    conj_o.slice_mut(s![.., o.cols..]).mapv_inplace(|v| -v);
    let mut gs = ComplexMatrix::zeros(g.nrows(), o.cols);
    general_mat_mul(1.0, &g, &conj_o, 0.0, &mut gs.data);
    let mut conj_s = Array2::zeros((go.rows(), 2 * go.cols));
    general_mat_mul(1.0, &g.t(), &s.data, 0.0, &mut conj_s);
    conj_s.slice_mut(s![.., s.cols..]).mapv_inplace(|v| -v);
    go.data += &conj_s;
    gs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        m
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-13
    }

    #[test]
    fn matmul_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(5, 3, &mut rng);
        let w = random(4, 3, &mut rng);
        let y = mul_t(&x, &w);
        for r in 0..5 {
            for q in 0..4 {
                let want: Complex64 = (0..3).map(|p| x.get(r, p) * w.get(q, p)).sum();
                assert!(close(y.get(r, q), want));
            }
        }
    }

    #[test]
    fn backward_products_match_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, i, o) = (6, 3, 4);
        let x = random(n, i, &mut rng);
        let w = random(o, i, &mut rng);
        let gy = random(n, o, &mut rng);
        let mut gx = random(n, i, &mut rng);
        let gx0 = gx.clone();
        add_grad_input(&gy, &w, &mut gx);
        for b in 0..n {
            for p in 0..i {
                let want: Complex64 = (0..o).map(|q| gy.get(b, q) * w.get(q, p).conj()).sum();
                assert!(close(gx.get(b, p) - gx0.get(b, p), want));
            }
        }
        let mut gw = ComplexMatrix::zeros(o, i);
        add_grad_weight(&gy, &x, &mut gw);
        for q in 0..o {
            for p in 0..i {
                let want: Complex64 = (0..n).map(|b| gy.get(b, q) * x.get(b, p).conj()).sum();
                assert!(close(gw.get(q, p), want));
            }
        }
    }

    #[test]
    fn readout_and_its_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, h, c) = (5, 3, 2);
        let s = random(n, h, &mut rng);
        let o = random(c, h, &mut rng);
        let mut out = Array2::zeros((n, c));
        add_real_readout(&s, &o, 0.5, &mut out);
        for b in 0..n {
            for ch in 0..c {
                let want: Complex64 = (0..h).map(|f| s.get(b, f) * o.get(ch, f)).sum();
                assert!((out[[b, ch]] - 0.5 * want.re).abs() < 1e-13);
            }
        }
        let g = Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
        let mut go = ComplexMatrix::zeros(c, h);
        let gs = real_readout_backward(g.view(), &s, &o, &mut go);
        for b in 0..n {
            for f in 0..h {
                let want: Complex64 = (0..c).map(|ch| g[[b, ch]] * o.get(ch, f).conj()).sum();
                assert!(close(gs.get(b, f), want));
            }
        }
        for ch in 0..c {
            for f in 0..h {
                let want: Complex64 = (0..n).map(|b| g[[b, ch]] * s.get(b, f).conj()).sum();
                assert!(close(go.get(ch, f), want));
            }
        }
    }

    #[test]
    fn hadamard_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(3, 2, &mut rng);
        let b = random(3, 2, &mut rng);
        let mut p = a.clone();
        p.hadamard_assign(&b);
        let mut q = a.clone();
        q.hadamard_conj_assign(&b);
        for r in 0..3 {
            for c in 0..2 {
                assert!((p.get(r, c) - a.get(r, c) * b.get(r, c)).norm() < 1e-15);
                assert!((q.get(r, c) - a.get(r, c) * b.get(r, c).conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_checked() {
        let (a, b) = (Array2::zeros((2, 2)), Array2::zeros((2, 3)));
        assert!(ComplexMatrix::from_parts(a.view(), b.view()).is_err());
    }
}
