//! Reverse pass and finite-difference verification.

use std::ops::Range;

use ndarray::{Array2, ArrayView2};

use super::controls::TermControls;
use crate::complex::{add_grad_input, add_grad_weight, real_readout_backward, ComplexMatrix};
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::model::{evaluate, forward_chunk, EvalOptions, ParamId, PnfModel};
use crate::source::CoordSource;
use crate::{Error, Result};

/// Loss gradients for every weight matrix, in [`PnfModel::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub ids: Vec<ParamId>,
    pub tensors: Vec<ComplexMatrix>,
}

impl GradientSet {
    pub fn zeros_like(model: &PnfModel) -> Self {
        let (ids, tensors) = model
            .params()
            .into_iter()
            .map(|(id, m)| (id, ComplexMatrix::zeros(m.rows(), m.cols())))
            .unzip();
        GradientSet { ids, tensors }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_abs()))
    }

    /// Real components in canonical order: per tensor, all real parts
    /// row-major, then all imaginary parts.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.re().iter().chain(t.im().iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    fn zero_masked(&mut self, mask: &[bool]) {
        for (t, &keep) in self.tensors.iter_mut().zip(mask) {
            if !keep {
                t.fill_zero();
            }
        }
    }
}

/// Mean squared error of the model over `src` against `target` (one row per
/// source coordinate) and its gradient. Frozen terms get zero gradients;
/// gains scale term outputs.
pub fn backward<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    target: ArrayView2<f64>,
    controls: &TermControls,
    exec: Exec,
) -> Result<(f64, GradientSet)> {
    let n = src.len();
    let c = model.channels();
    if target.dim() != (n, c) {
        return Err(Error::ShapeMismatch(format!(
            "target {:?} does not match {} coordinates × {} channels",
            target.dim(),
            n,
            c
        )));
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let gains = controls.gain_table(model);
    let scale = 2.0 / (n * c) as f64;
    let parts = exec.map_chunks(n, DEFAULT_CHUNK, |rows| chunk_backward(model, src, target, &gains, rows, scale));
    let mut iter = parts.into_iter();
    let (mut sse, mut grads) = iter.next().expect("non-empty batch");
    for (s, g) in iter {
        sse += s;
        grads.add_assign(&g);
    }
    grads.zero_masked(&controls.trainable_mask(model));
    Ok((sse / (n * c) as f64, grads))
}

fn chunk_backward<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    target: ArrayView2<f64>,
    gains: &[Vec<f64>],
    rows: Range<usize>,
    scale: f64,
) -> (f64, GradientSet) {
    let fwd = forward_chunk(model, src, rows.clone(), gains, false, true);
    let resid = &fwd.total - &target.slice(ndarray::s![rows.clone(), ..]);
    let sse = resid.iter().map(|r| r * r).sum();
    let g_out: Array2<f64> = resid * scale;
    let mut grads = GradientSet::zeros_like(model);
    let mut slot = 0;
    for (j, (b, tape)) in model.branches.iter().zip(&fwd.tapes).enumerate() {
        let kk = b.terms();
        let (chain_at, term_at, out_at) = (slot, slot + kk - 1, slot + 2 * kk - 1);
        slot += 3 * kk - 1;
        let h = b.spec.hidden;
        let mut gz: Vec<ComplexMatrix> = (0..kk)
            .map(|k| ComplexMatrix::zeros(if k > 0 { rows.len() } else { 0 }, h))
            .collect();
        for k in (0..kk).rev() {
            let g = &g_out * gains[j][k];
            let mut gq = real_readout_backward(g.view(), &tape.s[k], &b.output_weights[k], &mut grads.tensors[out_at + k]);
            gq.hadamard_conj_assign(&tape.es[k]);
            add_grad_weight(&gq, &tape.z[k], &mut grads.tensors[term_at + k]);
            // Z_1 is a bare encoding, so nothing upstream of it needs a gradient.
            if k > 0 {
                add_grad_input(&gq, &b.term_weights[k], &mut gz[k]);
                let mut gp = std::mem::replace(&mut gz[k], ComplexMatrix::zeros(0, 0));
                gp.hadamard_conj_assign(&tape.ec[k]);
                add_grad_weight(&gp, &tape.z[k - 1], &mut grads.tensors[chain_at + k - 1]);
                if k > 1 {
                    add_grad_input(&gp, &b.chain_weights[k - 1], &mut gz[k - 1]);
                }
            }
        }
    }
    (sse, grads)
}

/// Loss alone, evaluated sequentially.
pub fn loss<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    target: ArrayView2<f64>,
    controls: &TermControls,
) -> Result<f64> {
    let out = evaluate(
        model,
        src,
        &controls.gain_table(model),
        EvalOptions::default().with_exec(Exec::Sequential),
    );
    super::mse_loss(out.total.view(), target)
}

fn outputs<S: CoordSource + ?Sized>(model: &PnfModel, src: &S, controls: &TermControls) -> Array2<f64> {
    let opts = EvalOptions::default().with_exec(Exec::Sequential);
    evaluate(model, src, &controls.gain_table(model), opts).total
}

/// `L(up) - L(down)` for the mean squared error, summed as
/// `Σ (u - d)(u + d - 2t) / n` so the two losses never cancel.
fn loss_difference(up: &Array2<f64>, down: &Array2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if up.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!("prediction {:?} vs target {:?}", up.dim(), target.dim())));
    }
    let sum: f64 = ndarray::Zip::from(up)
        .and(down)
        .and(target)
        .fold(0.0, |acc, &u, &d, &t| acc + (u - d) * (u + d - 2.0 * t));
    Ok(sum / up.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Flat index (see [`GradientSet::flatten`]) of the worst component.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Denominator floor of the relative error, so components whose gradient is
/// at the rounding level of the loss do not dominate the report.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares [`backward`] with central differences of step `eps` on every
/// real parameter component. The loss is quadratic along each component, so
/// the difference has no truncation error and only rounding remains. Relative error is
/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn grad_check<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    target: ArrayView2<f64>,
    controls: &TermControls,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (_, grads) = backward(model, src, target, controls, Exec::Sequential)?;
    let analytic = grads.flatten();
    let mask = controls.trainable_mask(model);
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for (t, &trainable) in mask.iter().enumerate() {
        let len = probe.params()[t].1.len();
        for part in 0..2 {
            for e in 0..len {
                if !trainable {
                    numeric.push(0.0);
                    continue;
                }
                let orig = component(&mut probe, t, part, e, None);
                component(&mut probe, t, part, e, Some(orig + eps));
                let up = outputs(&probe, src, controls);
                component(&mut probe, t, part, e, Some(orig - eps));
                let down = outputs(&probe, src, controls);
                component(&mut probe, t, part, e, Some(orig));
                numeric.push(loss_difference(&up, &down, target)? / (2.0 * eps));
            }
        }
    }
    let mut report = GradCheckReport {
        parameters: analytic.len(),
        max_rel_error: 0.0,
        mean_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let mut sum = 0.0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
        sum += rel;
        if rel > report.max_rel_error || i == 0 {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = n;
        }
    }
    report.mean_rel_error = sum / analytic.len().max(1) as f64;
    Ok(report)
}

/// Reads component `e` (row-major) of the real (`part = 0`) or imaginary
/// part of tensor `t`, optionally overwriting it. Returns the old value.
fn component(model: &mut PnfModel, t: usize, part: usize, e: usize, set: Option<f64>) -> f64 {
    let mut params = model.params_mut();
    let m = &mut params[t].1;
    let cols = m.cols();
    let cell = &mut m.raw_mut()[[e / cols, part * cols + e % cols]];
    let old = *cell;
    if let Some(v) = set {
        *cell = v;
    }
    old
}
