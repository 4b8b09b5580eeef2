//! Exact finite Fourier expansion of a model.
//!
//! Every branch term is a sum of complex exponentials: products of
//! encodings add frequencies and multiply coefficients, and linear maps mix
//! coefficients. Expanding symbolically gives an oracle the network's output
//! must match and a list of frequencies whose band membership can be
//! checked exhaustively.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::complex::ComplexMatrix;
use crate::model::{Encoding, PnfModel, TermId};
use crate::{Error, Result};

/// Default cap on the projected number of atoms.
pub const DEFAULT_ATOM_CAP: u128 = 1_000_000;

/// Frequencies closer than this (cycles, per coordinate) are merged.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    /// Cycles per unit.
    pub freq: Vec<f64>,
    /// One coefficient per output channel.
    pub coeff: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermExpansion {
    pub id: TermId,
    pub atoms: Vec<Atom>,
}

/// A model output written as `Re(Σ coeff·exp(i2π freq·x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisExpansion {
    pub dim: usize,
    pub channels: usize,
    pub terms: Vec<TermExpansion>,
}

/// Upper bound on the atoms [`expand_to_basis`] creates before merging:
/// term `k` (one-based) of a branch of width `h` yields `h^(k+1)`.
pub fn projected_atoms(model: &PnfModel) -> u128 {
    model
        .branches
        .iter()
        .map(|b| {
            let h = b.spec.hidden as u128;
            (1..=b.terms() as u32)
                .map(|k| h.checked_pow(k + 1).unwrap_or(u128::MAX))
                .fold(0u128, |a, v| a.saturating_add(v))
        })
        .fold(0u128, |a, v| a.saturating_add(v))
}

/// Expands every branch term of `model` (all gains one) unless the
/// projected atom count exceeds `cap`.
pub fn expand_to_basis(model: &PnfModel, cap: u128) -> Result<BasisExpansion> {
    let projected = projected_atoms(model);
    if projected > cap {
        return Err(Error::ExpansionCap { projected, cap });
    }
    let c = model.channels();
    let mut terms = Vec::new();
    for (j, b) in model.branches.iter().enumerate() {
        // atoms of each hidden unit of Z_k as (frequency, coefficient)
        let mut z: Vec<Vec<(Vec<f64>, Complex64)>> = (0..b.spec.hidden)
            .map(|f| vec![(b.chain[0].freqs.row(f).to_vec(), Complex64::new(1.0, 0.0))])
            .collect();
        for k in 0..b.terms() {
            if k > 0 {
                z = shift(&mix(&z, &b.chain_weights[k - 1]), &b.chain[k]);
            }
            let s = shift(&mix(&z, &b.term_weights[k]), &b.shell[k]);
            let o = &b.output_weights[k];
            let mut atoms = Vec::new();
            for (q, unit) in s.iter().enumerate() {
                for (freq, a) in unit {
                    let coeff = (0..c).map(|ch| o.get(ch, q) * a).collect();
                    atoms.push(Atom {
                        freq: freq.clone(),
                        coeff,
                    });
                }
            }
            terms.push(TermExpansion {
                id: TermId::new(j, k),
                atoms: merge(atoms),
            });
        }
    }
    Ok(BasisExpansion {
        dim: model.dim(),
        channels: c,
        terms,
    })
}

/// Unit `q` of the result is `Σ_p w[q, p]·z[p]`.
fn mix(z: &[Vec<(Vec<f64>, Complex64)>], w: &ComplexMatrix) -> Vec<Vec<(Vec<f64>, Complex64)>> {
    (0..w.rows())
        .map(|q| {
            z.iter()
                .enumerate()
                .flat_map(|(p, unit)| {
                    let wqp = w.get(q, p);
                    unit.iter().map(move |(f, a)| (f.clone(), wqp * a))
                })
                .collect()
        })
        .collect()
}

/// Multiplies unit `q` by encoding atom `q`, shifting its frequencies.
fn shift(z: &[Vec<(Vec<f64>, Complex64)>], e: &Encoding) -> Vec<Vec<(Vec<f64>, Complex64)>> {
    z.iter()
        .enumerate()
        .map(|(q, unit)| {
            let w = e.freqs.row(q);
            unit.iter()
                .map(|(f, a)| (f.iter().zip(w.iter()).map(|(x, y)| x + y).collect(), *a))
                .collect()
        })
        .collect()
}

fn merge(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| {
        a.freq
            .iter()
            .zip(&b.freq)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.freq.iter().zip(&a.freq).all(|(x, y)| (x - y).abs() <= MERGE_TOL) => {
                for (c, d) in last.coeff.iter_mut().zip(&a.coeff) {
                    *c += d;
                }
            }
            _ => out.push(a),
        }
    }
    out
}

impl BasisExpansion {
    pub fn len(&self) -> usize {
        self.terms.iter().map(|t| t.atoms.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.terms.iter().flat_map(|t| t.atoms.iter())
    }

    /// Atoms whose frequency lies outside the model's declared band for
    /// their term, with absolute tolerance `tol`.
    pub fn band_violations(&self, model: &PnfModel, tol: f64) -> Result<Vec<(TermId, Vec<f64>)>> {
        let mut out = Vec::new();
        for t in &self.terms {
            let band = model.term_band(t.id)?;
            for a in &t.atoms {
                if !band.contains_within(&a.freq, tol)? {
                    out.push((t.id, a.freq.clone()));
                }
            }
        }
        Ok(out)
    }

    /// `Re(Σ coeff·exp(i2π freq·x))` at each row of `x`, `n × channels`.
    pub fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.eval_scaled(x, |_| 1.0)
    }

    /// Like [`BasisExpansion::eval`] with each atom multiplied by
    /// `weight(freq)`.
    pub fn eval_scaled(&self, x: ArrayView2<f64>, weight: impl Fn(&[f64]) -> f64) -> Result<Array2<f64>> {
        if x.ncols() != self.dim && !self.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.channels));
        for a in self.atoms() {
            let w = weight(&a.freq);
            for (b, xb) in x.rows().into_iter().enumerate() {
                let phase: f64 = TAU * a.freq.iter().zip(xb.iter()).map(|(f, v)| f * v).sum::<f64>();
                let e = Complex64::from_polar(w, phase);
                for (ch, c) in a.coeff.iter().enumerate() {
                    out[[b, ch]] += (c * e).re;
                }
            }
        }
        Ok(out)
    }

    /// CSV rows `branch,term,freq_0[,freq_1…],channel,re,im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let freq_cols: Vec<String> = (0..self.dim).map(|d| format!("freq_{d}")).collect();
        writeln!(f, "branch,term,{},channel,re,im", freq_cols.join(","))?;
        for t in &self.terms {
            for a in &t.atoms {
                let freq: Vec<String> = a.freq.iter().map(|v| format!("{v:.17e}")).collect();
                for (ch, c) in a.coeff.iter().enumerate() {
                    writeln!(
                        f,
                        "{},{},{},{},{:.17e},{:.17e}",
                        t.id.branch,
                        t.id.term,
                        freq.join(","),
                        ch,
                        c.re,
                        c.im
                    )?;
                }
            }
        }
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(hidden: usize, shells: usize) -> PnfModel {
        let mut c = ModelConfig::default_image();
        c.hidden = hidden;
        c.tiling.radial_lo.truncate(shells);
        c.tiling.radial_hi.truncate(shells);
        c.fans = Some(vec![2]);
        PnfModel::init(&c).unwrap()
    }

    #[test]
    fn single_layer_is_its_encoding() {
        let m = tiny(3, 1);
        let e = expand_to_basis(&m, DEFAULT_ATOM_CAP).unwrap();
        // shell 0 has radius 0, so the 9 unit atoms merge onto the 3 chain frequencies
        let b = &m.branches[0];
        assert_eq!(e.terms[0].atoms.len(), 3);
        for a in &e.terms[0].atoms {
            assert!((0..3).any(|f| b.chain[0].freqs.row(f).to_vec() == a.freq));
        }
    }

    #[test]
    fn matches_forward() {
        let m = tiny(2, 3);
        let e = expand_to_basis(&m, DEFAULT_ATOM_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((64, 2), |_| rng.random_range(-0.5..0.5));
        let y = m.forward(x.view()).unwrap();
        let z = e.eval(x.view()).unwrap();
        for (a, b) in y.iter().zip(z.iter()) {
            assert!((a - b).abs() / (1.0 + a.abs()) <= 1e-9);
        }
        assert!(e.band_violations(&m, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn cap_enforced() {
        let m = PnfModel::init(&ModelConfig::default_image()).unwrap();
        assert!(matches!(
            expand_to_basis(&m, DEFAULT_ATOM_CAP),
            Err(Error::ExpansionCap { .. })
        ));
        assert_eq!(projected_atoms(&tiny(3, 2)), 9 + 27);
    }

    #[test]
    fn empty_and_constant() {
        let e = BasisExpansion {
            dim: 2,
            channels: 1,
            terms: vec![],
        };
        assert!(e.eval(ndarray::array![[0.1, 0.2]].view()).unwrap().iter().all(|&v| v == 0.0));
        let c = BasisExpansion {
            dim: 1,
            channels: 1,
            terms: vec![TermExpansion {
                id: TermId::new(0, 0),
                atoms: vec![Atom {
                    freq: vec![0.0],
                    coeff: vec![Complex64::new(0.7, 0.3)],
                }],
            }],
        };
        let y = c.eval(ndarray::array![[0.1], [-0.4]].view()).unwrap();
        assert!(y.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn merging_adds_coefficients() {
        let atoms = vec![
            Atom {
                freq: vec![1.0, 2.0],
                coeff: vec![Complex64::new(1.0, 0.0)],
            },
            Atom {
                freq: vec![0.0, 0.0],
                coeff: vec![Complex64::new(0.5, 0.0)],
            },
            Atom {
                freq: vec![1.0 + 1e-12, 2.0],
                coeff: vec![Complex64::new(0.0, 1.0)],
            },
        ];
        let m = merge(atoms);
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].coeff[0], Complex64::new(1.0, 1.0));
    }
}
