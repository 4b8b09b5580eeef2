//! Coordinate sources feeding the evaluation engine.
//!
//! The engine asks a source for one encoding at a time over a row range.
//! [`PointSource`] evaluates sinusoids directly. [`GridSource`] serves
//! pixel-centre grids from separable per-axis phasor tables, which turns each
//! encoding entry into a complex product instead of a `sin_cos`.

use std::f64::consts::TAU;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};

use crate::complex::ComplexMatrix;
use crate::model::{encode_rows, Encoding, PnfModel, Slot};
use crate::{Error, Result};

pub trait CoordSource: Sync {
    /// Number of coordinates.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Encoding `slot` of branch `branch` over coordinate rows `rows`.
    fn encode(&self, branch: usize, slot: Slot, enc: &Encoding, rows: Range<usize>) -> ComplexMatrix;
}

/// Arbitrary coordinates, `n × dim`.
pub struct PointSource<'a> {
    x: ArrayView2<'a, f64>,
}

impl<'a> PointSource<'a> {
    pub fn new(x: ArrayView2<'a, f64>, dim: usize) -> Result<Self> {
        if x.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.ncols(),
            });
        }
        Ok(PointSource { x })
    }
}

impl CoordSource for PointSource<'_> {
    fn len(&self) -> usize {
        self.x.nrows()
    }

    fn encode(&self, _branch: usize, _slot: Slot, enc: &Encoding, rows: Range<usize>) -> ComplexMatrix {
        encode_rows(enc, self.x.slice(ndarray::s![rows, ..]))
    }
}

/// Pixel-centre coordinate `(i + 0.5)/n - 0.5`.
pub fn pixel_centre(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64 - 0.5
}

/// Coordinates of a pixel-centre grid, axis 0 varying fastest, `N × dim`.
pub fn grid_coords(resolution: &[usize]) -> Array2<f64> {
    let total: usize = resolution.iter().product();
    let dim = resolution.len();
    let mut x = Array2::zeros((total, dim));
    for p in 0..total {
        let mut rem = p;
        for (a, &n) in resolution.iter().enumerate() {
            x[[p, a]] = pixel_centre(rem % n, n);
            rem /= n;
        }
    }
    x
}

/// Per-axis phasors `exp(i2π f_a x_a)` for every encoding of a model on a
/// pixel-centre grid.
pub struct GridTables {
    resolution: Vec<usize>,
    /// `[branch][slot][axis]`, slots ordered shells then chains.
    tables: Vec<Vec<Vec<ComplexMatrix>>>,
    terms: Vec<usize>,
}

impl GridTables {
    /// `resolution[a]` samples along axis `a` (axis 0 is the fastest-varying
    /// index of the flattened grid).
    pub fn build(model: &PnfModel, resolution: &[usize]) -> Result<Self> {
        if resolution.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: resolution.len(),
            });
        }
        if resolution.contains(&0) {
            return Err(Error::InvalidGrid("grid resolution must be positive".into()));
        }
        let tables = model
            .branches
            .iter()
            .map(|b| {
                b.shell
                    .iter()
                    .chain(&b.chain)
                    .map(|e| axis_tables(e, resolution))
                    .collect()
            })
            .collect();
        Ok(GridTables {
            resolution: resolution.to_vec(),
            tables,
            terms: model.branches.iter().map(|b| b.terms()).collect(),
        })
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whole grid in flattened order.
    pub fn full(&self) -> GridSource<'_> {
        GridSource {
            tables: self,
            rows: None,
        }
    }

    /// The listed flat pixel indices, in the given order.
    pub fn subset<'a>(&'a self, rows: &'a [usize]) -> GridSource<'a> {
        GridSource {
            tables: self,
            rows: Some(rows),
        }
    }

    fn slot(&self, branch: usize, slot: Slot) -> &[ComplexMatrix] {
        let idx = match slot {
            Slot::Shell(k) => k,
            Slot::Chain(k) => self.terms[branch] + k,
        };
        &self.tables[branch][idx]
    }
}

fn axis_tables(e: &Encoding, resolution: &[usize]) -> Vec<ComplexMatrix> {
    resolution
        .iter()
        .enumerate()
        .map(|(a, &n)| {
            let mut t = ComplexMatrix::zeros(n, e.width());
            for i in 0..n {
                let x = pixel_centre(i, n);
                let (re, im) = t.row_mut(i);
                for f in 0..e.width() {
                    let (s, c) = (TAU * e.freqs[[f, a]] * x).sin_cos();
                    re[f] = c;
                    im[f] = s;
                }
            }
            t
        })
        .collect()
}

pub struct GridSource<'a> {
    tables: &'a GridTables,
    rows: Option<&'a [usize]>,
}

impl CoordSource for GridSource<'_> {
    fn len(&self) -> usize {
        self.rows.map_or(self.tables.len(), <[usize]>::len)
    }

    fn encode(&self, branch: usize, slot: Slot, _enc: &Encoding, rows: Range<usize>) -> ComplexMatrix {
        let axes = self.tables.slot(branch, slot);
        let res = &self.tables.resolution;
        let width = axes[0].cols();
        let mut out = ComplexMatrix::zeros(rows.len(), width);
        for (r, row) in rows.enumerate() {
            let mut p = self.rows.map_or(row, |ix| ix[row]);
            let i0 = p % res[0];
            p /= res[0];
            let (ore, oim) = out.row_mut(r);
            let (t0r, t0i) = axes[0].row(i0);
            ore.copy_from_slice(t0r);
            oim.copy_from_slice(t0i);
            for (a, t) in axes.iter().enumerate().skip(1) {
                let ia = p % res[a];
                p /= res[a];
                let (tr, ti) = t.row(ia);
                for f in 0..width {
                    let (a_re, a_im) = (ore[f], oim[f]);
                    ore[f] = a_re * tr[f] - a_im * ti[f];
                    oim[f] = a_re * ti[f] + a_im * tr[f];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, PnfModel};

    #[test]
    fn grid_matches_points() {
        let mut c = ModelConfig::default_image();
        c.hidden = 3;
        c.fans = Some(vec![0, 5]);
        let m = PnfModel::init(&c).unwrap();
        let res = [8, 4];
        let x = grid_coords(&res);
        let pts = PointSource::new(x.view(), 2).unwrap();
        let tables = GridTables::build(&m, &res).unwrap();
        let idx: Vec<usize> = vec![31, 0, 7, 8, 17];
        let grid = tables.full();
        let sub = tables.subset(&idx);
        for (j, b) in m.branches.iter().enumerate() {
            for slot in [Slot::Shell(2), Slot::Chain(3)] {
                let enc = b.encoding(slot);
                let a = pts.encode(j, slot, enc, 0..32);
                let g = grid.encode(j, slot, enc, 0..32);
                let diff = (a.raw() - g.raw()).mapv(f64::abs).sum();
                assert!(diff < 1e-12, "{diff}");
                let s = sub.encode(j, slot, enc, 1..4);
                for (r, &p) in idx[1..4].iter().enumerate() {
                    assert!((s.get(r, 0) - g.get(p, 0)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn coords_are_pixel_centres() {
        let x = grid_coords(&[4, 2]);
        assert_eq!(x.row(0).to_vec(), vec![-0.375, -0.25]);
        assert_eq!(x.row(5).to_vec(), vec![-0.125, 0.25]);
    }
}
