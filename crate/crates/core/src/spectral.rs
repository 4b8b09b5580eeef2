//! Grid rendering, 2D FFT, per-term band-energy verification, and the
//! coarse-to-fine decomposition export.
//!
//! On a pixel-centre grid over `[-0.5, 0.5]` with `n` samples, DFT bin `u`
//! holds frequency `u` (or `u - n` above the midpoint) in cycles per unit,
//! so bins and band limits share units.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::image::Image;
use crate::model::{evaluate, EvalOptions, PnfModel, TermId};
use crate::source::GridTables;
use crate::subband::Subband;
use crate::{Error, Result};

/// Default cap on samples per axis for rendering.
pub const DEFAULT_RESOLUTION_CAP: usize = 4096;

/// Guard margin in bins used by default.
pub const DEFAULT_MARGIN_BINS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    /// Samples per axis; axis 0 varies fastest in flattened order.
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(resolution: Vec<usize>) -> Result<Self> {
        let g = GridSpec { resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn square(n: usize, dim: usize) -> Result<Self> {
        Self::new(vec![n; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        for &n in &self.resolution {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("resolution {n} is not a power of two >= 8")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Term selection for rendering.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum TermSelector {
    #[default]
    All,
    Only(Vec<TermId>),
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub grid: GridSpec,
    /// Selected terms and their images, `N × channels` each.
    pub terms: Vec<(TermId, Array2<f64>)>,
    /// Output of the whole model with the given gains.
    pub total: Array2<f64>,
}

impl Rendered {
    /// Running sums of the selected terms in order.
    pub fn cumulative(&self) -> Vec<Array2<f64>> {
        let mut acc = Array2::zeros(self.total.dim());
        self.terms
            .iter()
            .map(|(_, t)| {
                acc += t;
                acc.clone()
            })
            .collect()
    }
}

/// Evaluates the model on every point of `grid`.
pub fn render_grid(
    model: &PnfModel,
    grid: &GridSpec,
    gains: &[Vec<f64>],
    select: &TermSelector,
    cap: usize,
) -> Result<Rendered> {
    grid.validate()?;
    if let Some(&big) = grid.resolution.iter().find(|&&n| n > cap) {
        return Err(Error::ResolutionCap { requested: big, cap });
    }
    let tables = GridTables::build(model, &grid.resolution)?;
    let out = evaluate(model, &tables.full(), gains, EvalOptions::default().with_terms());
    let keep = |id: &TermId| match select {
        TermSelector::All => true,
        TermSelector::Only(ids) => ids.contains(id),
    };
    let terms = out
        .ids
        .iter()
        .zip(out.terms)
        .filter(|(id, _)| keep(id))
        .map(|(&id, t)| (id, t))
        .collect();
    Ok(Rendered {
        grid: grid.clone(),
        terms,
        total: out.total,
    })
}

/// Forward 2D DFT of a `rows × cols` array (no normalization).
pub fn fft2(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    transform(a, false)
}

/// Inverse of [`fft2`], normalized by `1/N`.
pub fn ifft2(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let mut out = transform(a, true)?;
    let n = out.len() as f64;
    out.mapv_inplace(|v| v / n);
    Ok(out)
}

fn transform(a: &Array2<Complex64>, inverse: bool) -> Result<Array2<Complex64>> {
    let (rows, cols) = a.dim();
    for n in [rows, cols] {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("FFT side {n} is not a power of two")));
        }
    }
    let mut planner = FftPlanner::new();
    let mut out = a.as_standard_layout().into_owned();
    for (axis, n) in [(Axis(1), cols), (Axis(0), rows)] {
        let plan = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let mut buf = vec![Complex64::default(); n];
        for mut lane in out.lanes_mut(axis) {
            buf.iter_mut().zip(lane.iter()).for_each(|(b, v)| *b = *v);
            plan.process(&mut buf);
            lane.iter_mut().zip(&buf).for_each(|(v, b)| *v = *b);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Window {
    None,
    #[default]
    Hann,
}

fn window_weights(w: Window, n: usize) -> Vec<f64> {
    match w {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()).collect(),
    }
}

/// Signed frequency of DFT bin `u` out of `n`.
pub fn bin_frequency(u: usize, n: usize) -> f64 {
    if u < n.div_ceil(2) {
        u as f64
    } else {
        u as f64 - n as f64
    }
}

/// Energy `|X|²` of each channel's windowed DFT, summed over channels, on a
/// 2D grid. Rows are axis 1, columns axis 0.
pub fn power_spectrum(values: &Array2<f64>, resolution: &[usize], window: Window) -> Result<Array2<f64>> {
    if resolution.len() != 2 {
        return Err(Error::InvalidGrid("power spectrum needs a 2D grid".into()));
    }
    let (w, h) = (resolution[0], resolution[1]);
    if values.nrows() != w * h {
        return Err(Error::ShapeMismatch(format!("{} samples for a {w}×{h} grid", values.nrows())));
    }
    let (wx, wy) = (window_weights(window, w), window_weights(window, h));
    let mut power = Array2::zeros((h, w));
    for ch in 0..values.ncols() {
        let a = Array2::from_shape_fn((h, w), |(r, c)| Complex64::new(values[[r * w + c, ch]] * wx[c] * wy[r], 0.0));
        let spec = fft2(&a)?;
        power.zip_mut_with(&spec, |p, s| *p += s.norm_sqr());
    }
    Ok(power)
}

/// Band-energy statistics of one signal.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEntry {
    pub id: Option<TermId>,
    /// Fraction of energy in bins within the margin of the band.
    pub in_band: f64,
    pub out_band: f64,
    /// Largest out-of-band magnitude relative to the largest magnitude.
    pub peak_out: f64,
    pub total_energy: f64,
    /// No bin lies outside the dilated band, so the test is vacuous.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub window: Window,
    pub margin_bins: f64,
    pub entries: Vec<SpectrumEntry>,
}

impl SpectrumReport {
    pub fn max_out_band(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.out_band))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "term,in_band,out_band,peak_out,degenerate")?;
        for e in &self.entries {
            let name = e.id.map_or("total".to_string(), |id| format!("{}:{}", id.branch, id.term));
            writeln!(
                f,
                "{name},{:.17e},{:.17e},{:.17e},{}",
                e.in_band, e.out_band, e.peak_out, e.degenerate
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Whether a bin at `(fx, fy)` lies within `margin` of any band in `bands`
/// or its mirror, allowing for aliasing by whole grid periods.
fn near_bands(bands: &[Subband], f: [f64; 2], period: [f64; 2], margin: f64) -> Result<bool> {
    for sx in [0.0, -1.0, 1.0] {
        for sy in [0.0, -1.0, 1.0] {
            let q = [f[0] + sx * period[0], f[1] + sy * period[1]];
            let neg = [-q[0], -q[1]];
            for b in bands {
                if b.distance(&q)? <= margin || b.distance(&neg)? <= margin {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Classifies every bin of `power` as inside or outside the union of
/// `bands` dilated by `margin` bins.
pub fn classify_energy(power: &Array2<f64>, bands: &[Subband], margin: f64) -> Result<SpectrumEntry> {
    let (h, w) = power.dim();
    let period = [w as f64, h as f64];
    let (mut e_in, mut e_out, mut peak_out, mut peak) = (0.0, 0.0, 0.0f64, 0.0f64);
    let mut any_out_bin = false;
    for r in 0..h {
        for c in 0..w {
            let p = power[[r, c]];
            peak = peak.max(p);
            let f = [bin_frequency(c, w), bin_frequency(r, h)];
            if near_bands(bands, f, period, margin)? {
                e_in += p;
            } else {
                any_out_bin = true;
                e_out += p;
                peak_out = peak_out.max(p);
            }
        }
    }
    let total = e_in + e_out;
    let (in_band, out_band) = if total > 0.0 {
        (e_in / total, e_out / total)
    } else {
        (1.0, 0.0)
    };
    Ok(SpectrumEntry {
        id: None,
        in_band,
        out_band,
        peak_out: if peak > 0.0 { (peak_out / peak).sqrt() } else { 0.0 },
        total_energy: total,
        degenerate: !any_out_bin,
    })
}

/// Windowed out-of-band energy of term `id` rendered on `grid`.
pub fn band_energy(
    model: &PnfModel,
    grid: &GridSpec,
    id: TermId,
    window: Window,
    margin_bins: f64,
) -> Result<SpectrumEntry> {
    let band = model.term_band(id)?;
    let r = render_grid(
        model,
        grid,
        &model.unit_gains(),
        &TermSelector::Only(vec![id]),
        DEFAULT_RESOLUTION_CAP,
    )?;
    let power = power_spectrum(&r.terms[0].1, &grid.resolution, window)?;
    let mut e = classify_energy(&power, &[band], margin_bins)?;
    e.id = Some(id);
    Ok(e)
}

/// Band energy of every term and of the total output against the union of
/// all term bands, from one rendering.
pub fn spectrum_report(
    model: &PnfModel,
    grid: &GridSpec,
    gains: &[Vec<f64>],
    window: Window,
    margin_bins: f64,
) -> Result<SpectrumReport> {
    let r = render_grid(model, grid, gains, &TermSelector::All, DEFAULT_RESOLUTION_CAP)?;
    let mut entries = Vec::new();
    let mut all = Vec::new();
    for (id, t) in &r.terms {
        let band = model.term_band(*id)?;
        let power = power_spectrum(t, &grid.resolution, window)?;
        let mut e = classify_energy(&power, std::slice::from_ref(&band), margin_bins)?;
        e.id = Some(*id);
        entries.push(e);
        all.push(band);
    }
    let power = power_spectrum(&r.total, &grid.resolution, window)?;
    entries.push(classify_energy(&power, &all, margin_bins)?);
    Ok(SpectrumReport {
        window,
        margin_bins,
        entries,
    })
}

/// Writes `bin_x,bin_y,magnitude` for a 2D power spectrum.
pub fn write_spectrum_csv(power: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = power.dim();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "bin_x,bin_y,magnitude")?;
    for r in 0..h {
        for c in 0..w {
            writeln!(
                f,
                "{},{},{:.17e}",
                bin_frequency(c, w),
                bin_frequency(r, h),
                power[[r, c]].sqrt()
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Per-level images of a decomposition before display normalization.
#[derive(Clone, Debug)]
pub struct Pyramid {
    /// `residuals[k]`: sum over branches of term `k`.
    pub residuals: Vec<Array2<f64>>,
    /// `cumulative[k]`: sum of residuals `0..=k`.
    pub cumulative: Vec<Array2<f64>>,
    pub total: Array2<f64>,
    pub files: Vec<PathBuf>,
}

/// Groups term outputs by level, sums them over branches, and writes each
/// level's residual and the running reconstruction as 8-bit images. Each
/// image is min/max normalized for display; the constants go to
/// `normalization.txt`.
pub fn pyramid_export(model: &PnfModel, grid: &GridSpec, gains: &[Vec<f64>], dir: &Path) -> Result<Pyramid> {
    if grid.resolution.len() != 2 {
        return Err(Error::InvalidGrid("decomposition export needs a 2D grid".into()));
    }
    let r = render_grid(model, grid, gains, &TermSelector::All, DEFAULT_RESOLUTION_CAP)?;
    let levels = model.branches.iter().map(|b| b.terms()).max().unwrap_or(0);
    let mut residuals = vec![Array2::zeros(r.total.dim()); levels];
    for (id, t) in &r.terms {
        residuals[id.term] += t;
    }
    let mut acc = Array2::zeros(r.total.dim());
    let cumulative: Vec<_> = residuals
        .iter()
        .map(|res| {
            acc += res;
            acc.clone()
        })
        .collect();
    std::fs::create_dir_all(dir)?;
    let (w, h) = (grid.resolution[0], grid.resolution[1]);
    let ext = if model.channels() == 3 { "ppm" } else { "pgm" };
    let mut sidecar = String::from("image,min,max\n");
    let mut files = Vec::new();
    let mut emit = |name: String, a: &Array2<f64>| -> Result<()> {
        let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
        let span = hi - lo;
        let shown = a.mapv(|v| if span > 0.0 { (v - lo) / span } else { 0.5 });
        let path = dir.join(format!("{name}.{ext}"));
        if model.channels() == 1 || model.channels() == 3 {
            Image::new(w, h, shown)?.write(&path)?;
            files.push(path);
        }
        sidecar.push_str(&format!("{name},{lo:.17e},{hi:.17e}\n"));
        Ok(())
    };
    for (k, (res, cum)) in residuals.iter().zip(&cumulative).enumerate() {
        emit(format!("residual_{k}"), res)?;
        emit(format!("cumulative_{k}"), cum)?;
    }
    let side = dir.join("normalization.txt");
    std::fs::write(&side, sidecar)?;
    files.push(side);
    Ok(Pyramid {
        residuals,
        cumulative,
        total: r.total,
        files,
    })
}
