//! The Fourier PNF network.
//!
//! One branch per tiling fan. Branch `j` keeps a chain of carriers
//!
//! ```text
//! Z_1 = enc(chain_1),   Z_k = enc(chain_k) ⊙ (W_k Z_{k-1})
//! ```
//!
//! and emits one real term per shell, `t_k = Re(O_k (enc(shell_k) ⊙ (U_k Z_k)))`.
//! Chain stage `k` samples frequencies from `(0, Δ_k)` and shell `k` from the
//! exact radius `lo_k`, so term `k` is confined to `(lo_k, hi_k)`.

mod eval;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{ComplexBatch, ComplexMatrix};
use crate::subband::{otimes, Subband};
use crate::tiling::{sample_frequency, Fan, Scheme, Tiling, TilingSpec};
use crate::{Error, Result};

pub use eval::{evaluate, EvalOptions, TermOutputs};
pub(crate) use eval::forward_chunk;

/// Address of one branch term: branch (fan) index and term index, both
/// zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TermId {
    pub branch: usize,
    pub term: usize,
}

impl TermId {
    pub fn new(branch: usize, term: usize) -> Self {
        TermId { branch, term }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tiling: TilingSpec,
    /// Hidden width `h` of every branch.
    pub hidden: usize,
    /// Output channels.
    pub channels: usize,
    pub seed: u64,
    /// Restricts the model to these fan positions of the tiling (zero-based
    /// positions in `Tiling::fans`). All fans when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fans: Option<Vec<usize>>,
}

impl ModelConfig {
    /// Grayscale image model used by `fit`: circular tiling with `m = 8`,
    /// the 8 fans of one half-plane (a real image's spectrum is mirror
    /// symmetric, so the other 8 would be redundant), 4 terms, `h = 40`.
    pub fn default_image() -> Self {
        ModelConfig {
            tiling: TilingSpec {
                scheme: Scheme::Circular,
                ..TilingSpec::default_image()
            },
            hidden: 40,
            channels: 1,
            seed: 0,
            fans: Some((0..8).collect()),
        }
    }

    /// All 14 rectangular fans, 4 terms, `h = 36`: about 0.27M real
    /// parameters with three channels.
    pub fn rect_image() -> Self {
        ModelConfig {
            tiling: TilingSpec::default_image(),
            hidden: 36,
            channels: 1,
            seed: 0,
            fans: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tiling.validate()?;
        if self.hidden == 0 {
            return Err(Error::InvalidModel("hidden width must be at least 1".into()));
        }
        if self.channels == 0 {
            return Err(Error::InvalidModel("channels must be at least 1".into()));
        }
        if let Some(f) = &self.fans {
            if f.is_empty() {
                return Err(Error::InvalidModel("fan selection is empty".into()));
            }
        }
        Ok(())
    }

    /// Real parameter count (complex weights count twice).
    pub fn parameter_count(&self) -> Result<usize> {
        let tiling = Tiling::build(&self.tiling)?;
        let fans = self.selected_fans(&tiling)?.len();
        Ok(fans * branch_parameters(self.tiling.shells(), self.hidden, self.channels))
    }

    fn selected_fans<'t>(&self, tiling: &'t Tiling) -> Result<Vec<&'t Fan>> {
        match &self.fans {
            None => Ok(tiling.fans.iter().collect()),
            Some(sel) => sel
                .iter()
                .map(|&i| {
                    tiling.fans.get(i).ok_or_else(|| {
                        Error::InvalidModel(format!("fan {i} out of range (tiling has {})", tiling.fans.len()))
                    })
                })
                .collect(),
        }
    }
}

/// `2·((K-1)h² + Kh² + Kch)` real parameters for `K` terms.
pub fn branch_parameters(terms: usize, hidden: usize, channels: usize) -> usize {
    let h = hidden;
    2 * ((terms.saturating_sub(1)) * h * h + terms * h * h + terms * channels * h)
}

/// A bank of complex sinusoids sampled from one subband.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    /// `width × dim`, cycles per unit.
    pub freqs: Array2<f64>,
    pub band: Subband,
}

impl Encoding {
    pub fn sample<R: Rng + ?Sized>(band: Subband, width: usize, rng: &mut R) -> Result<Self> {
        let rows = sample_frequency(&band, width, rng)?;
        let dim = band.dim();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let freqs = Array2::from_shape_vec((width, dim), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(Encoding { freqs, band })
    }

    pub fn width(&self) -> usize {
        self.freqs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.freqs.ncols()
    }
}

/// `out[b, f] = exp(i·2π·freqs[f]·x[b])`.
pub fn encode(e: &Encoding, x: ArrayView2<f64>) -> Result<ComplexBatch> {
    if x.ncols() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: x.ncols(),
        });
    }
    Ok(encode_rows(e, x))
}

pub(crate) fn encode_rows(e: &Encoding, x: ArrayView2<f64>) -> ComplexBatch {
    let (n, w) = (x.nrows(), e.width());
    let mut out = ComplexMatrix::zeros(n, w);
    for b in 0..n {
        let xb = x.row(b);
        let (re, im) = out.row_mut(b);
        for f in 0..w {
            let phase = std::f64::consts::TAU * e.freqs.row(f).dot(&xb);
            let (s, c) = phase.sin_cos();
            re[f] = c;
            im[f] = s;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSpec {
    /// Orientation index `j` of the fan in the nominal tiling layout.
    pub orientation: usize,
    pub fan: Fan,
    /// Declared band `(lo_k, hi_k)` of each term, cycles per unit.
    pub term_bands: Vec<(f64, f64)>,
    pub hidden: usize,
}

impl BranchSpec {
    pub fn new(fan: Fan, term_bands: Vec<(f64, f64)>, hidden: usize) -> Result<Self> {
        let spec = BranchSpec {
            orientation: fan.index,
            fan,
            term_bands,
            hidden,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.term_bands.is_empty() {
            return bad("branch needs at least one term".into());
        }
        if self.hidden == 0 {
            return bad("hidden width must be at least 1".into());
        }
        for (k, &(lo, hi)) in self.term_bands.iter().enumerate() {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!("term {k}: band ({lo}, {hi}) needs 0 <= lo < hi"));
            }
        }
        for (k, w) in self.term_bands.windows(2).enumerate() {
            let ((l0, h0), (l1, h1)) = (w[0], w[1]);
            if l1 < l0 || h1 < h0 {
                return bad(format!("terms {k}..{}: band limits must be nondecreasing", k + 1));
            }
            if h1 - l1 < h0 - l0 {
                return bad(format!(
                    "terms {k}..{}: band widths must be nondecreasing ({} then {})",
                    k + 1,
                    h0 - l0,
                    h1 - l1
                ));
            }
        }
        Ok(())
    }

    pub fn terms(&self) -> usize {
        self.term_bands.len()
    }

    /// `Δ_k = w_k - w_{k-1}` with `w_k = hi_k - lo_k` and `w_0 = 0`.
    pub fn chain_deltas(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.term_bands
            .iter()
            .map(|&(lo, hi)| {
                let w = hi - lo;
                let d = w - prev;
                prev = w;
                d
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub spec: BranchSpec,
    /// Shell `k`: sampled at the exact radius `lo_k`.
    pub shell: Vec<Encoding>,
    /// Chain stage `k`: sampled from `(0, Δ_k)`.
    pub chain: Vec<Encoding>,
    /// `W_2..W_K`, each `h × h`.
    pub chain_weights: Vec<ComplexMatrix>,
    /// `U_1..U_K`, each `h × h`.
    pub term_weights: Vec<ComplexMatrix>,
    /// `O_1..O_K`, each `channels × h`.
    pub output_weights: Vec<ComplexMatrix>,
}

impl Branch {
    pub fn terms(&self) -> usize {
        self.spec.terms()
    }
}

/// Which encoding of a branch a table or source refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Shell(usize),
    Chain(usize),
}

impl Branch {
    pub fn encoding(&self, slot: Slot) -> &Encoding {
        match slot {
            Slot::Shell(k) => &self.shell[k],
            Slot::Chain(k) => &self.chain[k],
        }
    }
}

/// Identifies one weight matrix of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    /// `W_{k+1}` feeding term `k + 1` from `Z_k`; index `k` in `chain_weights`.
    Chain(usize),
    Term(usize),
    Output(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub branch: usize,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PnfModel {
    pub config: ModelConfig,
    pub tiling: Tiling,
    pub branches: Vec<Branch>,
}

impl PnfModel {
    /// Builds the tiling and samples every encoding and weight from the
    /// config seed.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tiling = Tiling::build(&config.tiling)?;
        let bands: Vec<(f64, f64)> = (0..config.tiling.shells()).map(|i| tiling.shell_limits(i)).collect();
        let specs = config
            .selected_fans(&tiling)?
            .into_iter()
            .map(|fan| BranchSpec::new(fan.clone(), bands.clone(), config.hidden))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let branches = specs
            .into_iter()
            .map(|s| init_branch(s, config.channels, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(PnfModel {
            config: config.clone(),
            tiling,
            branches,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.tiling.dim
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn term_ids(&self) -> Vec<TermId> {
        self.branches
            .iter()
            .enumerate()
            .flat_map(|(j, b)| (0..b.terms()).map(move |k| TermId::new(j, k)))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, m)| 2 * m.len()).sum()
    }

    /// Every weight matrix in canonical order: per branch, chain weights,
    /// then term weights, then output weights.
    pub fn params(&self) -> Vec<(ParamId, &ComplexMatrix)> {
        let mut out = Vec::new();
        for (j, b) in self.branches.iter().enumerate() {
            let id = |kind| ParamId { branch: j, kind };
            out.extend(b.chain_weights.iter().enumerate().map(|(k, m)| (id(ParamKind::Chain(k)), m)));
            out.extend(b.term_weights.iter().enumerate().map(|(k, m)| (id(ParamKind::Term(k)), m)));
            out.extend(b.output_weights.iter().enumerate().map(|(k, m)| (id(ParamKind::Output(k)), m)));
        }
        out
    }

    /// Mutable counterpart of [`PnfModel::params`], same order.
    pub fn params_mut(&mut self) -> Vec<(ParamId, &mut ComplexMatrix)> {
        let mut out = Vec::new();
        for (j, b) in self.branches.iter_mut().enumerate() {
            let id = |kind| ParamId { branch: j, kind };
            out.extend(b.chain_weights.iter_mut().enumerate().map(|(k, m)| (id(ParamKind::Chain(k)), m)));
            out.extend(b.term_weights.iter_mut().enumerate().map(|(k, m)| (id(ParamKind::Term(k)), m)));
            out.extend(b.output_weights.iter_mut().enumerate().map(|(k, m)| (id(ParamKind::Output(k)), m)));
        }
        out
    }

    pub fn term_band(&self, id: TermId) -> Result<Subband> {
        let branch = self
            .branches
            .get(id.branch)
            .ok_or_else(|| Error::InvalidArgument(format!("branch {} out of range", id.branch)))?;
        if id.term >= branch.terms() {
            return Err(Error::InvalidArgument(format!("term {} out of range", id.term)));
        }
        term_band_of(branch, id.term)
    }

    /// Total output at `x` (`n × dim`), `n × channels`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_terms(x)?.total)
    }

    /// Per-term outputs and their sum at `x`, all gains one.
    pub fn forward_terms(&self, x: ArrayView2<f64>) -> Result<TermOutputs> {
        let src = crate::source::PointSource::new(x, self.dim())?;
        Ok(evaluate(self, &src, &self.unit_gains(), EvalOptions::default().with_terms()))
    }

    /// One gain per term, all equal to one.
    pub fn unit_gains(&self) -> Vec<Vec<f64>> {
        self.branches.iter().map(|b| vec![1.0; b.terms()]).collect()
    }
}

/// `shell_k ⊗ (chain_k ⊗ (… ⊗ chain_1))`, the band the network structure
/// guarantees for term `k`.
pub(crate) fn term_band_of(branch: &Branch, k: usize) -> Result<Subband> {
    let mut z = branch.chain[0].band.clone();
    for l in 1..=k {
        z = otimes(&branch.chain[l].band, &z)?;
    }
    otimes(&branch.shell[k].band, &z)
}

pub(crate) fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re = rng.random_range(-bound..=bound);
            let im = rng.random_range(-bound..=bound);
            m.set(r, c, num_complex::Complex64::new(re, im));
        }
    }
    m
}

/// Samples encodings and weights for one branch. Weights are uniform in
/// `[-1/√h, 1/√h]` per real component.
pub fn init_branch<R: Rng + ?Sized>(spec: BranchSpec, channels: usize, rng: &mut R) -> Result<Branch> {
    spec.validate()?;
    let h = spec.hidden;
    let deltas = spec.chain_deltas();
    let mut shell = Vec::with_capacity(spec.terms());
    let mut chain = Vec::with_capacity(spec.terms());
    for (k, &(lo, _)) in spec.term_bands.iter().enumerate() {
        shell.push(Encoding::sample(spec.fan.band(lo, lo)?, h, rng)?);
        chain.push(Encoding::sample(spec.fan.band(0.0, deltas[k])?, h, rng)?);
    }
    let bound = 1.0 / (h as f64).sqrt();
    let kk = spec.terms();
    let chain_weights = (1..kk).map(|_| uniform_matrix(h, h, bound, rng)).collect();
    let term_weights = (0..kk).map(|_| uniform_matrix(h, h, bound, rng)).collect();
    let output_weights = (0..kk).map(|_| uniform_matrix(channels, h, bound, rng)).collect();
    Ok(Branch {
        spec,
        shell,
        chain,
        chain_weights,
        term_weights,
        output_weights,
    })
}
