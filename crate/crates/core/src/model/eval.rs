//! Chunked forward evaluation, optionally recording the activations the
//! reverse pass needs.

use std::ops::Range;

use ndarray::{concatenate, Array2, Axis};

use super::{PnfModel, Slot, TermId};
use crate::complex::{add_real_readout, mul_t, ComplexMatrix};
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::source::CoordSource;

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub exec: Exec,
    pub chunk: usize,
    /// Keep every term output, not only the total.
    pub keep_terms: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            exec: Exec::default(),
            chunk: DEFAULT_CHUNK,
            keep_terms: false,
        }
    }
}

impl EvalOptions {
    pub fn with_terms(mut self) -> Self {
        self.keep_terms = true;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

#[derive(Clone, Debug)]
pub struct TermOutputs {
    pub ids: Vec<TermId>,
    /// One `n × channels` array per entry of `ids`; empty unless requested.
    pub terms: Vec<Array2<f64>>,
    pub total: Array2<f64>,
}

impl TermOutputs {
    pub fn term(&self, id: TermId) -> Option<&Array2<f64>> {
        self.ids.iter().position(|&i| i == id).and_then(|p| self.terms.get(p))
    }
}

/// Activations of one branch over one chunk, indexed by term.
pub(crate) struct BranchTape {
    pub ec: Vec<ComplexMatrix>,
    pub es: Vec<ComplexMatrix>,
    pub z: Vec<ComplexMatrix>,
    pub s: Vec<ComplexMatrix>,
}

pub(crate) struct ChunkForward {
    pub total: Array2<f64>,
    pub terms: Vec<Array2<f64>>,
    pub tapes: Vec<BranchTape>,
}

pub(crate) fn forward_chunk<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    rows: Range<usize>,
    gains: &[Vec<f64>],
    keep_terms: bool,
    keep_tape: bool,
) -> ChunkForward {
    let n = rows.len();
    let c = model.channels();
    let mut total = Array2::zeros((n, c));
    let mut terms = Vec::new();
    let mut tapes = Vec::new();
    for (j, b) in model.branches.iter().enumerate() {
        let kk = b.terms();
        let mut tape = BranchTape {
            ec: Vec::with_capacity(kk),
            es: Vec::with_capacity(kk),
            z: Vec::with_capacity(kk),
            s: Vec::with_capacity(kk),
        };
        for k in 0..kk {
            let ec = src.encode(j, Slot::Chain(k), &b.chain[k], rows.clone());
            let z = if k == 0 {
                ec.clone()
            } else {
                let mut z = mul_t(&tape.z[k - 1], &b.chain_weights[k - 1]);
                z.hadamard_assign(&ec);
                z
            };
            let es = src.encode(j, Slot::Shell(k), &b.shell[k], rows.clone());
            let mut s = mul_t(&z, &b.term_weights[k]);
            s.hadamard_assign(&es);
            let mut t = Array2::zeros((n, c));
            add_real_readout(&s, &b.output_weights[k], gains[j][k], &mut t);
            total += &t;
            if keep_terms {
                terms.push(t);
            }
            if keep_tape {
                tape.ec.push(ec);
                tape.es.push(es);
                tape.s.push(s);
            } else if k > 0 {
                tape.z[k - 1] = ComplexMatrix::zeros(0, 0);
            }
            tape.z.push(z);
        }
        if keep_tape {
            tapes.push(tape);
        }
    }
    ChunkForward { total, terms, tapes }
}

/// Evaluates `model` over every coordinate of `src` with per-term gains
/// `gains[branch][term]`.
pub fn evaluate<S: CoordSource + ?Sized>(
    model: &PnfModel,
    src: &S,
    gains: &[Vec<f64>],
    opts: EvalOptions,
) -> TermOutputs {
    let chunks = opts.exec.map_chunks(src.len(), opts.chunk, |r| {
        forward_chunk(model, src, r, gains, opts.keep_terms, false)
    });
    let ids = model.term_ids();
    let c = model.channels();
    let total = stack(chunks.iter().map(|ch| &ch.total), c);
    let terms = if opts.keep_terms {
        (0..ids.len())
            .map(|t| stack(chunks.iter().map(|ch| &ch.terms[t]), c))
            .collect()
    } else {
        Vec::new()
    };
    TermOutputs { ids, terms, total }
}

fn stack<'a>(parts: impl Iterator<Item = &'a Array2<f64>>, cols: usize) -> Array2<f64> {
    let views: Vec<_> = parts.map(|a| a.view()).collect();
    if views.is_empty() {
        return Array2::zeros((0, cols));
    }
    concatenate(Axis(0), &views).expect("chunks share column count")
}
