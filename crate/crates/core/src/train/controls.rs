//! Per-term freezing and output gains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{ParamKind, PnfModel, TermId};
use crate::{Error, Result};

/// Terms excluded from optimization and per-term output gains (default 1).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermControls {
    pub frozen: BTreeSet<TermId>,
    pub gains: BTreeMap<TermId, f64>,
}

impl TermControls {
    pub fn gain(&self, id: TermId) -> f64 {
        self.gains.get(&id).copied().unwrap_or(1.0)
    }

    /// `gains[branch][term]` for the evaluation engine.
    pub fn gain_table(&self, model: &PnfModel) -> Vec<Vec<f64>> {
        model
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| (0..b.terms()).map(|k| self.gain(TermId::new(j, k))).collect())
            .collect()
    }

    /// Whether each parameter, in [`PnfModel::params`] order, is trained.
    ///
    /// Freezing term `k` of a branch fixes everything its output depends on:
    /// its own term and output weights and the chain weights feeding `Z_k`.
    pub fn trainable_mask(&self, model: &PnfModel) -> Vec<bool> {
        model
            .params()
            .iter()
            .map(|(id, _)| {
                let frozen = |k: usize| self.frozen.contains(&TermId::new(id.branch, k));
                match id.kind {
                    ParamKind::Term(k) | ParamKind::Output(k) => !frozen(k),
                    ParamKind::Chain(l) => {
                        let terms = model.branches[id.branch].terms();
                        !(l + 1..terms).any(frozen)
                    }
                }
            })
            .collect()
    }
}

/// Chooses terms by orientation, term index, and declared lower band limit.
/// Unset fields match everything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    /// Branch positions.
    #[serde(default)]
    pub branches: Option<Vec<usize>>,
    /// Term indices within a branch.
    #[serde(default)]
    pub terms: Option<Vec<usize>>,
    /// Keep terms with `lo_k >= lo_min` (cycles per unit).
    #[serde(default)]
    pub lo_min: Option<f64>,
    /// Keep terms with `lo_k < lo_below`.
    #[serde(default)]
    pub lo_below: Option<f64>,
}

impl Selector {
    pub fn resolve(&self, model: &PnfModel) -> Vec<TermId> {
        model
            .term_ids()
            .into_iter()
            .filter(|id| {
                let lo = model.branches[id.branch].spec.term_bands[id.term].0;
                self.branches.as_ref().is_none_or(|b| b.contains(&id.branch))
                    && self.terms.as_ref().is_none_or(|t| t.contains(&id.term))
                    && self.lo_min.is_none_or(|m| lo >= m)
                    && self.lo_below.is_none_or(|m| lo < m)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TermAction {
    Freeze,
    Unfreeze,
    Gain(f64),
}

/// Applies `action` to every term `selector` resolves to and returns them.
pub fn set_term_control(
    model: &PnfModel,
    controls: &mut TermControls,
    selector: &Selector,
    action: TermAction,
) -> Result<Vec<TermId>> {
    let ids = selector.resolve(model);
    if ids.is_empty() {
        return Err(Error::EmptySelector);
    }
    if let TermAction::Gain(g) = action {
        if !g.is_finite() {
            return Err(Error::InvalidArgument(format!("gain must be finite, got {g}")));
        }
    }
    for &id in &ids {
        match action {
            TermAction::Freeze => {
                controls.frozen.insert(id);
            }
            TermAction::Unfreeze => {
                controls.frozen.remove(&id);
            }
            TermAction::Gain(g) => {
                controls.gains.insert(id, g);
            }
        }
    }
    Ok(ids)
}
