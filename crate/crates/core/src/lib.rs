//! Fourier polynomial neural fields.
//!
//! A field is an ensemble of orientation branches. Each branch multiplies
//! complex sinusoidal encodings through bias-free linear maps, so every
//! branch term is a finite sum of Fourier atoms whose frequencies provably
//! lie in a declared subband. The crate provides the subband algebra that
//! tracks those limits, the tilings that cover frequency space, the network
//! itself with an exact basis-expansion oracle, manual reverse-mode training,
//! spectral verification tools, and Gaussian scale-space queries.

pub mod checkpoint;
pub mod complex;
pub mod config;
mod error;
pub mod exec;
pub mod expansion;
pub mod gaussian;
pub mod image;
pub mod model;
pub mod scalespace;
pub mod selfcheck;
pub mod source;
pub mod spectral;
pub mod subband;
pub mod tiling;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use expansion::BasisExpansion;
pub use model::{ModelConfig, PnfModel, TermId};
pub use subband::{Direction, Norm, Region, Subband};
pub use tiling::{Scheme, Tiling, TilingSpec};
