//! Frequency subbands and the algebra that tracks band limits through
//! products of Fourier atoms.
//!
//! Frequencies are stored in cycles per unit interval. A subband is the
//! sector `{ω : lo ≤ ‖ω‖_p ≤ hi, ω·d ≥ cos(γ)‖ω‖₂}` for a unit direction `d`
//! and half-angle `γ`. Multiplying two Fourier atoms adds their frequencies,
//! so the product of signals limited to co-oriented subbands is limited to
//! their `⊗`-combination.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative slack on radial and angular comparisons in [`Subband::contains`].
/// Absorbs rounding when a frequency sits exactly on a band boundary, as
/// shell encodings do by construction.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Tolerance for "same orientation" checks between subbands.
const ORIENTATION_TOL: f64 = 1e-12;

/// A unit vector in frequency space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `components` to unit length.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = l2(&components);
        if components.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidSubband(format!(
                "direction {components:?} cannot be normalized"
            )));
        }
        Ok(Direction(components.into_iter().map(|c| c / norm).collect()))
    }

    /// `d(θ) = (sin θ, cos θ)`, the orientation convention of the tilings.
    pub fn from_angle(theta: f64) -> Self {
        Direction(vec![theta.sin(), theta.cos()])
    }

    /// Unit vector along `axis` with the given sign.
    pub fn axis(dim: usize, axis: usize, sign: Sign) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = sign.value();
        Direction(v)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Inverse of [`Direction::from_angle`] for 2D directions.
    pub fn angle(&self) -> f64 {
        self.0[0].atan2(self.0[1])
    }

    fn is_unit(&self) -> bool {
        (l2(&self.0) - 1.0).abs() <= 1e-12
    }

    fn approx_eq(&self, other: &Direction) -> bool {
        self.dim() == other.dim()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= ORIENTATION_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L2,
    LInf,
}

impl Norm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => l2(v),
            Norm::LInf => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A consistent L-inf region: vectors whose largest-magnitude coordinate is
/// `axis` and has sign `sign`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub axis: usize,
    pub sign: Sign,
}

impl Region {
    /// Whether the cone of half-angle `half_angle` around `dir` lies inside
    /// this region, allowing `slack` on the angular margin.
    ///
    /// The region is the intersection of the half-spaces
    /// `s·ω[axis] ± ω[i] ≥ 0`, so the cone fits iff `dir` keeps an angle of
    /// at least `half_angle` to every bounding hyperplane.
    pub fn contains_fan(&self, dir: &Direction, half_angle: f64, slack: f64) -> bool {
        let d = dir.components();
        if self.axis >= d.len() {
            return false;
        }
        let s = self.sign.value();
        if s * d[self.axis] <= 0.0 {
            return false;
        }
        let need = half_angle.sin() - slack;
        (0..d.len()).filter(|&i| i != self.axis).all(|i| {
            let lo = (s * d[self.axis] - d[i]) / std::f64::consts::SQRT_2;
            let hi = (s * d[self.axis] + d[i]) / std::f64::consts::SQRT_2;
            lo >= need && hi >= need
        })
    }
}

/// A sector of frequency space.
///
/// Fields are public so that malformed subbands can be represented and
/// reported (see [`crate::tiling::validate_tiling`]); [`Subband::new`]
/// enforces every invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subband {
    pub lo: f64,
    pub hi: f64,
    pub dir: Direction,
    pub half_angle: f64,
    pub norm: Norm,
    pub region: Option<Region>,
}

impl Subband {
    pub fn new(
        lo: f64,
        hi: f64,
        dir: Direction,
        half_angle: f64,
        norm: Norm,
        region: Option<Region>,
    ) -> Result<Self> {
        let s = Subband {
            lo,
            hi,
            dir,
            half_angle,
            norm,
            region,
        };
        let v = s.violations();
        if v.is_empty() {
            Ok(s)
        } else {
            Err(Error::InvalidSubband(v.join("; ")))
        }
    }

    /// Same orientation data, new radial limits.
    pub fn with_limits(&self, lo: f64, hi: f64) -> Result<Self> {
        Subband::new(lo, hi, self.dir.clone(), self.half_angle, self.norm, self.region)
    }

    pub fn dim(&self) -> usize {
        self.dir.dim()
    }

    /// Every invariant this subband violates, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            out.push(format!("non-finite band limits ({}, {})", self.lo, self.hi));
        } else if !(0.0 <= self.lo && self.lo <= self.hi) {
            out.push(format!("band limits must satisfy 0 <= lo <= hi, got ({}, {})", self.lo, self.hi));
        }
        if !self.dir.is_unit() {
            out.push("direction is not unit length".to_string());
        }
        if !(self.half_angle > 0.0 && self.half_angle < FRAC_PI_4) {
            out.push(format!("half-angle {} outside (0, pi/4)", self.half_angle));
        }
        match (self.norm, self.region) {
            (Norm::LInf, None) => out.push("L-inf subband requires a consistent region".to_string()),
            (Norm::LInf, Some(r)) => {
                if !r.contains_fan(&self.dir, self.half_angle, 1e-12) {
                    out.push(format!(
                        "fan around {:?} with half-angle {} leaves region (axis {}, {:?})",
                        self.dir.components(),
                        self.half_angle,
                        r.axis,
                        r.sign
                    ));
                }
            }
            (Norm::L2, _) => {}
        }
        out
    }

    /// Membership test with [`MEMBERSHIP_SLACK`] relative slack.
    ///
    /// The zero vector is a member iff `lo == 0`.
    pub fn contains(&self, omega: &[f64]) -> Result<bool> {
        self.check_dim(omega)?;
        let r2 = l2(omega);
        if r2 == 0.0 {
            return Ok(self.lo == 0.0);
        }
        let r = self.norm.eval(omega);
        let radial = r >= self.lo * (1.0 - MEMBERSHIP_SLACK) && r <= self.hi * (1.0 + MEMBERSHIP_SLACK);
        let angular = dot(omega, self.dir.components()) >= (self.half_angle.cos() - MEMBERSHIP_SLACK) * r2;
        Ok(radial && angular)
    }

    /// Membership with an absolute tolerance `tol` (cycles) on both the
    /// radial limits and the angular predicate.
    pub fn contains_within(&self, omega: &[f64], tol: f64) -> Result<bool> {
        self.check_dim(omega)?;
        let r2 = l2(omega);
        if r2 <= tol {
            return Ok(self.lo <= tol + r2);
        }
        let r = self.norm.eval(omega);
        let radial = r >= self.lo - tol && r <= self.hi + tol;
        let angular = dot(omega, self.dir.components()) >= self.half_angle.cos() * r2 - tol;
        Ok(radial && angular)
    }

    /// Euclidean distance from `q` to the subband, for 1D and 2D subbands.
    pub fn distance(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        match self.dim() {
            1 => {
                let s = self.dir.components()[0].signum();
                let (a, b) = (s * self.lo, s * self.hi);
                let (a, b) = (a.min(b), a.max(b));
                let x = q[0];
                let mut d = if x < a { a - x } else if x > b { x - b } else { 0.0 };
                if self.lo == 0.0 {
                    d = d.min(x.abs());
                }
                Ok(d)
            }
            2 => Ok(self.distance_2d([q[0], q[1]])),
            n => Err(Error::InvalidArgument(format!("distance not supported in dimension {n}"))),
        }
    }

    fn distance_2d(&self, q: [f64; 2]) -> f64 {
        if self.contains(&q).unwrap_or(false) {
            return 0.0;
        }
        let d = self.dir.components();
        let e1 = rotate([d[0], d[1]], -self.half_angle);
        let e2 = rotate([d[0], d[1]], self.half_angle);
        let at = |e: [f64; 2], r: f64| {
            let n = self.norm.eval(&e);
            [e[0] * r / n, e[1] * r / n]
        };
        let (a, b, c, dd) = (at(e1, self.lo), at(e2, self.lo), at(e2, self.hi), at(e1, self.hi));
        // Straight radial edges.
        let mut best = seg_dist(q, a, dd).min(seg_dist(q, b, c));
        match self.norm {
            // Within one consistent region the L-inf circles are segments.
            Norm::LInf => {
                best = best.min(seg_dist(q, a, b)).min(seg_dist(q, dd, c));
            }
            Norm::L2 => {
                let rq = l2(&q);
                let inside_angle = rq > 0.0 && dot(&q, d) >= self.half_angle.cos() * rq;
                for (r, p1, p2) in [(self.lo, a, b), (self.hi, dd, c)] {
                    let arc = if inside_angle {
                        (rq - r).abs()
                    } else {
                        l2(&[q[0] - p1[0], q[1] - p1[1]]).min(l2(&[q[0] - p2[0], q[1] - p2[1]]))
                    };
                    best = best.min(arc);
                }
            }
        }
        best
    }

    fn check_dim(&self, omega: &[f64]) -> Result<()> {
        if omega.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: omega.len(),
            });
        }
        Ok(())
    }

    fn check_coaligned(&self, other: &Subband, norm: Norm) -> Result<()> {
        if self.norm != norm || other.norm != norm {
            return Err(Error::IncompatibleSubbands(format!(
                "expected two {norm:?} subbands, got {:?} and {:?}",
                self.norm, other.norm
            )));
        }
        if !self.dir.approx_eq(&other.dir) {
            return Err(Error::IncompatibleSubbands("directions differ".into()));
        }
        if (self.half_angle - other.half_angle).abs() > ORIENTATION_TOL {
            return Err(Error::IncompatibleSubbands("half-angles differ".into()));
        }
        if self.region != other.region {
            return Err(Error::IncompatibleSubbands("consistent regions differ".into()));
        }
        Ok(())
    }
}

/// `⊗` for co-oriented L2 subbands:
/// `(α₁, β₁) ⊗ (α₂, β₂) = (√cos(2γ)·(α₁+α₂), β₁+β₂)`.
pub fn otimes_l2(a: &Subband, b: &Subband) -> Result<Subband> {
    a.check_coaligned(b, Norm::L2)?;
    if a.half_angle >= FRAC_PI_4 {
        return Err(Error::IncompatibleSubbands(format!(
            "half-angle {} must be below pi/4",
            a.half_angle
        )));
    }
    let lo = (2.0 * a.half_angle).cos().sqrt() * (a.lo + b.lo);
    a.with_limits(lo, a.hi + b.hi)
}

/// `⊗` for co-oriented L-inf subbands inside one consistent region:
/// `(α₁, β₁) ⊗ (α₂, β₂) = (α₁+α₂, β₁+β₂)`.
pub fn otimes_linf(a: &Subband, b: &Subband) -> Result<Subband> {
    a.check_coaligned(b, Norm::LInf)?;
    for s in [a, b] {
        let v = s.violations();
        if !v.is_empty() {
            return Err(Error::IncompatibleSubbands(v.join("; ")));
        }
    }
    a.with_limits(a.lo + b.lo, a.hi + b.hi)
}

/// Dispatches to [`otimes_l2`] or [`otimes_linf`] on the operands' norm.
pub fn otimes(a: &Subband, b: &Subband) -> Result<Subband> {
    match a.norm {
        Norm::L2 => otimes_l2(a, b),
        Norm::LInf => otimes_linf(a, b),
    }
}

/// Interval hull of two co-oriented subbands.
#[derive(Clone, Debug, PartialEq)]
pub struct BandHull {
    pub band: Subband,
    /// False when the two radial intervals are disjoint, so the hull also
    /// contains frequencies in neither operand.
    pub tight: bool,
}

pub fn union_band(a: &Subband, b: &Subband) -> Result<BandHull> {
    a.check_coaligned(b, a.norm)?;
    let band = a.with_limits(a.lo.min(b.lo), a.hi.max(b.hi))?;
    let tight = a.lo.max(b.lo) <= a.hi.min(b.hi);
    Ok(BandHull { band, tight })
}

/// The consistent L-inf region containing `omega`. Ties in magnitude go to
/// the lowest axis index.
pub fn consistent_region_of(omega: &[f64]) -> Result<Region> {
    let mut axis = 0;
    let mut best = -1.0;
    for (i, v) in omega.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            axis = i;
        }
    }
    if omega.is_empty() || best == 0.0 {
        return Err(Error::ZeroVector);
    }
    let sign = if omega[axis] > 0.0 { Sign::Plus } else { Sign::Minus };
    Ok(Region { axis, sign })
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn seg_dist(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let aq = [q[0] - a[0], q[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((aq[0] * ab[0] + aq[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let p = [a[0] + t * ab[0] - q[0], a[1] + t * ab[1] - q[1]];
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}
