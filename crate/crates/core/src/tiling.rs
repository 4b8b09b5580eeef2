//! Tilings of frequency space by orientation fans and radial shells.
//!
//! A tiling is a grid of subbands `S[i][j]`: `i` indexes radial shells and
//! `j` orientation fans. Fields with real values have Hermitian spectra, so a
//! fan also accounts for its mirror image `-ω`; coverage is measured that way.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::subband::{consistent_region_of, otimes, Direction, Norm, Region, Sign, Subband};
use crate::{Error, Result};

/// Margin kept between a shrunk rectangular fan and the diagonal it would
/// otherwise touch, in radians.
const DIAGONAL_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// L2 shells, `2m` fans of half-angle `π/(2m)` around the full circle.
    #[serde(alias = "circ")]
    Circular,
    /// L-inf shells, `2m` fans of half-angle `π/(4m)` over a half-plane,
    /// each confined to one consistent L-inf region.
    #[serde(alias = "rect")]
    Rectangular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingSpec {
    pub scheme: Scheme,
    /// Input dimension (1 or 2).
    pub dim: usize,
    /// Band limit `B` in cycles per unit.
    pub bandwidth: f64,
    /// Orientation parameter `m`.
    pub orientations: usize,
    /// Lower shell boundaries as fractions of `B`.
    pub radial_lo: Vec<f64>,
    /// Upper shell boundaries as fractions of `B`.
    pub radial_hi: Vec<f64>,
    pub seed: u64,
}

impl TilingSpec {
    /// Rectangular tiling used for image fitting: `B = 64`, `m = 8`,
    /// overlapping shells `[0,1/8], [1/16,1/4], [1/8,1/2], [1/4,1]`.
    pub fn default_image() -> Self {
        TilingSpec {
            scheme: Scheme::Rectangular,
            dim: 2,
            bandwidth: 64.0,
            orientations: 8,
            radial_lo: vec![0.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0],
            radial_hi: vec![1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTiling(m));
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth));
        }
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dimension {} not supported", self.dim));
        }
        if self.orientations < 2 {
            return bad(format!("orientations must be >= 2, got {}", self.orientations));
        }
        if self.radial_lo.is_empty() || self.radial_lo.len() != self.radial_hi.len() {
            return bad(format!(
                "radial_lo and radial_hi must be non-empty and equally long ({} vs {})",
                self.radial_lo.len(),
                self.radial_hi.len()
            ));
        }
        if self.radial_lo[0] < 0.0 {
            return bad("radial_lo must be non-negative".into());
        }
        for w in self.radial_lo.windows(2) {
            if w[1] < w[0] {
                return bad("radial_lo must be nondecreasing".into());
            }
        }
        for w in self.radial_hi.windows(2) {
            if w[1] < w[0] {
                return bad("radial_hi must be nondecreasing".into());
            }
        }
        for (k, (lo, hi)) in self.radial_lo.iter().zip(&self.radial_hi).enumerate() {
            if !(lo < hi) {
                return bad(format!("radial_lo[{k}] = {lo} must be below radial_hi[{k}] = {hi}"));
            }
        }
        if *self.radial_hi.last().unwrap() > 1.0 {
            return bad("radial_hi must not exceed 1".into());
        }
        Ok(())
    }

    pub fn shells(&self) -> usize {
        self.radial_lo.len()
    }
}

/// One orientation fan of a tiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fan {
    /// Orientation index `j` in the nominal layout.
    pub index: usize,
    pub dir: Direction,
    pub half_angle: f64,
    /// Half-angle before any shrinking away from a diagonal.
    pub nominal_half_angle: f64,
    pub norm: Norm,
    pub region: Option<Region>,
}

impl Fan {
    pub fn band(&self, lo: f64, hi: f64) -> Result<Subband> {
        Subband::new(lo, hi, self.dir.clone(), self.half_angle, self.norm, self.region)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tiling {
    pub spec: TilingSpec,
    pub fans: Vec<Fan>,
    /// Nominal fans dropped because they straddle a diagonal; their sectors
    /// are the uncovered wedges.
    pub excluded: Vec<Fan>,
    /// `subbands[i][j]`: shell `i`, fan `j`.
    pub subbands: Vec<Vec<Subband>>,
}

impl Tiling {
    pub fn build(spec: &TilingSpec) -> Result<Self> {
        match spec.scheme {
            Scheme::Circular => make_circular(spec),
            Scheme::Rectangular => make_rect(spec),
        }
    }

    pub fn n_fans(&self) -> usize {
        self.fans.len()
    }

    pub fn n_subbands(&self) -> usize {
        self.subbands.iter().map(Vec::len).sum()
    }

    /// Shell limits in cycles per unit.
    pub fn shell_limits(&self, shell: usize) -> (f64, f64) {
        let b = self.spec.bandwidth;
        (self.spec.radial_lo[shell] * b, self.spec.radial_hi[shell] * b)
    }

    fn from_fans(spec: &TilingSpec, fans: Vec<Fan>, excluded: Vec<Fan>) -> Result<Self> {
        let subbands = (0..spec.shells())
            .map(|i| {
                let (lo, hi) = (spec.radial_lo[i] * spec.bandwidth, spec.radial_hi[i] * spec.bandwidth);
                fans.iter().map(|f| f.band(lo, hi)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tiling {
            spec: spec.clone(),
            fans,
            excluded,
            subbands,
        })
    }
}

/// Circular tiling: `2m` fans with `d(θ_j)`, `θ_j = jπ/m`, half-angle
/// `π/(2m)`, L2 shells. Requires the fan width `π/m` below `π/4`.
pub fn make_circular(spec: &TilingSpec) -> Result<Tiling> {
    spec.validate()?;
    if spec.scheme != Scheme::Circular {
        return Err(Error::InvalidTiling("make_circular needs the circular scheme".into()));
    }
    let m = spec.orientations;
    let width = PI / m as f64;
    if width >= FRAC_PI_4 {
        return Err(Error::InvalidTiling(format!(
            "fan width pi/{m} must be below pi/4 for the L2 product rule"
        )));
    }
    let half = width / 2.0;
    let fans = match spec.dim {
        1 => [Sign::Plus, Sign::Minus]
            .iter()
            .enumerate()
            .map(|(j, &s)| Fan {
                index: j + 1,
                dir: Direction::axis(1, 0, s),
                half_angle: half,
                nominal_half_angle: half,
                norm: Norm::L2,
                region: None,
            })
            .collect(),
        2 => (1..=2 * m)
            .map(|j| Fan {
                index: j,
                dir: Direction::from_angle(j as f64 * width),
                half_angle: half,
                nominal_half_angle: half,
                norm: Norm::L2,
                region: None,
            })
            .collect(),
        d => return Err(Error::InvalidTiling(format!("circular tiling not available in dimension {d}"))),
    };
    Tiling::from_fans(spec, fans, Vec::new())
}

/// Rectangular (pseudo-polar) tiling in 2D: `2m` orientations `θ_j = jπ/(2m)`
/// spanning a half-plane, L-inf shells. Fans are shrunk so they stay strictly
/// inside one consistent region; fans centred on a diagonal are excluded.
pub fn make_rect(spec: &TilingSpec) -> Result<Tiling> {
    spec.validate()?;
    if spec.scheme != Scheme::Rectangular {
        return Err(Error::InvalidTiling("make_rect needs the rectangular scheme".into()));
    }
    if spec.dim != 2 {
        return Err(Error::InvalidTiling(format!(
            "rectangular tiling is two-dimensional, got dimension {}",
            spec.dim
        )));
    }
    let m = spec.orientations;
    let step = PI / (2 * m) as f64;
    let nominal = step / 2.0;
    let mut fans = Vec::new();
    let mut excluded = Vec::new();
    for j in 1..=2 * m {
        let theta = j as f64 * step;
        let dir = Direction::from_angle(theta);
        let t = (theta - FRAC_PI_4).rem_euclid(FRAC_PI_2);
        let to_diagonal = t.min(FRAC_PI_2 - t);
        let half = nominal.min(to_diagonal - DIAGONAL_MARGIN);
        let mut fan = Fan {
            index: j,
            dir,
            half_angle: half,
            nominal_half_angle: nominal,
            norm: Norm::LInf,
            region: None,
        };
        if half <= DIAGONAL_MARGIN {
            fan.half_angle = nominal;
            excluded.push(fan);
            continue;
        }
        fan.region = Some(consistent_region_of(fan.dir.components())?);
        fans.push(fan);
    }
    if fans.is_empty() {
        return Err(Error::InvalidTiling(format!("m = {m} leaves no valid fan")));
    }
    Tiling::from_fans(spec, fans, excluded)
}

/// Draws `count` frequencies from `s`: angle uniform within the fan, p-norm
/// radius uniform in `[lo, hi]` (exactly `lo` when `lo == hi`).
pub fn sample_frequency<R: Rng + ?Sized>(s: &Subband, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(s.half_angle > 0.0) {
        return Err(Error::InvalidSubband("degenerate fan (half-angle <= 0)".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let dir = s.dir.components();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = if s.lo == s.hi { s.lo } else { rng.random_range(s.lo..=s.hi) };
        let unit: Vec<f64> = match s.dim() {
            1 => vec![dir[0].signum()],
            2 => {
                let phi = s.dir.angle() + rng.random_range(-s.half_angle..=s.half_angle);
                vec![phi.sin(), phi.cos()]
            }
            3 => {
                let psi = rng.random_range(0.0..=s.half_angle);
                let az = rng.random_range(0.0..2.0 * PI);
                let (e1, e2) = orthonormal_complement(dir);
                (0..3)
                    .map(|i| psi.cos() * dir[i] + psi.sin() * (az.cos() * e1[i] + az.sin() * e2[i]))
                    .collect()
            }
            d => return Err(Error::InvalidArgument(format!("sampling not supported in dimension {d}"))),
        };
        let n = s.norm.eval(&unit);
        let mut w: Vec<f64> = unit.iter().map(|u| u * r / n).collect();
        if let (Norm::LInf, Some(region)) = (s.norm, s.region) {
            w[region.axis] = region.sign.value() * r;
        }
        out.push(w);
    }
    Ok(out)
}

fn orthonormal_complement(d: &[f64]) -> ([f64; 3], [f64; 3]) {
    let pick = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let d3 = [d[0], d[1], d[2]];
    let mut e1 = cross(d3, pick);
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    (e1, cross(d3, e1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TilingReport {
    /// Fraction of Monte-Carlo points in the target region covered by some
    /// subband (directly or by its mirror).
    pub coverage: f64,
    pub coverage_samples: usize,
    pub closure_checks: usize,
    pub closure_failures: usize,
    pub violations: Vec<String>,
}

impl TilingReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.closure_failures == 0
    }
}

/// Checks subband invariants, spot-checks `⊗` closure within every fan, and
/// estimates coverage of the target region with `samples` uniform draws.
///
/// The target region is the disk `‖ω‖₂ ≤ B` for circular tilings and the
/// square `[-B, B]^n` minus the excluded diagonal wedges for rectangular
/// ones.
pub fn validate_tiling(t: &Tiling, samples: usize) -> TilingReport {
    let mut violations = Vec::new();
    for (i, shell) in t.subbands.iter().enumerate() {
        for (j, s) in shell.iter().enumerate() {
            for v in s.violations() {
                violations.push(format!("S[{i}][{j}]: {v}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(t.spec.seed);

    let mut closure_checks = 0;
    let mut closure_failures = 0;
    let n_shells = t.subbands.len();
    for j in 0..t.fans.len() {
        for a in 0..n_shells {
            for b in a..n_shells {
                let (sa, sb) = (&t.subbands[a][j], &t.subbands[b][j]);
                if !(sa.violations().is_empty() && sb.violations().is_empty()) {
                    continue;
                }
                let Ok(prod) = otimes(sa, sb) else {
                    closure_failures += 1;
                    continue;
                };
                let (Ok(wa), Ok(wb)) = (sample_frequency(sa, 8, &mut rng), sample_frequency(sb, 8, &mut rng)) else {
                    continue;
                };
                for (x, y) in wa.iter().zip(&wb) {
                    let sum: Vec<f64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
                    closure_checks += 1;
                    if !prod.contains(&sum).unwrap_or(false) {
                        closure_failures += 1;
                    }
                }
            }
        }
    }

    let b = t.spec.bandwidth;
    let dim = t.spec.dim;
    let mut inside = 0usize;
    let mut covered = 0usize;
    let all: Vec<&Subband> = t.subbands.iter().flatten().collect();
    if !all.is_empty() {
        for _ in 0..samples {
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-b..=b)).collect();
            if !in_target(t, &w) {
                continue;
            }
            inside += 1;
            let neg: Vec<f64> = w.iter().map(|v| -v).collect();
            if all
                .iter()
                .any(|s| s.contains(&w).unwrap_or(false) || s.contains(&neg).unwrap_or(false))
            {
                covered += 1;
            }
        }
    }
    TilingReport {
        coverage: if inside == 0 { 0.0 } else { covered as f64 / inside as f64 },
        coverage_samples: inside,
        closure_checks,
        closure_failures,
        violations,
    }
}

fn in_target(t: &Tiling, w: &[f64]) -> bool {
    match t.spec.scheme {
        Scheme::Circular => crate::subband::l2(w) <= t.spec.bandwidth,
        Scheme::Rectangular => {
            let r = crate::subband::l2(w);
            if r == 0.0 {
                return true;
            }
            !t.excluded.iter().any(|f| {
                let cos = f.nominal_half_angle.cos() * r;
                let d = f.dir.components();
                let dot: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
                dot >= cos || -dot >= cos
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circ(m: usize, lo: Vec<f64>, hi: Vec<f64>) -> TilingSpec {
        TilingSpec {
            scheme: Scheme::Circular,
            dim: 2,
            bandwidth: 64.0,
            orientations: m,
            radial_lo: lo,
            radial_hi: hi,
            seed: 3,
        }
    }

    #[test]
    fn circular_default_counts() {
        let spec = circ(8, vec![0.0, 1.0 / 16.0, 0.125, 0.25], vec![0.125, 0.25, 0.5, 1.0]);
        let t = make_circular(&spec).unwrap();
        assert_eq!(t.n_fans(), 16);
        assert_eq!(t.n_subbands(), 64);
        for s in t.subbands.iter().flatten() {
            assert_eq!(s.norm, Norm::L2);
            assert!((s.half_angle - PI / 16.0).abs() < 1e-15);
        }
        assert_eq!(t.subbands[3][0].lo, 16.0);
        assert_eq!(t.subbands[3][0].hi, 64.0);
    }

    #[test]
    fn circular_rejects_wide_fans() {
        assert!(make_circular(&circ(4, vec![0.0], vec![1.0])).is_err());
        assert!(make_circular(&circ(2, vec![0.0], vec![1.0])).is_err());
        assert!(make_circular(&circ(5, vec![0.0], vec![1.0])).is_ok());
    }

    #[test]
    fn circular_full_coverage() {
        let t = make_circular(&circ(8, vec![0.0], vec![1.0])).unwrap();
        let r = validate_tiling(&t, 100_000);
        assert_eq!(r.coverage, 1.0);
        assert!(r.is_ok(), "{r:?}");
    }

    #[test]
    fn rect_default_structure() {
        let t = make_rect(&TilingSpec::default_image()).unwrap();
        assert_eq!(t.n_fans(), 14);
        assert_eq!(t.n_subbands(), 56);
        assert_eq!(t.excluded.len(), 2);
        for f in &t.fans {
            let r = f.region.unwrap();
            assert!(r.contains_fan(&f.dir, f.half_angle, 0.0));
            // Extreme rays stay off the diagonals.
            for side in [-1.0, 1.0] {
                let phi = f.dir.angle() + side * f.half_angle;
                let t = (phi - FRAC_PI_4).rem_euclid(FRAC_PI_2);
                assert!(t.min(FRAC_PI_2 - t) > 0.0);
            }
        }
        for s in t.subbands.iter().flatten() {
            assert_eq!(s.norm, Norm::LInf);
            assert!(s.violations().is_empty());
        }
    }

    #[test]
    fn rect_covers_corner() {
        let t = make_rect(&TilingSpec::default_image()).unwrap();
        let corner = [60.0, 20.0];
        assert!(t.subbands[3].iter().any(|s| s.contains(&corner).unwrap()));
        assert_eq!(Norm::LInf.eval(&corner), 60.0);
    }

    #[test]
    fn rect_coverage_and_closure() {
        let t = make_rect(&TilingSpec::default_image()).unwrap();
        let r = validate_tiling(&t, 100_000);
        assert!(r.coverage >= 0.99, "coverage {}", r.coverage);
        assert!(r.is_ok(), "{:?}", r.violations);
        assert!(r.closure_checks > 0);
    }

    #[test]
    fn straddling_fan_reported() {
        let mut t = make_rect(&TilingSpec::default_image()).unwrap();
        t.subbands[0][0].dir = Direction::from_angle(FRAC_PI_4);
        let r = validate_tiling(&t, 1000);
        assert!(!r.violations.is_empty());
    }

    #[test]
    fn empty_tiling_has_no_coverage() {
        let mut t = make_rect(&TilingSpec::default_image()).unwrap();
        t.subbands.clear();
        t.fans.clear();
        assert_eq!(validate_tiling(&t, 1000).coverage, 0.0);
    }

    #[test]
    fn rect_rejects_1d() {
        let mut spec = TilingSpec::default_image();
        spec.dim = 1;
        assert!(make_rect(&spec).is_err());
    }

    #[test]
    fn shell_samples_are_exact() {
        let s = Subband::new(
            4.0,
            4.0,
            Direction::new(vec![1.0, 0.0]).unwrap(),
            PI / 8.0,
            Norm::LInf,
            Some(Region { axis: 0, sign: Sign::Plus }),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w in sample_frequency(&s, 100, &mut rng).unwrap() {
            assert_eq!(w[0], 4.0);
            assert_eq!(Norm::LInf.eval(&w), 4.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = make_rect(&TilingSpec::default_image()).unwrap();
        let s = &t.subbands[2][5];
        let a = sample_frequency(s, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_frequency(s, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let mut spec = TilingSpec::default_image();
        spec.radial_hi[1] = 0.01;
        assert!(spec.validate().is_err());
        let mut spec = TilingSpec::default_image();
        spec.radial_hi[3] = 1.5;
        assert!(spec.validate().is_err());
        let mut spec = TilingSpec::default_image();
        spec.radial_lo.clear();
        assert!(spec.validate().is_err());
    }
}
