//! Gaussian (RBF) and Gabor atoms and their closed-form products.
//!
//! An atom evaluates to `a · exp(-½γ‖x-μ‖²) · exp(i ω·x)` with `ω` in radians
//! per unit and the phase referenced to the origin. Both families are closed
//! under pointwise multiplication.

use num_complex::Complex64;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAtom {
    pub amplitude: Complex64,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
}

impl GaussianAtom {
    pub fn new(amplitude: Complex64, gamma: f64, mu: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let atom = GaussianAtom {
            amplitude,
            gamma,
            mu,
            omega,
        };
        atom.validate()?;
        Ok(atom)
    }

    /// A pure RBF atom (zero frequency).
    pub fn rbf(amplitude: Complex64, gamma: f64, mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        Self::new(amplitude, gamma, mu, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let r2: f64 = x.iter().zip(&self.mu).map(|(a, b)| (a - b) * (a - b)).sum();
        let phase: f64 = x.iter().zip(&self.omega).map(|(a, w)| a * w).sum();
        self.amplitude * (-0.5 * self.gamma * r2).exp() * Complex64::from_polar(1.0, phase)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidAtom(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.mu.len() != self.omega.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu.len(),
                got: self.omega.len(),
            });
        }
        Ok(())
    }
}

/// Product of two RBF atoms: `γ' = γ₁+γ₂`, `μ' = (γ₁μ₁+γ₂μ₂)/γ'`, amplitude
/// scaled by `exp(-½·γ₁γ₂/γ'·‖μ₁-μ₂‖²)`.
pub fn rbf_product(a: &GaussianAtom, b: &GaussianAtom) -> Result<GaussianAtom> {
    for atom in [a, b] {
        atom.validate()?;
        if atom.omega.iter().any(|&w| w != 0.0) {
            return Err(Error::InvalidAtom("rbf_product needs zero-frequency atoms".into()));
        }
    }
    gaussian_part(a, b).map(|(amp, gamma, mu)| GaussianAtom {
        amplitude: amp,
        gamma,
        mu,
        omega: vec![0.0; a.dim()],
    })
}

/// Product of two Gabor atoms. The Gaussian envelopes combine as in
/// [`rbf_product`] and the frequencies add. Phases are referenced to the
/// origin, so no further phase constant arises.
pub fn gabor_product(a: &GaussianAtom, b: &GaussianAtom) -> Result<GaussianAtom> {
    a.validate()?;
    b.validate()?;
    let (amplitude, gamma, mu) = gaussian_part(a, b)?;
    let omega = a.omega.iter().zip(&b.omega).map(|(x, y)| x + y).collect();
    Ok(GaussianAtom {
        amplitude,
        gamma,
        mu,
        omega,
    })
}

fn gaussian_part(a: &GaussianAtom, b: &GaussianAtom) -> Result<(Complex64, f64, Vec<f64>)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let gamma = a.gamma + b.gamma;
    let mu = a
        .mu
        .iter()
        .zip(&b.mu)
        .map(|(m1, m2)| (a.gamma * m1 + b.gamma * m2) / gamma)
        .collect();
    let gap2: f64 = a.mu.iter().zip(&b.mu).map(|(m1, m2)| (m1 - m2) * (m1 - m2)).sum();
    let scale = (-0.5 * a.gamma * b.gamma / gamma * gap2).exp();
    Ok((a.amplitude * b.amplitude * scale, gamma, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coincident_centres() {
        let a = GaussianAtom::rbf(c(1.0, 0.0), 1.0, vec![0.3, -0.2]).unwrap();
        let p = rbf_product(&a, &a).unwrap();
        assert_eq!(p.gamma, 2.0);
        assert_eq!(p.mu, vec![0.3, -0.2]);
        assert_eq!(p.amplitude, c(1.0, 0.0));
    }

    #[test]
    fn weighted_centre() {
        let a = GaussianAtom::rbf(c(1.0, 0.0), 1.0, vec![0.0]).unwrap();
        let b = GaussianAtom::rbf(c(1.0, 0.0), 1.0, vec![2.0]).unwrap();
        let p = rbf_product(&a, &b).unwrap();
        assert_eq!((p.gamma, p.mu[0]), (2.0, 1.0));
        // exp(-½ · ½ · 4) = exp(-1)
        assert!((p.amplitude.re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gabor_frequencies_add() {
        let a = GaussianAtom::new(c(0.5, 0.1), 2.0, vec![0.1], vec![3.0]).unwrap();
        let b = GaussianAtom::new(c(1.0, -0.4), 2.0, vec![0.1], vec![-1.5]).unwrap();
        let p = gabor_product(&a, &b).unwrap();
        assert_eq!(p.omega, vec![1.5]);
        let r = rbf_product(
            &GaussianAtom::rbf(a.amplitude, 2.0, vec![0.1]).unwrap(),
            &GaussianAtom::rbf(b.amplitude, 2.0, vec![0.1]).unwrap(),
        )
        .unwrap();
        assert_eq!((p.gamma, &p.mu, p.amplitude), (r.gamma, &r.mu, r.amplitude));
    }

    #[test]
    fn pointwise_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut atom = |freq: bool| {
                let mu = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let omega = if freq {
                    vec![rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]
                } else {
                    vec![0.0, 0.0]
                };
                let amp = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                GaussianAtom::new(amp, rng.random_range(0.1..5.0), mu, omega).unwrap()
            };
            let (a, b) = (atom(true), atom(true));
            let p = gabor_product(&a, &b).unwrap();
            let x = [0.25, -0.4];
            let want = a.eval(&x) * b.eval(&x);
            assert!((p.eval(&x) - want).norm() <= 1e-12 * want.norm().max(1e-300));
        }
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(GaussianAtom::rbf(c(1.0, 0.0), 0.0, vec![0.0]).is_err());
        let mut a = GaussianAtom::rbf(c(1.0, 0.0), 1.0, vec![0.0]).unwrap();
        a.gamma = -1.0;
        assert!(rbf_product(&a, &a).is_err());
        assert!(gabor_product(&a, &a).is_err());
    }
}
