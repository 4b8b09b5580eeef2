//! Property suite run by the `check` command.
//!
//! Each check draws its own cases from a seeded generator and reports
//! pass/fail with the worst observed error.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expansion::{expand_to_basis, DEFAULT_ATOM_CAP};
use crate::gaussian::{gabor_product, rbf_product, GaussianAtom};
use crate::model::{encode, ModelConfig, PnfModel};
use crate::scalespace::{scale_query, Covariance};
use crate::source::PointSource;
use crate::spectral::{fft2, ifft2};
use crate::subband::{consistent_region_of, otimes, Direction, Norm, Region, Sign, Subband};
use crate::tiling::{sample_frequency, validate_tiling, Scheme, Tiling, TilingSpec};
use crate::train::{adam_step, grad_check, AdamConfig, AdamState, GradientSet, TermControls};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("subband closure (L2)", closure_l2),
    ("subband closure (Linf)", closure_linf),
    ("consistent region scale invariance", region_scale),
    ("tiling coverage", tiling_coverage),
    ("encoding unit modulus", unit_modulus),
    ("expansion matches forward", expansion_oracle),
    ("expansion band confinement", expansion_bands),
    ("gradient check", gradient),
    ("adam scalar step", adam_scalar),
    ("fft round trip", fft_round_trip),
    ("parseval", parseval),
    ("zero covariance scale query", scale_identity),
    ("gaussian atom products", atom_products),
];

/// Runs every check; errors inside a check count as failures.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            match f(&mut rng) {
                Ok((passed, detail)) => CheckOutcome { name, passed, detail },
                Err(e) => CheckOutcome {
                    name,
                    passed: false,
                    detail: format!("error: {e}"),
                },
            }
        })
        .collect()
}

fn tiny_model(rng: &mut ChaCha8Rng, hidden: usize, shells: usize) -> Result<PnfModel> {
    let mut c = ModelConfig::default_image();
    c.hidden = hidden;
    c.tiling.radial_lo.truncate(shells);
    c.tiling.radial_hi.truncate(shells);
    c.seed = rng.random();
    let fans = Tiling::build(&c.tiling)?.fans.len();
    c.fans = Some(vec![rng.random_range(0..fans)]);
    PnfModel::init(&c)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.random_range(-0.5..0.5))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn radial(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let lo = rng.random_range(0.0..20.0);
    (lo, lo + rng.random_range(0.5..20.0))
}

fn closure(rng: &mut ChaCha8Rng, make: impl Fn(&mut ChaCha8Rng) -> Result<(Subband, Subband)>) -> Result<(bool, String)> {
    let mut fails = 0;
    let mut total = 0;
    for _ in 0..100 {
        let (a, b) = make(rng)?;
        let c = otimes(&a, &b)?;
        let (pa, pb) = (sample_frequency(&a, 10, rng)?, sample_frequency(&b, 10, rng)?);
        for (u, v) in pa.iter().zip(&pb) {
            total += 1;
            if !c.contains(&add(u, v))? {
                fails += 1;
            }
        }
    }
    Ok((fails == 0, format!("{fails} of {total} sums outside the product band")))
}

fn closure_l2(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    closure(rng, |rng| {
        let dir = Direction::from_angle(rng.random_range(0.0..2.0 * PI));
        let g = rng.random_range(0.02..FRAC_PI_4 - 0.02);
        let (l1, h1) = radial(rng);
        let (l2, h2) = radial(rng);
        Ok((
            Subband::new(l1, h1, dir.clone(), g, Norm::L2, None)?,
            Subband::new(l2, h2, dir, g, Norm::L2, None)?,
        ))
    })
}

fn closure_linf(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    closure(rng, |rng| {
        let g = rng.random_range(0.02..0.3);
        let quarter = rng.random_range(0..4);
        // region centred on the axis at angle quarter·π/2 from +y
        let theta = quarter as f64 * FRAC_PI_2 + rng.random_range(-FRAC_PI_4 + g..FRAC_PI_4 - g);
        let dir = Direction::from_angle(theta);
        let region = match quarter {
            0 => Region { axis: 1, sign: Sign::Plus },
            1 => Region { axis: 0, sign: Sign::Plus },
            2 => Region { axis: 1, sign: Sign::Minus },
            _ => Region { axis: 0, sign: Sign::Minus },
        };
        let (l1, h1) = radial(rng);
        let (l2, h2) = radial(rng);
        Ok((
            Subband::new(l1, h1, dir.clone(), g, Norm::LInf, Some(region))?,
            Subband::new(l2, h2, dir, g, Norm::LInf, Some(region))?,
        ))
    })
}

fn region_scale(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut fails = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(1..=3);
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = w.iter().map(|v| v * a).collect();
        if consistent_region_of(&w)? != consistent_region_of(&scaled)? {
            fails += 1;
        }
    }
    Ok((fails == 0, format!("{fails} of 1000 scalings changed the region")))
}

fn tiling_coverage(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let circ = TilingSpec {
        scheme: Scheme::Circular,
        ..TilingSpec::default_image()
    };
    let rect = TilingSpec {
        scheme: Scheme::Rectangular,
        ..TilingSpec::default_image()
    };
    let rc = validate_tiling(&Tiling::build(&circ)?, 4000);
    let rr = validate_tiling(&Tiling::build(&rect)?, 4000);
    let ok = rc.is_ok() && rr.is_ok() && rc.coverage == 1.0;
    Ok((
        ok,
        format!(
            "circular coverage {:.4}, rectangular coverage {:.4}, closure failures {}",
            rc.coverage,
            rr.coverage,
            rc.closure_failures + rr.closure_failures
        ),
    ))
}

fn unit_modulus(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = tiny_model(rng, 8, 4)?;
    let x = random_points(rng, 64, 2);
    let mut worst = 0.0f64;
    for b in &m.branches {
        for e in b.shell.iter().chain(&b.chain) {
            let z = encode(e, x.view())?;
            for (re, im) in z.re().iter().zip(z.im().iter()) {
                worst = worst.max((re.hypot(*im) - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max | |e| - 1 | = {worst:.2e}")))
}

fn expansion_oracle(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = tiny_model(rng, 2, 3)?;
    let e = expand_to_basis(&m, DEFAULT_ATOM_CAP)?;
    let x = random_points(rng, 64, 2);
    let (y, z) = (m.forward(x.view())?, e.eval(x.view())?);
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let err = y.iter().zip(&z).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())) / scale;
    Ok((err <= 1e-9, format!("{} atoms, max rel err {err:.2e}", e.len())))
}

fn expansion_bands(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = tiny_model(rng, 2, 3)?;
    let e = expand_to_basis(&m, DEFAULT_ATOM_CAP)?;
    let v = e.band_violations(&m, 1e-9)?;
    Ok((v.is_empty(), format!("{} of {} atoms outside their term band", v.len(), e.len())))
}

fn gradient(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = tiny_model(rng, 3, 2)?;
    let x = random_points(rng, 256, 2);
    let y = Array2::from_shape_fn((256, 1), |_| rng.random_range(0.0..1.0));
    let src = PointSource::new(x.view(), 2)?;
    let r = grad_check(&m, &src, y.view(), &TermControls::default(), 1e-5)?;
    Ok((
        r.max_rel_error <= 1e-6,
        format!("{} parameters, max rel err {:.2e}", r.parameters, r.max_rel_error),
    ))
}

fn adam_scalar(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut m = tiny_model(rng, 2, 1)?;
    let before = m.params()[0].1.get(0, 0);
    let mut g = GradientSet::zeros_like(&m);
    g.tensors[0].set(0, 0, Complex64::new(1.0, 1.0));
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(&m);
    let mask = vec![true; g.tensors.len()];
    adam_step(&mut m, &g, &mut state, &cfg, cfg.lr, &mask);
    let delta = m.params()[0].1.get(0, 0) - before;
    // bias-corrected moments are g and g², so the step is lr·g/(|g| + eps)
    let want = -cfg.lr / (1.0 + cfg.eps);
    let err = (delta.re - want).abs().max((delta.im - want).abs());
    Ok((err <= 1e-15, format!("delta {:.6e}, expected {want:.6e}", delta.re)))
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn fft_round_trip(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let a = random_complex(rng, 32);
    let b = ifft2(&fft2(&a)?)?;
    let err = a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).norm()));
    Ok((err <= 1e-12, format!("max err {err:.2e}")))
}

fn parseval(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let a = random_complex(rng, 32);
    let s = fft2(&a)?;
    let lhs: f64 = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / a.len() as f64;
    let rhs: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    let err = (lhs - rhs).abs() / rhs;
    Ok((err <= 1e-12, format!("rel err {err:.2e}")))
}

fn scale_identity(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = tiny_model(rng, 4, 4)?;
    let x = random_points(rng, 64, 2);
    let y = m.forward(x.view())?;
    let z = scale_query(&m, x.view(), &Covariance::zeros(2))?;
    let err = y.iter().zip(&z).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    Ok((err <= 1e-12, format!("max abs diff {err:.2e}")))
}

fn atom_products(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for i in 0..200 {
        let gabor = i % 2 == 0;
        let atom = |rng: &mut ChaCha8Rng| {
            let mu = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let gamma = rng.random_range(0.1..5.0);
            if gabor {
                let w = vec![rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
                GaussianAtom::new(amp, gamma, mu, w)
            } else {
                GaussianAtom::rbf(amp, gamma, mu)
            }
        };
        let (a, b) = (atom(rng)?, atom(rng)?);
        let p = if gabor { gabor_product(&a, &b)? } else { rbf_product(&a, &b)? };
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let want = a.eval(&x) * b.eval(&x);
        worst = worst.max((p.eval(&x) - want).norm() / want.norm().max(1e-300));
    }
    Ok((worst <= 1e-12, format!("max rel err {worst:.2e}")))
}
