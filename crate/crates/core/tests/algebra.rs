use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnf::gaussian::{gabor_product, rbf_product, GaussianAtom};
use pnf::subband::{consistent_region_of, otimes, otimes_l2, otimes_linf, union_band, Sign};
use pnf::tiling::sample_frequency;
use pnf::{Direction, Norm, Region, Subband};

fn l2_pair(theta: f64, gamma: f64, a: (f64, f64), b: (f64, f64)) -> (Subband, Subband) {
    let d = Direction::from_angle(theta);
    (
        Subband::new(a.0, a.0 + a.1, d.clone(), gamma, Norm::L2, None).unwrap(),
        Subband::new(b.0, b.0 + b.1, d, gamma, Norm::L2, None).unwrap(),
    )
}

/// Fan around the axis at `quarter · π/2` from +y, inside that axis's region.
fn linf_band(quarter: usize, offset: f64, gamma: f64, lo: f64, width: f64) -> Subband {
    let region = match quarter {
        0 => Region { axis: 1, sign: Sign::Plus },
        1 => Region { axis: 0, sign: Sign::Plus },
        2 => Region { axis: 1, sign: Sign::Minus },
        _ => Region { axis: 0, sign: Sign::Minus },
    };
    let theta = quarter as f64 * FRAC_PI_2 + offset * (FRAC_PI_4 - gamma);
    Subband::new(lo, lo + width, Direction::from_angle(theta), gamma, Norm::LInf, Some(region)).unwrap()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn l2_product_band_contains_sums(
        theta in 0.0..2.0 * PI,
        gamma in 0.01..FRAC_PI_4 - 1e-3,
        a in (0.0..30.0, 0.1..30.0),
        b in (0.0..30.0, 0.1..30.0),
        seed in any::<u64>(),
    ) {
        let (s1, s2) = l2_pair(theta, gamma, a, b);
        let p = otimes_l2(&s1, &s2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (sample_frequency(&s1, 20, &mut rng).unwrap(), sample_frequency(&s2, 20, &mut rng).unwrap());
        for (x, y) in u.iter().zip(&v) {
            prop_assert!(p.contains(&add(x, y)).unwrap());
        }
    }

    #[test]
    fn linf_product_band_contains_sums(
        quarter in 0usize..4,
        offset in -1.0..1.0f64,
        gamma in 0.01..0.5f64,
        a in (0.0..30.0, 0.1..30.0),
        b in (0.0..30.0, 0.1..30.0),
        seed in any::<u64>(),
    ) {
        let s1 = linf_band(quarter, offset, gamma, a.0, a.1);
        let s2 = s1.with_limits(b.0, b.0 + b.1).unwrap();
        let p = otimes_linf(&s1, &s2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (sample_frequency(&s1, 20, &mut rng).unwrap(), sample_frequency(&s2, 20, &mut rng).unwrap());
        for (x, y) in u.iter().zip(&v) {
            prop_assert!(p.contains(&add(x, y)).unwrap());
        }
    }

    #[test]
    fn otimes_commutes(
        theta in 0.0..2.0 * PI,
        gamma in 0.01..FRAC_PI_4 - 1e-3,
        a in (0.0..30.0, 0.1..30.0),
        b in (0.0..30.0, 0.1..30.0),
        quarter in 0usize..4,
        offset in -1.0..1.0f64,
    ) {
        let (s1, s2) = l2_pair(theta, gamma, a, b);
        prop_assert_eq!(otimes(&s1, &s2).unwrap(), otimes(&s2, &s1).unwrap());
        let t1 = linf_band(quarter, offset, gamma.min(0.5), a.0, a.1);
        let t2 = t1.with_limits(b.0, b.0 + b.1).unwrap();
        prop_assert_eq!(otimes(&t1, &t2).unwrap(), otimes(&t2, &t1).unwrap());
    }

    #[test]
    fn otimes_associates_in_additive_limits(
        gamma in 0.01..FRAC_PI_4 - 1e-3,
        a in (0.0..30.0, 0.1..30.0),
        b in (0.0..30.0, 0.1..30.0),
        c in (0.0..30.0, 0.1..30.0),
        quarter in 0usize..4,
        offset in -1.0..1.0f64,
    ) {
        // L-inf: both limits add
        let s1 = linf_band(quarter, offset, gamma.min(0.5), a.0, a.1);
        let s2 = s1.with_limits(b.0, b.0 + b.1).unwrap();
        let s3 = s1.with_limits(c.0, c.0 + c.1).unwrap();
        let left = otimes(&otimes(&s1, &s2).unwrap(), &s3).unwrap();
        let right = otimes(&s1, &otimes(&s2, &s3).unwrap()).unwrap();
        prop_assert!((left.lo - right.lo).abs() <= 1e-12 * left.lo.max(1.0));
        prop_assert!((left.hi - right.hi).abs() <= 1e-12 * left.hi);
        // L2: the upper limit adds; the lower limit picks up one √cos 2γ per fold
        let (u1, u2) = l2_pair(0.3, gamma, a, b);
        let u3 = u1.with_limits(c.0, c.0 + c.1).unwrap();
        let left = otimes(&otimes(&u1, &u2).unwrap(), &u3).unwrap();
        let right = otimes(&u1, &otimes(&u2, &u3).unwrap()).unwrap();
        prop_assert!((left.hi - right.hi).abs() <= 1e-12 * left.hi);
        let k = (2.0 * gamma).cos().sqrt();
        prop_assert!((left.lo - (k * k * (a.0 + b.0) + k * c.0)).abs() <= 1e-12 * (1.0 + left.lo));
        prop_assert!((right.lo - (k * a.0 + k * k * (b.0 + c.0))).abs() <= 1e-12 * (1.0 + right.lo));
    }

    #[test]
    fn region_is_scale_invariant(w in prop::collection::vec(-50.0..50.0f64, 1..4), a in 1e-6..1e6f64) {
        prop_assume!(w.iter().any(|v| *v != 0.0));
        let scaled: Vec<f64> = w.iter().map(|v| v * a).collect();
        prop_assert_eq!(consistent_region_of(&w).unwrap(), consistent_region_of(&scaled).unwrap());
    }

    #[test]
    fn union_hull_contains_both(
        theta in 0.0..2.0 * PI,
        gamma in 0.01..FRAC_PI_4 - 1e-3,
        a in (0.0..30.0, 0.1..30.0),
        b in (0.0..30.0, 0.1..30.0),
        seed in any::<u64>(),
    ) {
        let (s1, s2) = l2_pair(theta, gamma, a, b);
        let h = union_band(&s1, &s2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in [&s1, &s2] {
            for w in sample_frequency(s, 10, &mut rng).unwrap() {
                prop_assert!(h.band.contains(&w).unwrap());
            }
        }
        let overlap = a.0.max(b.0) <= (a.0 + a.1).min(b.0 + b.1);
        prop_assert_eq!(h.tight, overlap);
    }

    #[test]
    fn atom_products_are_pointwise(
        amp in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        gamma in (0.05..8.0f64, 0.05..8.0f64),
        mu in prop::array::uniform4(-1.0..1.0f64),
        omega in prop::array::uniform4(-30.0..30.0f64),
        x in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let a = GaussianAtom::new(Complex64::new(amp.0, amp.1), gamma.0, mu[..2].to_vec(), omega[..2].to_vec()).unwrap();
        let b = GaussianAtom::new(Complex64::new(amp.2, amp.3), gamma.1, mu[2..].to_vec(), omega[2..].to_vec()).unwrap();
        let want = a.eval(&x) * b.eval(&x);
        let got = gabor_product(&a, &b).unwrap().eval(&x);
        prop_assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-300));
        let (ra, rb) = (
            GaussianAtom::rbf(a.amplitude, a.gamma, a.mu.clone()).unwrap(),
            GaussianAtom::rbf(b.amplitude, b.gamma, b.mu.clone()).unwrap(),
        );
        let want = ra.eval(&x) * rb.eval(&x);
        let got = rbf_product(&ra, &rb).unwrap().eval(&x);
        prop_assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-300));
    }
}

#[test]
fn origin_membership_follows_lower_limit() {
    let d = Direction::from_angle(0.4);
    let open = Subband::new(0.0, 5.0, d.clone(), 0.2, Norm::L2, None).unwrap();
    let shell = Subband::new(1.0, 5.0, d, 0.2, Norm::L2, None).unwrap();
    assert!(open.contains(&[0.0, 0.0]).unwrap());
    assert!(!shell.contains(&[0.0, 0.0]).unwrap());
}

#[test]
fn region_ties_go_to_lowest_axis() {
    let r = consistent_region_of(&[-3.0, 3.0]).unwrap();
    assert_eq!(r, Region { axis: 0, sign: Sign::Minus });
    assert!(consistent_region_of(&[0.0, 0.0]).is_err());
}

#[test]
fn l2_product_lower_limit_by_hand() {
    // γ = π/8: √cos(π/4) = 2^(-1/4)
    let (a, b) = l2_pair(1.0, PI / 8.0, (4.0, 4.0), (6.0, 2.0));
    let p = otimes_l2(&a, &b).unwrap();
    assert!((p.lo - 10.0 * 2f64.powf(-0.25)).abs() < 1e-12);
    assert_eq!(p.hi, 16.0);
}

#[test]
fn l2_product_rejects_wide_fans() {
    let d = Direction::from_angle(0.0);
    assert!(Subband::new(1.0, 2.0, d.clone(), FRAC_PI_4, Norm::L2, None).is_err());
    let mut a = Subband::new(1.0, 2.0, d, 0.5, Norm::L2, None).unwrap();
    a.half_angle = FRAC_PI_4;
    assert!(otimes_l2(&a, &a).is_err());
}
