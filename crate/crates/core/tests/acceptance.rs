//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 5 to 7 share one trained model.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnf::config::parse_config;
use pnf::expansion::{expand_to_basis, DEFAULT_ATOM_CAP};
use pnf::gaussian::{gabor_product, rbf_product, GaussianAtom};
use pnf::image::Image;
use pnf::model::{ModelConfig, PnfModel};
use pnf::scalespace::{gaussian_blur, scale_query_source, Covariance};
use pnf::source::{GridTables, PointSource};
use pnf::spectral::{
    pyramid_export, render_grid, spectrum_report, GridSpec, TermSelector, Window, DEFAULT_RESOLUTION_CAP,
};
use pnf::subband::{otimes_l2, otimes_linf, Sign};
use pnf::tiling::sample_frequency;
use pnf::train::{fit, grad_check, psnr, GridDataset, TermControls, TrainConfig, TrainLog};
use pnf::{Direction, Exec, Norm, Region, Subband};

const CLOSURE_PAIRS: usize = 100_000;
const CLOSURE_BUDGET: Duration = Duration::from_secs(5);
const HALF_ANGLES: [f64; 3] = [PI / 16.0, FRAC_PI_8, 0.99 * FRAC_PI_8];

const ORACLE_POINTS: usize = 256;
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);

const GRAD_EPS: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const FIT_STEPS: usize = 5000;
const FIT_LR: f64 = 1e-3;
const FIT_PSNR: f64 = 30.0;
const FIT_BUDGET: Duration = Duration::from_secs(15 * 60);
const LOSS_WINDOW: usize = 500;

const MARGIN_BINS: f64 = 2.0;
const OUT_BAND_TOL: f64 = 1e-2;
const ADDITIVITY_TOL: f64 = 1e-12;

const BLUR_SIGMA_PX: f64 = 2.0;
const BLUR_PSNR: f64 = 20.0;
const IDENTITY_TOL: f64 = 1e-12;

const ATOM_PAIRS: usize = 1000;
const ATOM_POINTS: usize = 100;
const ATOM_TOL: f64 = 1e-12;
const ATOM_BUDGET: Duration = Duration::from_secs(5);

const DETERMINISM_STEPS: usize = 60;

struct Outcome {
    id: usize,
    passed: bool,
    detail: String,
}

fn outcome(id: usize, passed: bool, detail: String) -> Outcome {
    Outcome { id, passed, detail }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn closure_l2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut violations, mut checked) = (0usize, 0usize);
    for &gamma in &HALF_ANGLES {
        for _ in 0..CLOSURE_PAIRS {
            let d = Direction::from_angle(rng.random_range(0.0..2.0 * PI));
            let band = |rng: &mut ChaCha8Rng| {
                let lo = rng.random_range(0.0..30.0);
                Subband::new(lo, lo + rng.random_range(0.1..30.0), d.clone(), gamma, Norm::L2, None).unwrap()
            };
            let (a, b) = (band(&mut rng), band(&mut rng));
            let p = otimes_l2(&a, &b).unwrap();
            let u = &sample_frequency(&a, 1, &mut rng).unwrap()[0];
            let v = &sample_frequency(&b, 1, &mut rng).unwrap()[0];
            checked += 1;
            if !p.contains(&add(u, v)).unwrap() {
                violations += 1;
            }
        }
    }
    let dt = t.elapsed();
    outcome(
        1,
        violations == 0 && dt < CLOSURE_BUDGET,
        format!("{violations} violations in {checked} pairs, {:.2} s", dt.as_secs_f64()),
    )
}

fn closure_linf() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let regions = [
        Region { axis: 1, sign: Sign::Plus },
        Region { axis: 0, sign: Sign::Plus },
        Region { axis: 1, sign: Sign::Minus },
        Region { axis: 0, sign: Sign::Minus },
    ];
    let (mut violations, mut checked) = (0usize, 0usize);
    for (q, region) in regions.into_iter().enumerate() {
        for i in 0..CLOSURE_PAIRS {
            let gamma = HALF_ANGLES[i % HALF_ANGLES.len()];
            let theta = q as f64 * FRAC_PI_2 + rng.random_range(-1.0..1.0) * (FRAC_PI_4 - gamma);
            let d = Direction::from_angle(theta);
            let band = |rng: &mut ChaCha8Rng| {
                let lo = rng.random_range(0.0..30.0);
                let hi = lo + rng.random_range(0.1..30.0);
                Subband::new(lo, hi, d.clone(), gamma, Norm::LInf, Some(region)).unwrap()
            };
            let (a, b) = (band(&mut rng), band(&mut rng));
            let p = otimes_linf(&a, &b).unwrap();
            let u = &sample_frequency(&a, 1, &mut rng).unwrap()[0];
            let v = &sample_frequency(&b, 1, &mut rng).unwrap()[0];
            checked += 1;
            if !p.contains(&add(u, v)).unwrap() {
                violations += 1;
            }
        }
    }
    let dt = t.elapsed();
    outcome(
        2,
        violations == 0 && dt < CLOSURE_BUDGET,
        format!("{violations} violations in {checked} pairs over 4 regions, {:.2} s", dt.as_secs_f64()),
    )
}

/// One rect fan, two terms, width 3.
fn tiny_model(seed: u64) -> PnfModel {
    let mut c = ModelConfig::rect_image();
    c.hidden = 3;
    c.seed = seed;
    c.tiling.radial_lo.truncate(2);
    c.tiling.radial_hi.truncate(2);
    c.fans = Some(vec![0]);
    PnfModel::init(&c).unwrap()
}

fn random_points(seed: u64, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 2), |_| rng.random_range(-0.5..0.5))
}

fn expansion_oracle() -> Outcome {
    let t = Instant::now();
    let m = tiny_model(3);
    let x = random_points(30, ORACLE_POINTS);
    let f = m.forward(x.view()).unwrap();
    let e = expand_to_basis(&m, DEFAULT_ATOM_CAP).unwrap();
    let g = e.eval(x.view()).unwrap();
    let err = f.iter().zip(&g).fold(0.0f64, |a, (p, q)| a.max((p - q).abs() / (1.0 + p.abs())));
    let outside = e.band_violations(&m, ORACLE_TOL).unwrap().len();
    let dt = t.elapsed();
    outcome(
        3,
        err <= ORACLE_TOL && outside == 0 && dt < ORACLE_BUDGET,
        format!(
            "max rel err {err:.2e}, {} atoms, {outside} outside their band, {:.2} s",
            e.len(),
            dt.as_secs_f64()
        ),
    )
}

fn gradient() -> Outcome {
    let t = Instant::now();
    let m = tiny_model(4);
    let x = random_points(40, ORACLE_POINTS);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let y = Array2::from_shape_fn((ORACLE_POINTS, 1), |_| rng.random_range(0.0..1.0));
    let src = PointSource::new(x.view(), 2).unwrap();
    let r = grad_check(&m, &src, y.view(), &TermControls::default(), GRAD_EPS).unwrap();
    let dt = t.elapsed();
    outcome(
        4,
        r.parameters == m.parameter_count() && r.max_rel_error <= GRAD_TOL && dt < GRAD_BUDGET,
        format!(
            "max rel err {:.2e} over {} parameters (eps {GRAD_EPS:e}), {:.2} s",
            r.max_rel_error,
            r.parameters,
            dt.as_secs_f64()
        ),
    )
}

fn atom_algebra() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let vec2 = |rng: &mut ChaCha8Rng, r: f64| vec![rng.random_range(-r..r), rng.random_range(-r..r)];
    for _ in 0..ATOM_PAIRS {
        let atom = |rng: &mut ChaCha8Rng| {
            let amp = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let gamma = rng.random_range(0.1..10.0);
            (amp, gamma, vec2(rng, 1.0), vec2(rng, 20.0))
        };
        let (a, b) = (atom(&mut rng), atom(&mut rng));
        let ga = GaussianAtom::new(a.0, a.1, a.2.clone(), a.3).unwrap();
        let gb = GaussianAtom::new(b.0, b.1, b.2.clone(), b.3).unwrap();
        let ra = GaussianAtom::rbf(a.0, a.1, a.2).unwrap();
        let rb = GaussianAtom::rbf(b.0, b.1, b.2).unwrap();
        let (gp, rp) = (gabor_product(&ga, &gb).unwrap(), rbf_product(&ra, &rb).unwrap());
        for _ in 0..ATOM_POINTS {
            let x = vec2(&mut rng, 1.0);
            for (got, want) in [
                (gp.eval(&x), ga.eval(&x) * gb.eval(&x)),
                (rp.eval(&x), ra.eval(&x) * rb.eval(&x)),
            ] {
                worst = worst.max((got - want).norm() / want.norm().max(f64::MIN_POSITIVE));
            }
        }
    }
    let dt = t.elapsed();
    outcome(
        8,
        worst <= ATOM_TOL && dt < ATOM_BUDGET,
        format!(
            "max rel err {worst:.2e} over {} evaluations, {:.2} s",
            2 * ATOM_PAIRS * ATOM_POINTS,
            dt.as_secs_f64()
        ),
    )
}

struct Setup {
    model: ModelConfig,
    train: TrainConfig,
    data: GridDataset,
    image: Image,
}

fn setup() -> Setup {
    let cfg = parse_config(&root().join("configs/default.toml")).expect("default config");
    let input = root().join(cfg.io.input.as_ref().expect("default config names an input"));
    let image = Image::read(&input).expect("training image");
    let data = GridDataset::new(image.resolution(), image.data.clone()).unwrap();
    Setup {
        model: cfg.model,
        train: cfg.train,
        data,
        image,
    }
}

fn loss_csv(log: &TrainLog, dir: &Path, name: &str) -> Vec<u8> {
    let p = dir.join(name);
    log.write_loss_csv(&p).unwrap();
    std::fs::read(p).unwrap()
}

fn determinism(s: &Setup) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut train = s.train.clone();
    train.steps = DETERMINISM_STEPS;
    train.psnr_every = 20;
    let run = |exec| {
        let mut m = PnfModel::init(&s.model).unwrap();
        fit(&mut m, &s.data, &train, exec).unwrap()
    };
    let a = loss_csv(&run(Exec::default()), dir.path(), "a.csv");
    let b = loss_csv(&run(Exec::default()), dir.path(), "b.csv");
    let c = loss_csv(&run(Exec::Sequential), dir.path(), "c.csv");
    outcome(
        9,
        a == b && a == c,
        format!(
            "{DETERMINISM_STEPS}-step loss CSV ({} bytes): rerun identical {}, sequential identical {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

/// Mean batch loss per consecutive window, each no larger than the last.
fn windows_non_increasing(log: &TrainLog) -> bool {
    let means: Vec<f64> = log
        .records
        .chunks(LOSS_WINDOW)
        .map(|w| w.iter().map(|r| r.loss).sum::<f64>() / w.len() as f64)
        .collect();
    means.windows(2).all(|w| w[1] <= w[0])
}

fn image_fit(s: &Setup) -> (Outcome, PnfModel) {
    let mut m = PnfModel::init(&s.model).unwrap();
    let t = Instant::now();
    let log = fit(&mut m, &s.data, &s.train, Exec::Sequential).unwrap();
    let dt = t.elapsed();
    let g = GridSpec::new(s.image.resolution()).unwrap();
    let pred = render_grid(&m, &g, &m.unit_gains(), &TermSelector::Only(vec![]), DEFAULT_RESOLUTION_CAP)
        .unwrap()
        .total;
    let p = psnr(pred.view(), s.data.targets.view()).unwrap();
    let windows = windows_non_increasing(&log);
    let protocol = s.train.steps == FIT_STEPS && s.train.lr == FIT_LR;
    (
        outcome(
            5,
            protocol && p >= FIT_PSNR && dt <= FIT_BUDGET && windows,
            format!(
                "{}x{} image, {} steps from lr {:e}: psnr {p:.2} dB, {:.0} s single-threaded, {LOSS_WINDOW}-step loss means non-increasing {windows}",
                s.image.width,
                s.image.height,
                s.train.steps,
                s.train.lr,
                dt.as_secs_f64()
            ),
        ),
        m,
    )
}

fn confinement(m: &PnfModel, g: &GridSpec) -> Outcome {
    let report = spectrum_report(m, g, &m.unit_gains(), Window::Hann, MARGIN_BINS).unwrap();
    let terms: Vec<_> = report.entries.iter().filter(|e| e.id.is_some()).collect();
    let worst = terms.iter().map(|e| e.out_band).fold(0.0f64, f64::max);
    let degenerate = terms.iter().filter(|e| e.degenerate).count();
    let dir = tempfile::tempdir().unwrap();
    let p = pyramid_export(m, g, &m.unit_gains(), dir.path()).unwrap();
    let mut sum = Array2::<f64>::zeros(p.total.raw_dim());
    for r in &p.residuals {
        sum += r;
    }
    let gap = sum.iter().zip(&p.total).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    outcome(
        6,
        worst <= OUT_BAND_TOL && degenerate == 0 && gap <= ADDITIVITY_TOL,
        format!(
            "{} terms at {:?}: max out-of-band fraction {worst:.2e} ({MARGIN_BINS}-bin margin), residual sum gap {gap:.1e}",
            terms.len(),
            g.resolution
        ),
    )
}

fn scale_space(m: &PnfModel, g: &GridSpec) -> Outcome {
    let n = g.resolution[0];
    let tables = GridTables::build(m, &g.resolution).unwrap();
    let src = tables.full();
    let plain = render_grid(m, g, &m.unit_gains(), &TermSelector::Only(vec![]), DEFAULT_RESOLUTION_CAP)
        .unwrap()
        .total;
    let sigma = Covariance::from_pixels(2, BLUR_SIGMA_PX, n).unwrap();
    let query = scale_query_source(m, &src, &sigma, true, Default::default()).unwrap();
    let oracle = gaussian_blur(&plain, g.resolution[0], g.resolution[1], BLUR_SIGMA_PX).unwrap();
    let p = psnr(query.view(), oracle.view()).unwrap();
    let zero = scale_query_source(m, &src, &Covariance::zeros(2), true, Default::default()).unwrap();
    let gap = zero.iter().zip(&plain).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    outcome(
        7,
        p >= BLUR_PSNR && gap <= IDENTITY_TOL,
        format!("sigma {BLUR_SIGMA_PX} px: psnr {p:.2} dB vs blurred render; zero covariance gap {gap:.1e}"),
    )
}

fn main() -> ExitCode {
    let mut results = vec![closure_l2(), closure_linf(), expansion_oracle(), gradient(), atom_algebra()];
    let s = setup();
    results.push(determinism(&s));
    let (fitted, model) = image_fit(&s);
    results.push(fitted);
    let g = GridSpec::new(s.image.resolution()).unwrap();
    results.push(confinement(&model, &g));
    results.push(scale_space(&model, &g));
    results.sort_by_key(|o| o.id);
    for o in &results {
        println!("criterion {}: {} {}", o.id, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if results.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
