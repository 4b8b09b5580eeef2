use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use pnf::checkpoint;
use pnf::config::{parse_config, RunConfig};
use pnf::expansion::{expand_to_basis, DEFAULT_ATOM_CAP};
use pnf::image::Image;
use pnf::scalespace::{scale_query_source, Covariance};
use pnf::selfcheck::run_all;
use pnf::source::GridTables;
use pnf::spectral::{
    power_spectrum, pyramid_export, render_grid, spectrum_report, write_spectrum_csv, GridSpec, TermSelector,
    Window, DEFAULT_MARGIN_BINS, DEFAULT_RESOLUTION_CAP,
};
use pnf::train::{fit_with, GridDataset};
use pnf::{Error, Exec, PnfModel, Result};

const DEFAULT_RESOLUTION: usize = 256;

/// Fourier polynomial neural fields: fit, render and inspect band-limited
/// signal models.
#[derive(Parser, Debug)]
#[command(name = "pnf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model checkpoint to read.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per axis (power of two).
    #[arg(long)]
    resolution: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on the configured image and write a checkpoint.
    Fit(Common),
    /// Evaluate a checkpoint on a grid.
    Render(Common),
    /// Write per-level residual and cumulative images.
    Decompose(Common),
    /// Write per-term band-energy statistics and the output power spectrum.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Guard margin around each band, in DFT bins.
        #[arg(long, default_value_t = DEFAULT_MARGIN_BINS)]
        margin: f64,
    },
    /// Render Gaussian-blurred outputs without retraining.
    Scalespace {
        #[command(flatten)]
        common: Common,
        /// Isotropic blur widths in pixels.
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        /// Full covariance `xx,xy,yy` in squared pixels.
        #[arg(long, value_delimiter = ',')]
        covariance: Option<Vec<f64>>,
        /// Skip the per-term interference correction.
        #[arg(long)]
        uncorrected: bool,
    },
    /// Dump the exact Fourier expansion of a small model as CSV.
    Expand {
        #[command(flatten)]
        common: Common,
        /// Largest number of atoms to generate.
        #[arg(long, default_value_t = DEFAULT_ATOM_CAP)]
        cap: u128,
    },
    /// Run the built-in property suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Fit(c) => fit(&c),
        Command::Render(c) => render(&c),
        Command::Decompose(c) => decompose(&c),
        Command::Spectrum { common, margin } => spectrum(&common, margin),
        Command::Scalespace {
            common,
            sigma,
            covariance,
            uncorrected,
        } => scalespace(&common, &sigma, covariance.as_deref(), !uncorrected),
        Command::Expand { common, cap } => expand(&common, cap),
        Command::Check { seed } => Ok(check(seed)),
    }
}

fn load_config(c: &Common) -> Result<Option<RunConfig>> {
    let Some(path) = &c.config else { return Ok(None) };
    let mut cfg = parse_config(path)?;
    if let Some(seed) = c.seed {
        cfg.override_seed(seed);
    }
    if let Some(t) = cfg.threads {
        pnf::exec::init_threads(t);
    }
    Ok(Some(cfg))
}

fn out_dir(c: &Common, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.map(|r| r.io.out_dir.clone()))
        .ok_or_else(|| Error::InvalidArgument("--out is required without a config".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_model(c: &Common) -> Result<(PnfModel, Option<RunConfig>)> {
    let cfg = load_config(c)?;
    let path = c
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--checkpoint is required".into()))?;
    Ok((checkpoint::load(path)?, cfg))
}

fn grid(c: &Common, cfg: Option<&RunConfig>, model: &PnfModel) -> Result<GridSpec> {
    let n = c
        .resolution
        .or_else(|| cfg.and_then(|r| r.io.resolution))
        .unwrap_or(DEFAULT_RESOLUTION);
    GridSpec::square(n, model.dim())
}

fn write_image(values: Array2<f64>, grid: &GridSpec, path: &Path) -> Result<()> {
    if grid.resolution.len() != 2 {
        return Err(Error::InvalidGrid("images need a 2D grid".into()));
    }
    Image::new(grid.resolution[0], grid.resolution[1], values)?.write(path)
}

fn image_ext(model: &PnfModel) -> &'static str {
    if model.channels() == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

fn fit(c: &Common) -> Result<ExitCode> {
    let cfg = load_config(c)?.ok_or_else(|| Error::InvalidArgument("fit needs --config".into()))?;
    let dir = out_dir(c, Some(&cfg))?;
    let input = cfg
        .io
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("io.input is required for fit".into()))?;
    let image = Image::read(input)?;
    let data = GridDataset::new(image.resolution(), image.data.clone())?;
    let mut model = PnfModel::init(&cfg.model)?;
    eprintln!(
        "fitting {}×{} image: {} branches, {} parameters, {} steps",
        image.width,
        image.height,
        model.branches.len(),
        model.parameter_count(),
        cfg.train.steps
    );
    let every = cfg.io.checkpoint_every;
    let log = fit_with(&mut model, &data, &cfg.train, Exec::default(), |r, m| {
        if let Some(p) = r.psnr {
            eprintln!("step {:>6}  loss {:.4e}  psnr {:.2} dB", r.step, r.loss, p);
        }
        if every.is_some_and(|k| r.step % k == 0) {
            checkpoint::save(m, &dir.join(format!("model_{:06}.ckpt", r.step)))?;
        }
        Ok(())
    })?;
    checkpoint::save(&model, &dir.join("model.ckpt"))?;
    log.write_loss_csv(&dir.join("loss.csv"))?;
    log.write_csv(&dir.join("train_log.csv"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let g = GridSpec {
        resolution: image.resolution(),
    };
    let tables = GridTables::build(&model, &g.resolution)?;
    let pred = pnf::model::evaluate(&model, &tables.full(), &model.unit_gains(), Default::default()).total;
    Image::new(image.width, image.height, pred)?.write(&dir.join(format!("fit.{}", image_ext(&model))))?;
    println!("final psnr {:.3} dB", log.final_psnr().unwrap_or(f64::NAN));
    Ok(ExitCode::SUCCESS)
}

fn render(c: &Common) -> Result<ExitCode> {
    let (model, cfg) = load_model(c)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let g = grid(c, cfg.as_ref(), &model)?;
    let r = render_grid(&model, &g, &model.unit_gains(), &TermSelector::All, DEFAULT_RESOLUTION_CAP)?;
    write_image(r.total, &g, &dir.join(format!("render.{}", image_ext(&model))))?;
    Ok(ExitCode::SUCCESS)
}

fn decompose(c: &Common) -> Result<ExitCode> {
    let (model, cfg) = load_model(c)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let g = grid(c, cfg.as_ref(), &model)?;
    let p = pyramid_export(&model, &g, &model.unit_gains(), &dir)?;
    println!("wrote {} files", p.files.len());
    Ok(ExitCode::SUCCESS)
}

fn spectrum(c: &Common, margin: f64) -> Result<ExitCode> {
    let (model, cfg) = load_model(c)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let g = grid(c, cfg.as_ref(), &model)?;
    let report = spectrum_report(&model, &g, &model.unit_gains(), Window::Hann, margin)?;
    report.write_csv(&dir.join("spectrum.csv"))?;
    let r = render_grid(&model, &g, &model.unit_gains(), &TermSelector::Only(vec![]), DEFAULT_RESOLUTION_CAP)?;
    write_spectrum_csv(&power_spectrum(&r.total, &g.resolution, Window::Hann)?, &dir.join("power.csv"))?;
    println!("max out-of-band fraction {:.3e}", report.max_out_band());
    Ok(ExitCode::SUCCESS)
}

fn scalespace(c: &Common, sigmas: &[f64], covariance: Option<&[f64]>, corrected: bool) -> Result<ExitCode> {
    let (model, cfg) = load_model(c)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let g = grid(c, cfg.as_ref(), &model)?;
    let n = g.resolution[0];
    let px2 = 1.0 / (n as f64 * n as f64);
    let mut queries = Vec::new();
    for &s in sigmas {
        queries.push((format!("scale_{s}"), Covariance::from_pixels(model.dim(), s, n)?));
    }
    if let Some(v) = covariance {
        if v.len() != 3 {
            return Err(Error::InvalidArgument("--covariance takes xx,xy,yy".into()));
        }
        let m = ndarray::array![[v[0], v[1]], [v[1], v[2]]] * px2;
        queries.push(("scale_cov".to_string(), Covariance::new(m)?));
    }
    if queries.is_empty() {
        return Err(Error::InvalidArgument("give --sigma or --covariance".into()));
    }
    let tables = GridTables::build(&model, &g.resolution)?;
    for (name, sigma) in queries {
        let out = scale_query_source(&model, &tables.full(), &sigma, corrected, Default::default())?;
        write_image(out, &g, &dir.join(format!("{name}.{}", image_ext(&model))))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn expand(c: &Common, cap: u128) -> Result<ExitCode> {
    let (model, cfg) = load_model(c)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let e = expand_to_basis(&model, cap)?;
    e.write_csv(&dir.join("expansion.csv"))?;
    println!("{} atoms", e.len());
    Ok(ExitCode::SUCCESS)
}

fn check(seed: u64) -> ExitCode {
    let outcomes = run_all(seed);
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
