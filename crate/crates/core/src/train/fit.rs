//! The optimization loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::controls::TermControls;
use super::grad::backward;
use super::metrics::{psnr_from_mse, ssim};
use crate::exec::Exec;
use crate::model::{evaluate, EvalOptions, PnfModel, TermId};
use crate::source::GridTables;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermGain {
    pub branch: usize,
    pub term: usize,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    /// Log-linear annealing from `lr` to this rate over the run.
    #[serde(default)]
    pub lr_final: Option<f64>,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    /// Coordinates per step; the full grid when absent.
    #[serde(default)]
    pub batch: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub loss: Loss,
    /// Full-grid PSNR is logged every this many steps and at the last step.
    #[serde(default = "defaults::psnr_every")]
    pub psnr_every: usize,
    #[serde(default)]
    pub frozen_terms: Vec<TermId>,
    #[serde(default)]
    pub term_gains: Vec<TermGain>,
}

mod defaults {
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
    pub fn psnr_every() -> usize {
        100
    }
}

impl TrainConfig {
    /// Image fitting defaults: 5000 steps of 1024 random pixels, learning
    /// rate annealed log-linearly from 1e-3 to 1e-5.
    pub fn default_image() -> Self {
        TrainConfig {
            batch: Some(1024),
            lr_final: Some(1e-5),
            ..Self::new(5000, 0)
        }
    }

    pub fn new(steps: usize, seed: u64) -> Self {
        TrainConfig {
            steps,
            lr: defaults::lr(),
            lr_final: None,
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            eps: defaults::eps(),
            batch: None,
            seed,
            loss: Loss::Mse,
            psnr_every: defaults::psnr_every(),
            frozen_terms: Vec::new(),
            term_gains: Vec::new(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if let Some(f) = self.lr_final {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidTrain(format!("lr_final must be positive, got {f}")));
            }
        }
        if self.batch == Some(0) {
            return Err(Error::InvalidTrain("batch must be at least 1".into()));
        }
        if self.psnr_every == 0 {
            return Err(Error::InvalidTrain("psnr_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn controls(&self) -> TermControls {
        TermControls {
            frozen: self.frozen_terms.iter().copied().collect(),
            gains: self.term_gains.iter().map(|g| (TermId::new(g.branch, g.term), g.gain)).collect(),
        }
    }

    /// Learning rate used at `step` (1-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.lr_final {
            Some(f) if self.steps > 1 => {
                let t = (step - 1) as f64 / (self.steps - 1) as f64;
                self.lr * (f / self.lr).powf(t)
            }
            _ => self.lr,
        }
    }
}

/// Targets sampled on a pixel-centre grid, `N × channels` in flattened grid
/// order (axis 0 fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub resolution: Vec<usize>,
    pub targets: Array2<f64>,
}

impl GridDataset {
    pub fn new(resolution: Vec<usize>, targets: Array2<f64>) -> Result<Self> {
        let n: usize = resolution.iter().product();
        if targets.nrows() != n || n == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} target rows for a grid of {n} points",
                targets.nrows()
            )));
        }
        Ok(GridDataset { resolution, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Loss of the step's batch before the update.
    pub loss: f64,
    /// Full-grid PSNR after the update, on logging steps.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn final_psnr(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.psnr)
    }

    /// `step,loss,psnr`: a pure function of config and data.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        self.write(path, false)
    }

    /// `step,loss,psnr,ssim,ms_per_step`, including wall time.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write(path, true)
    }

    fn write(&self, path: &Path, timing: bool) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.17e}")).unwrap_or_default();
        if timing {
            writeln!(f, "step,loss,psnr,ssim,ms_per_step")?;
        } else {
            writeln!(f, "step,loss,psnr")?;
        }
        for r in &self.records {
            write!(f, "{},{:.17e},{}", r.step, r.loss, opt(r.psnr))?;
            if timing {
                write!(f, ",{},{:.3}", opt(r.ssim), r.ms)?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Trains `model` on `data`. See [`fit_with`].
pub fn fit(model: &mut PnfModel, data: &GridDataset, config: &TrainConfig, exec: Exec) -> Result<TrainLog> {
    fit_with(model, data, config, exec, |_, _| Ok(()))
}

/// Adam on the mean squared error, calling `hook` after every step.
/// Minibatches, when configured, are drawn without replacement from a
/// generator seeded by `config.seed`.
pub fn fit_with<F>(
    model: &mut PnfModel,
    data: &GridDataset,
    config: &TrainConfig,
    exec: Exec,
    mut hook: F,
) -> Result<TrainLog>
where
    F: FnMut(&StepRecord, &PnfModel) -> Result<()>,
{
    config.validate()?;
    if data.targets.ncols() != model.channels() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} channels, model {}",
            data.targets.ncols(),
            model.channels()
        )));
    }
    let controls = config.controls();
    let trainable = controls.trainable_mask(model);
    let gains = controls.gain_table(model);
    let tables = GridTables::build(model, &data.resolution)?;
    let n = data.len();
    let batch = config.batch.map(|b| b.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(model);
    let adam = config.adam();
    let mut log = TrainLog::default();
    let image = (model.dim() == 2).then(|| (data.resolution[0], data.resolution[1]));
    for step in 1..=config.steps {
        let start = Instant::now();
        let (loss, grads) = match batch {
            Some(b) => {
                let mut rows = rand::seq::index::sample(&mut rng, n, b).into_vec();
                rows.sort_unstable();
                let target = data.targets.select(ndarray::Axis(0), &rows);
                backward(model, &tables.subset(&rows), target.view(), &controls, exec)?
            }
            None => backward(model, &tables.full(), data.targets.view(), &controls, exec)?,
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        adam_step(model, &grads, &mut state, &adam, config.lr_at(step), &trainable);
        let mut record = StepRecord {
            step,
            loss,
            psnr: None,
            ssim: None,
            ms: 0.0,
        };
        if step % config.psnr_every == 0 || step == config.steps {
            let pred = evaluate(model, &tables.full(), &gains, EvalOptions::default().with_exec(exec)).total;
            let mse = super::mse_loss(pred.view(), data.targets.view())?;
            record.psnr = Some(psnr_from_mse(mse));
            record.ssim = image.and_then(|(w, h)| ssim(pred.view(), data.targets.view(), w, h).ok());
        }
        record.ms = start.elapsed().as_secs_f64() * 1e3;
        hook(&record, model)?;
        log.records.push(record);
    }
    Ok(log)
}
