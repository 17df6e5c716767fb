//! Design optimizers: Adam gradient descent, AFPO evolution and random
//! search. They see the physics only through closures, so the caller
//! decides how (and on how many threads) designs are evaluated.

mod adam;
mod afpo;
mod search;

pub use adam::{Adam, MultiStepLr};
pub use afpo::{afpo_evolve, EvoConfig, EvoOutcome, GenerationRecord, Individual};
pub use search::{compare_to_random, random_search, Comparison, RandomSearch};

use alloc::vec::Vec;

use crate::adjoint::GradientResult;
use crate::experiment::LossReport;
use crate::physics::StiffnessBounds;
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Init {
    /// Initial design of length `n`; uniform draws use the `init` stream.
    pub fn design(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        match *self {
            Init::Fixed(k) => Ok(alloc::vec![k; n]),
            Init::Uniform { lo, hi } => {
                let bounds = StiffnessBounds::new(lo, hi)?;
                Ok(rng::uniform_design(&mut rng::stream(seed, Stream::Init), n, bounds))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub init: Init,
    pub seed: u64,
    pub bounds: StiffnessBounds,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, init: Init) -> Self {
        Self {
            epochs,
            lr,
            lr_milestones: Vec::new(),
            lr_gamma: 1.0,
            init,
            seed: 0,
            bounds: StiffnessBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config {
                what: "lr must be non-negative",
                value: self.lr,
            });
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("lr milestones must be strictly increasing"));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Config {
                what: "lr_gamma must lie in (0, 1]",
                value: self.lr_gamma,
            });
        }
        if let Init::Fixed(k) = self.init {
            if !self.bounds.contains(k) {
                return Err(Error::Config {
                    what: "initial stiffness outside bounds",
                    value: k,
                });
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> MultiStepLr {
        MultiStepLr {
            base: self.lr,
            milestones: self.lr_milestones.clone(),
            gamma: self.lr_gamma,
        }
    }
}

/// Loss and gradient diagnostics at the start of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub report: LossReport,
    pub lr: f64,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub initial: Vec<f64>,
    pub design: Vec<f64>,
    pub history: Vec<EpochRecord>,
    /// Loss of `design`, evaluated after the last update.
    pub final_report: LossReport,
    /// Lowest-objective design seen, including the final one.
    pub best_design: Vec<f64>,
    pub best_report: LossReport,
}

/// A training run that stopped early, with what it had done so far.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub history: Vec<EpochRecord>,
    pub design: Vec<f64>,
}

/// Adam on the stiffness vector.
///
/// Each epoch evaluates `loss_and_grad` at the current design, takes one
/// Adam step at the scheduled rate and clamps to the bounds. `evaluate`
/// scores the final design. `observe` sees every epoch record together with
/// the design it was computed at.
pub fn train_gd(
    n: usize,
    config: &TrainConfig,
    mut loss_and_grad: impl FnMut(&[f64]) -> Result<(LossReport, GradientResult)>,
    mut evaluate: impl FnMut(&[f64]) -> Result<LossReport>,
    mut observe: impl FnMut(&EpochRecord, &[f64]),
) -> core::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error, history, design| TrainFailure { error, history, design };
    if let Err(e) = config.validate() {
        return Err(fail(e, Vec::new(), Vec::new()));
    }
    let mut design = match config.init.design(n, config.seed) {
        Ok(d) => d,
        Err(e) => return Err(fail(e, Vec::new(), Vec::new())),
    };
    config.bounds.clamp(&mut design);
    let initial = design.clone();
    let schedule = config.schedule();
    let mut adam = Adam::new(n, config.lr);
    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut best: Option<(LossReport, Vec<f64>)> = None;

    for epoch in 0..config.epochs {
        let (report, grad) = match loss_and_grad(&design) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, history, design)),
        };
        if grad.nan_count > 0 || !report.objective.is_finite() {
            return Err(fail(Error::GradientFailure { step: epoch }, history, design));
        }
        let lr = schedule.lr(epoch);
        let record = EpochRecord {
            epoch,
            report,
            lr,
            max_abs_grad: grad.max_abs_grad,
        };
        observe(&record, &design);
        keep_best(&mut best, &record.report, &design);
        history.push(record);
        adam.lr = lr;
        adam.step(&mut design, &grad.grad);
        config.bounds.clamp(&mut design);
    }

    let final_report = match evaluate(&design) {
        Ok(r) => r,
        Err(e) => return Err(fail(e, history, design)),
    };
    keep_best(&mut best, &final_report, &design);
    let (best_report, best_design) = best.expect("final design was scored");
    Ok(TrainOutcome {
        initial,
        design,
        history,
        final_report,
        best_design,
        best_report,
    })
}

fn keep_best(best: &mut Option<(LossReport, Vec<f64>)>, report: &LossReport, design: &[f64]) {
    let better = match best {
        None => true,
        Some((b, _)) => report.objective < b.objective,
    };
    if better {
        *best = Some((report.clone(), design.to_vec()));
    }
}
