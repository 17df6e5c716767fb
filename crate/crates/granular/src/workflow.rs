//! The CLI verbs as library functions: each takes a resolved configuration,
//! runs, and (when given a directory) writes its artifacts there.

use std::fs;
use std::path::{Path, PathBuf};

use granular_core::experiment::{Experiment, LossReport};
use granular_core::optim::{
    afpo_evolve, compare_to_random, random_search as run_random_search, train_gd, Comparison, EpochRecord, TrainOutcome,
};
use granular_core::packing::{compression_protocol_with, hexagonal_lattice, PackingReport};
use granular_core::physics::PackingGeometry;
use granular_core::rng::trial_seed;
use granular_core::sim::window_start;
use granular_core::ErrorKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};
use crate::formats::{write_history, write_table, write_trajectory, Snapshot};
use crate::parallel::Rayon;

fn create_dir(path: &Path) -> AppResult<()> {
    fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Hexagonal lattice followed by the compression protocol.
pub fn pack(config: &RunConfig) -> AppResult<(PackingGeometry, PackingReport)> {
    let spec = config.lattice_spec();
    let lattice = hexagonal_lattice(&spec)?;
    Ok(compression_protocol_with(
        &lattice,
        &config.packing_material()?,
        spec.packing_fraction,
        &config.fire(),
        &config.compression(),
    )?)
}

pub fn snapshot(config: &RunConfig, geometry: &PackingGeometry, stiffness: &[f64]) -> Snapshot {
    Snapshot {
        geometry: geometry.clone(),
        packing_fraction: geometry.packing_fraction(config.lattice.diameter),
        diameter: config.lattice.diameter,
        stiffness: stiffness.to_vec(),
    }
}

/// Loads a packing snapshot and checks it against the configuration, or
/// packs from scratch.
pub fn geometry_for(config: &RunConfig, packing: Option<&Path>) -> AppResult<PackingGeometry> {
    match packing {
        None => Ok(pack(config)?.0),
        Some(path) => {
            let snap = Snapshot::load(path)?;
            if snap.geometry.len() != config.n() || snap.diameter != config.lattice.diameter {
                return Err(AppError::Usage(format!(
                    "{}: snapshot has {} particles of diameter {}, config expects {} of diameter {}",
                    path.display(),
                    snap.geometry.len(),
                    snap.diameter,
                    config.n(),
                    config.lattice.diameter
                )));
            }
            snap.geometry.validate(snap.diameter)?;
            Ok(snap.geometry)
        }
    }
}

pub fn experiment(config: &RunConfig, geometry: PackingGeometry) -> AppResult<Experiment> {
    Ok(Experiment::new(config.experiment_spec(), config.system(geometry)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub label: String,
    /// Output-port wave intensities over the loss window.
    pub intensities: Vec<f64>,
    /// Intensities normalized to sum to one.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub samples: Vec<SampleSummary>,
    pub total: f64,
    pub objective: f64,
    pub partials: Vec<(String, f64)>,
}

/// Runs every dataset sample once, writing one trajectory file per sample.
pub fn simulate(exp: &Experiment, stiffness: &[f64], out: Option<&Path>) -> AppResult<SimulateSummary> {
    let records = exp
        .samples
        .par_iter()
        .map(|s| exp.simulate(stiffness, s))
        .collect::<Result<Vec<_>, _>>()?;
    let fraction = if exp.spec.task.is_gate() {
        granular_core::experiment::GATE_WINDOW_START
    } else {
        granular_core::experiment::WAVEGUIDE_WINDOW_START
    };
    let n_out = exp.spec.outputs.len();
    let mut samples = Vec::new();
    for (sample, rec) in exp.samples.iter().zip(&records) {
        let intensities: Vec<f64> = rec[..n_out]
            .iter()
            .map(|r| {
                let start = window_start(r.series.len(), fraction);
                r.series[start..].iter().map(|x| x * x).sum()
            })
            .collect();
        let sum: f64 = intensities.iter().sum();
        let normalized = intensities
            .iter()
            .map(|i| if sum > 0.0 { i / sum } else { 0.0 })
            .collect();
        samples.push(SampleSummary {
            label: sample.label.into(),
            intensities,
            normalized,
        });
        if let Some(dir) = out {
            write_trajectory(
                &dir.join(format!("trajectory_{}.csv", sample.label)),
                &exp.system.sim,
                rec,
            )?;
        }
    }
    let report = exp.score(&records)?.0;
    let summary = SimulateSummary {
        samples,
        total: report.total,
        objective: report.objective,
        partials: labeled(&report),
    };
    if let Some(dir) = out {
        write_json(&dir.join("simulate.json"), &summary)?;
    }
    Ok(summary)
}

fn labeled(report: &LossReport) -> Vec<(String, f64)> {
    report.partials.iter().map(|(l, v)| (l.to_string(), *v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub initial_total: Option<f64>,
    pub final_total: Option<f64>,
    pub final_objective: Option<f64>,
    pub final_partials: Vec<(String, f64)>,
    pub best_total: Option<f64>,
    pub best_objective: Option<f64>,
    pub max_abs_grad_last: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub summary: TrialSummary,
    pub outcome: Option<TrainOutcome>,
}

pub fn trial_dir(out: &Path, trial: usize) -> PathBuf {
    out.join(format!("trial_{trial:03}"))
}

/// Gradient-descent training, `trials` independent runs in parallel. Trial
/// `t` uses seed `trial_seed(config.seed, t)`.
pub fn train(config: &RunConfig, exp: &Experiment, trials: usize, out: Option<&Path>) -> AppResult<Vec<Trial>> {
    let results: Vec<AppResult<Trial>> = (0..trials)
        .into_par_iter()
        .map(|t| train_one(config, exp, t, out))
        .collect();
    let trials = results.into_iter().collect::<AppResult<Vec<_>>>()?;
    if let Some(dir) = out {
        let summaries: Vec<&TrialSummary> = trials.iter().map(|t| &t.summary).collect();
        write_json(&dir.join("summary.json"), &summaries)?;
    }
    Ok(trials)
}

fn train_one(config: &RunConfig, exp: &Experiment, trial: usize, out: Option<&Path>) -> AppResult<Trial> {
    let seed = trial_seed(config.seed, trial);
    let cfg = config.train_config(seed)?;
    let dir = out.map(|o| trial_dir(o, trial));
    if let Some(d) = &dir {
        create_dir(d)?;
        if config.train.snapshot_every > 0 {
            create_dir(&d.join("theta"))?;
        }
    }
    let geometry = &exp.system.geometry;
    let labels: Vec<&str> = exp.samples.iter().map(|s| s.label).collect();
    let every = config.train.snapshot_every;
    let mut io_error = None;
    let observe = |r: &EpochRecord, design: &[f64]| {
        if let (Some(d), true) = (&dir, every > 0 && r.epoch.is_multiple_of(every)) {
            let path = d.join("theta").join(format!("epoch_{:05}.txt", r.epoch));
            if let Err(e) = snapshot(config, geometry, design).save(&path) {
                io_error.get_or_insert(e);
            }
        }
    };
    let result = train_gd(
        exp.len(),
        &cfg,
        |k| exp.loss_and_grad_on(k, &Rayon),
        |k| exp.evaluate_on(k, &Rayon),
        observe,
    );
    if let Some(e) = io_error {
        return Err(e);
    }
    let (summary, outcome) = match result {
        Ok(o) => {
            let summary = TrialSummary {
                trial,
                seed,
                epochs_run: o.history.len(),
                initial_total: o.history.first().map(|r| r.report.total),
                final_total: Some(o.final_report.total),
                final_objective: Some(o.final_report.objective),
                final_partials: labeled(&o.final_report),
                best_total: Some(o.best_report.total),
                best_objective: Some(o.best_report.objective),
                max_abs_grad_last: o.history.last().map(|r| r.max_abs_grad),
                error: None,
            };
            if let Some(d) = &dir {
                write_history(&d.join("history.csv"), &labels, &o.history)?;
                snapshot(config, geometry, &o.initial).save(&d.join("theta_initial.txt"))?;
                if !o.history.is_empty() {
                    snapshot(config, geometry, &o.design).save(&d.join("theta_final.txt"))?;
                    snapshot(config, geometry, &o.best_design).save(&d.join("theta_best.txt"))?;
                }
            }
            (summary, Some(o))
        }
        Err(failure) => {
            if let Some(d) = &dir {
                write_history(&d.join("history.csv"), &labels, &failure.history)?;
                if !failure.design.is_empty() {
                    snapshot(config, geometry, &failure.design).save(&d.join("theta_last.txt"))?;
                }
            }
            let summary = TrialSummary {
                trial,
                seed,
                epochs_run: failure.history.len(),
                initial_total: failure.history.first().map(|r| r.report.total),
                final_total: None,
                final_objective: None,
                final_partials: Vec::new(),
                best_total: failure.history.iter().map(|r| r.report.total).reduce(f64::min),
                best_objective: failure.history.iter().map(|r| r.report.objective).reduce(f64::min),
                max_abs_grad_last: failure.history.last().map(|r| r.max_abs_grad),
                error: Some(failure.error.to_string()),
            };
            if failure.history.is_empty() && failure.error.kind() == ErrorKind::Config {
                return Err(failure.error.into());
            }
            (summary, None)
        }
    };
    if let Some(d) = &dir {
        write_json(&d.join("report.json"), &summary)?;
    }
    Ok(Trial { summary, outcome })
}

/// Loss of every genome in a batch, evaluated in parallel. Designs whose
/// simulation blows up score `+inf` instead of aborting the run.
pub fn batch_objective(exp: &Experiment, genomes: &[Vec<f64>]) -> granular_core::Result<Vec<f64>> {
    genomes
        .par_iter()
        .map(|g| match exp.evaluate(g) {
            Ok(r) => Ok(r.objective),
            Err(e) if e.kind() == ErrorKind::Physics => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub seed: u64,
    pub generations: usize,
    pub best_objective: f64,
    pub best_total: f64,
    pub best_partials: Vec<(String, f64)>,
    pub best_age: u32,
    pub pareto: Vec<(f64, u32)>,
}

pub fn evolve(
    config: &RunConfig,
    exp: &Experiment,
    out: Option<&Path>,
) -> AppResult<(granular_core::optim::EvoOutcome, EvolveSummary)> {
    let cfg = config.evo_config(config.seed)?;
    let outcome = afpo_evolve(exp.len(), &cfg, |g| batch_objective(exp, g), |_| {})?;
    let best_report = exp.evaluate(&outcome.best.genome)?;
    let summary = EvolveSummary {
        seed: config.seed,
        generations: cfg.generations,
        best_objective: outcome.best.loss,
        best_total: best_report.total,
        best_partials: labeled(&best_report),
        best_age: outcome.best.age,
        pareto: outcome.pareto.iter().map(|p| (p.loss, p.age)).collect(),
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        let rows = outcome.history.iter().map(|r| {
            vec![
                r.generation.to_string(),
                format!("{:?}", r.best_loss),
                format!("{:?}", r.mean_loss),
                r.front_size.to_string(),
                format!("{:?}", r.min_gene),
                format!("{:?}", r.max_gene),
            ]
        });
        write_table(
            &dir.join("evolution.csv"),
            &[
                "generation",
                "best_loss",
                "mean_loss",
                "front_size",
                "min_gene",
                "max_gene",
            ],
            rows,
        )?;
        snapshot(config, &exp.system.geometry, &outcome.best.genome).save(&dir.join("theta_best.txt"))?;
        write_json(&dir.join("report.json"), &summary)?;
    }
    Ok((outcome, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub seed: u64,
    pub count: usize,
    pub median_total: f64,
    pub min_total: f64,
    pub comparison: Option<ComparisonSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub optimized: Vec<f64>,
    pub optimized_median: f64,
    pub random_median: f64,
    pub random_compared: usize,
    pub u: f64,
    pub p_value: f64,
    pub method: String,
}

impl From<&Comparison> for ComparisonSummary {
    fn from(c: &Comparison) -> Self {
        Self {
            optimized: Vec::new(),
            optimized_median: c.optimized_median,
            random_median: c.random_median,
            random_compared: c.random_used.len(),
            u: c.test.u,
            p_value: c.test.p_value,
            method: format!("{:?}", c.test.method),
        }
    }
}

/// Scores `config.search.count` random designs by total loss and, if
/// `optimized` totals are given, tests them against the random ones.
pub fn random_search(
    config: &RunConfig,
    exp: &Experiment,
    optimized: Option<&[f64]>,
    out: Option<&Path>,
) -> AppResult<(Vec<f64>, SearchSummary)> {
    let rs = run_random_search(
        exp.len(),
        config.search.count,
        config.bounds()?,
        config.seed,
        |designs| designs.par_iter().map(|d| exp.evaluate(d)).collect(),
    )?;
    let totals = rs.totals();
    let comparison = match optimized {
        Some(opt) => {
            let c = compare_to_random(opt, &totals, config.search.size_matched, config.seed)?;
            let mut s = ComparisonSummary::from(&c);
            s.optimized = opt.to_vec();
            Some(s)
        }
        None => None,
    };
    let summary = SearchSummary {
        seed: config.seed,
        count: totals.len(),
        median_total: granular_core::stats::median(&totals)?,
        min_total: totals.iter().copied().fold(f64::INFINITY, f64::min),
        comparison,
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        let labels: Vec<&str> = rs.reports[0].partials.iter().map(|(l, _)| *l).collect();
        let mut header = vec!["index", "total"];
        let partial_cols: Vec<String> = labels.iter().map(|l| format!("partial_{l}")).collect();
        header.extend(partial_cols.iter().map(String::as_str));
        let rows = rs.reports.iter().enumerate().map(|(i, r)| {
            let mut row = vec![i.to_string(), format!("{:?}", r.total)];
            row.extend(r.partials.iter().map(|(_, v)| format!("{v:?}")));
            row
        });
        write_table(&dir.join("random_search.csv"), &header, rows)?;
        write_json(&dir.join("report.json"), &summary)?;
    }
    Ok((totals, summary))
}

/// Best totals of the trials in a finished `train` run directory.
pub fn optimized_totals(train_dir: &Path) -> AppResult<Vec<f64>> {
    let path = train_dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
    let trials: Vec<TrialSummary> = serde_json::from_str(&text).map_err(|e| AppError::parse(&path, e))?;
    let totals: Vec<f64> = trials.iter().filter_map(|t| t.best_total).collect();
    if totals.is_empty() {
        return Err(AppError::parse(&path, "no finished trials"));
    }
    Ok(totals)
}
