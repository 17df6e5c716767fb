use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{exit, AppError, AppResult};
use crate::formats::Snapshot;
use crate::manifest::Manifest;
use crate::{presets, verify, workflow};

#[derive(Debug, Parser)]
#[command(
    name = "granular",
    version,
    about = "Differentiable granular crystal simulation and design"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and relax a packing, write its snapshot.
    Pack(Common),
    /// Run the dataset samples once, write trajectories and intensities.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stiffness design (snapshot file); defaults to the initial design.
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Gradient-descent training.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Age-fitness Pareto evolution.
    Evolve(Common),
    /// Random designs, optionally tested against a finished training run.
    RandomSearch {
        #[command(flatten)]
        common: Common,
        /// Output directory of a `train` run to compare against.
        #[arg(long)]
        optimized: Option<PathBuf>,
    },
    /// Run the built-in verification suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a preset configuration.
    Preset { name: String },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file (TOML) or a manifest.json of an earlier run.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Packing snapshot to reuse instead of packing from scratch.
    #[arg(long)]
    pub packing: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> AppResult<RunConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) if path.extension().is_some_and(|e| e == "json") => Manifest::load(path)?.config,
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => presets::load(name)?,
            (None, None) => return Err(AppError::Usage("one of --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self, default: &str) -> AppResult<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(default));
        fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        Ok(dir)
    }
}

fn save_run(dir: &Path, command: &str, common: &Common, config: &RunConfig, trials: usize) -> AppResult<()> {
    config.save(&dir.join("config.toml"))?;
    let mut manifest = Manifest::new(command, common.preset.as_deref(), config, trials);
    manifest.files = list_files(dir, dir);
    manifest.files.sort();
    manifest.save(dir)
}

fn list_files(root: &Path, dir: &Path) -> Vec<String> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            out.extend(list_files(root, &path));
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().into_owned());
        }
    }
    out
}

/// Runs a parsed command, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> AppResult<i32> {
    match command {
        Command::Pack(common) => {
            let config = common.resolve()?;
            let dir = common.out_dir("granular-pack")?;
            let (geometry, report) = workflow::pack(&config)?;
            let k = vec![config.material.packing_stiffness; geometry.len()];
            workflow::snapshot(&config, &geometry, &k).save(&dir.join("packing.txt"))?;
            println!(
                "packed {} particles: phi = {:.6}, max |F| = {:.3e}, {} pair / {} wall contacts",
                geometry.len(),
                report.packing_fraction,
                report.residual_force,
                report.pair_contacts,
                report.wall_contacts
            );
            save_run(&dir, "pack", &common, &config, 1)?;
        }
        Command::Simulate { common, theta } => {
            let config = common.resolve()?;
            let dir = common.out_dir("granular-simulate")?;
            let geometry = workflow::geometry_for(&config, common.packing.as_deref())?;
            let exp = workflow::experiment(&config, geometry)?;
            let stiffness = match theta {
                Some(path) => Snapshot::load(&path)?.stiffness,
                None => config.train_config(config.seed)?.init.design(exp.len(), config.seed)?,
            };
            let summary = workflow::simulate(&exp, &stiffness, Some(&dir))?;
            for s in &summary.samples {
                println!(
                    "{}: intensities {:?}, normalized {:?}",
                    s.label, s.intensities, s.normalized
                );
            }
            println!("total {:.6e}, objective {:.6e}", summary.total, summary.objective);
            save_run(&dir, "simulate", &common, &config, 1)?;
        }
        Command::Train { common, trials } => {
            if trials == 0 {
                return Err(AppError::Usage("--trials must be positive".into()));
            }
            let config = common.resolve()?;
            let dir = common.out_dir("granular-train")?;
            let geometry = workflow::geometry_for(&config, common.packing.as_deref())?;
            let exp = workflow::experiment(&config, geometry)?;
            let results = workflow::train(&config, &exp, trials, Some(&dir))?;
            let mut failed = None;
            for t in &results {
                let s = &t.summary;
                match &s.error {
                    None => println!(
                        "trial {}: {} epochs, total {:.6e} -> {:.6e} (best {:.6e})",
                        s.trial,
                        s.epochs_run,
                        s.initial_total.unwrap_or(f64::NAN),
                        s.final_total.unwrap_or(f64::NAN),
                        s.best_total.unwrap_or(f64::NAN)
                    ),
                    Some(e) => {
                        println!("trial {}: failed after {} epochs: {e}", s.trial, s.epochs_run);
                        failed.get_or_insert(exit::PHYSICS);
                    }
                }
            }
            save_run(&dir, "train", &common, &config, trials)?;
            return Ok(failed.unwrap_or(exit::OK));
        }
        Command::Evolve(common) => {
            let config = common.resolve()?;
            let dir = common.out_dir("granular-evolve")?;
            let geometry = workflow::geometry_for(&config, common.packing.as_deref())?;
            let exp = workflow::experiment(&config, geometry)?;
            let (_, summary) = workflow::evolve(&config, &exp, Some(&dir))?;
            println!(
                "best objective {:.6e} after {} generations, Pareto front of {}",
                summary.best_objective,
                summary.generations,
                summary.pareto.len()
            );
            save_run(&dir, "evolve", &common, &config, 1)?;
        }
        Command::RandomSearch { common, optimized } => {
            let config = common.resolve()?;
            let dir = common.out_dir("granular-random-search")?;
            let opt = optimized.as_deref().map(workflow::optimized_totals).transpose()?;
            let geometry = workflow::geometry_for(&config, common.packing.as_deref())?;
            let exp = workflow::experiment(&config, geometry)?;
            let (_, summary) = workflow::random_search(&config, &exp, opt.as_deref(), Some(&dir))?;
            println!(
                "{} random designs: median total {:.6e}",
                summary.count, summary.median_total
            );
            if let Some(c) = &summary.comparison {
                println!(
                    "optimized median {:.6e} vs random median {:.6e}: U = {}, p = {:.3e} ({})",
                    c.optimized_median, c.random_median, c.u, c.p_value, c.method
                );
            }
            save_run(&dir, "random-search", &common, &config, 1)?;
        }
        Command::Verify { seed } => {
            let checks = verify::run_suite(seed)?;
            for c in &checks {
                println!("{}", c.line());
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(exit::CHECK_FAILED);
            }
        }
        Command::Preset { name } => print!(
            "{}",
            presets::load(&name).map(|_| presets::source(&name).unwrap_or_default())?
        ),
    }
    Ok(exit::OK)
}
