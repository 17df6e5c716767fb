//! Run configuration: a TOML file with one table per concern. Every field
//! has a default (the Table-1 AND-gate setup), so a config only needs the
//! keys it changes.

use std::fs;
use std::path::Path;

use granular_core::experiment::{default_ports, ExperimentSpec, LossKind, System, Task};
use granular_core::neighbors::NeighborMode;
use granular_core::optim::{EvoConfig, Init, TrainConfig};
use granular_core::packing::{CompressionConfig, FireConfig, LatticeSpec};
use granular_core::physics::{DampingParams, MaterialParams, PackingGeometry, StiffnessBounds};
use granular_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Root of every random stream in the run.
    pub seed: u64,
    pub lattice: LatticeSection,
    pub material: MaterialSection,
    pub sim: SimSection,
    pub fire: FireSection,
    pub experiment: ExperimentSection,
    pub train: TrainSection,
    pub evolve: EvolveSection,
    pub search: SearchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub nx: usize,
    pub ny: usize,
    pub diameter: f64,
    pub packing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub mass: f64,
    pub alpha: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Uniform stiffness used while relaxing the packing.
    pub packing_stiffness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighbors {
    AllPairs,
    CellList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Number of integration steps.
    pub n_steps: usize,
    pub dt: f64,
    pub background_damping: f64,
    pub particle_damping: f64,
    pub wall_damping: f64,
    pub record_stride: usize,
    pub neighbors: Neighbors,
    /// Adjoint checkpoint spacing; absent means ceil(sqrt(n_steps)).
    pub checkpoint_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FireSection {
    /// Initial FIRE step; absent means `sim.dt`.
    pub dt: Option<f64>,
    pub dt_max_factor: f64,
    pub f_inc: f64,
    pub f_dec: f64,
    pub alpha_start: f64,
    pub f_alpha: f64,
    pub n_min: usize,
    pub force_tol: f64,
    pub max_steps: usize,
    pub compression_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Waveguide,
    And,
    Xor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    CrossEntropy,
    MaeTime,
    SpectralGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub task: TaskName,
    pub loss: LossName,
    /// Particle indices; absent means the default layout for the task.
    pub inputs: Option<Vec<usize>>,
    pub outputs: Option<Vec<usize>>,
    /// Absent means (7, 15) for the waveguide and 15 for gates.
    pub frequencies: Option<Vec<f64>>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    Fixed,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub init: InitName,
    pub k0: f64,
    pub init_lo: f64,
    pub init_hi: f64,
    /// Write a stiffness snapshot every this many epochs (0 = never).
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub population: usize,
    pub generations: usize,
    pub mutation_sigma: f64,
    pub crossover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub count: usize,
    /// Compare against a random subset as large as the optimized set.
    pub size_matched: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "table1-and".into(),
            seed: 0,
            lattice: LatticeSection::default(),
            material: MaterialSection::default(),
            sim: SimSection::default(),
            fire: FireSection::default(),
            experiment: ExperimentSection::default(),
            train: TrainSection::default(),
            evolve: EvolveSection::default(),
            search: SearchSection::default(),
        }
    }
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            nx: 10,
            ny: 11,
            diameter: 0.1,
            packing_fraction: 0.1,
        }
    }
}

impl Default for MaterialSection {
    fn default() -> Self {
        Self {
            mass: 1.0,
            alpha: granular_core::physics::HERTZ_ALPHA,
            k_min: 1.0,
            k_max: 10.0,
            packing_stiffness: 5.5,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_steps: 3000,
            dt: 5e-3,
            background_damping: 1.0,
            particle_damping: 0.0,
            wall_damping: 0.0,
            record_stride: 1,
            neighbors: Neighbors::AllPairs,
            checkpoint_stride: None,
        }
    }
}

impl Default for FireSection {
    fn default() -> Self {
        let f = FireConfig::default();
        Self {
            dt: None,
            dt_max_factor: 10.0,
            f_inc: f.f_inc,
            f_dec: f.f_dec,
            alpha_start: f.alpha_start,
            f_alpha: f.f_alpha,
            n_min: f.n_min,
            force_tol: f.force_tol,
            max_steps: f.max_steps,
            compression_step: CompressionConfig::default().step,
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            task: TaskName::And,
            loss: LossName::MaeTime,
            inputs: None,
            outputs: None,
            frequencies: None,
            amplitude: 1e-3,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-3,
            lr_milestones: vec![150, 300, 400],
            lr_gamma: 0.1,
            init: InitName::Fixed,
            k0: 5.5,
            init_lo: 1.0,
            init_hi: 10.0,
            snapshot_every: 0,
        }
    }
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 1000,
            mutation_sigma: 0.1,
            crossover: false,
        }
    }
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            count: 10_000,
            size_matched: false,
        }
    }
}

impl TaskName {
    pub fn task(self) -> Task {
        match self {
            TaskName::Waveguide => Task::Waveguide,
            TaskName::And => Task::AndGate,
            TaskName::Xor => Task::XorGate,
        }
    }
}

impl LossName {
    pub fn kind(self) -> LossKind {
        match self {
            LossName::CrossEntropy => LossKind::CrossEntropy,
            LossName::MaeTime => LossKind::Mae,
            LossName::SpectralGain => LossKind::SpectralGain,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::parse(origin, e.message()))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_toml()).map_err(|e| AppError::io(path, e))
    }

    pub fn lattice_spec(&self) -> LatticeSpec {
        let l = &self.lattice;
        LatticeSpec::new(l.nx, l.ny, l.diameter, l.packing_fraction)
    }

    pub fn n(&self) -> usize {
        self.lattice.nx * self.lattice.ny
    }

    pub fn bounds(&self) -> AppResult<StiffnessBounds> {
        Ok(StiffnessBounds::new(self.material.k_min, self.material.k_max)?)
    }

    /// Uniform material at the packing stiffness.
    pub fn packing_material(&self) -> AppResult<MaterialParams> {
        let m = &self.material;
        Ok(MaterialParams::new(
            vec![m.packing_stiffness; self.n()],
            m.mass,
            self.lattice.diameter,
            m.alpha,
        )?)
    }

    pub fn material(&self, stiffness: Vec<f64>) -> AppResult<MaterialParams> {
        let m = &self.material;
        Ok(MaterialParams::new(stiffness, m.mass, self.lattice.diameter, m.alpha)?)
    }

    pub fn fire(&self) -> FireConfig {
        let f = &self.fire;
        let dt = f.dt.unwrap_or(self.sim.dt);
        FireConfig {
            dt_initial: dt,
            dt_max: f.dt_max_factor * dt,
            f_inc: f.f_inc,
            f_dec: f.f_dec,
            alpha_start: f.alpha_start,
            f_alpha: f.f_alpha,
            n_min: f.n_min,
            force_tol: f.force_tol,
            max_steps: f.max_steps,
        }
    }

    pub fn compression(&self) -> CompressionConfig {
        CompressionConfig {
            step: self.fire.compression_step,
            ..CompressionConfig::default()
        }
    }

    pub fn damping(&self) -> DampingParams {
        DampingParams {
            background: self.sim.background_damping,
            particle_particle: self.sim.particle_damping,
            particle_wall: self.sim.wall_damping,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            n_steps: s.n_steps,
            dt: s.dt,
            damping: self.damping(),
            probes: Vec::new(),
            record_stride: s.record_stride,
            neighbors: match s.neighbors {
                Neighbors::AllPairs => NeighborMode::AllPairs,
                Neighbors::CellList => NeighborMode::CellList,
            },
        }
    }

    pub fn system(&self, geometry: PackingGeometry) -> AppResult<System> {
        Ok(System {
            geometry,
            mass: self.material.mass,
            diameter: self.lattice.diameter,
            alpha: self.material.alpha,
            sim: self.sim_config(),
            bounds: self.bounds()?,
            checkpoint_stride: self.sim.checkpoint_stride,
        })
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        let e = &self.experiment;
        let task = e.task.task();
        let (inputs, outputs) = default_ports(task, self.lattice.nx, self.lattice.ny);
        let frequencies = e.frequencies.clone().unwrap_or_else(|| match task {
            Task::Waveguide => vec![7.0, 15.0],
            _ => vec![15.0],
        });
        ExperimentSpec {
            task,
            inputs: e.inputs.clone().unwrap_or(inputs),
            outputs: e.outputs.clone().unwrap_or(outputs),
            frequencies,
            amplitude: e.amplitude,
            loss: e.loss.kind(),
        }
    }

    pub fn train_config(&self, seed: u64) -> AppResult<TrainConfig> {
        let t = &self.train;
        let init = match t.init {
            InitName::Fixed => Init::Fixed(t.k0),
            InitName::Uniform => Init::Uniform {
                lo: t.init_lo,
                hi: t.init_hi,
            },
        };
        let cfg = TrainConfig {
            epochs: t.epochs,
            lr: t.lr,
            lr_milestones: t.lr_milestones.clone(),
            lr_gamma: t.lr_gamma,
            init,
            seed,
            bounds: self.bounds()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn evo_config(&self, seed: u64) -> AppResult<EvoConfig> {
        let e = &self.evolve;
        let cfg = EvoConfig {
            population: e.population,
            generations: e.generations,
            mutation_sigma: e.mutation_sigma,
            seed,
            bounds: self.bounds()?,
            crossover: e.crossover,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without running physics.
    pub fn validate(&self) -> AppResult<()> {
        self.lattice_spec().validate()?;
        self.packing_material()?;
        self.fire().validate()?;
        self.sim_config().validate(self.n())?;
        self.experiment_spec().validate(self.n())?;
        self.train_config(self.seed)?;
        self.evo_config(self.seed)?;
        if self.search.count == 0 {
            return Err(AppError::Usage("search.count must be positive".into()));
        }
        Ok(())
    }
}
