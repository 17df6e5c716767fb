//! Forward integration of the driven, damped crystal.
//!
//! The integrator is velocity Verlet with the velocity-proportional
//! dissipation split in two: background and wall damping are diagonal and
//! enter the closing half-kick implicitly (trapezoidal, keeping the scheme
//! second order), while pair damping couples neighbors and is evaluated at
//! the half-step velocity. One step from `(x, v, a)` at `t` reads
//!
//! ```text
//! vh = v + dt/2 a
//! x' = x + dt vh
//! v' = (vh + dt/2 (F(x') + P(vh)) / m) / (1 + dt/2 g(x') / m)
//! a' = (F(x') + P(vh) - g(x') v') / m
//! ```
//!
//! with `F` the conservative force, `P` the pair damping force and `g` the
//! per-particle diagonal damping coefficient. Driven degrees of freedom are
//! kinematic: their position, velocity and acceleration are overwritten by
//! the prescribed sinusoid at every step.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{all_finite, Vec2};
use crate::neighbors::NeighborMode;
use crate::physics::{apply_pair_damping, Contacts, DampingParams, ForceModel, MaterialParams, PackingGeometry};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Axis {
    #[default]
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// Prescribed harmonic displacement `A sin(2 pi f t + phase)` of one
/// particle along one axis, about its rest position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSignal {
    pub particle: usize,
    pub amplitude: f64,
    pub frequency: f64,
    pub axis: Axis,
    pub phase: f64,
}

impl DriveSignal {
    pub fn new(particle: usize, amplitude: f64, frequency: f64) -> Self {
        Self {
            particle,
            amplitude,
            frequency,
            axis: Axis::X,
            phase: 0.0,
        }
    }

    fn omega(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.frequency
    }

    pub fn displacement(&self, t: f64) -> f64 {
        self.amplitude * libm::sin(self.omega() * t + self.phase)
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.amplitude * self.omega() * libm::cos(self.omega() * t + self.phase)
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let w = self.omega();
        -self.amplitude * w * w * libm::sin(w * t + self.phase)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.particle >= n {
            return Err(Error::Config {
                what: "drive particle index out of range",
                value: self.particle as f64,
            });
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config {
                what: "drive amplitude must be >= 0",
                value: self.amplitude,
            });
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::Config {
                what: "drive frequency must be positive",
                value: self.frequency,
            });
        }
        Ok(())
    }
}

/// A recorded degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSpec {
    pub particle: usize,
    pub axis: Axis,
}

impl ProbeSpec {
    pub fn x(particle: usize) -> Self {
        Self {
            particle,
            axis: Axis::X,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub damping: DampingParams,
    pub probes: Vec<ProbeSpec>,
    pub record_stride: usize,
    pub neighbors: NeighborMode,
}

impl SimConfig {
    pub fn new(n_steps: usize, dt: f64) -> Self {
        Self {
            n_steps,
            dt,
            damping: DampingParams::default(),
            probes: Vec::new(),
            record_stride: 1,
            neighbors: NeighborMode::AllPairs,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config {
                what: "n_steps must be positive",
                value: 0.0,
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config {
                what: "dt must be positive",
                value: self.dt,
            });
        }
        if self.record_stride == 0 {
            return Err(Error::Config {
                what: "record_stride must be positive",
                value: 0.0,
            });
        }
        if let Some(p) = self.probes.iter().find(|p| p.particle >= n) {
            return Err(Error::Config {
                what: "probe particle index out of range",
                value: p.particle as f64,
            });
        }
        self.damping.validate()
    }

    /// Number of recorded samples per probe, `ceil(n_steps / record_stride)`.
    pub fn record_len(&self) -> usize {
        self.n_steps.div_ceil(self.record_stride)
    }

    /// Step index (1-based) of recorded sample `k`.
    pub fn recorded_step(&self, k: usize) -> usize {
        1 + k * self.record_stride
    }

    /// Time of recorded sample `k`.
    pub fn recorded_time(&self, k: usize) -> f64 {
        self.recorded_step(k) as f64 * self.dt
    }

    /// Sample spacing of the recorded series.
    pub fn sample_interval(&self) -> f64 {
        self.record_stride as f64 * self.dt
    }

    pub(crate) fn records_step(&self, step: usize) -> bool {
        (step - 1).is_multiple_of(self.record_stride)
    }
}

/// Displacement history `r - r0` of one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub particle: usize,
    pub axis: Axis,
    pub series: Vec<f64>,
}

/// Integrator state: positions, velocities and the accelerations carried
/// from the previous force evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub accelerations: Vec<Vec2>,
    /// Number of steps taken.
    pub step: usize,
}

/// Intermediates of one step that the adjoint needs.
pub(crate) struct StepTrace {
    pub contacts: Contacts,
    /// Diagonal damping coefficient per particle at the new positions.
    pub diag: Vec<f64>,
}

/// Velocity Verlet stepper for a fixed material, geometry and drive set.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    pub(crate) model: ForceModel<'a>,
    pub(crate) damping: DampingParams,
    pub(crate) drives: &'a [DriveSignal],
    pub(crate) rest: &'a [Vec2],
    pub(crate) dt: f64,
    /// `driven[i][axis]` is the index of the drive controlling that DOF.
    pub(crate) driven: Vec<[Option<usize>; 2]>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        params: &'a MaterialParams,
        geometry: &'a PackingGeometry,
        damping: DampingParams,
        drives: &'a [DriveSignal],
        dt: f64,
        neighbors: NeighborMode,
    ) -> Result<Self> {
        params.validate()?;
        damping.validate()?;
        let n = geometry.len();
        if params.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: params.len(),
            });
        }
        let mut driven = vec![[None; 2]; n];
        for (d, drive) in drives.iter().enumerate() {
            drive.validate(n)?;
            let slot = &mut driven[drive.particle][drive.axis.index()];
            if slot.is_some() {
                return Err(Error::Config {
                    what: "two drives on one degree of freedom",
                    value: drive.particle as f64,
                });
            }
            *slot = Some(d);
        }
        Ok(Self {
            model: ForceModel::new(params, &geometry.container).with_neighbors(neighbors),
            damping,
            drives,
            rest: &geometry.equilibrium,
            dt,
            driven,
        })
    }

    pub fn len(&self) -> usize {
        self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    fn mass(&self) -> f64 {
        self.model.params.mass
    }

    pub(crate) fn diag_damping(&self, contacts: &Contacts) -> Vec<f64> {
        let walls = contacts.wall_counts();
        walls
            .iter()
            .map(|&w| self.damping.background + self.damping.particle_wall * w as f64)
            .collect()
    }

    fn apply_drives(&self, t: f64, x: &mut [Vec2], v: &mut [Vec2], a: &mut [Vec2]) {
        for d in self.drives {
            let (i, ax) = (d.particle, d.axis.index());
            x[i][ax] = self.rest[i][ax] + d.displacement(t);
            v[i][ax] = d.velocity(t);
            a[i][ax] = d.acceleration(t);
        }
    }

    /// Rest positions, zero velocity (except on driven axes), and the
    /// matching accelerations.
    pub fn initial(&self) -> Result<Phase> {
        let n = self.len();
        let mut x = self.rest.to_vec();
        let mut v = vec![[0.0; 2]; n];
        let mut a = vec![[0.0; 2]; n];
        self.apply_drives(0.0, &mut x, &mut v, &mut a);
        let contacts = self.model.contacts(&x)?;
        let mut f = contacts.forces();
        apply_pair_damping(&contacts, self.damping.particle_particle, &v, &mut f);
        let diag = self.diag_damping(&contacts);
        let m = self.mass();
        for i in 0..n {
            for ax in 0..2 {
                if self.driven[i][ax].is_none() {
                    a[i][ax] = (f[i][ax] - diag[i] * v[i][ax]) / m;
                }
            }
        }
        if !all_finite(&a) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Phase {
            positions: x,
            velocities: v,
            accelerations: a,
            step: 0,
        })
    }

    /// Half-step velocities of a phase.
    pub(crate) fn half_velocities(&self, phase: &Phase) -> Vec<Vec2> {
        let h = 0.5 * self.dt;
        let t_half = (phase.step as f64 + 0.5) * self.dt;
        let mut vh: Vec<Vec2> = phase
            .velocities
            .iter()
            .zip(&phase.accelerations)
            .map(|(v, a)| [v[0] + h * a[0], v[1] + h * a[1]])
            .collect();
        for d in self.drives {
            vh[d.particle][d.axis.index()] = d.velocity(t_half);
        }
        vh
    }

    /// Advances `phase` by one time step.
    pub fn step(&self, phase: &mut Phase) -> Result<()> {
        self.step_traced(phase).map(|_| ())
    }

    pub(crate) fn step_traced(&self, phase: &mut Phase) -> Result<StepTrace> {
        let n = self.len();
        let dt = self.dt;
        let h = 0.5 * dt;
        let m = self.mass();
        let vh = self.half_velocities(phase);
        let t1 = (phase.step + 1) as f64 * dt;

        for i in 0..n {
            for ax in 0..2 {
                phase.positions[i][ax] += dt * vh[i][ax];
            }
        }
        for d in self.drives {
            let (i, ax) = (d.particle, d.axis.index());
            phase.positions[i][ax] = self.rest[i][ax] + d.displacement(t1);
        }

        let contacts = self.model.contacts(&phase.positions)?;
        let mut f = contacts.forces();
        apply_pair_damping(&contacts, self.damping.particle_particle, &vh, &mut f);
        let diag = self.diag_damping(&contacts);
        for i in 0..n {
            let s = 1.0 + h * diag[i] / m;
            for ax in 0..2 {
                let v1 = (vh[i][ax] + h * f[i][ax] / m) / s;
                phase.velocities[i][ax] = v1;
                phase.accelerations[i][ax] = (f[i][ax] - diag[i] * v1) / m;
            }
        }
        for d in self.drives {
            let (i, ax) = (d.particle, d.axis.index());
            phase.velocities[i][ax] = d.velocity(t1);
            phase.accelerations[i][ax] = d.acceleration(t1);
        }
        phase.step += 1;
        if !(all_finite(&phase.positions) && all_finite(&phase.velocities) && all_finite(&phase.accelerations)) {
            return Err(Error::NonFinite { step: phase.step });
        }
        Ok(StepTrace { contacts, diag })
    }

    /// Displacement of a probe from its rest position.
    pub fn probe_value(&self, phase: &Phase, probe: &ProbeSpec) -> f64 {
        let ax = probe.axis.index();
        phase.positions[probe.particle][ax] - self.rest[probe.particle][ax]
    }
}

/// One velocity Verlet step, see [`Stepper::step`].
pub fn step_verlet(
    phase: &mut Phase,
    params: &MaterialParams,
    geometry: &PackingGeometry,
    damping: &DampingParams,
    drives: &[DriveSignal],
    dt: f64,
) -> Result<()> {
    Stepper::new(params, geometry, *damping, drives, dt, NeighborMode::AllPairs)?.step(phase)
}

/// Integrates `config.n_steps` steps from rest at the equilibrium positions
/// and returns the recorded probe series.
pub fn run_sim(
    config: &SimConfig,
    params: &MaterialParams,
    geometry: &PackingGeometry,
    drives: &[DriveSignal],
) -> Result<Vec<ProbeRecord>> {
    run_sim_observed(config, params, geometry, drives, |_| {})
}

/// [`run_sim`] with a callback invoked on the phase after every step.
pub fn run_sim_observed(
    config: &SimConfig,
    params: &MaterialParams,
    geometry: &PackingGeometry,
    drives: &[DriveSignal],
    mut observe: impl FnMut(&Phase),
) -> Result<Vec<ProbeRecord>> {
    config.validate(geometry.len())?;
    let stepper = Stepper::new(params, geometry, config.damping, drives, config.dt, config.neighbors)?;
    let mut phase = stepper.initial()?;
    let mut records: Vec<ProbeRecord> = config
        .probes
        .iter()
        .map(|p| ProbeRecord {
            particle: p.particle,
            axis: p.axis,
            series: Vec::with_capacity(config.record_len()),
        })
        .collect();
    for _ in 0..config.n_steps {
        stepper.step(&mut phase)?;
        if config.records_step(phase.step) {
            for (rec, probe) in records.iter_mut().zip(&config.probes) {
                rec.series.push(stepper.probe_value(&phase, probe));
            }
        }
        observe(&phase);
    }
    Ok(records)
}

/// First index of the window that starts at `fraction` of a series of
/// length `len`.
pub fn window_start(len: usize, fraction: f64) -> usize {
    let x = fraction * len as f64;
    let r = libm::round(x);
    let start = if libm::fabs(x - r) < 1e-9 * x.max(1.0) {
        r
    } else {
        libm::floor(x)
    };
    (start.max(0.0) as usize).min(len)
}

/// Sum of squared displacements over the window `[fraction * T, T]`.
pub fn wave_intensity(record: &ProbeRecord, window_start_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&window_start_fraction) {
        return Err(Error::Config {
            what: "window start fraction must lie in [0, 1)",
            value: window_start_fraction,
        });
    }
    let start = window_start(record.series.len(), window_start_fraction);
    let window = &record.series[start..];
    if window.is_empty() {
        return Err(Error::Degenerate("empty intensity window"));
    }
    Ok(window.iter().map(|x| x * x).sum())
}
