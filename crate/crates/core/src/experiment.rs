//! The three design tasks (waveguide, AND gate, XOR gate): port layout,
//! datasets, and loss evaluation with or without gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{GradientResult, Tape};
use crate::loss::{cross_entropy_with_grad, mae_grad, mae_loss, sign, spectral_gain_with_grad};
use crate::physics::{MaterialParams, PackingGeometry, StiffnessBounds};
use crate::sim::{run_sim, window_start, DriveSignal, ProbeRecord, ProbeSpec, SimConfig, Stepper};
use crate::{Error, Result};

/// Intensity window of the waveguide: the first third is transient.
pub const WAVEGUIDE_WINDOW_START: f64 = 1.0 / 3.0;
/// Window of the gate losses: only the last third counts.
pub const GATE_WINDOW_START: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Waveguide,
    AndGate,
    XorGate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Waveguide => "waveguide",
            Task::AndGate => "and",
            Task::XorGate => "xor",
        }
    }

    pub fn is_gate(self) -> bool {
        !matches!(self, Task::Waveguide)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy on normalized port intensities.
    CrossEntropy,
    /// Mean absolute error of the output displacement in the gate window.
    Mae,
    /// Absolute deviation of the spectral gain from 1 (signal) or 0 (none).
    SpectralGain,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Mae => "mae_time",
            LossKind::SpectralGain => "spectral_gain",
        }
    }
}

/// What is driven, what is read out, and how it is scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub task: Task,
    pub inputs: Vec<usize>,
    /// Waveguide: `[port 0, port 1]`; gates: the single output.
    pub outputs: Vec<usize>,
    /// Waveguide: `[f1, f2]`; gates: `[f]`.
    pub frequencies: Vec<f64>,
    pub amplitude: f64,
    pub loss: LossKind,
}

impl ExperimentSpec {
    /// Two-frequency waveguide: `f1` should exit at port 1, `f2` at port 0.
    pub fn waveguide(input: usize, outputs: [usize; 2]) -> Self {
        Self {
            task: Task::Waveguide,
            inputs: vec![input],
            outputs: outputs.to_vec(),
            frequencies: vec![7.0, 15.0],
            amplitude: 1e-3,
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn gate(task: Task, inputs: [usize; 2], output: usize) -> Self {
        Self {
            task,
            inputs: inputs.to_vec(),
            outputs: vec![output],
            frequencies: vec![15.0],
            amplitude: 1e-3,
            loss: LossKind::Mae,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let (ni, no, nf) = match self.task {
            Task::Waveguide => (1, 2, 2),
            Task::AndGate | Task::XorGate => (2, 1, 1),
        };
        if self.inputs.len() != ni {
            return Err(Error::LengthMismatch {
                expected: ni,
                got: self.inputs.len(),
            });
        }
        if self.outputs.len() != no {
            return Err(Error::LengthMismatch {
                expected: no,
                got: self.outputs.len(),
            });
        }
        if self.frequencies.len() != nf {
            return Err(Error::LengthMismatch {
                expected: nf,
                got: self.frequencies.len(),
            });
        }
        if let Some(&p) = self.inputs.iter().chain(&self.outputs).find(|&&p| p >= n) {
            return Err(Error::Config {
                what: "port index out of range",
                value: p as f64,
            });
        }
        let mut ports: Vec<usize> = self.inputs.iter().chain(&self.outputs).copied().collect();
        ports.sort_unstable();
        if ports.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("ports must be distinct particles"));
        }
        if let Some(&f) = self.frequencies.iter().find(|f| !(**f > 0.0)) {
            return Err(Error::Config {
                what: "frequency must be positive",
                value: f,
            });
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Config {
                what: "amplitude must be positive",
                value: self.amplitude,
            });
        }
        match (self.task, self.loss) {
            (Task::Waveguide, LossKind::CrossEntropy) => Ok(()),
            (Task::AndGate | Task::XorGate, LossKind::Mae | LossKind::SpectralGain) => Ok(()),
            _ => Err(Error::Domain("loss does not apply to this task")),
        }
    }
}

/// Default ports on an `nx x ny` lattice: inputs in the left column, outputs
/// in the right column. Rows are counted from the bottom; `mid = ny / 2`
/// and `offset = max(1, ny / 4)`.
///
/// - waveguide: input at `mid`; port 0 at `mid - offset` (bottom), port 1 at
///   `mid + offset` (top);
/// - gates: inputs at `mid + offset` and `mid - offset`; output at `mid`.
pub fn default_ports(task: Task, nx: usize, ny: usize) -> (Vec<usize>, Vec<usize>) {
    let mid = ny / 2;
    let offset = (ny / 4).max(1);
    let left = |row: usize| row * nx;
    let right = |row: usize| row * nx + nx - 1;
    match task {
        Task::Waveguide => (vec![left(mid)], vec![right(mid - offset), right(mid + offset)]),
        Task::AndGate | Task::XorGate => (vec![left(mid + offset), left(mid - offset)], vec![right(mid)]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// One-hot target port of the waveguide.
    Port(usize),
    /// Desired output displacement at every recorded sample.
    Series(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: &'static str,
    pub drives: Vec<DriveSignal>,
    pub target: Target,
}

fn tone(amplitude: f64, frequency: f64, sim: &SimConfig) -> Vec<f64> {
    let w = 2.0 * core::f64::consts::PI * frequency;
    (0..sim.record_len())
        .map(|k| amplitude * libm::sin(w * sim.recorded_time(k)))
        .collect()
}

/// The three non-trivial cases `01`, `10`, `11` of a two-input gate at
/// frequency `f`. In case `01` the first input carries `A sin(2 pi f t)` and
/// the second is held at rest (a zero-amplitude drive); `10` is the mirror
/// case and `11` drives both. The `00` case is always satisfied and is
/// left out.
pub fn gate_dataset(task: Task, frequency: f64, amplitude: f64, inputs: [usize; 2], sim: &SimConfig) -> Vec<Sample> {
    let signal = tone(amplitude, frequency, sim);
    let silent = vec![0.0; signal.len()];
    let drive = |p: usize, on: bool| DriveSignal::new(p, if on { amplitude } else { 0.0 }, frequency);
    let (t01, t10, t11) = match task {
        Task::AndGate => (&silent, &silent, &signal),
        Task::XorGate => (&signal, &signal, &silent),
        Task::Waveguide => panic!("gate_dataset called for the waveguide"),
    };
    vec![
        Sample {
            label: "01",
            drives: vec![drive(inputs[0], true), drive(inputs[1], false)],
            target: Target::Series(t01.clone()),
        },
        Sample {
            label: "10",
            drives: vec![drive(inputs[0], false), drive(inputs[1], true)],
            target: Target::Series(t10.clone()),
        },
        Sample {
            label: "11",
            drives: vec![drive(inputs[0], true), drive(inputs[1], true)],
            target: Target::Series(t11.clone()),
        },
    ]
}

/// Waveguide samples: `f1` targets port 1, `f2` targets port 0.
pub fn waveguide_dataset(input: usize, frequencies: [f64; 2], amplitude: f64) -> Vec<Sample> {
    vec![
        Sample {
            label: "f1",
            drives: vec![DriveSignal::new(input, amplitude, frequencies[0])],
            target: Target::Port(1),
        },
        Sample {
            label: "f2",
            drives: vec![DriveSignal::new(input, amplitude, frequencies[1])],
            target: Target::Port(0),
        },
    ]
}

/// Everything about the physical system except the stiffness vector.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub geometry: PackingGeometry,
    pub mass: f64,
    pub diameter: f64,
    pub alpha: f64,
    pub sim: SimConfig,
    pub bounds: StiffnessBounds,
    /// Adjoint checkpoint spacing; `None` uses `ceil(sqrt(T))`.
    pub checkpoint_stride: Option<usize>,
}

impl System {
    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn material(&self, stiffness: &[f64]) -> Result<MaterialParams> {
        MaterialParams::new(stiffness.to_vec(), self.mass, self.diameter, self.alpha)
    }
}

/// Loss of one design: the optimized objective, the summed total, and the
/// per-sample parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Value the optimizers minimize: the per-sample mean.
    pub objective: f64,
    /// Gates: sum of the partials. Waveguide: equal to `objective`.
    pub total: f64,
    pub partials: Vec<(&'static str, f64)>,
}

/// Maps a function over sample indices and returns the results in index
/// order. Lets callers run dataset samples concurrently.
pub trait Executor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs samples one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// An experiment bound to a system.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub system: System,
    pub samples: Vec<Sample>,
}

impl Experiment {
    pub fn new(spec: ExperimentSpec, mut system: System) -> Result<Self> {
        spec.validate(system.len())?;
        system.sim.probes = spec
            .outputs
            .iter()
            .chain(&spec.inputs)
            .map(|&p| ProbeSpec::x(p))
            .collect();
        system.sim.validate(system.len())?;
        let samples = match spec.task {
            Task::Waveguide => waveguide_dataset(
                spec.inputs[0],
                [spec.frequencies[0], spec.frequencies[1]],
                spec.amplitude,
            ),
            task => gate_dataset(
                task,
                spec.frequencies[0],
                spec.amplitude,
                [spec.inputs[0], spec.inputs[1]],
                &system.sim,
            ),
        };
        Ok(Self { spec, system, samples })
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    /// Simulates one sample and returns its probe records (outputs first,
    /// then inputs).
    pub fn simulate(&self, stiffness: &[f64], sample: &Sample) -> Result<Vec<ProbeRecord>> {
        let material = self.system.material(stiffness)?;
        run_sim(&self.system.sim, &material, &self.system.geometry, &sample.drives)
    }

    /// Forward-only loss.
    pub fn evaluate(&self, stiffness: &[f64]) -> Result<LossReport> {
        self.evaluate_on(stiffness, &Serial)
    }

    pub fn evaluate_on(&self, stiffness: &[f64], exec: &impl Executor) -> Result<LossReport> {
        let records = exec
            .map(self.samples.len(), |s| self.simulate(stiffness, &self.samples[s]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(self.score(&records)?.0)
    }

    /// Loss and its exact gradient with respect to stiffness.
    pub fn loss_and_grad(&self, stiffness: &[f64]) -> Result<(LossReport, GradientResult)> {
        self.loss_and_grad_on(stiffness, &Serial)
    }

    /// [`Experiment::loss_and_grad`] with samples mapped by `exec`. The
    /// per-sample gradients are summed in sample order, so the result does
    /// not depend on the executor.
    pub fn loss_and_grad_on(&self, stiffness: &[f64], exec: &impl Executor) -> Result<(LossReport, GradientResult)> {
        let material = self.system.material(stiffness)?;
        let geometry = &self.system.geometry;
        let sim = &self.system.sim;
        let tapes = exec
            .map(self.samples.len(), |s| {
                let stepper = Stepper::new(
                    &material,
                    geometry,
                    sim.damping,
                    &self.samples[s].drives,
                    sim.dt,
                    sim.neighbors,
                )?;
                Tape::record(stepper, sim, self.system.checkpoint_stride)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<Vec<ProbeRecord>> = tapes.iter().map(|t| t.records().to_vec()).collect();
        let (report, seeds) = self.score(&records)?;
        let parts = exec.map(tapes.len(), |s| tapes[s].backward(&seeds[s]));
        let mut grad = vec![0.0; self.len()];
        for part in parts {
            for (g, d) in grad.iter_mut().zip(part?) {
                *g += d;
            }
        }
        let result = GradientResult::new(report.objective, grad);
        Ok((report, result))
    }

    /// Scores per-sample probe records; also returns the derivative of the
    /// objective with respect to every recorded series.
    #[allow(clippy::type_complexity)]
    pub fn score(&self, records: &[Vec<ProbeRecord>]) -> Result<(LossReport, Vec<Vec<Vec<f64>>>)> {
        if records.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                expected: self.samples.len(),
                got: records.len(),
            });
        }
        let mut seeds: Vec<Vec<Vec<f64>>> = records
            .iter()
            .map(|r| r.iter().map(|p| vec![0.0; p.series.len()]).collect())
            .collect();
        let n = self.samples.len() as f64;
        match self.spec.loss {
            LossKind::CrossEntropy => {
                let mut intensities = Vec::with_capacity(records.len());
                let mut targets = Vec::with_capacity(records.len());
                for (rec, sample) in records.iter().zip(&self.samples) {
                    let port = match sample.target {
                        Target::Port(p) => p,
                        Target::Series(_) => return Err(Error::Domain("cross-entropy needs port targets")),
                    };
                    let start = window_start(rec[0].series.len(), WAVEGUIDE_WINDOW_START);
                    let i0: f64 = rec[0].series[start..].iter().map(|x| x * x).sum();
                    let i1: f64 = rec[1].series[start..].iter().map(|x| x * x).sum();
                    intensities.push([i0, i1]);
                    targets.push(port);
                }
                let ce = cross_entropy_with_grad(&intensities, &targets)?;
                for ((rec, seed), g) in records.iter().zip(&mut seeds).zip(&ce.grad) {
                    let start = window_start(rec[0].series.len(), WAVEGUIDE_WINDOW_START);
                    for port in 0..2 {
                        for (k, x) in rec[port].series.iter().enumerate().skip(start) {
                            seed[port][k] = g[port] * 2.0 * x;
                        }
                    }
                }
                let partials = self.samples.iter().map(|s| s.label).zip(ce.terms).collect();
                Ok((
                    LossReport {
                        objective: ce.loss,
                        total: ce.loss,
                        partials,
                    },
                    seeds,
                ))
            }
            LossKind::Mae => {
                let mut partials = Vec::with_capacity(records.len());
                for ((rec, sample), seed) in records.iter().zip(&self.samples).zip(&mut seeds) {
                    let target = series_target(sample)?;
                    let out = &rec[0].series;
                    let start = window_start(out.len(), GATE_WINDOW_START);
                    partials.push((sample.label, mae_loss(&out[start..], &target[start..])?));
                    for (k, g) in mae_grad(&out[start..], &target[start..]).into_iter().enumerate() {
                        seed[0][start + k] = g / n;
                    }
                }
                Ok((gate_report(partials, n), seeds))
            }
            LossKind::SpectralGain => {
                let f = self.spec.frequencies[0];
                let dt = self.system.sim.sample_interval();
                let mut partials = Vec::with_capacity(records.len());
                for ((rec, sample), seed) in records.iter().zip(&self.samples).zip(&mut seeds) {
                    let target = series_target(sample)?;
                    let wanted = if target.iter().any(|&y| y != 0.0) { 1.0 } else { 0.0 };
                    let (gain, grad) =
                        spectral_gain_with_grad([&rec[1].series, &rec[2].series], &rec[0].series, f, dt)?;
                    let s = sign(gain - wanted);
                    partials.push((sample.label, libm::fabs(gain - wanted)));
                    for (k, g) in grad.into_iter().enumerate() {
                        seed[0][k] = s * g / n;
                    }
                }
                Ok((gate_report(partials, n), seeds))
            }
        }
    }
}

fn series_target(sample: &Sample) -> Result<&[f64]> {
    match &sample.target {
        Target::Series(s) => Ok(s),
        Target::Port(_) => Err(Error::Domain("gate losses need series targets")),
    }
}

fn gate_report(partials: Vec<(&'static str, f64)>, n: f64) -> LossReport {
    let total: f64 = partials.iter().map(|(_, v)| v).sum();
    LossReport {
        objective: total / n,
        total,
        partials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(n_steps: usize) -> SimConfig {
        SimConfig::new(n_steps, 5e-3)
    }

    #[test]
    fn and_dataset_targets() {
        let s = gate_dataset(Task::AndGate, 15.0, 1e-3, [0, 1], &sim(3000));
        assert_eq!(s.len(), 3);
        let series = |i: usize| match &s[i].target {
            Target::Series(v) => v.clone(),
            _ => unreachable!(),
        };
        assert_eq!(series(0), series(1));
        assert!(series(0).iter().all(|&v| v == 0.0));
        let t11 = series(2);
        // sin(2 pi 15 t) = 1 at t = 1/60 + k/15; recorded sample k has t = (k + 1) dt
        let max = t11.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1e-3).abs() < 1e-3 * 1e-3);
        assert_eq!(s[0].drives[0].amplitude, 1e-3);
        assert_eq!(s[0].drives[1].amplitude, 0.0);
        assert_eq!(s[1].drives[0].amplitude, 0.0);
        assert_eq!(s[2].drives[1].amplitude, 1e-3);
    }

    #[test]
    fn xor_dataset_targets() {
        let s = gate_dataset(Task::XorGate, 15.0, 1e-3, [0, 1], &sim(300));
        match (&s[0].target, &s[2].target) {
            (Target::Series(a), Target::Series(c)) => {
                assert!(a.iter().any(|&v| v != 0.0));
                assert!(c.iter().all(|&v| v == 0.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn default_port_layout() {
        let (i, o) = default_ports(Task::Waveguide, 10, 11);
        assert_eq!(i, vec![50]);
        assert_eq!(o, vec![39, 79]);
        let (i, o) = default_ports(Task::AndGate, 5, 5);
        assert_eq!(i, vec![15, 5]);
        assert_eq!(o, vec![14]);
    }

    #[test]
    fn spec_validation() {
        let w = ExperimentSpec::waveguide(10, [4, 24]);
        assert!(w.validate(25).is_ok());
        assert!(w.validate(20).is_err());
        let mut bad = w.clone();
        bad.loss = LossKind::Mae;
        assert!(bad.validate(25).is_err());
        let g = ExperimentSpec::gate(Task::XorGate, [15, 5], 15);
        assert!(g.validate(25).is_err());
    }
}
