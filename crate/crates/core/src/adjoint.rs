//! Discrete adjoint of [`crate::sim`] with respect to the stiffness vector.
//!
//! The forward pass stores the integrator phase every `K` steps. The
//! backward pass walks the segments in reverse, re-integrates each one from
//! its checkpoint (bitwise identical to the forward pass), and propagates
//! the adjoint of `(x, v, a)` through every step in reverse order. Memory is
//! `O(T / K + K)` phases; the default `K = ceil(sqrt(T))` balances the two.
//!
//! The step map is linear in velocities and accelerations, so the only
//! nonlinear pieces are the conservative forces at the new positions: their
//! Jacobian (for the position adjoint) and their stiffness derivative (for
//! the gradient). Contact switches are piecewise constant and contribute
//! nothing; at the contact boundary forces are zero with zero derivative.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{all_finite, sqrt, Vec2};
use crate::sim::{Phase, ProbeRecord, SimConfig, StepTrace, Stepper};
use crate::{Error, Result};

/// `ceil(sqrt(n_steps))`, at least 1.
pub fn default_checkpoint_stride(n_steps: usize) -> usize {
    let mut k = sqrt(n_steps as f64) as usize;
    while k * k < n_steps {
        k += 1;
    }
    k.max(1)
}

/// Forward pass with checkpoints, ready for [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    stepper: Stepper<'a>,
    config: &'a SimConfig,
    stride: usize,
    checkpoints: Vec<Phase>,
    records: Vec<ProbeRecord>,
}

impl<'a> Tape<'a> {
    /// Runs the simulation forward, exactly as [`crate::sim::run_sim`]
    /// does, keeping a checkpoint every `stride` steps.
    pub fn record(stepper: Stepper<'a>, config: &'a SimConfig, stride: Option<usize>) -> Result<Self> {
        config.validate(stepper.len())?;
        let stride = stride
            .unwrap_or_else(|| default_checkpoint_stride(config.n_steps))
            .max(1);
        let mut phase = stepper.initial()?;
        let mut checkpoints = Vec::with_capacity(config.n_steps / stride + 1);
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
            if phase.step % stride == 0 {
                checkpoints.push(phase.clone());
            }
            stepper.step(&mut phase)?;
            if config.records_step(phase.step) {
                for (rec, probe) in records.iter_mut().zip(&config.probes) {
                    rec.series.push(stepper.probe_value(&phase, probe));
                }
            }
        }
        Ok(Self {
            stepper,
            config,
            stride,
            checkpoints,
            records,
        })
    }

    pub fn records(&self) -> &[ProbeRecord] {
        &self.records
    }

    pub fn checkpoint_stride(&self) -> usize {
        self.stride
    }

    pub fn checkpoint_count(&self) -> usize {
        self.checkpoints.len()
    }

    /// Gradient with respect to stiffness of `sum_p sum_k seeds[p][k] *
    /// records[p].series[k]`, i.e. the vector-Jacobian product of the whole
    /// simulation with the given series cotangents.
    pub fn backward(&self, seeds: &[Vec<f64>]) -> Result<Vec<f64>> {
        if seeds.len() != self.records.len() {
            return Err(Error::LengthMismatch {
                expected: self.records.len(),
                got: seeds.len(),
            });
        }
        let len = self.config.record_len();
        if let Some(s) = seeds.iter().find(|s| s.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                got: s.len(),
            });
        }

        let n = self.stepper.len();
        let mut adj = Adjoint {
            x: vec![[0.0; 2]; n],
            v: vec![[0.0; 2]; n],
            a: vec![[0.0; 2]; n],
        };
        let mut grad = vec![0.0; n];
        let total = self.config.n_steps;

        for (seg, checkpoint) in self.checkpoints.iter().enumerate().rev() {
            let start = seg * self.stride;
            let end = (start + self.stride).min(total);
            // Re-integrate the segment, keeping what the reverse sweep needs.
            let mut phase = checkpoint.clone();
            let mut traces = Vec::with_capacity(end - start);
            for _ in start..end {
                traces.push(self.stepper.step_traced(&mut phase)?);
            }
            for (offset, trace) in traces.iter().enumerate().rev() {
                let step = start + offset + 1;
                if self.config.records_step(step) {
                    let k = (step - 1) / self.config.record_stride;
                    for (probe, seed) in self.config.probes.iter().zip(seeds) {
                        adj.x[probe.particle][probe.axis.index()] += seed[k];
                    }
                }
                self.reverse_step(trace, &mut adj, &mut grad);
                if !(all_finite(&adj.x) && all_finite(&adj.v) && all_finite(&adj.a)) {
                    return Err(Error::GradientFailure { step });
                }
            }
        }

        // The initial accelerations are forces at the rest positions.
        let first = &self.checkpoints[0];
        let contacts = self.stepper.model.contacts(&first.positions)?;
        let m = self.stepper.model.params.mass;
        let mut lam_f: Vec<Vec2> = adj.a.iter().map(|a| [a[0] / m, a[1] / m]).collect();
        self.zero_driven(&mut lam_f);
        contacts.add_stiffness_vjp(&self.stepper.model.params.stiffness, &lam_f, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::GradientFailure { step: 0 });
        }
        Ok(grad)
    }

    fn zero_driven(&self, lam: &mut [Vec2]) {
        for d in self.stepper.drives {
            lam[d.particle][d.axis.index()] = 0.0;
        }
    }

    /// Maps the adjoint of a step's outputs onto the adjoint of its inputs,
    /// accumulating the stiffness gradient.
    fn reverse_step(&self, trace: &StepTrace, adj: &mut Adjoint, grad: &mut [f64]) {
        let st = &self.stepper;
        let n = st.len();
        let dt = st.dt;
        let h = 0.5 * dt;
        let m = st.model.params.mass;
        // Prescribed outputs are constants.
        self.zero_driven(&mut adj.x);
        self.zero_driven(&mut adj.v);
        self.zero_driven(&mut adj.a);

        // a' = (F + P - g v') / m ;  v' = (vh + h (F + P) / m) / s
        let mut lam_force = vec![[0.0; 2]; n];
        let mut lam_vh = vec![[0.0; 2]; n];
        for i in 0..n {
            let g = trace.diag[i];
            let s = 1.0 + h * g / m;
            for ax in 0..2 {
                let la = adj.a[i][ax];
                let lv = adj.v[i][ax] - g * la / m;
                lam_force[i][ax] = la / m + h * lv / (m * s);
                lam_vh[i][ax] = lv / s;
            }
        }
        // P(vh) = -B_pp * (graph Laplacian) vh; the pair damping force
        // sees the same cotangent as F.
        let bpp = st.damping.particle_particle;
        if bpp != 0.0 {
            for c in &trace.contacts.pairs {
                for ax in 0..2 {
                    let d = bpp * (lam_force[c.j][ax] - lam_force[c.i][ax]);
                    lam_vh[c.i][ax] += d;
                    lam_vh[c.j][ax] -= d;
                }
            }
        }
        // F(x'; k)
        trace.contacts.add_jacobian_transpose(&lam_force, &mut adj.x);
        trace
            .contacts
            .add_stiffness_vjp(&st.model.params.stiffness, &lam_force, grad);
        // Driven positions and half-step velocities are prescribed.
        self.zero_driven(&mut adj.x);
        self.zero_driven(&mut lam_vh);
        // x' = x + dt vh ; vh = v + h a
        for i in 0..n {
            for ax in 0..2 {
                let lvh = lam_vh[i][ax] + dt * adj.x[i][ax];
                adj.v[i][ax] = lvh;
                adj.a[i][ax] = h * lvh;
            }
        }
    }
}

struct Adjoint {
    x: Vec<Vec2>,
    v: Vec<Vec2>,
    a: Vec<Vec2>,
}

/// Loss value, stiffness gradient and gradient diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub max_abs_grad: f64,
    pub nan_count: usize,
}

impl GradientResult {
    pub fn new(loss: f64, grad: Vec<f64>) -> Self {
        let max_abs_grad = grad
            .iter()
            .filter(|g| g.is_finite())
            .map(|g| libm::fabs(*g))
            .fold(0.0, f64::max);
        let nan_count = grad.iter().filter(|g| !g.is_finite()).count();
        Self {
            loss,
            grad,
            max_abs_grad,
            nan_count,
        }
    }
}

/// Per-component comparison of an analytic gradient with central
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(index, analytic, numeric, relative error)`.
    pub components: Vec<(usize, f64, f64, f64)>,
}

/// Relative error with denominator `max(|a|, |b|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(1e-12);
    libm::fabs(analytic - numeric) / denom
}

/// Compares `analytic[i]` with `(L(k + h e_i) - L(k - h e_i)) / 2h` for every
/// `i` in `indices`.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    stiffness: &[f64],
    analytic: &[f64],
    h: f64,
    indices: &[usize],
) -> Result<GradCheck> {
    if !(h > 0.0) {
        return Err(Error::Config {
            what: "finite-difference step must be positive",
            value: h,
        });
    }
    let mut components = Vec::with_capacity(indices.len());
    let mut worst: f64 = 0.0;
    let mut k = stiffness.to_vec();
    for &i in indices {
        k[i] = stiffness[i] + h;
        let up = loss(&k)?;
        k[i] = stiffness[i] - h;
        let down = loss(&k)?;
        k[i] = stiffness[i];
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        worst = worst.max(err);
        components.push((i, analytic[i], numeric, err));
    }
    Ok(GradCheck {
        max_relative_error: worst,
        components,
    })
}
