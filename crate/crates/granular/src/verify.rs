//! Built-in verification suite: force/potential consistency, integrator
//! order and energy drift, FIRE equilibrium, adjoint gradients, loss
//! identities.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use granular_core::adjoint::{relative_error, GradCheck};
use granular_core::experiment::{default_ports, Experiment, ExperimentSpec, LossKind, System, Task};
use granular_core::loss::{cross_entropy_loss, mae_loss, softplus, spectral_gain};
use granular_core::neighbors::NeighborMode;
use granular_core::packing::{build_packing, fire_minimize, FireConfig, LatticeSpec};
use granular_core::physics::{
    effective_stiffness, total_energy, wall_force, Boundary, Container, DampingParams, ForceModel, MaterialParams,
    PackingGeometry, ParticleState, StiffnessBounds, HERTZ_ALPHA,
};
use granular_core::rng::{stream, uniform_design, Stream};
use granular_core::sim::{run_sim_observed, Phase, SimConfig, Stepper};
use granular_core::{Result, Vec2};
use rand::Rng;

/// Outcome of one check: `value` is compared against `tolerance` by the
/// check's own rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, tol: f64) -> Self {
        Self {
            name,
            value,
            tolerance: format!("< {tol:e}"),
            passed: value < tol,
        }
    }

    fn within(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name,
            value,
            tolerance: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} {:>12.4e}  ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// `t(s+) - t(s-)` for `t(s) = s^alpha` on `s > 0` (zero otherwise), given
/// `ds = s+ - s-` computed without cancellation.
fn power_difference(s_minus: f64, ds: f64, alpha: f64) -> f64 {
    let s_plus = s_minus + ds;
    if s_minus > 0.0 && s_plus > 0.0 {
        s_minus.powf(alpha) * (alpha * (ds / s_minus).ln_1p()).exp_m1()
    } else {
        s_plus.max(0.0).powf(alpha) - s_minus.max(0.0).powf(alpha)
    }
}

/// `U(plus) - U(minus)` where the two configurations differ only in the
/// position of particle `i`. Every term not involving `i` is identical on
/// both sides; the others are differenced term by term in a form that
/// avoids cancellation.
pub fn potential_difference(
    params: &MaterialParams,
    container: &Container,
    plus: &[Vec2],
    minus: &[Vec2],
    i: usize,
) -> Result<f64> {
    let sigma = params.diameter;
    let alpha = params.alpha;
    let k = &params.stiffness;
    let step = [plus[i][0] - minus[i][0], plus[i][1] - minus[i][1]];
    let mut du = 0.0;
    if container.boundary == Boundary::FixedWalls {
        let half = sigma / 2.0;
        for axis in 0..2 {
            let extent = if axis == 0 { container.width } else { container.height };
            for (gap, dgap) in [(minus[i][axis], step[axis]), (extent - minus[i][axis], -step[axis])] {
                du += k[i] / alpha * power_difference(1.0 - gap / half, -dgap / half, alpha);
            }
        }
    }
    for j in 0..plus.len() {
        if j == i {
            continue;
        }
        let dp = [plus[i][0] - plus[j][0], plus[i][1] - plus[j][1]];
        let dm = [minus[i][0] - minus[j][0], minus[i][1] - minus[j][1]];
        let rp = dp[0].hypot(dp[1]);
        let rm = dm[0].hypot(dm[1]);
        let dr = (step[0] * (dp[0] + dm[0]) + step[1] * (dp[1] + dm[1])) / (rp + rm);
        let eps = effective_stiffness(k[i], k[j])?;
        du += eps / alpha * power_difference(1.0 - rm / sigma, -dr / sigma, alpha);
    }
    Ok(du)
}

/// Largest relative error between `force` and the central difference
/// `-(U(x + h e) - U(x - h e)) / 2h` over every coordinate, with the energy
/// difference supplied by `delta(plus, minus, i)`. Components below
/// `1e-10` of the largest force are compared against that floor.
pub fn force_fd_error(
    positions: &[Vec2],
    h: f64,
    force: impl Fn(&[Vec2]) -> Result<Vec<Vec2>>,
    delta: impl Fn(&[Vec2], &[Vec2], usize) -> Result<f64>,
) -> Result<f64> {
    let f = force(positions)?;
    let floor = 1e-10 * f.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max);
    let mut plus = positions.to_vec();
    let mut minus = positions.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..positions.len() {
        for axis in 0..2 {
            let x0 = positions[i][axis];
            plus[i][axis] = x0 + h;
            minus[i][axis] = x0 - h;
            let numeric = -delta(&plus, &minus, i)? / (plus[i][axis] - minus[i][axis]);
            plus[i][axis] = x0;
            minus[i][axis] = x0;
            let analytic = f[i][axis];
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            if denom > 0.0 {
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

/// Random configuration of `n` disks in a box with every disk touching at
/// least one other disk or a wall.
pub fn random_contact_configuration(rng: &mut impl Rng, n: usize, sigma: f64) -> (Container, Vec<Vec2>) {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let spacing = sigma * rng.random_range(0.85..0.93);
    let pad = sigma * rng.random_range(-0.05..0.02);
    let container = Container::walls(cols as f64 * spacing + 2.0 * pad, rows as f64 * spacing + 2.0 * pad);
    let jitter = 0.03 * sigma;
    let positions = (0..n)
        .map(|p| {
            let (c, r) = (p % cols, p / cols);
            [
                pad + (c as f64 + 0.5) * spacing + rng.random_range(-jitter..jitter),
                pad + (r as f64 + 0.5) * spacing + rng.random_range(-jitter..jitter),
            ]
        })
        .collect();
    (container, positions)
}

/// Force check over `count` random configurations of up to `max_n` disks
/// with random stiffness in `[1, 10]`. Returns the worst relative error.
pub fn force_suite(count: usize, max_n: usize, seed: u64, flip_wall_sign: bool) -> Result<f64> {
    let mut rng = stream(seed, Stream::Perturb);
    let sigma = 0.1;
    let bounds = StiffnessBounds::new(1.0, 10.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = rng.random_range(2..=max_n);
        let (container, positions) = random_contact_configuration(&mut rng, n, sigma);
        let params = MaterialParams::new(uniform_design(&mut rng, n, bounds), 1.0, sigma, HERTZ_ALPHA)?;
        let model = ForceModel::new(&params, &container);
        let force = |x: &[Vec2]| {
            let mut f = model.forces(x)?;
            if flip_wall_sign {
                for (i, fi) in f.iter_mut().enumerate() {
                    let w = wall_force(x[i], &container, sigma, params.stiffness[i], params.alpha);
                    fi[0] -= 2.0 * w[0];
                    fi[1] -= 2.0 * w[1];
                }
            }
            Ok(f)
        };
        let delta = |p: &[Vec2], m: &[Vec2], i: usize| potential_difference(&params, &container, p, m, i);
        worst = worst.max(force_fd_error(&positions, 1e-7 * sigma, force, delta)?);
    }
    Ok(worst)
}

/// A relaxed jammed `nx x ny` packing with uniform stiffness `k`.
pub fn jammed_packing(nx: usize, ny: usize, phi: f64, k: f64) -> Result<PackingGeometry> {
    let spec = LatticeSpec::new(nx, ny, 0.1, phi);
    let params = MaterialParams::uniform(spec.len(), k, 1.0, 0.1)?;
    Ok(build_packing(&spec, &params, &FireConfig::default())?.0)
}

/// Undamped, undriven run from `start` (at rest); returns the final phase
/// and the largest relative deviation of the total energy from its start
/// value.
pub fn free_run(
    params: &MaterialParams,
    container: Container,
    start: &[Vec2],
    dt: f64,
    steps: usize,
) -> Result<(Phase, f64)> {
    let geometry = PackingGeometry {
        container,
        lattice: (start.len(), 1),
        equilibrium: start.to_vec(),
    };
    let stepper = Stepper::new(
        params,
        &geometry,
        DampingParams::none(),
        &[],
        dt,
        NeighborMode::AllPairs,
    )?;
    let mut phase = stepper.initial()?;
    let energy = |p: &Phase| -> Result<f64> {
        let state = ParticleState {
            positions: p.positions.clone(),
            velocities: p.velocities.clone(),
            time: 0.0,
        };
        let (kin, pot) = total_energy(&state, params, &container)?;
        Ok(kin + pot)
    };
    let e0 = energy(&phase)?;
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        stepper.step(&mut phase)?;
        drift = drift.max((energy(&phase)? - e0).abs());
    }
    Ok((phase, drift / e0.abs()))
}

/// Integrator order measurement on a perturbed jammed packing.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub dts: Vec<f64>,
    /// Max position error at the common end time against the reference.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub slope: f64,
}

/// `(geometry, material, start)`: a jammed 3x3 packing perturbed by up to
/// `amplitude` per coordinate.
pub fn perturbed_packing(seed: u64, amplitude: f64) -> Result<(PackingGeometry, MaterialParams, Vec<Vec2>)> {
    let geometry = jammed_packing(3, 3, 0.88, 5.5)?;
    let params = MaterialParams::uniform(geometry.len(), 5.5, 1.0, 0.1)?;
    let mut rng = stream(seed, Stream::Perturb);
    let start = geometry
        .equilibrium
        .iter()
        .map(|p| {
            [
                p[0] + rng.random_range(-amplitude..amplitude),
                p[1] + rng.random_range(-amplitude..amplitude),
            ]
        })
        .collect();
    Ok((geometry, params, start))
}

pub fn order_study(
    params: &MaterialParams,
    container: Container,
    start: &[Vec2],
    dts: &[f64],
    end_time: f64,
) -> Result<OrderStudy> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min) / 16.0;
    let run = |dt: f64| -> Result<Vec<Vec2>> {
        let steps = (end_time / dt).round() as usize;
        Ok(free_run(params, container, start, dt, steps)?.0.positions)
    };
    let reference = run(finest)?;
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let x = run(dt)?;
        let err = x
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(OrderStudy {
        dts: dts.to_vec(),
        errors,
        slope: sxy / sxx,
    })
}

/// Hash of the pair and wall contact sets after every step.
pub fn contact_signature(exp: &Experiment, stiffness: &[f64]) -> Result<Vec<u64>> {
    let material = exp.system.material(stiffness)?;
    let container = exp.system.geometry.container;
    let model = ForceModel::new(&material, &container);
    let mut signature = Vec::new();
    for sample in &exp.samples {
        let mut failure = None;
        run_sim_observed(
            &exp.system.sim,
            &material,
            &exp.system.geometry,
            &sample.drives,
            |phase| match model.contacts(&phase.positions) {
                Ok(c) => {
                    let mut h = DefaultHasher::new();
                    for p in &c.pairs {
                        (p.i, p.j).hash(&mut h);
                    }
                    for w in &c.walls {
                        (w.i, w.axis, w.dir > 0.0).hash(&mut h);
                    }
                    signature.push(h.finish());
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(signature)
}

/// Gradient check that skips components whose `+h` or `-h` perturbation
/// changes the contact history. Relative errors use the denominator
/// `max(|analytic|, |numeric|, floor * max_i |analytic_i|, 1e-12)`; a zero
/// `floor` gives the plain relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactAwareCheck {
    pub check: GradCheck,
    pub excluded: Vec<usize>,
}

pub fn contact_aware_grad_check(
    exp: &Experiment,
    stiffness: &[f64],
    h: f64,
    indices: &[usize],
    floor: f64,
) -> Result<ContactAwareCheck> {
    let analytic = exp.loss_and_grad(stiffness)?.1.grad;
    let scale = floor * indices.iter().map(|&i| analytic[i].abs()).fold(0.0, f64::max);
    let base = contact_signature(exp, stiffness)?;
    let mut components = Vec::new();
    let mut excluded = Vec::new();
    let mut worst: f64 = 0.0;
    let mut k = stiffness.to_vec();
    for &i in indices {
        k[i] = stiffness[i] + h;
        let up = exp.evaluate(&k)?.objective;
        let flip_up = contact_signature(exp, &k)? != base;
        k[i] = stiffness[i] - h;
        let down = exp.evaluate(&k)?.objective;
        let flip_down = contact_signature(exp, &k)? != base;
        k[i] = stiffness[i];
        if flip_up || flip_down {
            excluded.push(i);
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let err = if scale > 0.0 {
            (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(scale)
        } else {
            relative_error(analytic[i], numeric)
        };
        worst = worst.max(err);
        components.push((i, analytic[i], numeric, err));
    }
    Ok(ContactAwareCheck {
        check: GradCheck {
            max_relative_error: worst,
            components,
        },
        excluded,
    })
}

/// A small jammed gate experiment used by the suite.
pub fn small_gate(nx: usize, ny: usize, n_steps: usize) -> Result<Experiment> {
    let geometry = jammed_packing(nx, ny, 0.84, 5.5)?;
    let (inputs, outputs) = default_ports(Task::AndGate, nx, ny);
    let mut spec = ExperimentSpec::gate(Task::AndGate, [inputs[0], inputs[1]], outputs[0]);
    spec.loss = LossKind::Mae;
    let mut sim = SimConfig::new(n_steps, 5e-3);
    sim.damping = DampingParams {
        background: 1.0,
        particle_particle: 0.0,
        particle_wall: 0.0,
    };
    let system = System {
        geometry,
        mass: 1.0,
        diameter: 0.1,
        alpha: HERTZ_ALPHA,
        sim,
        bounds: StiffnessBounds::new(1.0, 10.0)?,
        checkpoint_stride: None,
    };
    Experiment::new(spec, system)
}

/// Two disks between walls: FIRE must reach the symmetric equilibrium.
pub fn fire_two_body() -> Result<(f64, f64)> {
    let sigma = 0.1;
    let width = 1.9 * sigma;
    let container = Container::walls(width, 1.5 * sigma);
    let params = MaterialParams::uniform(2, 5.0, 1.0, sigma)?;
    let start = ParticleState::at_rest(vec![[0.5 * sigma, 0.75 * sigma], [1.3 * sigma, 0.75 * sigma]]);
    let out = fire_minimize(&start, &params, &container, &FireConfig::default())?;
    let x = &out.state.positions;
    Ok((out.max_force, (x[0][0] + x[1][0] - width).abs()))
}

/// Runs the whole suite.
pub fn run_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let force = force_suite(100, 20, seed, false)?;
    checks.push(Check::below("force vs potential (FD)", force, 1e-5));
    let mutated = force_suite(20, 20, seed, true)?;
    checks.push(Check {
        name: "flipped wall sign detected",
        value: mutated,
        tolerance: "> 1e-5".into(),
        passed: mutated > 1e-5,
    });

    let (geometry, params, start) = perturbed_packing(seed, 2e-4)?;
    let study = order_study(&params, geometry.container, &start, &[5e-3, 2.5e-3, 1.25e-3], 1.0)?;
    checks.push(Check::within("integrator order", study.slope, 1.8, 2.2));
    let drift = free_run(&params, geometry.container, &start, 5e-3, 10_000)?.1;
    checks.push(Check::below("energy drift, dt = 5e-3", drift, 1e-3));
    let drift2 = free_run(&params, geometry.container, &start, 1e-2, 5_000)?.1;
    checks.push(Check::within("drift ratio, dt doubled", drift2 / drift, 3.0, 5.0));

    let (residual, asymmetry) = fire_two_body()?;
    checks.push(Check::below("FIRE two-body residual", residual, 1e-10));
    checks.push(Check::below("FIRE two-body asymmetry", asymmetry, 1e-9));

    let exp = small_gate(3, 3, 200)?;
    let design = uniform_design(&mut stream(seed, Stream::Init), exp.len(), exp.system.bounds);
    let indices: Vec<usize> = (0..exp.len()).collect();
    let grad = contact_aware_grad_check(&exp, &design, 1e-6, &indices, 1e-3)?;
    checks.push(Check::below(
        "adjoint vs FD (3x3, 200 steps)",
        grad.check.max_relative_error,
        1e-4,
    ));

    let ce_lo = cross_entropy_loss(&[[1.0, 0.0]], &[0])?;
    let ce_hi = cross_entropy_loss(&[[1.0, 0.0]], &[1])?;
    checks.push(Check::below(
        "CE bounds",
        (ce_lo - softplus(-1.0)).abs().max((ce_hi - softplus(1.0)).abs()),
        1e-12,
    ));
    let dt = 5e-3;
    let series: Vec<f64> = (0..1000)
        .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 * dt).sin())
        .collect();
    checks.push(Check::below(
        "MAE of identical series",
        mae_loss(&series, &series)?,
        f64::MIN_POSITIVE,
    ));
    let half: Vec<f64> = series.iter().map(|x| 0.5 * x).collect();
    let silent = vec![0.0; series.len()];
    let gain = spectral_gain([&series, &silent], &half, 10.0, dt)?;
    checks.push(Check::below(
        "spectral gain of 0.5 x input",
        (gain - 0.5).abs() / 0.5,
        1e-2,
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_difference_matches_total_potential() {
        let mut rng = stream(3, Stream::Perturb);
        for _ in 0..10 {
            let (container, x) = random_contact_configuration(&mut rng, 9, 0.1);
            let k = uniform_design(&mut rng, 9, StiffnessBounds::new(1.0, 10.0).unwrap());
            let params = MaterialParams::new(k, 1.0, 0.1, HERTZ_ALPHA).unwrap();
            let model = ForceModel::new(&params, &container);
            for i in 0..9 {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[i][1] += 1e-4;
                minus[i][0] -= 2e-4;
                let direct = model.potential_energy(&plus).unwrap() - model.potential_energy(&minus).unwrap();
                let split = potential_difference(&params, &container, &plus, &minus, i).unwrap();
                assert!(
                    (direct - split).abs() <= 1e-12 + 1e-9 * direct.abs(),
                    "{direct} vs {split}"
                );
            }
        }
    }

    #[test]
    fn random_configurations_touch_walls_and_neighbors() {
        let mut rng = stream(1, Stream::Perturb);
        for n in [2, 7, 20] {
            let (container, x) = random_contact_configuration(&mut rng, n, 0.1);
            let params = MaterialParams::uniform(n, 2.0, 1.0, 0.1).unwrap();
            let c = ForceModel::new(&params, &container).contacts(&x).unwrap();
            let coordination = c.coordination();
            let walls = c.wall_counts();
            assert!((0..n).all(|i| coordination[i] + walls[i] > 0));
        }
    }

    #[test]
    fn force_check_passes_and_catches_a_wall_sign_error() {
        assert!(force_suite(10, 12, 0, false).unwrap() < 1e-5);
        assert!(force_suite(10, 12, 0, true).unwrap() > 1e-2);
    }

    #[test]
    fn fire_finds_symmetric_two_body_equilibrium() {
        let (residual, asymmetry) = fire_two_body().unwrap();
        assert!(residual < 1e-10);
        assert!(asymmetry < 1e-9);
    }

    #[test]
    fn check_lines() {
        assert!(Check::below("x", 1.0, 2.0).line().starts_with("PASS"));
        assert!(Check::within("x", 1.0, 2.0, 3.0).line().starts_with("FAIL"));
    }
}
