use granular_core::adjoint::{grad_check, Tape};
use granular_core::experiment::{default_ports, Experiment, ExperimentSpec, LossKind, System, Task};
use granular_core::loss::{mae_grad, mae_loss};
use granular_core::packing::{build_packing, FireConfig, LatticeSpec};
use granular_core::physics::{Container, DampingParams, MaterialParams, PackingGeometry, StiffnessBounds, HERTZ_ALPHA};
use granular_core::rng::{stream, uniform_design, Stream};
use granular_core::sim::{run_sim, DriveSignal, ProbeSpec, SimConfig, Stepper};

/// Two particles between walls, pre-compressed, left one driven along x.
fn chain() -> PackingGeometry {
    PackingGeometry {
        container: Container::walls(0.292, 0.1),
        lattice: (2, 1),
        equilibrium: vec![[0.049, 0.05], [0.145, 0.05]],
    }
}

fn chain_loss(k: &[f64], geometry: &PackingGeometry, config: &SimConfig, drives: &[DriveSignal]) -> f64 {
    let params = MaterialParams::new(k.to_vec(), 1.0, 0.1, HERTZ_ALPHA).unwrap();
    let rec = run_sim(config, &params, geometry, drives).unwrap();
    let target = vec![0.0; rec[0].series.len()];
    mae_loss(&rec[0].series, &target).unwrap()
}

fn chain_config(damping: DampingParams) -> SimConfig {
    let mut c = SimConfig::new(50, 5e-3);
    c.damping = damping;
    c.probes = vec![ProbeSpec::x(1)];
    c
}

fn chain_gradient(
    k: &[f64],
    geometry: &PackingGeometry,
    config: &SimConfig,
    drives: &[DriveSignal],
    stride: Option<usize>,
) -> Vec<f64> {
    let params = MaterialParams::new(k.to_vec(), 1.0, 0.1, HERTZ_ALPHA).unwrap();
    let stepper = Stepper::new(&params, geometry, config.damping, drives, config.dt, config.neighbors).unwrap();
    let tape = Tape::record(stepper, config, stride).unwrap();
    let out = &tape.records()[0].series;
    let seed = mae_grad(out, &vec![0.0; out.len()]);
    tape.backward(&[seed]).unwrap()
}

#[test]
fn two_particle_chain_matches_finite_differences() {
    let geometry = chain();
    let drives = [DriveSignal::new(0, 1e-3, 15.0)];
    for damping in [
        DampingParams::default(),
        DampingParams {
            background: 0.5,
            particle_particle: 0.3,
            particle_wall: 0.2,
        },
    ] {
        let config = chain_config(damping);
        let k = [3.0, 7.0];
        let grad = chain_gradient(&k, &geometry, &config, &drives, None);
        let check = grad_check(
            |k| Ok(chain_loss(k, &geometry, &config, &drives)),
            &k,
            &grad,
            1e-6,
            &[0, 1],
        )
        .unwrap();
        assert!(check.max_relative_error < 1e-4, "{check:?}");
        assert!(grad.iter().all(|g| g.abs() > 0.0));
    }
}

#[test]
fn checkpoint_stride_does_not_change_the_gradient() {
    let geometry = chain();
    let drives = [DriveSignal::new(0, 1e-3, 15.0)];
    let config = chain_config(DampingParams::default());
    let k = [2.0, 9.0];
    let reference = chain_gradient(&k, &geometry, &config, &drives, Some(1));
    for stride in [2, 7, 50, 1000] {
        assert_eq!(chain_gradient(&k, &geometry, &config, &drives, Some(stride)), reference);
    }
    assert_eq!(chain_gradient(&k, &geometry, &config, &drives, None), reference);
}

#[test]
fn tape_forward_matches_run_sim() {
    let geometry = chain();
    let drives = [DriveSignal::new(0, 1e-3, 15.0)];
    let mut config = chain_config(DampingParams::default());
    config.record_stride = 3;
    let params = MaterialParams::new(vec![4.0, 6.0], 1.0, 0.1, HERTZ_ALPHA).unwrap();
    let stepper = Stepper::new(&params, &geometry, config.damping, &drives, config.dt, config.neighbors).unwrap();
    let tape = Tape::record(stepper, &config, None).unwrap();
    assert_eq!(
        tape.records(),
        run_sim(&config, &params, &geometry, &drives).unwrap().as_slice()
    );
}

#[test]
fn backward_is_linear_in_the_seeds() {
    let geometry = chain();
    let drives = [DriveSignal::new(0, 1e-3, 15.0)];
    let config = chain_config(DampingParams::default());
    let params = MaterialParams::new(vec![4.0, 6.0], 1.0, 0.1, HERTZ_ALPHA).unwrap();
    let stepper = Stepper::new(&params, &geometry, config.damping, &drives, config.dt, config.neighbors).unwrap();
    let tape = Tape::record(stepper, &config, None).unwrap();
    let a: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..50).map(|k| (k as f64 * 0.11).cos()).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let ga = tape.backward(&[a]).unwrap();
    let gb = tape.backward(&[b]).unwrap();
    let gab = tape.backward(&[ab]).unwrap();
    for i in 0..2 {
        let expect = 2.0 * ga[i] - 3.0 * gb[i];
        assert!((gab[i] - expect).abs() <= 1e-12 * expect.abs().max(1e-12));
    }
    assert!(tape.backward(&[]).is_err());
    assert!(tape.backward(&[vec![0.0; 3]]).is_err());
}

fn lattice_5x5(phi: f64) -> PackingGeometry {
    let spec = LatticeSpec::new(5, 5, 0.1, phi);
    let params = MaterialParams::uniform(25, 5.0, 1.0, 0.1).unwrap();
    build_packing(&spec, &params, &FireConfig::default()).unwrap().0
}

fn system(geometry: PackingGeometry, n_steps: usize) -> System {
    System {
        geometry,
        mass: 1.0,
        diameter: 0.1,
        alpha: HERTZ_ALPHA,
        sim: SimConfig::new(n_steps, 5e-3),
        bounds: StiffnessBounds::default(),
        checkpoint_stride: None,
    }
}

fn random_design(n: usize, seed: u64) -> Vec<f64> {
    uniform_design(&mut stream(seed, Stream::Perturb), n, StiffnessBounds::default())
}

fn check_experiment(exp: &Experiment, k: &[f64], indices: &[usize], h: f64) {
    let (report, grad) = exp.loss_and_grad(k).unwrap();
    assert_eq!(report.objective, exp.evaluate(k).unwrap().objective);
    assert_eq!(grad.nan_count, 0);
    let check = grad_check(|k| Ok(exp.evaluate(k)?.objective), k, &grad.grad, h, indices).unwrap();
    assert!(check.max_relative_error < 1e-4, "{check:?}");
}

#[test]
fn lattice_gate_mae_matches_finite_differences() {
    let (inputs, outputs) = default_ports(Task::AndGate, 5, 5);
    let spec = ExperimentSpec::gate(Task::AndGate, [inputs[0], inputs[1]], outputs[0]);
    let exp = Experiment::new(spec, system(lattice_5x5(0.84), 200)).unwrap();
    let k = random_design(25, 3);
    check_experiment(&exp, &k, &[0, 6, 12, 14, 19, 24], 1e-6);
}

#[test]
fn lattice_waveguide_cross_entropy_matches_finite_differences() {
    let (inputs, outputs) = default_ports(Task::Waveguide, 5, 5);
    let spec = ExperimentSpec::waveguide(inputs[0], [outputs[0], outputs[1]]);
    let mut sys = system(lattice_5x5(0.84), 200);
    sys.sim.damping = DampingParams {
        background: 1.0,
        particle_particle: 0.2,
        particle_wall: 0.1,
    };
    let exp = Experiment::new(spec, sys).unwrap();
    let k = random_design(25, 4);
    check_experiment(&exp, &k, &[1, 7, 12, 18, 23], 1e-6);
}

#[test]
fn lattice_spectral_gain_matches_finite_differences() {
    let (inputs, outputs) = default_ports(Task::XorGate, 5, 5);
    let mut spec = ExperimentSpec::gate(Task::XorGate, [inputs[0], inputs[1]], outputs[0]);
    spec.loss = LossKind::SpectralGain;
    let exp = Experiment::new(spec, system(lattice_5x5(0.84), 1200)).unwrap();
    let k = random_design(25, 5);
    // O(1) loss with components near 1e-6: a larger step keeps round-off small
    check_experiment(&exp, &k, &[2, 9, 14, 20], 1e-5);
}
