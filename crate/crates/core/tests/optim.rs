use granular_core::experiment::{default_ports, Experiment, ExperimentSpec, System, Task};
use granular_core::optim::{afpo_evolve, train_gd, EvoConfig, Init, TrainConfig};
use granular_core::packing::{build_packing, FireConfig, LatticeSpec};
use granular_core::physics::{MaterialParams, StiffnessBounds, HERTZ_ALPHA};
use granular_core::rng::{stream, Stream};
use granular_core::sim::SimConfig;
use granular_core::stats::{mann_whitney_u, Method};
use rand::Rng;

fn gate(n_steps: usize) -> Experiment {
    let spec = LatticeSpec::new(3, 3, 0.1, 0.84);
    let params = MaterialParams::uniform(9, 5.5, 1.0, 0.1).unwrap();
    let (geometry, _) = build_packing(&spec, &params, &FireConfig::default()).unwrap();
    let (inputs, outputs) = default_ports(Task::XorGate, 3, 3);
    let exp_spec = ExperimentSpec::gate(Task::XorGate, [inputs[0], inputs[1]], outputs[0]);
    let system = System {
        geometry,
        mass: 1.0,
        diameter: 0.1,
        alpha: HERTZ_ALPHA,
        sim: SimConfig::new(n_steps, 5e-3),
        bounds: StiffnessBounds::new(1.0, 10.0).unwrap(),
        checkpoint_stride: None,
    };
    Experiment::new(exp_spec, system).unwrap()
}

#[test]
fn training_on_a_small_gate_is_deterministic_and_clamped() {
    let exp = gate(300);
    let mut config = TrainConfig::new(8, 0.5, Init::Uniform { lo: 1.0, hi: 10.0 });
    config.seed = 11;
    let run = || {
        let mut designs = Vec::new();
        let o = train_gd(
            exp.len(),
            &config,
            |k| exp.loss_and_grad(k),
            |k| exp.evaluate(k),
            |_, d| designs.push(d.to_vec()),
        )
        .unwrap();
        (o, designs)
    };
    let (a, designs) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert!(designs.iter().flatten().all(|k| (1.0..=10.0).contains(k)));
    for r in &a.history {
        let sum: f64 = r.report.partials.iter().map(|(_, v)| v).sum();
        assert_eq!(r.report.total, sum);
        assert_eq!(r.report.objective, sum / 3.0);
    }
}

#[test]
fn evolution_on_a_small_gate_replays() {
    let exp = gate(200);
    let cfg = EvoConfig {
        population: 8,
        generations: 4,
        seed: 3,
        ..EvoConfig::default()
    };
    let eval = |g: &[Vec<f64>]| g.iter().map(|k| exp.evaluate(k).map(|r| r.objective)).collect();
    let a = afpo_evolve(exp.len(), &cfg, eval, |_| {}).unwrap();
    let b = afpo_evolve(exp.len(), &cfg, eval, |_| {}).unwrap();
    assert_eq!(a, b);
    assert!(a.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
}

fn null_rejections(n1: usize, n2: usize, trials: usize, seed: u64) -> (usize, Method) {
    let mut rng = stream(seed, Stream::Perturb);
    let mut rejected = 0;
    let mut method = Method::Exact;
    for _ in 0..trials {
        let a: Vec<f64> = (0..n1).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random::<f64>()).collect();
        let t = mann_whitney_u(&a, &b).unwrap();
        method = t.method;
        if t.p_value <= 0.01 {
            rejected += 1;
        }
    }
    (rejected, method)
}

#[test]
fn identical_distributions_rarely_reject() {
    for (n1, n2) in [(5, 100), (10, 10), (60, 100)] {
        let (rejected, method) = null_rejections(n1, n2, 400, n1 as u64);
        assert!(rejected <= 20, "{n1} vs {n2}: {rejected}/400 rejected ({method:?})");
    }
}
