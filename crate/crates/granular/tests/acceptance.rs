//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Failing criteria are reported but only fail the process when
//! `ACCEPTANCE_STRICT=1` is set. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::time::{Duration, Instant};

use granular::config::RunConfig;
use granular::verify::{contact_aware_grad_check, force_suite, free_run, order_study, perturbed_packing};
use granular::{presets, workflow};
use granular_core::adjoint::{grad_check, Tape};
use granular_core::experiment::Target;
use granular_core::loss::{
    mae_grad, mae_loss, spectral_gain, spectral_gain_with_grad, spectral_magnitude, SPECTRAL_WINDOW,
};
use granular_core::optim::compare_to_random;
use granular_core::packing::fire_minimize;
use granular_core::physics::{
    Container, DampingParams, ForceModel, MaterialParams, PackingGeometry, ParticleState, HERTZ_ALPHA,
};
use granular_core::rng::{stream, uniform_design, Stream};
use granular_core::sim::{run_sim, wave_intensity, DriveSignal, ProbeSpec, SimConfig, Stepper};
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn preset(name: &str) -> RunConfig {
    presets::load(name).expect("preset loads")
}

fn max_norm(x: &[[f64; 2]]) -> f64 {
    x.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
}

fn c1_forces() -> Outcome {
    let worst = force_suite(100, 20, 0, false).map_err(|e| e.to_string())?;
    Ok((
        worst < 1e-5,
        format!("100 configurations, N <= 20, h = 1e-7 sigma: max relative error {worst:.2e} (< 1e-5)"),
    ))
}

fn c2_integrator() -> Outcome {
    let (geometry, params, start) = perturbed_packing(0, 2e-4).map_err(|e| e.to_string())?;
    let study =
        order_study(&params, geometry.container, &start, &[5e-3, 2.5e-3, 1.25e-3], 1.0).map_err(|e| e.to_string())?;
    let drift = free_run(&params, geometry.container, &start, 5e-3, 10_000)
        .map_err(|e| e.to_string())?
        .1;
    let ok = (study.slope - 2.0).abs() <= 0.2 && drift < 1e-3;
    Ok((
        ok,
        format!(
            "errors {:.2e} {:.2e} {:.2e}, slope {:.3} (2 +- 0.2); energy drift {drift:.2e} over 1e4 steps (< 1e-3)",
            study.errors[0], study.errors[1], study.errors[2], study.slope
        ),
    ))
}

/// Packs `config`, then perturbs and re-relaxes. Returns (residual, max
/// return distance in units of sigma).
fn packing_stability(config: &RunConfig, seed: u64) -> Result<(f64, f64), String> {
    let (geometry, _) = workflow::pack(config).map_err(|e| e.to_string())?;
    let sigma = config.lattice.diameter;
    let params = config.packing_material().map_err(|e| e.to_string())?;
    let model = ForceModel::new(&params, &geometry.container);
    let residual = max_norm(&model.forces(&geometry.equilibrium).map_err(|e| e.to_string())?);
    let mut rng = stream(seed, Stream::Perturb);
    let shift = 1e-6 * sigma;
    let perturbed: Vec<[f64; 2]> = geometry
        .equilibrium
        .iter()
        .map(|p| {
            [
                p[0] + rng.random_range(-shift..shift),
                p[1] + rng.random_range(-shift..shift),
            ]
        })
        .collect();
    let relaxed = fire_minimize(
        &ParticleState::at_rest(perturbed),
        &params,
        &geometry.container,
        &config.fire(),
    )
    .map_err(|e| e.to_string())?;
    let back = relaxed
        .state
        .positions
        .iter()
        .zip(&geometry.equilibrium)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .fold(0.0, f64::max);
    Ok((residual, back / sigma))
}

fn c3_packing() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["table1", "jammed-and"] {
        let config = preset(name);
        let (residual, back) = packing_stability(&config, 0)?;
        ok &= residual < 1e-10 && back < 1e-5;
        parts.push(format!(
            "{name} (phi {}): max |F| {residual:.2e}, return {back:.2e} sigma",
            config.lattice.packing_fraction
        ));
    }
    Ok((ok, format!("{} (limits 1e-10, 1e-5 sigma)", parts.join("; "))))
}

fn chain_check() -> Result<f64, String> {
    let geometry = PackingGeometry {
        container: Container::walls(0.292, 0.1),
        lattice: (2, 1),
        equilibrium: vec![[0.049, 0.05], [0.145, 0.05]],
    };
    let drives = [DriveSignal::new(0, 1e-3, 15.0)];
    let mut config = SimConfig::new(50, 5e-3);
    config.damping = DampingParams {
        background: 1.0,
        particle_particle: 0.0,
        particle_wall: 0.0,
    };
    config.probes = vec![ProbeSpec::x(1)];
    let loss = |k: &[f64]| {
        let params = MaterialParams::new(k.to_vec(), 1.0, 0.1, HERTZ_ALPHA)?;
        let rec = run_sim(&config, &params, &geometry, &drives)?;
        mae_loss(&rec[0].series, &vec![0.0; rec[0].series.len()])
    };
    let k = [3.0, 7.0];
    let params = MaterialParams::new(k.to_vec(), 1.0, 0.1, HERTZ_ALPHA).map_err(|e| e.to_string())?;
    let stepper = Stepper::new(&params, &geometry, config.damping, &drives, config.dt, config.neighbors)
        .map_err(|e| e.to_string())?;
    let tape = Tape::record(stepper, &config, None).map_err(|e| e.to_string())?;
    let out = &tape.records()[0].series;
    let grad = tape
        .backward(&[mae_grad(out, &vec![0.0; out.len()])])
        .map_err(|e| e.to_string())?;
    let check = grad_check(loss, &k, &grad, 1e-6, &[0, 1]).map_err(|e| e.to_string())?;
    Ok(check.max_relative_error)
}

fn c4_gradients() -> Outcome {
    let chain = chain_check()?;
    let mut config = preset("desk-and");
    config.sim.n_steps = 200;
    let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
    let exp = workflow::experiment(&config, geometry).map_err(|e| e.to_string())?;
    let design = uniform_design(&mut stream(0, Stream::Init), exp.len(), exp.system.bounds);
    let indices: Vec<usize> = (0..exp.len()).collect();
    let lattice = contact_aware_grad_check(&exp, &design, 1e-6, &indices, 0.0).map_err(|e| e.to_string())?;
    let worst = lattice.check.max_relative_error;
    Ok((
        chain < 1e-4 && worst < 1e-4,
        format!(
            "2-particle chain, 50 steps: {chain:.2e}; 5x5, 200 steps: {worst:.2e} over {} components ({} excluded for contact flips) (< 1e-4)",
            lattice.check.components.len(),
            lattice.excluded.len()
        ),
    ))
}

fn c5_waveguide() -> Outcome {
    let config = preset("desk-waveguide");
    let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
    let exp = workflow::experiment(&config, geometry).map_err(|e| e.to_string())?;
    let trials = workflow::train(&config, &exp, 5, None).map_err(|e| e.to_string())?;
    let mut improved = 0;
    let mut routed = 0;
    let mut lines = Vec::new();
    for t in &trials {
        let Some(o) = &t.outcome else {
            lines.push(format!("trial {} failed: {:?}", t.summary.trial, t.summary.error));
            continue;
        };
        let initial = o.history[0].report.objective;
        let last = o.final_report.objective;
        if last < 0.9 * initial {
            improved += 1;
        }
        let sim = workflow::simulate(&exp, &o.design, None).map_err(|e| e.to_string())?;
        let correct: Vec<f64> = exp
            .samples
            .iter()
            .zip(&sim.samples)
            .map(|(sample, s)| match sample.target {
                Target::Port(p) => s.normalized[p],
                Target::Series(_) => f64::NAN,
            })
            .collect();
        if correct.iter().all(|&c| c > 0.5) {
            routed += 1;
        }
        lines.push(format!(
            "CE {initial:.4} -> {last:.4}, correct-port share {correct:.3?}"
        ));
    }
    Ok((
        improved >= 4 && routed >= 3,
        format!(
            "{improved}/5 seeds below 0.9 x initial (need 4), {routed}/5 route both tones (need 3); {}",
            lines.join("; ")
        ),
    ))
}

fn c6_silence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for name in ["desk-and", "jammed-and", "table1"] {
        let config = preset(name);
        let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
        let exp = workflow::experiment(&config, geometry.clone()).map_err(|e| e.to_string())?;
        let uniform = vec![config.material.packing_stiffness; exp.len()];
        let random = uniform_design(&mut stream(0, Stream::Init), exp.len(), exp.system.bounds);
        for (label, design) in [("uniform", uniform), ("random", random)] {
            let params = config.material(design).map_err(|e| e.to_string())?;
            let relaxed = fire_minimize(
                &ParticleState::at_rest(geometry.equilibrium.clone()),
                &params,
                &geometry.container,
                &config.fire(),
            )
            .map_err(|e| e.to_string())?;
            let equilibrated = PackingGeometry {
                equilibrium: relaxed.state.positions,
                ..geometry.clone()
            };
            let mut sim = exp.system.sim.clone();
            sim.probes = exp.spec.outputs.iter().map(|&p| ProbeSpec::x(p)).collect();
            let rec = run_sim(&sim, &params, &equilibrated, &[]).map_err(|e| e.to_string())?;
            let intensity = rec
                .iter()
                .map(|r| wave_intensity(r, 2.0 / 3.0))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?
                .into_iter()
                .fold(0.0, f64::max);
            worst = worst.max(intensity);
            parts.push(format!("{name}/{label} {intensity:.1e}"));
        }
    }
    Ok((
        worst < 1e-18,
        format!("undriven output intensity: {} (< 1e-18)", parts.join(", ")),
    ))
}

fn c7_gd_vs_random() -> Outcome {
    let config = preset("desk-and");
    let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
    let exp = workflow::experiment(&config, geometry).map_err(|e| e.to_string())?;
    let trials = workflow::train(&config, &exp, 5, None).map_err(|e| e.to_string())?;
    let optimized: Vec<f64> = trials.iter().filter_map(|t| t.summary.best_total).collect();
    if optimized.len() != 5 {
        return Ok((false, format!("only {} of 5 trials finished", optimized.len())));
    }
    let (random, _) = workflow::random_search(&config, &exp, None, None).map_err(|e| e.to_string())?;
    let c = compare_to_random(&optimized, &random, false, config.seed).map_err(|e| e.to_string())?;
    Ok((
        c.optimized_median < c.random_median && c.test.p_value < 0.05,
        format!(
            "GD best totals median {:.3e} vs {} random median {:.3e}; Mann-Whitney U = {}, p = {:.2e} (< 0.05)",
            c.optimized_median,
            random.len(),
            c.random_median,
            c.test.u,
            c.test.p_value
        ),
    ))
}

fn fft_magnitude(window: &[f64], bin: usize) -> f64 {
    let mut buf: Vec<Complex<f64>> = window.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[bin].norm()
}

fn c8_spectral() -> Outcome {
    let dt = 5e-3;
    let f = 15.0;
    let len = 3000;
    let tone: Vec<f64> = (0..len)
        .map(|i| 1e-3 * (2.0 * std::f64::consts::PI * f * (i + 1) as f64 * dt).sin())
        .collect();
    let silent = vec![0.0; len];
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [0.0, 0.5, 1.0] {
        // Garbage before the window must not matter.
        let out: Vec<f64> = tone
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if i < len - SPECTRAL_WINDOW {
                    5e-3 * (i as f64).cos()
                } else {
                    c * x
                }
            })
            .collect();
        let g = spectral_gain([&tone, &silent], &out, f, dt).map_err(|e| e.to_string())?;
        let err = if c == 0.0 { g.abs() } else { (g - c).abs() / c };
        ok &= err < 0.01;
        parts.push(format!("c = {c}: G = {g:.6}"));
    }
    // Exact window: the first sample inside changes G, the last one outside does not.
    let base: Vec<f64> = tone.iter().map(|x| 0.5 * x).collect();
    let g0 = spectral_gain([&tone, &silent], &base, f, dt).map_err(|e| e.to_string())?;
    let mut outside = base.clone();
    outside[len - SPECTRAL_WINDOW - 1] += 1.0;
    let mut inside = base.clone();
    inside[len - SPECTRAL_WINDOW] += 1e-3;
    let g_out = spectral_gain([&tone, &silent], &outside, f, dt).map_err(|e| e.to_string())?;
    let g_in = spectral_gain([&tone, &silent], &inside, f, dt).map_err(|e| e.to_string())?;
    let grad = spectral_gain_with_grad([&tone, &silent], &base, f, dt)
        .map_err(|e| e.to_string())?
        .1;
    let support = grad.iter().rposition(|g| *g == 0.0).map_or(0, |i| i + 1);
    let window_ok = g_out == g0 && g_in != g0 && support == len - SPECTRAL_WINDOW;
    ok &= window_ok;
    // FFT oracle on the trailing window.
    let bin = (f * SPECTRAL_WINDOW as f64 * dt).round() as usize;
    let oracle = fft_magnitude(&tone[len - SPECTRAL_WINDOW..], bin);
    let ours = spectral_magnitude(&tone, f, dt).map_err(|e| e.to_string())?;
    let oracle_err = (ours - oracle).abs() / oracle;
    ok &= oracle_err < 1e-9;
    Ok((
        ok,
        format!(
            "{} (within 1%); window is the last {} samples: {window_ok}; |DFT| vs rustfft rel err {oracle_err:.1e}",
            parts.join(", "),
            SPECTRAL_WINDOW
        ),
    ))
}

fn c9_afpo() -> Outcome {
    let config = preset("desk-and");
    let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
    let exp = workflow::experiment(&config, geometry).map_err(|e| e.to_string())?;
    let (a, _) = workflow::evolve(&config, &exp, None).map_err(|e| e.to_string())?;
    let (b, _) = workflow::evolve(&config, &exp, None).map_err(|e| e.to_string())?;
    let h = &a.history;
    let elitist = h.windows(2).all(|w| w[1].best_loss <= w[0].best_loss);
    let bounded = h.iter().all(|r| r.min_gene >= 1.0 && r.max_gene <= 10.0)
        && a.population
            .iter()
            .all(|i| i.genome.iter().all(|g| (1.0..=10.0).contains(g)));
    let replay = a == b;
    Ok((
        elitist && bounded && replay && h.len() > 20,
        format!(
            "{} generations, best {:.4e} -> {:.4e}; non-increasing {elitist}, genes in [1, 10] {bounded}, bitwise replay {replay}",
            h.len() - 1,
            h[0].best_loss,
            h[h.len() - 1].best_loss
        ),
    ))
}

fn c10_smoke() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["and", "jammed-and"] {
        let mut config = preset(name);
        config.train.epochs = 5;
        let (geometry, _) = workflow::pack(&config).map_err(|e| e.to_string())?;
        let exp = workflow::experiment(&config, geometry).map_err(|e| e.to_string())?;
        let trial = workflow::train(&config, &exp, 1, None)
            .map_err(|e| e.to_string())?
            .remove(0);
        let Some(o) = trial.outcome else {
            ok = false;
            parts.push(format!("{name}: failed: {:?}", trial.summary.error));
            continue;
        };
        let finite = o.history.len() == 5
            && o.history
                .iter()
                .all(|r| r.report.total.is_finite() && r.max_abs_grad.is_finite())
            && o.final_report.total.is_finite();
        ok &= finite && exp.samples.len() == 3 && exp.system.sim.n_steps == 3000 && exp.len() == 110;
        parts.push(format!(
            "{name}: 5 epochs, total {:.3e} -> {:.3e}, max |grad| {:.2e}",
            o.history[0].report.total,
            o.final_report.total,
            o.history.iter().map(|r| r.max_abs_grad).fold(0.0, f64::max)
        ));
    }
    Ok((ok, format!("10x11, 3000 steps, 3 samples: {}", parts.join("; "))))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "force correctness",
            budget: Duration::from_secs(10),
            run: c1_forces,
        },
        Criterion {
            id: 2,
            name: "integrator order",
            budget: Duration::from_secs(30),
            run: c2_integrator,
        },
        Criterion {
            id: 3,
            name: "packing stability",
            budget: Duration::from_secs(60),
            run: c3_packing,
        },
        Criterion {
            id: 4,
            name: "gradient exactness",
            budget: Duration::from_secs(300),
            run: c4_gradients,
        },
        Criterion {
            id: 5,
            name: "desk waveguide",
            budget: Duration::from_secs(1800),
            run: c5_waveguide,
        },
        Criterion {
            id: 6,
            name: "silent gate",
            budget: Duration::from_secs(10),
            run: c6_silence,
        },
        Criterion {
            id: 7,
            name: "GD vs random search",
            budget: Duration::from_secs(7200),
            run: c7_gd_vs_random,
        },
        Criterion {
            id: 8,
            name: "spectral loss",
            budget: Duration::from_secs(1),
            run: c8_spectral,
        },
        Criterion {
            id: 9,
            name: "AFPO contract",
            budget: Duration::from_secs(1200),
            run: c9_afpo,
        },
        Criterion {
            id: 10,
            name: "full-preset smoke",
            budget: Duration::from_secs(3600),
            run: c10_smoke,
        },
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut failed = Vec::new();
    let mut ran = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok((p, d)) => (p && elapsed <= c.budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} {}: {} [{:.1} s of {} s] {}",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
        if !passed {
            failed.push(c.id);
        }
    }
    println!(
        "acceptance: {}/{ran} passed{}",
        ran - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failing: {failed:?}")
        }
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
