//! Hexagonal packings relaxed to mechanical equilibrium.
//!
//! [`hexagonal_lattice`] lays out the crystal in a box whose area matches a
//! target packing fraction, [`fire_minimize`] relaxes a configuration with
//! FIRE, and [`compression_protocol`] grows the particles in small
//! multiplicative steps up to the target size, relaxing after each one.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, max_norm, norm, sqrt, sub, Vec2};
use crate::physics::{disk_area, Boundary, Container, ForceModel, MaterialParams, PackingGeometry, ParticleState};
use crate::{Error, Result};

/// Densest packing fraction of equal disks in the plane, `pi / (2 sqrt 3)`.
pub const HEX_CLOSE_PACKING: f64 = 0.906_899_682_117_108_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub diameter: f64,
    pub packing_fraction: f64,
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize, diameter: f64, packing_fraction: f64) -> Self {
        Self {
            nx,
            ny,
            diameter,
            packing_fraction,
            boundary: Boundary::FixedWalls,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config {
                what: "lattice needs nx, ny >= 2",
                value: self.nx.min(self.ny) as f64,
            });
        }
        if !(self.diameter > 0.0) {
            return Err(Error::Config {
                what: "diameter must be positive",
                value: self.diameter,
            });
        }
        let phi = self.packing_fraction;
        if !(phi > 0.0 && phi < HEX_CLOSE_PACKING) {
            return Err(Error::Config {
                what: "packing fraction must lie in (0, 0.9069)",
                value: phi,
            });
        }
        Ok(())
    }

    /// Box of the touching lattice: every neighbor pair and every boundary
    /// row or column just in contact.
    fn touching_box(&self) -> (f64, f64) {
        let s = self.diameter;
        let w = (self.nx as f64 + 0.5) * s;
        let h = ((self.ny - 1) as f64 * ROW_PITCH + 1.0) * s;
        (w, h)
    }

    /// Packing fraction at which the touching lattice exactly fills its box.
    /// Above it the lattice is compressed and every particle carries load.
    pub fn contact_fraction(&self) -> f64 {
        let (w, h) = self.touching_box();
        self.len() as f64 * disk_area(self.diameter) / (w * h)
    }
}

/// Row spacing of a triangular lattice in units of the bond length.
const ROW_PITCH: f64 = 0.866_025_403_784_438_6;

/// Lays out an `nx x ny` triangular lattice (odd rows shifted by half a
/// spacing) in a box whose area gives exactly the requested packing fraction.
///
/// The box keeps the aspect ratio of the touching lattice, so the lattice is
/// uniformly compressed above [`LatticeSpec::contact_fraction`] and uniformly
/// dilated below it. Particle `row * nx + col` sits in row `row` counted
/// from the bottom wall. The returned geometry's equilibrium positions are
/// the unrelaxed lattice sites.
pub fn hexagonal_lattice(spec: &LatticeSpec) -> Result<PackingGeometry> {
    spec.validate()?;
    let n = spec.len() as f64;
    let (w0, h0) = spec.touching_box();
    let area = n * disk_area(spec.diameter) / spec.packing_fraction;
    let scale = sqrt(area / (w0 * h0));
    let s = spec.diameter * scale;
    let mut positions = Vec::with_capacity(spec.len());
    for row in 0..spec.ny {
        let shift = if row % 2 == 1 { 0.5 * s } else { 0.0 };
        for col in 0..spec.nx {
            positions.push([0.5 * s + col as f64 * s + shift, 0.5 * s + row as f64 * ROW_PITCH * s]);
        }
    }
    Ok(PackingGeometry {
        container: Container {
            width: w0 * scale,
            height: h0 * scale,
            boundary: spec.boundary,
        },
        lattice: (spec.nx, spec.ny),
        equilibrium: positions,
    })
}

/// FIRE parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireConfig {
    pub dt_initial: f64,
    pub dt_max: f64,
    pub f_inc: f64,
    pub f_dec: f64,
    pub alpha_start: f64,
    /// Multiplier applied to the mixing factor after each accelerated step.
    pub f_alpha: f64,
    pub n_min: usize,
    /// Convergence threshold on the largest per-particle net force.
    pub force_tol: f64,
    pub max_steps: usize,
}

impl FireConfig {
    /// Standard FIRE constants around an initial step `dt`.
    pub fn with_timestep(dt: f64) -> Self {
        Self {
            dt_initial: dt,
            dt_max: 10.0 * dt,
            f_inc: 1.1,
            f_dec: 0.5,
            alpha_start: 0.1,
            f_alpha: 0.99,
            n_min: 5,
            force_tol: 1e-10,
            max_steps: 500_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("force_tol must be positive", self.force_tol, self.force_tol > 0.0),
            ("f_inc must exceed 1", self.f_inc, self.f_inc > 1.0),
            (
                "f_dec must lie in (0, 1)",
                self.f_dec,
                self.f_dec > 0.0 && self.f_dec < 1.0,
            ),
            ("dt_initial must be positive", self.dt_initial, self.dt_initial > 0.0),
            (
                "dt_max must be >= dt_initial",
                self.dt_max,
                self.dt_max >= self.dt_initial,
            ),
            (
                "alpha_start must lie in [0, 1)",
                self.alpha_start,
                (0.0..1.0).contains(&self.alpha_start),
            ),
            (
                "f_alpha must lie in (0, 1]",
                self.f_alpha,
                self.f_alpha > 0.0 && self.f_alpha <= 1.0,
            ),
        ];
        for (what, value, ok) in checks {
            if !ok {
                return Err(Error::Config { what, value });
            }
        }
        Ok(())
    }
}

impl Default for FireConfig {
    fn default() -> Self {
        Self::with_timestep(5e-3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireOutcome {
    /// Relaxed configuration, at rest.
    pub state: ParticleState,
    pub iterations: usize,
    pub max_force: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
}

/// Relaxes `state` with FIRE until the largest net force is below
/// `config.force_tol`.
pub fn fire_minimize(
    state: &ParticleState,
    params: &MaterialParams,
    container: &Container,
    config: &FireConfig,
) -> Result<FireOutcome> {
    config.validate()?;
    params.validate()?;
    let model = ForceModel::new(params, container);
    let n = state.positions.len();
    let mut x = state.positions.clone();
    let mut v = state.velocities.clone();
    if v.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let initial_energy = model.potential_energy(&x)?;
    let mut f = model.forces(&x)?;
    let mut dt = config.dt_initial;
    let mut mix = config.alpha_start;
    let mut downhill = 0usize;
    let inv_m = 1.0 / params.mass;

    for it in 0..=config.max_steps {
        let fmax = max_norm(&f);
        if !fmax.is_finite() {
            return Err(Error::NonFinite { step: it });
        }
        if fmax < config.force_tol {
            return Ok(FireOutcome {
                state: ParticleState::at_rest(x.clone()),
                iterations: it,
                max_force: fmax,
                initial_energy,
                final_energy: model.potential_energy(&x)?,
            });
        }
        if it == config.max_steps {
            return Err(Error::FireNotConverged {
                steps: it,
                residual: fmax,
            });
        }

        let power: f64 = f.iter().zip(&v).map(|(fi, vi)| dot(*fi, *vi)).sum();
        if power > 0.0 {
            let vnorm = sqrt(v.iter().map(|vi| dot(*vi, *vi)).sum());
            let fnorm = sqrt(f.iter().map(|fi| dot(*fi, *fi)).sum());
            let c = mix * vnorm / fnorm;
            for (vi, fi) in v.iter_mut().zip(&f) {
                vi[0] = (1.0 - mix) * vi[0] + c * fi[0];
                vi[1] = (1.0 - mix) * vi[1] + c * fi[1];
            }
            downhill += 1;
            if downhill > config.n_min {
                dt = (dt * config.f_inc).min(config.dt_max);
                mix *= config.f_alpha;
            }
        } else {
            v.iter_mut().for_each(|vi| *vi = [0.0; 2]);
            dt *= config.f_dec;
            mix = config.alpha_start;
            downhill = 0;
        }

        // semi-implicit Euler
        for i in 0..n {
            v[i][0] += dt * f[i][0] * inv_m;
            v[i][1] += dt * f[i][1] * inv_m;
            x[i][0] += dt * v[i][0];
            x[i][1] += dt * v[i][1];
        }
        f = model.forces(&x)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// Step control for [`compression_protocol`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    /// Relative diameter change per outer step.
    pub step: f64,
    /// Smallest step tried before giving up.
    pub min_step: f64,
    pub max_outer: usize,
    pub phi_tol: f64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            min_step: 1e-6,
            max_outer: 10_000,
            phi_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackingReport {
    pub packing_fraction: f64,
    pub diameter: f64,
    pub residual_force: f64,
    pub pair_contacts: usize,
    pub wall_contacts: usize,
    pub outer_steps: usize,
    pub fire_iterations: usize,
}

/// Largest common diameter at which no two particles overlap and no
/// particle overlaps a wall.
pub fn contact_free_diameter(positions: &[Vec2], container: &Container) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            d = d.min(norm(sub(positions[i], positions[j])));
        }
        if container.boundary == Boundary::FixedWalls {
            let p = positions[i];
            let gap = p[0].min(container.width - p[0]).min(p[1]).min(container.height - p[1]);
            d = d.min(2.0 * gap);
        }
    }
    d
}

/// Grows the particles inside the fixed box of `geometry` until they reach
/// the diameter that gives `target_phi`, relaxing with FIRE after every
/// step. Returns the relaxed geometry (its equilibrium positions are the
/// new rest positions) and a report.
///
/// Starts from the largest contact-free diameter of the current positions,
/// so the first relaxation always begins from a non-overlapping state. A
/// step that would pass the target is clamped to it; a step whose FIRE run
/// fails is retried at half the size.
pub fn compression_protocol(
    geometry: &PackingGeometry,
    params: &MaterialParams,
    target_phi: f64,
    fire: &FireConfig,
) -> Result<(PackingGeometry, PackingReport)> {
    compression_protocol_with(geometry, params, target_phi, fire, &CompressionConfig::default())
}

pub fn compression_protocol_with(
    geometry: &PackingGeometry,
    params: &MaterialParams,
    target_phi: f64,
    fire: &FireConfig,
    config: &CompressionConfig,
) -> Result<(PackingGeometry, PackingReport)> {
    if !(target_phi > 0.0 && target_phi < HEX_CLOSE_PACKING) {
        return Err(Error::Config {
            what: "packing fraction must lie in (0, 0.9069)",
            value: target_phi,
        });
    }
    fire.validate()?;
    let container = geometry.container;
    let n = geometry.len();
    let target = sqrt(4.0 * target_phi * container.area() / (n as f64 * core::f64::consts::PI));
    let mut material = params.clone();
    material.diameter = target;
    material.validate()?;

    let mut positions = geometry.equilibrium.clone();
    let mut fire_iterations = 0;
    let mut outer = 0;

    // Already relaxed at the target size: nothing to do.
    let at_target = ForceModel::new(&material, &container).forces(&positions)?;
    let mut diameter = if max_norm(&at_target) < fire.force_tol {
        target
    } else {
        contact_free_diameter(&positions, &container).min(target)
    };
    if !(diameter > 0.0) {
        return Err(Error::PackingFailed {
            diameter,
            phi: target_phi,
            reason: "coincident particles or particle on a wall",
        });
    }

    let mut step = config.step;
    while diameter < target {
        if outer >= config.max_outer {
            return Err(Error::PackingFailed {
                diameter,
                phi: phi_of(n, diameter, &container),
                reason: "outer iteration limit reached",
            });
        }
        outer += 1;
        let proposed = (diameter * (1.0 + step)).min(target);
        material.diameter = proposed;
        match fire_minimize(&ParticleState::at_rest(positions.clone()), &material, &container, fire) {
            Ok(out) => {
                fire_iterations += out.iterations;
                positions = out.state.positions;
                diameter = proposed;
            }
            Err(Error::FireNotConverged { .. }) => {
                step *= 0.5;
                if step < config.min_step {
                    return Err(Error::PackingFailed {
                        diameter,
                        phi: phi_of(n, diameter, &container),
                        reason: "FIRE failed at the minimum step size",
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }

    material.diameter = target;
    let out = fire_minimize(&ParticleState::at_rest(positions), &material, &container, fire)?;
    fire_iterations += out.iterations;
    let phi = phi_of(n, target, &container);
    if (phi - target_phi).abs() >= config.phi_tol {
        return Err(Error::PackingFailed {
            diameter: target,
            phi,
            reason: "packing fraction off target",
        });
    }
    let contacts = ForceModel::new(&material, &container).contacts(&out.state.positions)?;
    let report = PackingReport {
        packing_fraction: phi,
        diameter: target,
        residual_force: out.max_force,
        pair_contacts: contacts.pairs.len(),
        wall_contacts: contacts.walls.len(),
        outer_steps: outer,
        fire_iterations,
    };
    let relaxed = PackingGeometry {
        container,
        lattice: geometry.lattice,
        equilibrium: out.state.positions,
    };
    Ok((relaxed, report))
}

fn phi_of(n: usize, diameter: f64, container: &Container) -> f64 {
    n as f64 * disk_area(diameter) / container.area()
}

/// Lattice construction followed by the compression protocol: the packing
/// every experiment starts from.
pub fn build_packing(
    spec: &LatticeSpec,
    params: &MaterialParams,
    fire: &FireConfig,
) -> Result<(PackingGeometry, PackingReport)> {
    let lattice = hexagonal_lattice(spec)?;
    let mut material = params.clone();
    material.diameter = spec.diameter;
    if material.stiffness.len() != spec.len() {
        material.stiffness = vec![material.stiffness.first().copied().unwrap_or(1.0); spec.len()];
    }
    compression_protocol(&lattice, &material, spec.packing_fraction, fire)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lattice_area_matches_packing_fraction() {
        let spec = LatticeSpec::new(2, 2, 0.1, 4.0 * core::f64::consts::PI * 0.05 * 0.05 / 0.04);
        assert_relative_eq!(
            spec.packing_fraction,
            core::f64::consts::FRAC_PI_4,
            max_relative = 1e-12
        );
        let g = hexagonal_lattice(&spec).unwrap();
        assert_eq!(g.len(), 4);
        assert_relative_eq!(g.container.area(), 0.04, max_relative = 1e-12);
        assert_relative_eq!(g.packing_fraction(0.1), spec.packing_fraction, max_relative = 1e-12);
    }

    #[test]
    fn table_one_lattice() {
        let spec = LatticeSpec::new(10, 11, 0.1, 0.1);
        let g = hexagonal_lattice(&spec).unwrap();
        assert_eq!(g.len(), 110);
        let area = 110.0 * core::f64::consts::PI * 0.05 * 0.05 / 0.1;
        assert_relative_eq!(g.container.area(), area, max_relative = 1e-12);
        g.validate(0.1).unwrap();
    }

    #[test]
    fn lattice_neighbors_are_regular() {
        let spec = LatticeSpec::new(6, 5, 0.1, 0.5);
        let g = hexagonal_lattice(&spec).unwrap();
        let p = &g.equilibrium;
        let bond = norm(sub(p[1], p[0]));
        for row in 0..5 {
            for col in 0..5 {
                let i = row * 6 + col;
                assert_relative_eq!(norm(sub(p[i + 1], p[i])), bond, max_relative = 1e-12);
            }
        }
        // Diagonal neighbors between rows are a bond apart too.
        for row in 0..4 {
            let i = row * 6 + 2;
            let up = if row % 2 == 0 { i + 6 } else { i + 7 };
            assert_relative_eq!(norm(sub(p[up], p[i])), bond, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(hexagonal_lattice(&LatticeSpec::new(10, 11, 0.1, 0.95)).is_err());
        assert!(hexagonal_lattice(&LatticeSpec::new(10, 11, 0.1, 0.0)).is_err());
        assert!(hexagonal_lattice(&LatticeSpec::new(1, 11, 0.1, 0.5)).is_err());
    }

    #[test]
    fn fire_returns_immediately_at_equilibrium() {
        let params = MaterialParams::uniform(2, 5.0, 1.0, 0.1).unwrap();
        let state = ParticleState::at_rest(vec![[0.0, 0.0], [1.0, 0.0]]);
        let out = fire_minimize(&state, &params, &Container::open(), &FireConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.state.positions, state.positions);
    }

    #[test]
    fn fire_separates_two_overlapping_particles() {
        let params = MaterialParams::uniform(2, 5.0, 1.0, 0.1).unwrap();
        let state = ParticleState::at_rest(vec![[0.0, 0.0], [0.09, 0.01]]);
        let cfg = FireConfig::default();
        let out = fire_minimize(&state, &params, &Container::open(), &cfg).unwrap();
        assert!(out.max_force < cfg.force_tol);
        let r = norm(sub(out.state.positions[0], out.state.positions[1]));
        // Force (k/s)(1 - r/s)^1.5 < tol bounds any residual overlap.
        let bound = 0.1 * libm::pow(cfg.force_tol * 0.1 / 5.0, 1.0 / 1.5);
        assert!(0.1 - r <= bound, "r = {r}");
        assert!(out.final_energy <= out.initial_energy);
    }

    #[test]
    fn fire_reports_non_convergence() {
        let params = MaterialParams::uniform(2, 5.0, 1.0, 0.1).unwrap();
        let state = ParticleState::at_rest(vec![[0.0, 0.0], [0.05, 0.0]]);
        let cfg = FireConfig {
            max_steps: 3,
            ..FireConfig::default()
        };
        match fire_minimize(&state, &params, &Container::open(), &cfg) {
            Err(Error::FireNotConverged { steps, residual }) => {
                assert_eq!(steps, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unjammed_packing_is_force_free() {
        let spec = LatticeSpec::new(4, 4, 0.1, 0.3);
        let params = MaterialParams::uniform(16, 5.0, 1.0, 0.1).unwrap();
        let (g, report) = build_packing(&spec, &params, &FireConfig::default()).unwrap();
        assert_eq!(report.pair_contacts, 0);
        assert!(report.residual_force < 1e-10);
        assert_relative_eq!(report.packing_fraction, 0.3, max_relative = 1e-9);
        assert_eq!(g.len(), 16);
    }

    #[test]
    fn jammed_packing_keeps_interior_contacts() {
        let spec = LatticeSpec::new(5, 5, 0.1, 0.84);
        assert!(spec.packing_fraction > spec.contact_fraction());
        let params = MaterialParams::uniform(25, 5.0, 1.0, 0.1).unwrap();
        let cfg = FireConfig::default();
        let (g, report) = build_packing(&spec, &params, &cfg).unwrap();
        assert!(report.residual_force < cfg.force_tol);
        assert!((report.packing_fraction - 0.84).abs() < 1e-6);
        let mut material = params.clone();
        material.diameter = report.diameter;
        let contacts = ForceModel::new(&material, &g.container)
            .contacts(&g.equilibrium)
            .unwrap();
        let z = contacts.coordination();
        for row in 1..4 {
            for col in 1..4 {
                assert!(
                    z[row * 5 + col] >= 2,
                    "particle {} has {} contacts",
                    row * 5 + col,
                    z[row * 5 + col]
                );
            }
        }
    }

    #[test]
    fn compression_is_idempotent_and_deterministic() {
        let spec = LatticeSpec::new(4, 5, 0.1, 0.83);
        let params = MaterialParams::uniform(20, 5.0, 1.0, 0.1).unwrap();
        let cfg = FireConfig::default();
        let (g1, _) = build_packing(&spec, &params, &cfg).unwrap();
        let (g2, _) = build_packing(&spec, &params, &cfg).unwrap();
        assert_eq!(g1, g2);
        let (g3, r3) = compression_protocol(&g1, &params, 0.83, &cfg).unwrap();
        assert_eq!(r3.outer_steps, 0);
        for (a, b) in g1.equilibrium.iter().zip(&g3.equilibrium) {
            assert!(norm(sub(*a, *b)) < 1e-9);
        }
    }
}
