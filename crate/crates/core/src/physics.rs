//! Contact mechanics of a confined 2D packing of equal-size disks.
//!
//! Pairs interact through the one-sided power-law potential
//! `V = (eps/alpha) (1 - r/sigma)^alpha` for `r < sigma` (Hertzian for
//! `alpha = 5/2`), and each particle is repelled by the four box walls
//! through the same law with gap scale `sigma/2`. The pair energy scale is
//! the effective stiffness of the two particles; the wall energy scale is
//! the particle's own stiffness.
//!
//! Besides forces this module provides the two linearizations the adjoint
//! needs: the force Jacobian applied to a vector and the force sensitivity
//! with respect to the stiffness vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{all_finite, dot, norm, powf, sub, Vec2};
use crate::neighbors::{for_each_candidate, NeighborMode};
use crate::{Error, Result};

/// Hertzian contact exponent.
pub const HERTZ_ALPHA: f64 = 2.5;

/// Permitted stiffness range, `[1, 10]` by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for StiffnessBounds {
    fn default() -> Self {
        Self { min: 1.0, max: 10.0 }
    }
}

impl StiffnessBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && max >= min && max.is_finite()) {
            return Err(Error::Domain("stiffness bounds must satisfy 0 < min <= max"));
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, stiffness: &mut [f64]) {
        for k in stiffness {
            *k = k.clamp(self.min, self.max);
        }
    }

    pub fn contains(&self, k: f64) -> bool {
        k >= self.min && k <= self.max
    }
}

/// Per-particle stiffness plus the shared mass, diameter and exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    pub stiffness: Vec<f64>,
    pub mass: f64,
    pub diameter: f64,
    pub alpha: f64,
}

impl MaterialParams {
    pub fn new(stiffness: Vec<f64>, mass: f64, diameter: f64, alpha: f64) -> Result<Self> {
        let params = Self {
            stiffness,
            mass,
            diameter,
            alpha,
        };
        params.validate()?;
        Ok(params)
    }

    /// Homogeneous material: every particle has stiffness `k`.
    pub fn uniform(n: usize, k: f64, mass: f64, diameter: f64) -> Result<Self> {
        Self::new(vec![k; n], mass, diameter, HERTZ_ALPHA)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config {
                what: "mass must be positive",
                value: self.mass,
            });
        }
        if !(self.diameter > 0.0) {
            return Err(Error::Config {
                what: "diameter must be positive",
                value: self.diameter,
            });
        }
        if !(self.alpha > 1.0) {
            return Err(Error::Config {
                what: "alpha must exceed 1",
                value: self.alpha,
            });
        }
        if let Some(&k) = self.stiffness.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::Config {
                what: "stiffness must be positive and finite",
                value: k,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stiffness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stiffness.is_empty()
    }

    pub fn with_stiffness(&self, stiffness: &[f64]) -> Self {
        Self {
            stiffness: stiffness.to_vec(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Four rigid walls at `x = 0`, `x = width`, `y = 0`, `y = height`.
    #[default]
    FixedWalls,
    /// No walls.
    Open,
}

/// The confining box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Container {
    pub width: f64,
    pub height: f64,
    pub boundary: Boundary,
}

impl Container {
    pub fn walls(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            boundary: Boundary::FixedWalls,
        }
    }

    pub fn open() -> Self {
        Self {
            width: f64::INFINITY,
            height: f64::INFINITY,
            boundary: Boundary::Open,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn extent(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.width
        } else {
            self.height
        }
    }
}

/// Box, lattice layout and equilibrium positions of a packing.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingGeometry {
    pub container: Container,
    /// Lattice counts `(nx, ny)`.
    pub lattice: (usize, usize),
    /// Rest positions about which drives and probes are measured.
    pub equilibrium: Vec<Vec2>,
}

impl PackingGeometry {
    pub fn len(&self) -> usize {
        self.equilibrium.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equilibrium.is_empty()
    }

    /// Ratio of total disk area to box area.
    pub fn packing_fraction(&self, diameter: f64) -> f64 {
        disk_area(diameter) * self.len() as f64 / self.container.area()
    }

    /// Checks the lattice count and that every center is inside the box,
    /// allowing walls to overlap a particle by at most half its radius.
    pub fn validate(&self, diameter: f64) -> Result<()> {
        let (nx, ny) = self.lattice;
        if nx * ny != self.len() {
            return Err(Error::LengthMismatch {
                expected: nx * ny,
                got: self.len(),
            });
        }
        if self.container.boundary == Boundary::FixedWalls {
            let margin = diameter / 4.0;
            for p in &self.equilibrium {
                for (axis, &c) in p.iter().enumerate() {
                    if !(c >= margin && c <= self.container.extent(axis) - margin) {
                        return Err(Error::Config {
                            what: "equilibrium position outside the box",
                            value: c,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn disk_area(diameter: f64) -> f64 {
    core::f64::consts::PI * diameter * diameter / 4.0
}

/// Positions and velocities of all particles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub time: f64,
}

impl ParticleState {
    /// Particles at `positions`, at rest, at time zero.
    pub fn at_rest(positions: Vec<Vec2>) -> Self {
        let velocities = vec![[0.0; 2]; positions.len()];
        Self {
            positions,
            velocities,
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.positions) && all_finite(&self.velocities) && self.time.is_finite()
    }
}

/// Dash-pot coefficients for background, particle-particle and
/// particle-wall dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingParams {
    pub background: f64,
    pub particle_particle: f64,
    pub particle_wall: f64,
}

impl Default for DampingParams {
    fn default() -> Self {
        Self {
            background: 1.0,
            particle_particle: 0.0,
            particle_wall: 0.0,
        }
    }
}

impl DampingParams {
    pub fn none() -> Self {
        Self {
            background: 0.0,
            particle_particle: 0.0,
            particle_wall: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, value) in [
            ("background damping must be >= 0", self.background),
            ("particle-particle damping must be >= 0", self.particle_particle),
            ("particle-wall damping must be >= 0", self.particle_wall),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config { what, value });
            }
        }
        Ok(())
    }
}

/// Energy scale of a contact between particles of stiffness `ki` and `kj`.
///
/// Equal stiffnesses give `ki`; unequal ones the harmonic combination
/// `ki kj / (ki + kj)`. The two branches do not meet: as `kj -> ki` the
/// harmonic branch tends to `ki / 2`.
pub fn effective_stiffness(ki: f64, kj: f64) -> Result<f64> {
    if !(ki > 0.0 && kj > 0.0) {
        return Err(Error::Domain("stiffness must be positive"));
    }
    Ok(effective_stiffness_unchecked(ki, kj))
}

#[inline]
fn effective_stiffness_unchecked(ki: f64, kj: f64) -> f64 {
    if ki == kj {
        ki
    } else {
        ki * kj / (ki + kj)
    }
}

/// Partial derivatives of the harmonic branch, `(d/dki, d/dkj)`.
///
/// Used on both branches: equal stiffness is a measure-zero set.
#[inline]
pub fn effective_stiffness_partials(ki: f64, kj: f64) -> (f64, f64) {
    let s = ki + kj;
    let s2 = s * s;
    (kj * kj / s2, ki * ki / s2)
}

/// One-sided pair potential; exactly zero for `r >= sigma`.
pub fn pair_potential(r: f64, sigma: f64, eps: f64, alpha: f64) -> f64 {
    let s = 1.0 - r / sigma;
    if r < sigma {
        eps / alpha * powf(s, alpha)
    } else {
        0.0
    }
}

/// Force on particle `i` from particle `j`; zero out of contact.
pub fn pair_force_2d(ri: Vec2, rj: Vec2, sigma: f64, eps: f64, alpha: f64) -> Result<Vec2> {
    let d = sub(ri, rj);
    let r = norm(d);
    if r == 0.0 {
        return Err(Error::Coincident { i: 0, j: 1 });
    }
    if r >= sigma {
        return Ok([0.0, 0.0]);
    }
    let f = eps / sigma * powf(1.0 - r / sigma, alpha - 1.0);
    Ok([f * d[0] / r, f * d[1] / r])
}

/// Distance from the particle center to each wall it can touch, with the
/// direction in which that wall pushes. Open boundaries have no walls.
fn wall_gaps(p: Vec2, container: &Container) -> [(usize, f64, f64); 4] {
    [
        (0, p[0], 1.0),
        (0, container.width - p[0], -1.0),
        (1, p[1], 1.0),
        (1, container.height - p[1], -1.0),
    ]
}

/// Sum of the four wall potentials acting on a particle of diameter `sigma`.
pub fn wall_potential(p: Vec2, container: &Container, sigma: f64, eps: f64, alpha: f64) -> f64 {
    if container.boundary == Boundary::Open {
        return 0.0;
    }
    let half = sigma / 2.0;
    let mut v = 0.0;
    for (_, gap, _) in wall_gaps(p, container) {
        if gap < half {
            v += eps / alpha * powf(1.0 - gap / half, alpha);
        }
    }
    v
}

/// Sum of the four one-sided wall forces on a particle of diameter `sigma`.
///
/// The force has gap scale `sigma/2` and acts only while the gap to the wall
/// is below `sigma/2`, i.e. while the disk actually overlaps the wall.
pub fn wall_force(p: Vec2, container: &Container, sigma: f64, eps: f64, alpha: f64) -> Vec2 {
    let mut f = [0.0; 2];
    if container.boundary == Boundary::Open {
        return f;
    }
    let half = sigma / 2.0;
    for (axis, gap, dir) in wall_gaps(p, container) {
        if gap < half {
            f[axis] += dir * eps / half * powf(1.0 - gap / half, alpha - 1.0);
        }
    }
    f
}

/// A pair in contact at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct PairContact {
    pub i: usize,
    pub j: usize,
    /// Unit vector from `j` to `i`.
    pub unit: Vec2,
    pub distance: f64,
    /// Dimensionless overlap `1 - r/sigma`, strictly positive.
    pub overlap: f64,
    pub eps: f64,
    /// Repulsive force magnitude.
    pub magnitude: f64,
}

/// A particle touching one wall.
#[derive(Debug, Clone, Copy)]
pub struct WallContact {
    pub i: usize,
    pub axis: usize,
    /// `+1` for the wall at the origin, `-1` for the far wall.
    pub dir: f64,
    pub overlap: f64,
    /// Energy scale, the particle's own stiffness.
    pub eps: f64,
    /// Signed force component along `axis`.
    pub force: f64,
}

/// Contact network of a configuration together with everything needed to
/// evaluate forces and their linearizations.
#[derive(Debug, Clone)]
pub struct Contacts {
    pub pairs: Vec<PairContact>,
    pub walls: Vec<WallContact>,
    n: usize,
    sigma: f64,
    alpha: f64,
}

/// Conservative force model for one material and container.
#[derive(Debug, Clone, Copy)]
pub struct ForceModel<'a> {
    pub params: &'a MaterialParams,
    pub container: &'a Container,
    pub neighbors: NeighborMode,
}

impl<'a> ForceModel<'a> {
    pub fn new(params: &'a MaterialParams, container: &'a Container) -> Self {
        Self {
            params,
            container,
            neighbors: NeighborMode::AllPairs,
        }
    }

    pub fn with_neighbors(mut self, mode: NeighborMode) -> Self {
        self.neighbors = mode;
        self
    }

    /// Detects all pair and wall contacts at `positions`.
    pub fn contacts(&self, positions: &[Vec2]) -> Result<Contacts> {
        let p = self.params;
        let n = positions.len();
        if p.stiffness.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: p.stiffness.len(),
            });
        }
        let sigma = p.diameter;
        let alpha = p.alpha;
        let mut pairs = Vec::new();
        let mut coincident = None;
        for_each_candidate(positions, sigma, self.neighbors, |i, j| {
            let d = sub(positions[i], positions[j]);
            let r2 = dot(d, d);
            if r2 >= sigma * sigma {
                return;
            }
            let r = libm::sqrt(r2);
            if r == 0.0 {
                coincident.get_or_insert((i, j));
                return;
            }
            if r >= sigma {
                return;
            }
            let overlap = 1.0 - r / sigma;
            let eps = effective_stiffness_unchecked(p.stiffness[i], p.stiffness[j]);
            pairs.push(PairContact {
                i,
                j,
                unit: [d[0] / r, d[1] / r],
                distance: r,
                overlap,
                eps,
                magnitude: eps / sigma * powf(overlap, alpha - 1.0),
            });
        });
        if let Some((i, j)) = coincident {
            return Err(Error::Coincident { i, j });
        }

        let mut walls = Vec::new();
        if self.container.boundary == Boundary::FixedWalls {
            let half = sigma / 2.0;
            for (i, &pos) in positions.iter().enumerate() {
                for (axis, gap, dir) in wall_gaps(pos, self.container) {
                    if gap < half {
                        let overlap = 1.0 - gap / half;
                        walls.push(WallContact {
                            i,
                            axis,
                            dir,
                            overlap,
                            eps: p.stiffness[i],
                            force: dir * p.stiffness[i] / half * powf(overlap, alpha - 1.0),
                        });
                    }
                }
            }
        }
        Ok(Contacts {
            pairs,
            walls,
            n,
            sigma,
            alpha,
        })
    }

    /// Conservative forces (pairs plus walls).
    pub fn forces(&self, positions: &[Vec2]) -> Result<Vec<Vec2>> {
        Ok(self.contacts(positions)?.forces())
    }

    /// Total potential energy (pairs plus walls).
    pub fn potential_energy(&self, positions: &[Vec2]) -> Result<f64> {
        Ok(self.contacts(positions)?.potential_energy())
    }
}

impl Contacts {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forces(&self) -> Vec<Vec2> {
        let mut f = vec![[0.0; 2]; self.n];
        self.add_forces(&mut f);
        f
    }

    pub fn add_forces(&self, f: &mut [Vec2]) {
        for c in &self.pairs {
            let fx = c.magnitude * c.unit[0];
            let fy = c.magnitude * c.unit[1];
            f[c.i][0] += fx;
            f[c.i][1] += fy;
            f[c.j][0] -= fx;
            f[c.j][1] -= fy;
        }
        for w in &self.walls {
            f[w.i][w.axis] += w.force;
        }
    }

    pub fn potential_energy(&self) -> f64 {
        let a = self.alpha;
        let pairs: f64 = self.pairs.iter().map(|c| c.eps / a * powf(c.overlap, a)).sum();
        let walls: f64 = self.walls.iter().map(|w| w.eps / a * powf(w.overlap, a)).sum();
        pairs + walls
    }

    /// Number of pair contacts per particle.
    pub fn coordination(&self) -> Vec<usize> {
        let mut z = vec![0; self.n];
        for c in &self.pairs {
            z[c.i] += 1;
            z[c.j] += 1;
        }
        z
    }

    /// Number of walls each particle touches.
    pub fn wall_counts(&self) -> Vec<usize> {
        let mut z = vec![0; self.n];
        for w in &self.walls {
            z[w.i] += 1;
        }
        z
    }

    /// Accumulates `J^T lambda` into `out`, where `J = dF/dx` is the
    /// Jacobian of the conservative forces (symmetric, minus the Hessian of
    /// the potential energy).
    pub fn add_jacobian_transpose(&self, lambda: &[Vec2], out: &mut [Vec2]) {
        let a = self.alpha;
        let sigma = self.sigma;
        for c in &self.pairs {
            let u = c.unit;
            // radial stiffness df/dr and tangential stiffness f/r
            let radial = -c.eps / (sigma * sigma) * (a - 1.0) * powf(c.overlap, a - 2.0);
            let tangential = c.magnitude / c.distance;
            let w = sub(lambda[c.i], lambda[c.j]);
            let uw = dot(u, w);
            let kw = [
                (radial - tangential) * uw * u[0] + tangential * w[0],
                (radial - tangential) * uw * u[1] + tangential * w[1],
            ];
            out[c.i][0] += kw[0];
            out[c.i][1] += kw[1];
            out[c.j][0] -= kw[0];
            out[c.j][1] -= kw[1];
        }
        let half = sigma / 2.0;
        for wc in &self.walls {
            // same sign for the near and far wall
            let d = -wc.eps / (half * half) * (a - 1.0) * powf(wc.overlap, a - 2.0);
            out[wc.i][wc.axis] += d * lambda[wc.i][wc.axis];
        }
    }

    /// Accumulates `(dF/dk)^T lambda` into `grad`.
    pub fn add_stiffness_vjp(&self, stiffness: &[f64], lambda: &[Vec2], grad: &mut [f64]) {
        let a = self.alpha;
        let sigma = self.sigma;
        for c in &self.pairs {
            let w = sub(lambda[c.i], lambda[c.j]);
            let per_eps = powf(c.overlap, a - 1.0) / sigma * dot(c.unit, w);
            let (di, dj) = effective_stiffness_partials(stiffness[c.i], stiffness[c.j]);
            grad[c.i] += per_eps * di;
            grad[c.j] += per_eps * dj;
        }
        let half = sigma / 2.0;
        for wc in &self.walls {
            let per_k = wc.dir / half * powf(wc.overlap, a - 1.0);
            grad[wc.i] += per_k * lambda[wc.i][wc.axis];
        }
    }
}

/// Accelerations of all particles, including dissipation and an optional
/// external force field.
///
/// Dissipation is `B v_i + sum_j B_pp (v_i - v_j)` over pair contacts
/// `+ B_pw v_i` per touching wall.
pub fn total_forces(
    state: &ParticleState,
    params: &MaterialParams,
    container: &Container,
    damping: &DampingParams,
    external: Option<&[Vec2]>,
) -> Result<Vec<Vec2>> {
    let contacts = ForceModel::new(params, container).contacts(&state.positions)?;
    let mut f = contacts.forces();
    let v = &state.velocities;
    apply_pair_damping(&contacts, damping.particle_particle, v, &mut f);
    let walls = contacts.wall_counts();
    for (i, fi) in f.iter_mut().enumerate() {
        let g = damping.background + damping.particle_wall * walls[i] as f64;
        fi[0] -= g * v[i][0];
        fi[1] -= g * v[i][1];
        if let Some(ext) = external {
            fi[0] += ext[i][0];
            fi[1] += ext[i][1];
        }
        fi[0] /= params.mass;
        fi[1] /= params.mass;
    }
    if !all_finite(&f) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(f)
}

/// Adds `-B_pp (v_i - v_j)` over pair contacts to `f`.
pub(crate) fn apply_pair_damping(contacts: &Contacts, bpp: f64, v: &[Vec2], f: &mut [Vec2]) {
    if bpp == 0.0 {
        return;
    }
    for c in &contacts.pairs {
        let dv = sub(v[c.i], v[c.j]);
        f[c.i][0] -= bpp * dv[0];
        f[c.i][1] -= bpp * dv[1];
        f[c.j][0] += bpp * dv[0];
        f[c.j][1] += bpp * dv[1];
    }
}

/// `(kinetic, potential)` energy of a state.
pub fn total_energy(state: &ParticleState, params: &MaterialParams, container: &Container) -> Result<(f64, f64)> {
    let kinetic: f64 = state.velocities.iter().map(|v| 0.5 * params.mass * dot(*v, *v)).sum();
    let potential = ForceModel::new(params, container).potential_energy(&state.positions)?;
    Ok((kinetic, potential))
}
