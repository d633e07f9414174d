//! Weakly-compressible SPH time stepping with dynamic boundaries and rigid
//! floating bodies.
//!
//! Every per-particle sum is a gather over the neighbour grid in its fixed
//! iteration order, so results do not depend on how rayon splits the work.

use nalgebra::{Matrix3, Rotation3, Unit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseDefinition, Dimensionality, MaterialSpec, Vec3};
use crate::particles::{ParticleFrame, ParticleKind};
use crate::sph::kernel::KernelSpec;
use crate::sph::neighbors::NeighborGrid;
use crate::sph::rheology::{hbp_apparent_viscosity, shear_rate_magnitude, shear_rate_tensor, tait_pressure, Mat3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("particle group {0} is not declared in the case")]
    UnknownGroup(u32),
    #[error("fluid group {0} has no material")]
    MissingMaterial(u32),
    #[error("case has no fluid material to derive a boundary reference density")]
    NoReferenceDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlowUpReason {
    Velocity { speed: f64, limit: f64 },
    Density { ratio: f64 },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("instability at step {step} (t = {time:.5} s), particle {particle}: {reason:?}")]
pub struct BlowUpError {
    pub step: u64,
    pub time: f64,
    pub particle: u32,
    pub reason: BlowUpReason,
}

/// Static per-particle physics data derived from the case.
#[derive(Debug, Clone)]
pub struct Physics {
    pub kernel: KernelSpec,
    pub gravity: Vec3,
    pub cs: f64,
    pub alpha: f64,
    pub rest_density: Vec<f64>,
    pub material_of: Vec<Option<usize>>,
    pub materials: Vec<MaterialSpec>,
    /// Floating group id per particle.
    pub body_of: Vec<Option<u32>>,
}

impl Physics {
    pub fn new(case: &CaseDefinition, frame: &ParticleFrame) -> Result<Self, SolverError> {
        let boundary_rho0 = case.boundary_rho0();
        if !boundary_rho0.is_finite() {
            return Err(SolverError::NoReferenceDensity);
        }
        let n = frame.len();
        let mut rest_density = Vec::with_capacity(n);
        let mut material_of = Vec::with_capacity(n);
        let mut body_of = Vec::with_capacity(n);
        for i in 0..n {
            let g = frame.group[i];
            if case.primitive(g).is_none() {
                return Err(SolverError::UnknownGroup(g));
            }
            match frame.kind[i] {
                ParticleKind::Fluid => {
                    let k = case.materials.iter().position(|m| m.group_id == g).ok_or(SolverError::MissingMaterial(g))?;
                    rest_density.push(case.materials[k].rho0);
                    material_of.push(Some(k));
                    body_of.push(None);
                }
                ParticleKind::Boundary => {
                    rest_density.push(boundary_rho0);
                    material_of.push(None);
                    body_of.push(None);
                }
                ParticleKind::Floating => {
                    rest_density.push(boundary_rho0);
                    material_of.push(None);
                    body_of.push(Some(g));
                }
            }
        }
        Ok(Self {
            kernel: KernelSpec::wendland_c2(case.dim, case.smoothing_length()),
            gravity: case.gravity,
            cs: case.numerics.cs,
            alpha: case.numerics.alpha,
            rest_density,
            material_of,
            materials: case.materials.clone(),
            body_of,
        })
    }

    pub fn h(&self) -> f64 {
        self.kernel.h
    }
}

/// Neighbour grid plus per-particle apparent viscosity for one frame state;
/// evaluates the pairwise interaction terms. Shared by the integrator and by
/// post-processing force recovery.
pub struct ForceField<'a> {
    pub physics: &'a Physics,
    pub frame: &'a ParticleFrame,
    pub grid: NeighborGrid,
    /// Apparent viscosity of fluid particles; zero elsewhere.
    pub eta: Vec<f64>,
}

impl<'a> ForceField<'a> {
    pub fn new(physics: &'a Physics, frame: &'a ParticleFrame) -> Self {
        let grid = NeighborGrid::build(&frame.position, physics.kernel.support());
        let mut ff = Self::from_parts(physics, frame, grid, Vec::new());
        ff.eta = (0..frame.len())
            .into_par_iter()
            .map(|i| match physics.material_of[i] {
                Some(k) => {
                    let gd = shear_rate_magnitude(&shear_rate_tensor(&ff.velocity_gradient(i)));
                    hbp_apparent_viscosity(&physics.materials[k], gd)
                }
                None => 0.0,
            })
            .collect();
        ff
    }

    /// Assemble from a grid built on `frame.position` and precomputed
    /// viscosities.
    pub fn from_parts(physics: &'a Physics, frame: &'a ParticleFrame, grid: NeighborGrid, eta: Vec<f64>) -> Self {
        Self {
            physics,
            frame,
            grid,
            eta,
        }
    }

    /// Continuity rate dρᵢ/dt for every particle.
    pub fn density_rates(&self) -> Vec<f64> {
        (0..self.frame.len())
            .into_par_iter()
            .map(|i| {
                let mut drho = 0.0;
                self.for_each_neighbor(i, |j, d, r| drho += self.pair_density_rate(i, j, &d, r));
                drho
            })
            .collect()
    }

    /// Per-particle `(total acceleration incl. gravity, part due to non-fluid
    /// neighbours)`. Fixed boundaries get zeros; the external part is only
    /// filled for fluid particles.
    pub fn accelerations(&self) -> Vec<(Vec3, Vec3)> {
        let f = self.frame;
        let g = self.physics.gravity;
        (0..f.len())
            .into_par_iter()
            .map(|i| {
                if f.kind[i] == ParticleKind::Boundary {
                    return (Vec3::zeros(), Vec3::zeros());
                }
                let fluid = f.kind[i] == ParticleKind::Fluid;
                let mut internal = Vec3::zeros();
                let mut external = Vec3::zeros();
                self.for_each_neighbor(i, |j, d, r| {
                    let a = self.pair_acceleration(i, j, &d, r);
                    if fluid && f.kind[j] != ParticleKind::Fluid {
                        external += a;
                    } else {
                        internal += a;
                    }
                });
                (internal + external + g, if fluid { external } else { Vec3::zeros() })
            })
            .collect()
    }

    /// Whether particles `i` and `j` exchange forces and density.
    pub fn interacts(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (ki, kj) = (self.frame.kind[i], self.frame.kind[j]);
        if ki == ParticleKind::Boundary && kj == ParticleKind::Boundary {
            return false;
        }
        match (self.physics.body_of[i], self.physics.body_of[j]) {
            (Some(a), Some(b)) => a != b,
            _ => true,
        }
    }

    /// Visit interacting neighbours `j` of `i` with `(j, xᵢ − xⱼ, r)`.
    pub fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize, Vec3, f64)) {
        let pos = &self.frame.position;
        self.grid.for_each_within(pos, &pos[i], self.physics.kernel.support(), |j, d, r| {
            if self.interacts(i, j) {
                f(j, d, r);
            }
        });
    }

    /// SPH velocity gradient Σ (mⱼ/ρⱼ)(vⱼ − vᵢ) ⊗ ∇ᵢWᵢⱼ.
    pub fn velocity_gradient(&self, i: usize) -> Mat3 {
        let f = self.frame;
        let mut g = Mat3::zeros();
        self.for_each_neighbor(i, |j, d, r| {
            let grad = self.physics.kernel.gradient(&d, r);
            let vol = f.mass[j] / f.density[j];
            g += (f.velocity[j] - f.velocity[i]) * grad.transpose() * vol;
        });
        g
    }

    /// Acceleration of `i` caused by `j` (pressure, laminar viscous and
    /// artificial viscous terms; no gravity). `d = xᵢ − xⱼ`, `r = |d|`.
    /// `mᵢ` times this is antisymmetric under i ↔ j.
    pub fn pair_acceleration(&self, i: usize, j: usize, d: &Vec3, r: f64) -> Vec3 {
        let f = self.frame;
        let ph = self.physics;
        let h = ph.kernel.h;
        let grad = ph.kernel.gradient(d, r);
        let (rho_i, rho_j) = (f.density[i], f.density[j]);
        let m_j = f.mass[j];
        let mut a = -m_j * (f.pressure[i] / (rho_i * rho_i) + f.pressure[j] / (rho_j * rho_j)) * grad;

        let fluid_i = f.kind[i] == ParticleKind::Fluid;
        let fluid_j = f.kind[j] == ParticleKind::Fluid;
        let eta = match (fluid_i, fluid_j) {
            (true, true) => {
                let (a, b) = (self.eta[i], self.eta[j]);
                if a + b > 0.0 {
                    2.0 * a * b / (a + b)
                } else {
                    0.0
                }
            }
            (true, false) => self.eta[i],
            (false, true) => self.eta[j],
            (false, false) => 0.0,
        };
        let vij = f.velocity[i] - f.velocity[j];
        let denom = r * r + 0.01 * h * h;
        if eta > 0.0 {
            a += m_j * 2.0 * eta / (rho_i * rho_j) * d.dot(&grad) / denom * vij;
        }
        if ph.alpha > 0.0 {
            let vr = vij.dot(d);
            if vr < 0.0 {
                let mu = h * vr / denom;
                let pi = -ph.alpha * ph.cs * mu / (0.5 * (rho_i + rho_j));
                a -= m_j * pi * grad;
            }
        }
        a
    }

    /// Continuity contribution mⱼ vᵢⱼ·∇ᵢWᵢⱼ.
    pub fn pair_density_rate(&self, i: usize, j: usize, d: &Vec3, r: f64) -> f64 {
        let f = self.frame;
        f.mass[j] * (f.velocity[i] - f.velocity[j]).dot(&self.physics.kernel.gradient(d, r))
    }
}

/// Output of one force evaluation.
#[derive(Debug, Clone)]
pub struct Accelerations {
    /// Total acceleration including gravity; zero for fixed boundaries.
    pub acceleration: Vec<Vec3>,
    pub density_rate: Vec<f64>,
    /// Part of each fluid particle's acceleration caused by non-fluid
    /// neighbours; zero for other kinds.
    pub external: Vec<Vec3>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidBody {
    pub group: u32,
    pub members: Vec<usize>,
    /// Member offsets from the centre of mass in the reference orientation.
    pub offsets: Vec<Vec3>,
    pub mass: f64,
    /// Body-frame inertia tensor about the centre of mass.
    pub inertia: Matrix3<f64>,
    pub com: Vec3,
    pub rotation: Rotation3<f64>,
    pub velocity: Vec3,
    pub omega: Vec3,
}

impl RigidBody {
    fn from_members(group: u32, members: Vec<usize>, frame: &ParticleFrame) -> Self {
        let mass: f64 = members.iter().map(|&k| frame.mass[k]).sum();
        let com = members.iter().map(|&k| frame.position[k] * frame.mass[k]).sum::<Vec3>() / mass;
        let offsets: Vec<Vec3> = members.iter().map(|&k| frame.position[k] - com).collect();
        let mut inertia = Matrix3::zeros();
        for (&k, r) in members.iter().zip(&offsets) {
            inertia += frame.mass[k] * (Matrix3::identity() * r.norm_squared() - r * r.transpose());
        }
        Self {
            group,
            members,
            offsets,
            mass,
            inertia,
            com,
            rotation: Rotation3::identity(),
            velocity: Vec3::zeros(),
            omega: Vec3::zeros(),
        }
    }

    /// Current position of member `idx` (index into `members`).
    pub fn member_position(&self, idx: usize) -> Vec3 {
        self.com + self.rotation * self.offsets[idx]
    }
}

/// Per-step bookkeeping used by conservation checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub time: f64,
    pub dt: f64,
    pub fluid_mass: f64,
    /// Σ mᵢ (vᵢⁿ⁺¹ − vᵢⁿ) over fluid particles.
    pub fluid_momentum_change: Vec3,
    /// dt · Σ mᵢ a_ext,ᵢ: impulse delivered to the fluid by boundaries and
    /// floating bodies.
    pub external_impulse: Vec3,
    pub max_speed: f64,
}

impl StepDiagnostics {
    /// |Δp − J_ext − M g dt| / |M g dt|.
    pub fn momentum_residual(&self, gravity: &Vec3) -> f64 {
        let expected = gravity * (self.fluid_mass * self.dt);
        (self.fluid_momentum_change - self.external_impulse - expected).norm() / expected.norm()
    }
}

pub struct SolverState {
    pub frame: ParticleFrame,
    pub physics: Physics,
    pub bodies: Vec<RigidBody>,
    pub dim: Dimensionality,
    pub cfl: f64,
    pub step_count: u64,
    pub eta: Vec<f64>,
    pub speed_limit: f64,
}

impl SolverState {
    pub fn new(case: &CaseDefinition, frame: ParticleFrame) -> Result<Self, SolverError> {
        let physics = Physics::new(case, &frame)?;
        let mut groups: Vec<u32> = physics.body_of.iter().flatten().copied().collect();
        groups.sort_unstable();
        groups.dedup();
        let bodies = groups
            .into_iter()
            .map(|g| {
                let members = (0..frame.len()).filter(|&i| physics.body_of[i] == Some(g)).collect();
                RigidBody::from_members(g, members, &frame)
            })
            .collect();
        let (zmin, zmax) = frame
            .position
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
        let height = if zmax > zmin { zmax - zmin } else { physics.h() };
        let speed_limit = 10.0 * (2.0 * case.gravity.norm() * height).sqrt();
        let eta = ForceField::new(&physics, &frame).eta;
        Ok(Self {
            frame,
            physics,
            bodies,
            dim: case.dim,
            cfl: case.numerics.cfl,
            step_count: 0,
            eta,
            speed_limit,
        })
    }

    pub fn time(&self) -> f64 {
        self.frame.time
    }

    pub fn h(&self) -> f64 {
        self.physics.h()
    }

    pub fn compute_accelerations(&self) -> Accelerations {
        let ff = ForceField::new(&self.physics, &self.frame);
        let density_rate = ff.density_rates();
        let (acceleration, external) = ff.accelerations().into_iter().unzip();
        Accelerations {
            acceleration,
            density_rate,
            external,
            eta: ff.eta,
        }
    }

    /// Largest speed among moving particles.
    pub fn max_speed(&self) -> f64 {
        (0..self.frame.len())
            .filter(|&i| self.frame.kind[i] != ParticleKind::Boundary)
            .map(|i| self.frame.velocity[i].norm())
            .fold(0.0, f64::max)
    }

    /// cfl · min(h/(cs + |v|max), √(h/|g|), 0.125·h²·ρmin/ηmax).
    pub fn compute_dt(&self) -> f64 {
        let h = self.h();
        let f = &self.frame;
        let acoustic = h / (self.physics.cs + self.max_speed());
        let body = (h / self.physics.gravity.norm()).sqrt();
        let fluid: Vec<usize> = f.indices_of_kind(ParticleKind::Fluid);
        let eta_max = fluid.iter().map(|&i| self.eta[i]).fold(0.0, f64::max);
        let rho_min = fluid.iter().map(|&i| f.density[i]).fold(f64::INFINITY, f64::min);
        let viscous = if eta_max > 0.0 { 0.125 * h * h * rho_min / eta_max } else { f64::INFINITY };
        self.cfl * acoustic.min(body).min(viscous)
    }

    /// Advance by `dt` with symplectic Euler: velocities are kicked with the
    /// accelerations of the current state, then positions drift with the new
    /// velocities (leapfrog with staggered velocities).
    pub fn step(&mut self, dt: f64) -> Result<StepDiagnostics, BlowUpError> {
        let n = self.frame.len();
        let cs = self.physics.cs;
        let (grid, eta, drho) = {
            let ff = ForceField::new(&self.physics, &self.frame);
            let drho = ff.density_rates();
            (ff.grid, ff.eta, drho)
        };
        {
            let f = &mut self.frame;
            for i in 0..n {
                let rest = self.physics.rest_density[i];
                let rho = f.density[i] + dt * drho[i];
                // Solid particles never drop below rest density, so walls
                // only ever push.
                f.density[i] = if f.kind[i] == ParticleKind::Fluid { rho } else { rho.max(rest) };
                f.pressure[i] = tait_pressure(f.density[i], rest, cs);
            }
        }
        let ff = ForceField::from_parts(&self.physics, &self.frame, grid, eta);
        let acc = ff.accelerations();
        self.eta = ff.eta;

        let mut dp = Vec3::zeros();
        let mut ext = Vec3::zeros();
        let mut fluid_mass = 0.0;
        let f = &mut self.frame;
        for i in 0..n {
            if f.kind[i] != ParticleKind::Fluid {
                continue;
            }
            let dv = dt * acc[i].0;
            dp += f.mass[i] * dv;
            ext += f.mass[i] * dt * acc[i].1;
            fluid_mass += f.mass[i];
            f.velocity[i] += dv;
            let v = f.velocity[i];
            f.position[i] += dt * v;
        }
        let body_acc: Vec<Vec3> = acc.iter().map(|a| a.0).collect();
        self.advance_bodies(&body_acc, dt);
        self.frame.time += dt;
        self.step_count += 1;
        self.check_stability()?;
        Ok(StepDiagnostics {
            step: self.step_count,
            time: self.frame.time,
            dt,
            fluid_mass,
            fluid_momentum_change: dp,
            external_impulse: ext,
            max_speed: self.max_speed(),
        })
    }

    fn advance_bodies(&mut self, acc: &[Vec3], dt: f64) {
        let planar = self.dim == Dimensionality::Two;
        let f = &mut self.frame;
        for body in &mut self.bodies {
            let mut force = Vec3::zeros();
            let mut torque = Vec3::zeros();
            for &k in &body.members {
                let fk = f.mass[k] * acc[k];
                force += fk;
                torque += (f.position[k] - body.com).cross(&fk);
            }
            body.velocity += dt * force / body.mass;
            if planar {
                body.velocity.y = 0.0;
                let r = body.rotation.matrix();
                let iyy = (r * body.inertia * r.transpose())[(1, 1)];
                body.omega = Vec3::new(0.0, body.omega.y + dt * torque.y / iyy, 0.0);
            } else {
                let r = body.rotation.matrix();
                let iw = r * body.inertia * r.transpose();
                let gyro = body.omega.cross(&(iw * body.omega));
                if let Some(inv) = iw.try_inverse() {
                    body.omega += dt * inv * (torque - gyro);
                }
            }
            body.com += dt * body.velocity;
            let angle = body.omega.norm() * dt;
            if angle > 0.0 {
                let axis = Unit::new_normalize(body.omega);
                body.rotation = Rotation3::from_axis_angle(&axis, angle) * body.rotation;
            }
            for (idx, &k) in body.members.iter().enumerate() {
                let x = body.member_position(idx);
                f.position[k] = x;
                f.velocity[k] = body.velocity + body.omega.cross(&(x - body.com));
            }
        }
    }

    fn check_stability(&self) -> Result<(), BlowUpError> {
        let f = &self.frame;
        let fail = |i: usize, reason| BlowUpError {
            step: self.step_count,
            time: f.time,
            particle: f.id[i],
            reason,
        };
        for i in 0..f.len() {
            if f.kind[i] == ParticleKind::Boundary {
                continue;
            }
            if !f.position[i].iter().all(|v| v.is_finite()) || !f.density[i].is_finite() {
                return Err(fail(i, BlowUpReason::NonFinite));
            }
            let speed = f.velocity[i].norm();
            if !(speed <= self.speed_limit) {
                return Err(fail(
                    i,
                    BlowUpReason::Velocity {
                        speed,
                        limit: self.speed_limit,
                    },
                ));
            }
            if f.kind[i] == ParticleKind::Fluid {
                let ratio = f.density[i] / self.physics.rest_density[i];
                if !(0.5..=2.0).contains(&ratio) {
                    return Err(fail(i, BlowUpReason::Density { ratio }));
                }
            }
        }
        Ok(())
    }
}
