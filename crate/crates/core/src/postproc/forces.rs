//! Fluid loads on boundary structures, recovered from frame state with the
//! solver's own pair interaction terms.

use serde::{Deserialize, Serialize};

use super::{PostprocError, RunData, TimeSeries};
use crate::case::{CaseDefinition, Vec3};
use crate::particles::{ParticleFrame, ParticleKind};
use crate::sph::{ForceField, Physics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionForce {
    pub group: u32,
    /// Particles in the selected group. A near-zero force on a tiny or
    /// unexpected group usually means the wrong group was picked.
    pub group_size: usize,
    /// Total force on the group per frame; N, or N/m in planar runs.
    pub total: TimeSeries,
    /// Per frame, each member's position and force.
    pub per_particle: Vec<Vec<(Vec3, Vec3)>>,
}

fn physics(case: &CaseDefinition, frame: &ParticleFrame) -> Result<Physics, PostprocError> {
    Physics::new(case, frame).map_err(|e| PostprocError::InvalidArgument(e.to_string()))
}

/// Force exerted by the fluid on each member of `group` in one frame:
/// Σᵢ mₖ·aₖ←ᵢ over fluid neighbours i (pressure, viscous and artificial
/// viscous terms).
fn member_forces(case: &CaseDefinition, frame: &ParticleFrame, group: u32) -> Result<Vec<(Vec3, Vec3)>, PostprocError> {
    let ph = physics(case, frame)?;
    let ff = ForceField::new(&ph, frame);
    Ok(frame
        .indices_of_group(group)
        .into_iter()
        .map(|k| {
            let mut f = Vec3::zeros();
            ff.for_each_neighbor(k, |i, d, r| {
                if frame.kind[i] == ParticleKind::Fluid {
                    f += frame.mass[k] * ff.pair_acceleration(k, i, &d, r);
                }
            });
            (frame.position[k], f)
        })
        .collect())
}

/// Fluid load on a boundary or floating group per frame.
pub fn reaction_force(run: &RunData, group: u32) -> Result<ReactionForce, PostprocError> {
    let group_size = run.require_group(group, &[ParticleKind::Boundary, ParticleKind::Floating], "boundary or floating")?;
    let per_particle = run
        .frames
        .iter()
        .map(|f| member_forces(&run.case, f, group))
        .collect::<Result<Vec<_>, _>>()?;
    let totals = per_particle.iter().map(|v| v.iter().map(|(_, f)| f).sum()).collect();
    let units = if run.first().is_planar() { "N/m" } else { "N" };
    Ok(ReactionForce {
        group,
        group_size,
        total: TimeSeries::vector(&format!("reaction_force_group_{group}"), units, run.times(), totals),
        per_particle,
    })
}

/// The same load seen from the fluid side: −Σᵢ mᵢ Σₖ aᵢ←ₖ over fluid
/// particles i and group members k. Equal to the reaction force by the
/// antisymmetry of the pair terms.
pub fn pair_force_bookkeeping(case: &CaseDefinition, frame: &ParticleFrame, group: u32) -> Result<Vec3, PostprocError> {
    let ph = physics(case, frame)?;
    let ff = ForceField::new(&ph, frame);
    let mut total = Vec3::zeros();
    for i in frame.indices_of_kind(ParticleKind::Fluid) {
        ff.for_each_neighbor(i, |k, d, r| {
            if frame.group[k] == group && frame.kind[k] != ParticleKind::Fluid {
                total -= frame.mass[i] * ff.pair_acceleration(i, k, &d, r);
            }
        });
    }
    Ok(total)
}

/// M(t) = Σ (rᵢ − base) × Fᵢ(t), with the component along `axis` as a
/// fourth column.
pub fn bending_moment(forces: &ReactionForce, base: &Vec3, axis: &Vec3) -> Result<TimeSeries, PostprocError> {
    if forces.per_particle.is_empty() {
        return Err(PostprocError::InvalidArgument("per-particle forces are required".into()));
    }
    let a = if axis.norm() > 0.0 { axis.normalize() } else { Vec3::zeros() };
    let values = forces
        .per_particle
        .iter()
        .map(|members| {
            let m: Vec3 = members.iter().map(|(r, f)| (r - base).cross(f)).sum();
            vec![m.x, m.y, m.z, m.dot(&a)]
        })
        .collect();
    let units = if forces.total.units == "N/m" { "N*m/m" } else { "N*m" };
    Ok(TimeSeries {
        label: format!("bending_moment_group_{}", forces.group),
        units: units.into(),
        columns: vec!["x".into(), "y".into(), "z".into(), "about_axis".into()],
        times: forces.total.times.clone(),
        values,
    })
}
