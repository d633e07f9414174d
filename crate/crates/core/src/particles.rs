//! Particle frames and deterministic lattice generation from a case.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{validate_semantics, CaseDefinition, Dimensionality, Frame, GeometryPrimitive, PrimitiveKind, Role, SemanticIssue, Vec3};
use crate::sph::neighbors::NeighborGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleKind {
    Fluid,
    Boundary,
    Floating,
}

impl ParticleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fluid => "fluid",
            Self::Boundary => "boundary",
            Self::Floating => "floating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fluid" => Some(Self::Fluid),
            "boundary" => Some(Self::Boundary),
            "floating" => Some(Self::Floating),
            _ => None,
        }
    }

    pub fn from_role(role: Role) -> Self {
        match role {
            Role::Fluid => Self::Fluid,
            Role::FixedBoundary => Self::Boundary,
            Role::FloatingBody => Self::Floating,
        }
    }
}

/// One time snapshot, stored column-wise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleFrame {
    pub time: f64,
    pub id: Vec<u32>,
    pub kind: Vec<ParticleKind>,
    pub group: Vec<u32>,
    pub position: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
    pub density: Vec<f64>,
    pub pressure: Vec<f64>,
    pub mass: Vec<f64>,
}

impl ParticleFrame {
    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        id: u32,
        kind: ParticleKind,
        group: u32,
        position: Vec3,
        velocity: Vec3,
        density: f64,
        pressure: f64,
        mass: f64,
    ) {
        self.id.push(id);
        self.kind.push(kind);
        self.group.push(group);
        self.position.push(position);
        self.velocity.push(velocity);
        self.density.push(density);
        self.pressure.push(pressure);
        self.mass.push(mass);
    }

    pub fn indices_of_group(&self, group: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.group[i] == group).collect()
    }

    pub fn indices_of_kind(&self, kind: ParticleKind) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kind[i] == kind).collect()
    }

    pub fn total_mass(&self, kind: ParticleKind) -> f64 {
        self.indices_of_kind(kind).iter().map(|&i| self.mass[i]).sum()
    }

    /// Sorted list of distinct group ids of the given kind.
    pub fn groups_of_kind(&self, kind: ParticleKind) -> Vec<u32> {
        let mut g: Vec<u32> = (0..self.len()).filter(|&i| self.kind[i] == kind).map(|i| self.group[i]).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// True when every particle lies in the y = 0 plane.
    pub fn is_planar(&self) -> bool {
        self.position.iter().all(|p| p.y == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("case is not semantically valid: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidCase(Vec<SemanticIssue>),
    #[error("fluid group {fluid} overlaps group {solid}: particles {distance:.4} m apart (< 0.5·dp)")]
    Overlap { fluid: u32, solid: u32, distance: f64 },
}

/// Apply `frame` to local points: rotate about the frame origin, then
/// translate.
pub fn transform_local_to_global(points: &[Vec3], frame: &Frame) -> Vec<Vec3> {
    let r = frame.rotation();
    points.iter().map(|p| r * p + frame.origin).collect()
}

fn lattice_count(extent: f64, dp: f64) -> usize {
    ((extent / dp) + 1e-9).floor().max(1.0) as usize
}

/// Cell-centred lattice sites of a primitive in its own local frame.
pub fn local_lattice(prim: &GeometryPrimitive, dim: Dimensionality, dp: f64) -> Vec<Vec3> {
    let nx = lattice_count(prim.extents.x, dp);
    let ny = if dim == Dimensionality::Two { 1 } else { lattice_count(prim.extents.y, dp) };
    let ycoord = |j: usize| if dim == Dimensionality::Two { 0.0 } else { (j as f64 + 0.5) * dp };
    let mut out = Vec::new();
    match prim.kind {
        PrimitiveKind::PlaneWall => {
            let layers = prim.layers.unwrap_or(1) as usize;
            for k in 0..layers {
                let z = -(k as f64 + 0.5) * dp;
                for j in 0..ny {
                    for i in 0..nx {
                        out.push(Vec3::new((i as f64 + 0.5) * dp, ycoord(j), z));
                    }
                }
            }
        }
        PrimitiveKind::Box | PrimitiveKind::FillRegion => {
            let nz = lattice_count(prim.extents.z, dp);
            let shear = prim.skew_deg.to_radians().tan();
            for k in 0..nz {
                let z = (k as f64 + 0.5) * dp;
                for j in 0..ny {
                    for i in 0..nx {
                        out.push(Vec3::new((i as f64 + 0.5) * dp + z * shear, ycoord(j), z));
                    }
                }
            }
        }
    }
    out
}

/// Global particle positions of one primitive before any overlap handling.
pub fn primitive_positions(prim: &GeometryPrimitive, dim: Dimensionality, dp: f64) -> Vec<Vec3> {
    let mut pts = transform_local_to_global(&local_lattice(prim, dim, dp), &prim.frame);
    if dim == Dimensionality::Two {
        for p in &mut pts {
            p.y = 0.0;
        }
    }
    pts
}

/// Per-particle mass of a primitive: ρ·dpᵈ with ρ the material rest density
/// (fluids), the body density (floating) or the boundary reference density.
pub fn particle_mass(case: &CaseDefinition, prim: &GeometryPrimitive) -> f64 {
    let vol = case.numerics.dp.powi(case.dim.as_int() as i32);
    let rho = match prim.role {
        Role::Fluid => case.material(prim.group_id).map(|m| m.rho0).unwrap_or(f64::NAN),
        Role::FloatingBody => prim.mass_density.unwrap_or(f64::NAN),
        Role::FixedBoundary => case.boundary_rho0(),
    };
    rho * vol
}

/// Rest density of the particles of a primitive as used by the equation of
/// state.
pub fn particle_rest_density(case: &CaseDefinition, prim: &GeometryPrimitive) -> f64 {
    match prim.role {
        Role::Fluid => case.material(prim.group_id).map(|m| m.rho0).unwrap_or(f64::NAN),
        _ => case.boundary_rho0(),
    }
}

/// Lattice-fill a case into its t = 0 particle frame.
///
/// Solid primitives (walls, solid boxes, floating bodies) are generated first
/// so that fluid primitives can be checked or clipped against them; the output
/// is then assembled in declaration order and ids are assigned sequentially.
pub fn generate_particles(case: &CaseDefinition) -> Result<ParticleFrame, GenerationError> {
    let issues = validate_semantics(case);
    if !issues.is_empty() {
        return Err(GenerationError::InvalidCase(issues));
    }
    let dp = case.numerics.dp;
    let dim = case.dim;

    let mut per_prim: Vec<Vec<Vec3>> = vec![Vec::new(); case.primitives.len()];
    let mut solid_pos = Vec::new();
    let mut solid_group = Vec::new();
    for (k, prim) in case.primitives.iter().enumerate() {
        if prim.role != Role::Fluid {
            per_prim[k] = primitive_positions(prim, dim, dp);
            solid_group.extend(std::iter::repeat_n(prim.group_id, per_prim[k].len()));
            solid_pos.extend_from_slice(&per_prim[k]);
        }
    }
    let solid_grid = NeighborGrid::build(&solid_pos, dp);

    let mut occupied = solid_pos.clone();
    for (k, prim) in case.primitives.iter().enumerate() {
        if prim.role != Role::Fluid {
            continue;
        }
        let sites = primitive_positions(prim, dim, dp);
        match prim.kind {
            PrimitiveKind::FillRegion => {
                // Keep sites at least one spacing from anything already placed.
                let grid = NeighborGrid::build(&occupied, dp);
                let keep: Vec<Vec3> = sites
                    .into_iter()
                    .filter(|p| grid.nearest_within(&occupied, p).is_none_or(|(_, r)| r >= dp * (1.0 - 1e-6)))
                    .collect();
                per_prim[k] = keep;
            }
            _ => {
                for p in &sites {
                    if let Some((j, r)) = solid_grid.nearest_within(&solid_pos, p) {
                        if r < 0.5 * dp {
                            return Err(GenerationError::Overlap {
                                fluid: prim.group_id,
                                solid: solid_group[j],
                                distance: r,
                            });
                        }
                    }
                }
                per_prim[k] = sites;
            }
        }
        occupied.extend_from_slice(&per_prim[k]);
    }

    let mut frame = ParticleFrame::default();
    let mut next_id = 0u32;
    for (k, prim) in case.primitives.iter().enumerate() {
        let kind = ParticleKind::from_role(prim.role);
        let mass = particle_mass(case, prim);
        let rho = particle_rest_density(case, prim);
        for p in &per_prim[k] {
            frame.push(next_id, kind, prim.group_id, *p, Vec3::zeros(), rho, 0.0, mass);
            next_id += 1;
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::MaterialSpec;
    use crate::fixtures;
    use proptest::prelude::*;

    fn single_fluid_case(extents: Vec3, rotation_y: f64) -> CaseDefinition {
        let mut case = fixtures::c1_dam_break();
        case.numerics.dp = 0.1;
        case.primitives = vec![GeometryPrimitive::fluid_box(
            10,
            Frame::rotated(Vec3::new(1.0, 0.0, 2.0), Vec3::new(0.0, rotation_y, 0.0)),
            extents,
        )];
        case.materials = vec![MaterialSpec::newtonian(10, 1000.0, 1.0)];
        case
    }

    #[test]
    fn identity_frame_leaves_points_alone() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.0, 7.0)];
        assert_eq!(transform_local_to_global(&pts, &Frame::default()), pts);
    }

    #[test]
    fn quarter_turn_about_z() {
        let f = Frame::rotated(Vec3::zeros(), Vec3::new(0.0, 0.0, 90.0));
        let out = transform_local_to_global(&[Vec3::x()], &f);
        // cos(π/2) = 0, sin(π/2) = 1
        assert!((out[0] - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn box_lattice_count_matches_cell_centres() {
        let case = single_fluid_case(Vec3::new(1.0, 0.0, 0.5), 0.0);
        let frame = generate_particles(&case).unwrap();
        assert_eq!(frame.len(), 50);
        // Brute-force oracle: enumerate centres (i+½)dp inside [0,1]×[0,0.5].
        let mut expected = Vec::new();
        for k in 0..5 {
            for i in 0..10 {
                expected.push(Vec3::new(1.0 + (i as f64 + 0.5) * 0.1, 0.0, 2.0 + (k as f64 + 0.5) * 0.1));
            }
        }
        for (p, q) in frame.position.iter().zip(&expected) {
            assert!((p - q).norm() < 1e-12);
        }
        let mass = 1000.0 * 0.1 * 0.1;
        assert!(frame.mass.iter().all(|&m| (m - mass).abs() < 1e-12));
    }

    #[test]
    fn inclined_box_bounds_match_rotated_box() {
        let (lx, lz, deg) = (1.0, 0.5, 30.0_f64);
        let case = single_fluid_case(Vec3::new(lx, 0.0, lz), deg);
        let frame = generate_particles(&case).unwrap();
        // Analytic bounding box of the rotated rectangle corners.
        let rot = Frame::rotated(Vec3::new(1.0, 0.0, 2.0), Vec3::new(0.0, deg, 0.0));
        let corners: Vec<Vec3> = [(0.0, 0.0), (lx, 0.0), (0.0, lz), (lx, lz)]
            .iter()
            .map(|&(x, z)| rot.to_global(&Vec3::new(x, 0.0, z)))
            .collect();
        for axis in [0, 2] {
            let amin = corners.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
            let amax = corners.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
            let pmin = frame.position.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
            let pmax = frame.position.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
            assert!(pmin >= amin - 1e-12 && pmin - amin <= 0.1, "axis {axis}");
            assert!(pmax <= amax + 1e-12 && amax - pmax <= 0.1, "axis {axis}");
        }
    }

    #[test]
    fn single_layer_wall_is_generated_as_given() {
        let mut case = fixtures::c1_dam_break();
        case.primitives[0].layers = Some(1);
        let frame = generate_particles(&case).unwrap();
        let floor = frame.indices_of_group(case.primitives[0].group_id);
        assert!(floor.iter().all(|&i| (frame.position[i].z + 0.01).abs() < 1e-12));
    }

    #[test]
    fn overlapping_fluid_is_rejected() {
        let mut case = fixtures::c1_dam_break();
        let debris = case.primitives.iter_mut().find(|p| p.group_id == 10).unwrap();
        debris.frame.origin.x = -0.02;
        assert!(matches!(generate_particles(&case), Err(GenerationError::Overlap { fluid: 10, .. })));
    }

    #[test]
    fn fixtures_keep_one_spacing_between_fluid_and_walls() {
        for id in fixtures::CASE_IDS {
            let (case, _) = fixtures::by_id(id).unwrap();
            let frame = generate_particles(&case).unwrap();
            let dp = case.numerics.dp;
            let solid: Vec<Vec3> = (0..frame.len()).filter(|&i| frame.kind[i] != ParticleKind::Fluid).map(|i| frame.position[i]).collect();
            let grid = NeighborGrid::build(&solid, 2.0 * dp);
            let mut min = f64::INFINITY;
            for i in frame.indices_of_kind(ParticleKind::Fluid) {
                if let Some((_, r)) = grid.nearest_within(&solid, &frame.position[i]) {
                    min = min.min(r);
                }
            }
            assert!(min >= dp * (1.0 - 1e-6), "{id}: min fluid–solid distance {min}");
            assert!(min <= dp * 1.5, "{id}: fluid not touching any wall ({min})");
        }
    }

    #[test]
    fn fill_region_conforms_to_existing_particles() {
        let case = fixtures::c4_erosion();
        let frame = generate_particles(&case).unwrap();
        let bed = frame.indices_of_group(11);
        // 1.2 m × 0.1 m bed at dp 0.02 is 60 × 5 sites before clipping.
        assert!(!bed.is_empty() && bed.len() <= 300);
    }

    #[test]
    fn generation_is_bit_identical() {
        let case = fixtures::c5_floating_blocks();
        assert_eq!(generate_particles(&case).unwrap(), generate_particles(&case).unwrap());
    }

    #[test]
    fn fluid_mass_matches_volume() {
        let case = fixtures::c1_dam_break();
        let frame = generate_particles(&case).unwrap();
        let rho0 = case.materials[0].rho0;
        let (lx, lz) = (0.4, 0.4);
        let exact = rho0 * lx * lz;
        let dp = case.numerics.dp;
        let bound = 2.0 * dp * (2.0 * (lx + lz)) / (lx * lz);
        let got = frame.total_mass(ParticleKind::Fluid);
        assert!(((got - exact) / exact).abs() <= bound);
    }

    proptest! {
        #[test]
        fn rigid_transform_preserves_distances(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 2..30),
            rot in (-360.0f64..360.0, -360.0f64..360.0, -360.0f64..360.0),
            origin in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
        ) {
            let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
            let frame = Frame::rotated(Vec3::new(origin.0, origin.1, origin.2), Vec3::new(rot.0, rot.1, rot.2));
            let out = transform_local_to_global(&pts, &frame);
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let a = (pts[i] - pts[j]).norm();
                    let b = (out[i] - out[j]).norm();
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
                }
            }
        }
    }
}
