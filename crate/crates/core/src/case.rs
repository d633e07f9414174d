//! Typed simulation case: geometry primitives, HBP materials, numerics and run
//! controls, plus semantic validation that does not depend on any file format.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Spatial dimensionality of a case. Two-dimensional cases live in the x–z
/// plane with the y axis suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimensionality {
    Two,
    Three,
}

impl Dimensionality {
    pub fn from_int(d: u32) -> Option<Self> {
        match d {
            2 => Some(Self::Two),
            3 => Some(Self::Three),
            _ => None,
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_int() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Solid block, filled completely with particles of its role.
    Box,
    /// Fluid region filled up to whatever is already there (walls, other phases).
    FillRegion,
    /// Boundary wall whose wetted face is the local z = 0 plane; layers grow
    /// along local −z, away from the fluid side.
    PlaneWall,
}

impl PrimitiveKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Box => "box",
            Self::FillRegion => "fill",
            Self::PlaneWall => "wall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Fluid,
    FixedBoundary,
    FloatingBody,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fluid => "fluid",
            Self::FixedBoundary => "fixed",
            Self::FloatingBody => "floating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fluid" => Some(Self::Fluid),
            "fixed" => Some(Self::FixedBoundary),
            "floating" => Some(Self::FloatingBody),
            _ => None,
        }
    }
}

/// Local coordinate frame of a primitive. Points are rotated about the frame
/// origin (x first, then y, then z; angles in degrees) and then translated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Vec3,
    pub rotation_deg: Vec3,
}

impl Default for Frame {
    fn default() -> Self {
        Self::at(Vec3::zeros())
    }
}

impl Frame {
    pub fn at(origin: Vec3) -> Self {
        Self {
            origin,
            rotation_deg: Vec3::zeros(),
        }
    }

    pub fn rotated(origin: Vec3, rotation_deg: Vec3) -> Self {
        Self {
            origin,
            rotation_deg,
        }
    }

    /// Rotation matrix R = Rz · Ry · Rx.
    pub fn rotation(&self) -> Rotation3<f64> {
        let r = self.rotation_deg.map(f64::to_radians);
        Rotation3::from_axis_angle(&Vector3::z_axis(), r.z)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), r.y)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), r.x)
    }

    pub fn to_global(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local + self.origin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryPrimitive {
    pub kind: PrimitiveKind,
    pub role: Role,
    pub group_id: u32,
    pub frame: Frame,
    /// Lengths along the local axes, m. For walls the z entry is unused (the
    /// thickness comes from `layers`); for 2D cases the y entry is zero.
    pub extents: Vec3,
    /// Boundary layer count; walls only.
    pub layers: Option<u32>,
    /// Solid density of a floating body, kg/m³.
    pub mass_density: Option<f64>,
    /// Shear of local x along local z, degrees. Non-zero values describe a
    /// parallelogram rather than a rectangle.
    pub skew_deg: f64,
}

impl GeometryPrimitive {
    pub fn new(kind: PrimitiveKind, role: Role, group_id: u32, frame: Frame, extents: Vec3) -> Self {
        Self {
            kind,
            role,
            group_id,
            frame,
            extents,
            layers: None,
            mass_density: None,
            skew_deg: 0.0,
        }
    }

    pub fn wall(group_id: u32, frame: Frame, extents: Vec3, layers: u32) -> Self {
        Self {
            layers: Some(layers),
            ..Self::new(PrimitiveKind::PlaneWall, Role::FixedBoundary, group_id, frame, extents)
        }
    }

    pub fn fluid_box(group_id: u32, frame: Frame, extents: Vec3) -> Self {
        Self::new(PrimitiveKind::Box, Role::Fluid, group_id, frame, extents)
    }

    pub fn fill(group_id: u32, frame: Frame, extents: Vec3) -> Self {
        Self::new(PrimitiveKind::FillRegion, Role::Fluid, group_id, frame, extents)
    }

    pub fn solid_box(group_id: u32, frame: Frame, extents: Vec3) -> Self {
        Self::new(PrimitiveKind::Box, Role::FixedBoundary, group_id, frame, extents)
    }

    pub fn floating_box(group_id: u32, frame: Frame, extents: Vec3, mass_density: f64) -> Self {
        Self {
            mass_density: Some(mass_density),
            ..Self::new(PrimitiveKind::Box, Role::FloatingBody, group_id, frame, extents)
        }
    }

    pub fn with_skew(mut self, skew_deg: f64) -> Self {
        self.skew_deg = skew_deg;
        self
    }

    /// Axes (0 = x, 1 = y, 2 = z) that carry a length for this primitive.
    pub fn active_axes(&self, dim: Dimensionality) -> Vec<usize> {
        let mut axes = match self.kind {
            PrimitiveKind::PlaneWall => vec![0, 1],
            _ => vec![0, 1, 2],
        };
        if dim == Dimensionality::Two {
            axes.retain(|&a| a != 1);
        }
        axes
    }

    /// Short path used in reports, e.g. `wall[g2]`.
    pub fn path(&self) -> String {
        format!("{}[g{}]", self.kind.tag(), self.group_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub group_id: u32,
    /// Reference density, kg/m³.
    pub rho0: f64,
    /// Consistency index, Pa·sⁿ.
    pub mu: f64,
    /// Power-law index.
    pub n: f64,
    /// Yield stress, Pa.
    pub tau_y: f64,
    /// Papanastasiou regularisation exponent, s.
    pub m_papanastasiou: f64,
}

impl MaterialSpec {
    pub fn newtonian(group_id: u32, rho0: f64, mu: f64) -> Self {
        Self {
            group_id,
            rho0,
            mu,
            n: 1.0,
            tau_y: 0.0,
            m_papanastasiou: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalSpec {
    /// Initial particle spacing, m.
    pub dp: f64,
    /// Speed of sound, m/s.
    pub cs: f64,
    /// Artificial viscosity coefficient.
    pub alpha: f64,
    /// Courant factor.
    pub cfl: f64,
    /// Smoothing length coefficient: h = h_coef · dp · √d.
    pub h_coef: f64,
}

impl NumericalSpec {
    pub fn smoothing_length(&self, dim: Dimensionality) -> f64 {
        self.h_coef * self.dp * dim.as_f64().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunControls {
    /// Physical duration, s.
    pub t_end: f64,
    /// Output interval, s.
    pub output_interval: f64,
    pub seed: u64,
}

impl RunControls {
    /// Number of frames a complete run writes, including t = 0.
    pub fn frame_count(&self) -> usize {
        (self.t_end / self.output_interval + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDefinition {
    pub dim: Dimensionality,
    /// m/s².
    pub gravity: Vec3,
    pub primitives: Vec<GeometryPrimitive>,
    pub materials: Vec<MaterialSpec>,
    pub numerics: NumericalSpec,
    pub controls: RunControls,
}

impl CaseDefinition {
    pub fn smoothing_length(&self) -> f64 {
        self.numerics.smoothing_length(self.dim)
    }

    pub fn material(&self, group_id: u32) -> Option<&MaterialSpec> {
        self.materials.iter().find(|m| m.group_id == group_id)
    }

    pub fn primitive(&self, group_id: u32) -> Option<&GeometryPrimitive> {
        self.primitives.iter().find(|p| p.group_id == group_id)
    }

    /// Reference density used for boundary and floating particles in the
    /// equation of state: the densest fluid phase.
    pub fn boundary_rho0(&self) -> f64 {
        self.materials
            .iter()
            .map(|m| m.rho0)
            .fold(f64::NAN, f64::max)
    }
}

/// Default speed of sound, 10·√(2·g·H) with H the tallest fluid column.
pub fn default_speed_of_sound(gravity: &Vec3, fluid_height: f64) -> f64 {
    10.0 * (2.0 * gravity.norm() * fluid_height).sqrt()
}

/// Minimum number of boundary layers that gives a fluid particle at the wall a
/// full kernel support: ⌈2h/dp⌉.
pub fn required_boundary_layers(numerics: &NumericalSpec, dim: Dimensionality) -> u32 {
    let ratio = 2.0 * numerics.smoothing_length(dim) / numerics.dp;
    // Guard against ratios that are integral up to rounding.
    (ratio - 1e-9).ceil().max(1.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SemanticIssue {
    EmptyGeometry,
    DuplicateGroup(u32),
    NonPositiveExtent { group: u32, axis: usize },
    NonZeroSuppressedAxis { group: u32 },
    NonPlanarRotation { group: u32 },
    NonFiniteValue { path: String },
    MissingLayers { group: u32 },
    UnexpectedLayers { group: u32 },
    UnexpectedSkew { group: u32 },
    InvalidRole { group: u32 },
    MissingMassDensity { group: u32 },
    UnexpectedMassDensity { group: u32 },
    UnboundMaterial { group: u32 },
    OrphanMaterial { group: u32 },
    DuplicateMaterial { group: u32 },
    NonPositiveDensity { group: u32 },
    NegativeConsistency { group: u32 },
    NonPositivePowerIndex { group: u32 },
    NegativeYieldStress { group: u32 },
    NegativeRegularisation { group: u32 },
    InvalidNumerics { field: &'static str },
    InvalidControls { field: &'static str },
    ZeroGravity,
}

impl fmt::Display for SemanticIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SemanticIssue::*;
        match self {
            EmptyGeometry => write!(f, "case has no geometry primitives"),
            DuplicateGroup(g) => write!(f, "group id {g} used by more than one primitive"),
            NonPositiveExtent { group, axis } => {
                write!(f, "group {group}: extent along axis {axis} must be > 0")
            }
            NonZeroSuppressedAxis { group } => {
                write!(f, "group {group}: 2D case needs zero y extent and y origin")
            }
            NonPlanarRotation { group } => {
                write!(f, "group {group}: 2D case allows rotation about y only")
            }
            NonFiniteValue { path } => write!(f, "{path}: value is not finite"),
            MissingLayers { group } => write!(f, "group {group}: wall needs a layer count"),
            UnexpectedLayers { group } => write!(f, "group {group}: layers only apply to walls"),
            UnexpectedSkew { group } => write!(f, "group {group}: walls cannot be skewed"),
            InvalidRole { group } => write!(f, "group {group}: role not allowed for this kind"),
            MissingMassDensity { group } => {
                write!(f, "group {group}: floating body needs mass density > 0")
            }
            UnexpectedMassDensity { group } => {
                write!(f, "group {group}: mass density only applies to floating bodies")
            }
            UnboundMaterial { group } => write!(f, "fluid group {group} has no material"),
            OrphanMaterial { group } => write!(f, "material for group {group} has no fluid primitive"),
            DuplicateMaterial { group } => write!(f, "group {group} has more than one material"),
            NonPositiveDensity { group } => write!(f, "group {group}: rho0 must be > 0"),
            NegativeConsistency { group } => write!(f, "group {group}: mu must be >= 0"),
            NonPositivePowerIndex { group } => write!(f, "group {group}: n must be > 0"),
            NegativeYieldStress { group } => write!(f, "group {group}: tau_y must be >= 0"),
            NegativeRegularisation { group } => write!(f, "group {group}: m must be >= 0"),
            InvalidNumerics { field } => write!(f, "numerics: invalid {field}"),
            InvalidControls { field } => write!(f, "run controls: invalid {field}"),
            ZeroGravity => write!(f, "gravity must be non-zero"),
        }
    }
}

fn finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Collect every invariant violation of `case`. The list is empty iff the case
/// is well formed.
pub fn validate_semantics(case: &CaseDefinition) -> Vec<SemanticIssue> {
    use SemanticIssue::*;
    let mut issues = Vec::new();

    if case.primitives.is_empty() {
        issues.push(EmptyGeometry);
    }
    if !finite(&case.gravity) {
        issues.push(NonFiniteValue {
            path: "gravity".into(),
        });
    } else if case.gravity.norm() == 0.0 {
        issues.push(ZeroGravity);
    }

    let mut seen = BTreeSet::new();
    let mut fluid_groups = BTreeSet::new();
    for p in &case.primitives {
        let g = p.group_id;
        if !seen.insert(g) {
            issues.push(DuplicateGroup(g));
        }
        if !finite(&p.frame.origin) || !finite(&p.frame.rotation_deg) || !finite(&p.extents) || !p.skew_deg.is_finite() {
            issues.push(NonFiniteValue { path: p.path() });
            continue;
        }
        for axis in p.active_axes(case.dim) {
            if p.extents[axis] <= 0.0 {
                issues.push(NonPositiveExtent { group: g, axis });
            }
        }
        if case.dim == Dimensionality::Two {
            if p.extents.y != 0.0 || p.frame.origin.y != 0.0 {
                issues.push(NonZeroSuppressedAxis { group: g });
            }
            if p.frame.rotation_deg.x != 0.0 || p.frame.rotation_deg.z != 0.0 {
                issues.push(NonPlanarRotation { group: g });
            }
        }
        let role_ok = match p.kind {
            PrimitiveKind::PlaneWall => p.role == Role::FixedBoundary,
            PrimitiveKind::FillRegion => p.role == Role::Fluid,
            PrimitiveKind::Box => true,
        };
        if !role_ok {
            issues.push(InvalidRole { group: g });
        }
        match (p.kind, p.layers) {
            (PrimitiveKind::PlaneWall, None) | (PrimitiveKind::PlaneWall, Some(0)) => {
                issues.push(MissingLayers { group: g })
            }
            (PrimitiveKind::PlaneWall, Some(_)) => {}
            (_, Some(_)) => issues.push(UnexpectedLayers { group: g }),
            (_, None) => {}
        }
        if p.kind == PrimitiveKind::PlaneWall && p.skew_deg != 0.0 {
            issues.push(UnexpectedSkew { group: g });
        }
        match (p.role, p.mass_density) {
            (Role::FloatingBody, Some(d)) if d > 0.0 && d.is_finite() => {}
            (Role::FloatingBody, _) => issues.push(MissingMassDensity { group: g }),
            (_, Some(_)) => issues.push(UnexpectedMassDensity { group: g }),
            _ => {}
        }
        if p.role == Role::Fluid {
            fluid_groups.insert(g);
        }
    }

    let mut material_groups = BTreeSet::new();
    for m in &case.materials {
        let g = m.group_id;
        if !material_groups.insert(g) {
            issues.push(DuplicateMaterial { group: g });
        }
        if !fluid_groups.contains(&g) {
            issues.push(OrphanMaterial { group: g });
        }
        if !(m.rho0 > 0.0 && m.rho0.is_finite()) {
            issues.push(NonPositiveDensity { group: g });
        }
        if !(m.mu >= 0.0 && m.mu.is_finite()) {
            issues.push(NegativeConsistency { group: g });
        }
        if !(m.n > 0.0 && m.n.is_finite()) {
            issues.push(NonPositivePowerIndex { group: g });
        }
        if !(m.tau_y >= 0.0 && m.tau_y.is_finite()) {
            issues.push(NegativeYieldStress { group: g });
        }
        if !(m.m_papanastasiou >= 0.0 && m.m_papanastasiou.is_finite()) {
            issues.push(NegativeRegularisation { group: g });
        }
    }
    for g in &fluid_groups {
        if !material_groups.contains(g) {
            issues.push(UnboundMaterial { group: *g });
        }
    }

    let n = &case.numerics;
    if !(n.dp > 0.0 && n.dp.is_finite()) {
        issues.push(InvalidNumerics { field: "dp" });
    }
    if !(n.cs > 0.0 && n.cs.is_finite()) {
        issues.push(InvalidNumerics { field: "cs" });
    }
    if !(n.alpha >= 0.0 && n.alpha.is_finite()) {
        issues.push(InvalidNumerics { field: "alpha" });
    }
    if !(n.cfl > 0.0 && n.cfl <= 1.0) {
        issues.push(InvalidNumerics { field: "cfl" });
    }
    if !(n.h_coef >= 1.0 && n.h_coef.is_finite()) {
        issues.push(InvalidNumerics { field: "h_coef" });
    }

    let c = &case.controls;
    if !(c.t_end > 0.0 && c.t_end.is_finite()) {
        issues.push(InvalidControls { field: "t_end" });
    }
    if !(c.output_interval > 0.0 && c.output_interval <= c.t_end) {
        issues.push(InvalidControls {
            field: "output_interval",
        });
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn well_formed_dam_break_has_no_issues() {
        assert!(validate_semantics(&fixtures::c1_dam_break()).is_empty());
    }

    #[test]
    fn negative_yield_stress_is_reported() {
        let mut case = fixtures::c1_dam_break();
        case.materials[0].tau_y = -5.0;
        let g = case.materials[0].group_id;
        assert_eq!(validate_semantics(&case), vec![SemanticIssue::NegativeYieldStress { group: g }]);
    }

    #[test]
    fn fluid_without_material_is_unbound() {
        let mut case = fixtures::c1_dam_break();
        let g = case.materials[0].group_id;
        case.materials.clear();
        assert_eq!(validate_semantics(&case), vec![SemanticIssue::UnboundMaterial { group: g }]);
    }

    #[test]
    fn validation_is_pure() {
        let mut case = fixtures::c4_erosion();
        case.numerics.cfl = 2.0;
        case.primitives[0].extents.x = -1.0;
        assert_eq!(validate_semantics(&case), validate_semantics(&case));
        assert_eq!(validate_semantics(&case).len(), 2);
    }

    #[test]
    fn two_d_rejects_out_of_plane_geometry() {
        let mut case = fixtures::c1_dam_break();
        case.primitives[0].extents.y = 0.1;
        case.primitives[1].frame.rotation_deg.z = 10.0;
        let issues = validate_semantics(&case);
        assert!(issues.contains(&SemanticIssue::NonZeroSuppressedAxis {
            group: case.primitives[0].group_id
        }));
        assert!(issues.contains(&SemanticIssue::NonPlanarRotation {
            group: case.primitives[1].group_id
        }));
    }

    #[test]
    fn layer_rule_direct_arithmetic() {
        let n = NumericalSpec {
            dp: 0.1,
            cs: 10.0,
            alpha: 0.0,
            cfl: 0.2,
            h_coef: 1.2,
        };
        // ceil(2 · 1.2 · 0.1 · √2 / 0.1) = ceil(3.394) = 4
        assert_eq!(required_boundary_layers(&n, Dimensionality::Two), 4);
        // ceil(2 · 1.2 · √3) = ceil(4.157) = 5
        assert_eq!(required_boundary_layers(&n, Dimensionality::Three), 5);
        let n1 = NumericalSpec { h_coef: 1.0, ..n };
        assert_eq!(required_boundary_layers(&n1, Dimensionality::Two), 3);
    }

    #[test]
    fn frame_rotation_order_is_x_then_y_then_z() {
        let f = Frame::rotated(Vec3::zeros(), Vec3::new(90.0, 0.0, 90.0));
        // x-rotation leaves e_x alone, z-rotation sends it to e_y.
        let p = f.to_global(&Vec3::x());
        assert!((p - Vec3::y()).norm() < 1e-12);
        // e_z → −e_y under Rx(90), then → e_x under Rz(90).
        let q = f.to_global(&Vec3::z());
        assert!((q - Vec3::x()).norm() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn layers_monotone_in_h_coef(dp in 1e-3f64..1.0, a in 1.0f64..4.0, b in 1.0f64..4.0, three in any::<bool>()) {
                let dim = if three { Dimensionality::Three } else { Dimensionality::Two };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let mk = |h_coef| NumericalSpec { dp, cs: 1.0, alpha: 0.0, cfl: 0.5, h_coef };
                let l_lo = required_boundary_layers(&mk(lo), dim);
                let l_hi = required_boundary_layers(&mk(hi), dim);
                prop_assert!(l_lo <= l_hi);
                prop_assert!(l_lo >= 3);
            }
        }
    }
}
