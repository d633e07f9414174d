//! Pre-processing failure detection against a reference specification.
//!
//! Six failure classes: F1 dimensions, F2 fluid–boundary interface, F3
//! boundary thickness, F4 coordinate frames, F5 document syntax, F6 component
//! set. Each detector looks at one aspect only, so a single seeded defect
//! produces a single class.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::case::{required_boundary_layers, CaseDefinition, GeometryPrimitive, NumericalSpec, PrimitiveKind, Role, Vec3};
use crate::particles::{generate_particles, GenerationError, ParticleFrame, ParticleKind};
use crate::sph::neighbors::NeighborGrid;
use crate::xml::{diff_cases, parse_case, relative_rotation_deg, ComponentRef, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureMode {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
}

impl FailureMode {
    pub const ALL: [FailureMode; 6] = [Self::F1, Self::F2, Self::F3, Self::F4, Self::F5, Self::F6];

    pub fn code(self) -> &'static str {
        match self {
            Self::F1 => "F1",
            Self::F2 => "F2",
            Self::F3 => "F3",
            Self::F4 => "F4",
            Self::F5 => "F5",
            Self::F6 => "F6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code().eq_ignore_ascii_case(s.trim()))
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::F1 => "dimensionality",
            Self::F2 => "fluid-boundary interface",
            Self::F3 => "boundary thickness",
            Self::F4 => "coordinate transformation",
            Self::F5 => "document syntax",
            Self::F6 => "structural composition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub mode: FailureMode,
    /// Component path such as `wall[g2]`, or `document` for F5.
    pub component: String,
    pub evidence: String,
    pub severity: Severity,
}

impl Finding {
    fn error(mode: FailureMode, component: impl Into<String>, evidence: impl Into<String>) -> Self {
        Self {
            mode,
            component: component.into(),
            evidence: evidence.into(),
            severity: Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn from_findings(findings: Vec<Finding>) -> Self {
        let passed = findings.is_empty();
        Self { findings, passed }
    }

    pub fn modes(&self) -> BTreeSet<FailureMode> {
        self.findings.iter().map(|f| f.mode).collect()
    }

    /// One line per finding, e.g. `F3 wall[g1]: measured 1 layer(s), need 4`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.passed {
            s.push_str("PASS no findings\n");
        }
        for f in &self.findings {
            let _ = writeln!(s, "{} {}: {}", f.mode.code(), f.component, f.evidence);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// A fluid group that must touch a wall group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactPair {
    pub fluid_group: u32,
    pub wall_group: u32,
}

impl ContactPair {
    pub fn new(fluid_group: u32, wall_group: u32) -> Self {
        Self { fluid_group, wall_group }
    }
}

/// Reference geometry a candidate is checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    /// Expected components, dimensions and frames.
    pub reference: CaseDefinition,
    /// Allowed extent deviation, m.
    pub dimension_tol: f64,
    /// Allowed origin deviation, m.
    pub translation_tol: f64,
    /// Allowed frame rotation deviation, degrees.
    pub rotation_tol_deg: f64,
    /// Fluid/wall pairs that must be in contact at t = 0.
    pub contacts: Vec<ContactPair>,
}

impl GroundTruthSpec {
    pub fn from_reference(reference: CaseDefinition, dimension_tol: f64, translation_tol: f64) -> Self {
        Self {
            reference,
            dimension_tol,
            translation_tol,
            rotation_tol_deg: 1.0,
            contacts: Vec::new(),
        }
    }

    pub fn with_contacts(mut self, contacts: Vec<ContactPair>) -> Self {
        self.contacts = contacts;
        self
    }

    /// Expected (kind, role) → count table.
    pub fn expected_components(&self) -> Vec<(PrimitiveKind, Role, usize)> {
        let mut keys: Vec<(PrimitiveKind, Role)> = self.reference.primitives.iter().map(|p| (p.kind, p.role)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(k, r)| (k, r, self.reference.primitives.iter().filter(|p| p.kind == k && p.role == r).count()))
            .collect()
    }
}

fn matched<'a>(case: &'a CaseDefinition, truth: &'a GroundTruthSpec) -> Vec<(&'a GeometryPrimitive, &'a GeometryPrimitive)> {
    truth
        .reference
        .primitives
        .iter()
        .filter_map(|r| {
            case.primitives
                .iter()
                .find(|c| ComponentRef::of(c) == ComponentRef::of(r))
                .map(|c| (r, c))
        })
        .collect()
}

/// Extents on active axes agree only after reordering.
fn is_transposed(r: &GeometryPrimitive, c: &GeometryPrimitive, axes: &[usize], tol: f64) -> bool {
    let differs = axes.iter().any(|&a| (r.extents[a] - c.extents[a]).abs() > tol);
    if !differs {
        return false;
    }
    let mut re: Vec<f64> = axes.iter().map(|&a| r.extents[a]).collect();
    let mut ce: Vec<f64> = axes.iter().map(|&a| c.extents[a]).collect();
    re.sort_by(f64::total_cmp);
    ce.sort_by(f64::total_cmp);
    re.iter().zip(&ce).all(|(a, b)| (a - b).abs() <= tol)
}

/// F1: extents outside tolerance on matched components. Transposed extents
/// are a composition error and left to [`check_structure`].
pub fn check_dimensions(case: &CaseDefinition, truth: &GroundTruthSpec) -> Vec<Finding> {
    let tol = truth.dimension_tol;
    let mut out = Vec::new();
    for (r, c) in matched(case, truth) {
        let axes = r.active_axes(truth.reference.dim);
        if is_transposed(r, c, &axes, tol) {
            continue;
        }
        for a in axes {
            let delta = c.extents[a] - r.extents[a];
            if delta.abs() > tol {
                out.push(Finding::error(
                    FailureMode::F1,
                    r.path(),
                    format!(
                        "extent along {} is {} m, expected {} ± {} m (delta {:+} m)",
                        ["x", "y", "z"][a],
                        c.extents[a],
                        r.extents[a],
                        tol,
                        delta
                    ),
                ));
            }
        }
    }
    out
}

/// F2: fluid penetrating solids (closer than 0.5·dp) or a declared contact
/// left open (gap above 2·dp).
pub fn check_interface(frame: &ParticleFrame, numerics: &NumericalSpec, contacts: &[ContactPair]) -> Vec<Finding> {
    let dp = numerics.dp;
    let mut out = Vec::new();
    let solid: Vec<usize> = (0..frame.len()).filter(|&i| frame.kind[i] != ParticleKind::Fluid).collect();
    let solid_pos: Vec<Vec3> = solid.iter().map(|&i| frame.position[i]).collect();
    let grid = NeighborGrid::build(&solid_pos, dp);
    let mut worst: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
    for i in frame.indices_of_kind(ParticleKind::Fluid) {
        grid.for_each_within(&solid_pos, &frame.position[i], 0.5 * dp, |j, _, r| {
            let key = (frame.group[i], frame.group[solid[j]]);
            let e = worst.entry(key).or_insert(f64::INFINITY);
            *e = e.min(r);
        });
    }
    for ((fg, sg), r) in worst {
        out.push(Finding::error(
            FailureMode::F2,
            format!("g{fg}/g{sg}"),
            format!("penetration: fluid group {fg} is {r:.4} m from solid group {sg} (< 0.5·dp = {} m)", 0.5 * dp),
        ));
    }
    for c in contacts {
        let fluid = frame.indices_of_group(c.fluid_group);
        let wall = frame.indices_of_group(c.wall_group);
        if fluid.is_empty() || wall.is_empty() {
            continue;
        }
        let wall_pos: Vec<Vec3> = wall.iter().map(|&i| frame.position[i]).collect();
        let limit = 2.0 * dp;
        let g = NeighborGrid::build(&wall_pos, limit);
        let min = fluid
            .iter()
            .filter_map(|&i| g.nearest_within(&wall_pos, &frame.position[i]).map(|x| x.1))
            .fold(f64::INFINITY, f64::min);
        if min > limit {
            let shown = if min.is_finite() { format!("{min:.4} m") } else { format!("more than {limit} m") };
            out.push(Finding::error(
                FailureMode::F2,
                format!("g{}/g{}", c.fluid_group, c.wall_group),
                format!("gap: fluid group {} is {shown} from its contact wall {} (> 2·dp = {limit} m)", c.fluid_group, c.wall_group),
            ));
        }
    }
    out
}

/// Unit normal of the axis along which boundary rows are counted: the local z
/// axis for walls, the thinnest local axis for solid boxes.
fn layer_axis(p: &GeometryPrimitive, dim: crate::case::Dimensionality) -> Vec3 {
    let r = p.frame.rotation();
    let local = match p.kind {
        PrimitiveKind::PlaneWall => 2,
        _ => p
            .active_axes(dim)
            .into_iter()
            .min_by(|&a, &b| p.extents[a].total_cmp(&p.extents[b]))
            .unwrap_or(2),
    };
    let mut e = Vec3::zeros();
    e[local] = 1.0;
    r * e
}

/// Number of distinct rows of `points` along `axis`, rows being separated by
/// more than half a spacing.
pub fn count_rows(points: &[Vec3], axis: &Vec3, dp: f64) -> usize {
    let mut s: Vec<f64> = points.iter().map(|p| p.dot(axis)).collect();
    if s.is_empty() {
        return 0;
    }
    s.sort_by(f64::total_cmp);
    1 + s.windows(2).filter(|w| w[1] - w[0] > 0.5 * dp).count()
}

/// F3: fixed boundaries thinner than the kernel support requires.
pub fn check_boundary_thickness(case: &CaseDefinition, frame: &ParticleFrame, numerics: &NumericalSpec) -> Vec<Finding> {
    let need = required_boundary_layers(numerics, case.dim) as usize;
    let mut out = Vec::new();
    for p in case.primitives.iter().filter(|p| p.role == Role::FixedBoundary) {
        let pts: Vec<Vec3> = frame.indices_of_group(p.group_id).iter().map(|&i| frame.position[i]).collect();
        if pts.is_empty() {
            continue;
        }
        let rows = count_rows(&pts, &layer_axis(p, case.dim), numerics.dp);
        if rows < need {
            out.push(Finding::error(
                FailureMode::F3,
                p.path(),
                format!("measured {rows} layer(s), need {need} for full kernel support"),
            ));
        }
    }
    out
}

/// F4: rotation, translation or shear of matched components off the
/// reference frame.
pub fn check_frames(case: &CaseDefinition, truth: &GroundTruthSpec) -> Vec<Finding> {
    let mut out = Vec::new();
    for (r, c) in matched(case, truth) {
        let rot = relative_rotation_deg(&r.frame, &c.frame);
        if rot > truth.rotation_tol_deg {
            out.push(Finding::error(
                FailureMode::F4,
                r.path(),
                format!("frame rotated {rot:.3}° from reference (rotation {:?} vs {:?})", c.frame.rotation_deg.as_slice(), r.frame.rotation_deg.as_slice()),
            ));
        }
        let shift = (c.frame.origin - r.frame.origin).norm();
        if shift > truth.translation_tol {
            out.push(Finding::error(
                FailureMode::F4,
                r.path(),
                format!("origin offset {shift:.4} m from reference (tolerance {} m)", truth.translation_tol),
            ));
        }
        let skew = (c.skew_deg - r.skew_deg).abs();
        if skew > 1e-9 {
            out.push(Finding::error(
                FailureMode::F4,
                r.path(),
                format!("sheared by {skew:.3}°: shape is a parallelogram, not a rectangle"),
            ));
        }
    }
    out
}

/// F6: missing, extra or wrong-type components, and extents transposed
/// between axes.
pub fn check_structure(case: &CaseDefinition, truth: &GroundTruthSpec) -> Vec<Finding> {
    let diff = diff_cases(&truth.reference, case, truth.dimension_tol);
    let mut out = Vec::new();
    for m in &diff.missing_components {
        let retyped = case.primitives.iter().find(|p| p.group_id == m.group_id);
        let evidence = match retyped {
            Some(p) => format!(
                "expected {} {} but group is declared as {} {}",
                m.role.as_str(),
                m.kind.tag(),
                p.role.as_str(),
                p.kind.tag()
            ),
            None => format!("missing required {} {}", m.role.as_str(), m.kind.tag()),
        };
        out.push(Finding::error(FailureMode::F6, m.path(), evidence));
    }
    for e in &diff.extra_components {
        if truth.reference.primitives.iter().any(|p| p.group_id == e.group_id) {
            continue; // already reported as a wrong type
        }
        out.push(Finding::error(FailureMode::F6, e.path(), format!("unexpected {} {}", e.role.as_str(), e.kind.tag())));
    }
    for (r, c) in matched(case, truth) {
        let axes = r.active_axes(truth.reference.dim);
        if is_transposed(r, c, &axes, truth.dimension_tol) {
            out.push(Finding::error(
                FailureMode::F6,
                r.path(),
                format!(
                    "extents {:?} are a permutation of expected {:?}: view or axis swapped",
                    axes.iter().map(|&a| c.extents[a]).collect::<Vec<_>>(),
                    axes.iter().map(|&a| r.extents[a]).collect::<Vec<_>>()
                ),
            ));
        }
    }
    out
}

/// All geometric checks on a parsed case and its generated frame.
pub fn validate_all(case: &CaseDefinition, frame: &ParticleFrame, truth: &GroundTruthSpec, numerics: &NumericalSpec) -> ValidationReport {
    let mut f = check_dimensions(case, truth);
    f.extend(check_interface(frame, numerics, &truth.contacts));
    f.extend(check_boundary_thickness(case, frame, numerics));
    f.extend(check_frames(case, truth));
    f.extend(check_structure(case, truth));
    ValidationReport::from_findings(f)
}

/// F5 report for a document that does not parse.
pub fn parse_failure_report(err: &ParseError) -> ValidationReport {
    ValidationReport::from_findings(vec![Finding::error(
        FailureMode::F5,
        "document",
        format!("{} at line {}: {}", err.category.as_str(), err.line, err.message),
    )])
}

/// Report for a case whose particles could not be generated.
pub fn generation_failure_report(err: &GenerationError) -> ValidationReport {
    let mode = match err {
        GenerationError::Overlap { .. } => FailureMode::F2,
        GenerationError::InvalidCase(_) => FailureMode::F1,
    };
    ValidationReport::from_findings(vec![Finding::error(mode, "case", err.to_string())])
}

/// Parse, generate and validate a document in one go. Parse failures
/// short-circuit to a lone F5 finding.
pub fn validate_document(text: &str, truth: &GroundTruthSpec) -> ValidationReport {
    let case = match parse_case(text) {
        Ok(c) => c,
        Err(e) => return parse_failure_report(&e),
    };
    validate_case(&case, truth)
}

pub fn validate_case(case: &CaseDefinition, truth: &GroundTruthSpec) -> ValidationReport {
    match generate_particles(case) {
        Ok(frame) => validate_all(case, &frame, truth, &case.numerics),
        Err(e @ GenerationError::InvalidCase(_)) => {
            // Structural problems explain most invalid cases; report them with
            // the semantic error.
            let mut f = check_structure(case, truth);
            f.extend(check_dimensions(case, truth));
            if f.is_empty() {
                return generation_failure_report(&e);
            }
            ValidationReport::from_findings(f)
        }
        Err(e) => {
            let mut r = generation_failure_report(&e);
            r.findings.extend(check_dimensions(case, truth));
            r.findings.extend(check_frames(case, truth));
            r.findings.extend(check_structure(case, truth));
            r
        }
    }
}
