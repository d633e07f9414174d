//! XML case documents: parse, emit, structural diff.
//!
//! Accepted vocabulary (all lengths m, angles degrees, SI elsewhere):
//!
//! ```text
//! <case dim="2|3">
//!   <constants><gravity x y z/></constants>
//!   <numerics dp [cs] alpha cfl hcoef/>
//!   <materials>
//!     <rheology group rho0 mu n tauy m/>*
//!   </materials>
//!   <geometry>
//!     <box role="fluid|fixed|floating" group [massdensity] [skew]> FRAME </box>
//!     <fill group [skew]> FRAME </fill>
//!     <wall group layers> FRAME </wall>
//!   </geometry>
//!   <run tmax tout [seed]/>
//! </case>
//! FRAME = <origin x y z/> [<rotation x y z/>] <size x y z/>
//! ```
//!
//! Anything else is rejected. A missing `cs` defaults to 10·√(2·g·H) with H
//! the tallest fluid primitive.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{
    default_speed_of_sound, validate_semantics, CaseDefinition, Dimensionality, Frame, GeometryPrimitive,
    MaterialSpec, NumericalSpec, PrimitiveKind, Role, RunControls, SemanticIssue, Vec3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorCategory {
    MalformedXml,
    UnknownTag,
    BadAttribute,
    MissingRequired,
}

impl ParseErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MalformedXml => "malformed_xml",
            Self::UnknownTag => "unknown_tag",
            Self::BadAttribute => "bad_attribute",
            Self::MissingRequired => "missing_required",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("line {line} (byte {byte_offset}): {} : {message}", category.as_str())]
pub struct ParseError {
    pub byte_offset: usize,
    pub line: usize,
    pub message: String,
    pub category: ParseErrorCategory,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot emit an invalid case: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct EmitError(pub Vec<SemanticIssue>);

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

fn offset_of(text: &str, row: u32, col: u32) -> usize {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == row as usize {
            let col_bytes: usize = line.chars().take(col.saturating_sub(1) as usize).map(char::len_utf8).sum();
            return offset + col_bytes;
        }
        offset += line.len();
    }
    text.len()
}

struct Ctx<'t> {
    text: &'t str,
}

impl Ctx<'_> {
    fn err(&self, node: roxmltree::Node, category: ParseErrorCategory, message: String) -> ParseError {
        let byte_offset = node.range().start;
        ParseError {
            byte_offset,
            line: line_of(self.text, byte_offset),
            message,
            category,
        }
    }

    fn check_attrs(&self, node: roxmltree::Node, allowed: &[&str]) -> Result<(), ParseError> {
        for a in node.attributes() {
            if !allowed.contains(&a.name()) {
                return Err(self.err(
                    node,
                    ParseErrorCategory::BadAttribute,
                    format!("<{}> does not accept attribute '{}'", node.tag_name().name(), a.name()),
                ));
            }
        }
        Ok(())
    }

    fn opt_f64(&self, node: roxmltree::Node, name: &str) -> Result<Option<f64>, ParseError> {
        match node.attribute(name) {
            None => Ok(None),
            Some(raw) => match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(self.err(
                    node,
                    ParseErrorCategory::BadAttribute,
                    format!("<{}> attribute '{}' is not a finite number: '{}'", node.tag_name().name(), name, raw),
                )),
            },
        }
    }

    fn f64(&self, node: roxmltree::Node, name: &str) -> Result<f64, ParseError> {
        self.opt_f64(node, name)?.ok_or_else(|| self.missing_attr(node, name))
    }

    fn opt_u64(&self, node: roxmltree::Node, name: &str) -> Result<Option<u64>, ParseError> {
        match node.attribute(name) {
            None => Ok(None),
            Some(raw) => raw.trim().parse::<u64>().map(Some).map_err(|_| {
                self.err(
                    node,
                    ParseErrorCategory::BadAttribute,
                    format!("<{}> attribute '{}' is not a non-negative integer: '{}'", node.tag_name().name(), name, raw),
                )
            }),
        }
    }

    fn u32(&self, node: roxmltree::Node, name: &str) -> Result<u32, ParseError> {
        let v = self.opt_u64(node, name)?.ok_or_else(|| self.missing_attr(node, name))?;
        u32::try_from(v).map_err(|_| {
            self.err(node, ParseErrorCategory::BadAttribute, format!("<{}> attribute '{}' out of range", node.tag_name().name(), name))
        })
    }

    fn missing_attr(&self, node: roxmltree::Node, name: &str) -> ParseError {
        self.err(
            node,
            ParseErrorCategory::MissingRequired,
            format!("<{}> is missing required attribute '{}'", node.tag_name().name(), name),
        )
    }

    fn vec3(&self, node: roxmltree::Node) -> Result<Vec3, ParseError> {
        self.check_attrs(node, &["x", "y", "z"])?;
        self.no_children(node)?;
        Ok(Vec3::new(self.f64(node, "x")?, self.f64(node, "y")?, self.f64(node, "z")?))
    }

    fn elements<'a, 'input>(&self, node: roxmltree::Node<'a, 'input>) -> Result<Vec<roxmltree::Node<'a, 'input>>, ParseError> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_element() {
                out.push(c);
            } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
                return Err(self.err(
                    c,
                    ParseErrorCategory::UnknownTag,
                    format!("unexpected text inside <{}>", node.tag_name().name()),
                ));
            }
        }
        Ok(out)
    }

    fn no_children(&self, node: roxmltree::Node) -> Result<(), ParseError> {
        if let Some(c) = self.elements(node)?.first() {
            return Err(self.unknown(*c, node.tag_name().name()));
        }
        Ok(())
    }

    fn unknown(&self, node: roxmltree::Node, parent: &str) -> ParseError {
        self.err(
            node,
            ParseErrorCategory::UnknownTag,
            format!("unknown or misplaced tag <{}> inside <{}>", node.tag_name().name(), parent),
        )
    }

    fn missing_child(&self, node: roxmltree::Node, child: &str) -> ParseError {
        self.err(
            node,
            ParseErrorCategory::MissingRequired,
            format!("<{}> is missing required <{}>", node.tag_name().name(), child),
        )
    }
}

/// Parse a case document. Semantic problems are not checked here; see
/// [`parse_case_with_warnings`].
pub fn parse_case(text: &str) -> Result<CaseDefinition, ParseError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        let byte_offset = offset_of(text, pos.row, pos.col);
        ParseError {
            byte_offset,
            line: pos.row.max(1) as usize,
            message: e.to_string(),
            category: ParseErrorCategory::MalformedXml,
        }
    })?;
    let cx = Ctx { text };
    let root = doc.root_element();
    if root.tag_name().name() != "case" {
        return Err(cx.err(root, ParseErrorCategory::UnknownTag, format!("root element must be <case>, found <{}>", root.tag_name().name())));
    }
    cx.check_attrs(root, &["dim"])?;
    let dim_raw = cx.u32(root, "dim")?;
    let dim = Dimensionality::from_int(dim_raw)
        .ok_or_else(|| cx.err(root, ParseErrorCategory::BadAttribute, format!("dim must be 2 or 3, got {dim_raw}")))?;

    let mut gravity = None;
    let mut numerics_node = None;
    let mut materials = None;
    let mut primitives = None;
    let mut controls = None;
    for section in cx.elements(root)? {
        let dup = |seen: bool| -> Result<(), ParseError> {
            if seen {
                Err(cx.err(section, ParseErrorCategory::UnknownTag, format!("duplicate <{}>", section.tag_name().name())))
            } else {
                Ok(())
            }
        };
        match section.tag_name().name() {
            "constants" => {
                dup(gravity.is_some())?;
                cx.check_attrs(section, &[])?;
                let mut g = None;
                for c in cx.elements(section)? {
                    match c.tag_name().name() {
                        "gravity" if g.is_none() => g = Some(cx.vec3(c)?),
                        _ => return Err(cx.unknown(c, "constants")),
                    }
                }
                gravity = Some(g.ok_or_else(|| cx.missing_child(section, "gravity"))?);
            }
            "numerics" => {
                dup(numerics_node.is_some())?;
                cx.check_attrs(section, &["dp", "cs", "alpha", "cfl", "hcoef"])?;
                cx.no_children(section)?;
                numerics_node = Some((
                    cx.f64(section, "dp")?,
                    cx.opt_f64(section, "cs")?,
                    cx.f64(section, "alpha")?,
                    cx.f64(section, "cfl")?,
                    cx.f64(section, "hcoef")?,
                ));
            }
            "materials" => {
                dup(materials.is_some())?;
                cx.check_attrs(section, &[])?;
                let mut list = Vec::new();
                for c in cx.elements(section)? {
                    if c.tag_name().name() != "rheology" {
                        return Err(cx.unknown(c, "materials"));
                    }
                    cx.check_attrs(c, &["group", "rho0", "mu", "n", "tauy", "m"])?;
                    cx.no_children(c)?;
                    list.push(MaterialSpec {
                        group_id: cx.u32(c, "group")?,
                        rho0: cx.f64(c, "rho0")?,
                        mu: cx.f64(c, "mu")?,
                        n: cx.f64(c, "n")?,
                        tau_y: cx.f64(c, "tauy")?,
                        m_papanastasiou: cx.f64(c, "m")?,
                    });
                }
                materials = Some(list);
            }
            "geometry" => {
                dup(primitives.is_some())?;
                cx.check_attrs(section, &[])?;
                let mut list = Vec::new();
                for c in cx.elements(section)? {
                    list.push(parse_primitive(&cx, c)?);
                }
                primitives = Some(list);
            }
            "run" => {
                dup(controls.is_some())?;
                cx.check_attrs(section, &["tmax", "tout", "seed"])?;
                cx.no_children(section)?;
                controls = Some(RunControls {
                    t_end: cx.f64(section, "tmax")?,
                    output_interval: cx.f64(section, "tout")?,
                    seed: cx.opt_u64(section, "seed")?.unwrap_or(0),
                });
            }
            _ => return Err(cx.unknown(section, "case")),
        }
    }

    let gravity = gravity.ok_or_else(|| cx.missing_child(root, "constants"))?;
    let (dp, cs, alpha, cfl, h_coef) = numerics_node.ok_or_else(|| cx.missing_child(root, "numerics"))?;
    let primitives = primitives.ok_or_else(|| cx.missing_child(root, "geometry"))?;
    let materials = materials.ok_or_else(|| cx.missing_child(root, "materials"))?;
    let controls = controls.ok_or_else(|| cx.missing_child(root, "run"))?;
    let cs = cs.unwrap_or_else(|| default_speed_of_sound(&gravity, tallest_fluid(&primitives)));
    Ok(CaseDefinition {
        dim,
        gravity,
        primitives,
        materials,
        numerics: NumericalSpec {
            dp,
            cs,
            alpha,
            cfl,
            h_coef,
        },
        controls,
    })
}

fn parse_primitive(cx: &Ctx, node: roxmltree::Node) -> Result<GeometryPrimitive, ParseError> {
    let tag = node.tag_name().name();
    let kind = match tag {
        "box" => PrimitiveKind::Box,
        "fill" => PrimitiveKind::FillRegion,
        "wall" => PrimitiveKind::PlaneWall,
        _ => return Err(cx.unknown(node, "geometry")),
    };
    let allowed: &[&str] = match kind {
        PrimitiveKind::Box => &["role", "group", "massdensity", "skew"],
        PrimitiveKind::FillRegion => &["group", "skew"],
        PrimitiveKind::PlaneWall => &["group", "layers"],
    };
    cx.check_attrs(node, allowed)?;
    let role = match kind {
        PrimitiveKind::Box => {
            let raw = node.attribute("role").ok_or_else(|| cx.missing_attr(node, "role"))?;
            Role::parse(raw).ok_or_else(|| {
                cx.err(node, ParseErrorCategory::BadAttribute, format!("<box> role must be fluid, fixed or floating, got '{raw}'"))
            })?
        }
        PrimitiveKind::FillRegion => Role::Fluid,
        PrimitiveKind::PlaneWall => Role::FixedBoundary,
    };
    let mut origin = None;
    let mut rotation = None;
    let mut size = None;
    for c in cx.elements(node)? {
        let slot = match c.tag_name().name() {
            "origin" => &mut origin,
            "rotation" => &mut rotation,
            "size" => &mut size,
            _ => return Err(cx.unknown(c, tag)),
        };
        if slot.is_some() {
            return Err(cx.err(c, ParseErrorCategory::UnknownTag, format!("duplicate <{}> in <{tag}>", c.tag_name().name())));
        }
        *slot = Some(cx.vec3(c)?);
    }
    let origin = origin.ok_or_else(|| cx.missing_child(node, "origin"))?;
    let extents = size.ok_or_else(|| cx.missing_child(node, "size"))?;
    let layers = match kind {
        PrimitiveKind::PlaneWall => Some(cx.u32(node, "layers")?),
        _ => None,
    };
    Ok(GeometryPrimitive {
        kind,
        role,
        group_id: cx.u32(node, "group")?,
        frame: Frame::rotated(origin, rotation.unwrap_or_else(Vec3::zeros)),
        extents,
        layers,
        mass_density: cx.opt_f64(node, "massdensity")?,
        skew_deg: cx.opt_f64(node, "skew")?.unwrap_or(0.0),
    })
}

/// Vertical span of the tallest fluid primitive.
fn tallest_fluid(primitives: &[GeometryPrimitive]) -> f64 {
    primitives
        .iter()
        .filter(|p| p.role == Role::Fluid)
        .map(|p| {
            let e = p.extents;
            let zs: Vec<f64> = (0..8)
                .map(|k| {
                    let c = Vec3::new(
                        if k & 1 == 1 { e.x } else { 0.0 },
                        if k & 2 == 2 { e.y } else { 0.0 },
                        if k & 4 == 4 { e.z } else { 0.0 },
                    );
                    p.frame.to_global(&c).z
                })
                .collect();
            zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - zs.iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Parse and report semantic issues alongside the case.
pub fn parse_case_with_warnings(text: &str) -> Result<(CaseDefinition, Vec<SemanticIssue>), ParseError> {
    let case = parse_case(text)?;
    let issues = validate_semantics(&case);
    Ok((case, issues))
}

struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Rust's Display for f64 is the shortest string that parses back
        // to the same value.
        if self.0 == 0.0 {
            f.write_str("0")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

fn write_vec(out: &mut String, indent: &str, tag: &str, v: &Vec3) {
    let _ = writeln!(out, "{indent}<{tag} x=\"{}\" y=\"{}\" z=\"{}\"/>", Num(v.x), Num(v.y), Num(v.z));
}

/// Serialise a valid case. Output is a pure function of the case: fixed
/// element and attribute order, shortest round-trip floats, LF newlines.
pub fn emit_case(case: &CaseDefinition) -> Result<String, EmitError> {
    let issues = validate_semantics(case);
    if !issues.is_empty() {
        return Err(EmitError(issues));
    }
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(s, "<case dim=\"{}\">", case.dim.as_int());
    let _ = writeln!(s, "  <constants>");
    write_vec(&mut s, "    ", "gravity", &case.gravity);
    let _ = writeln!(s, "  </constants>");
    let n = &case.numerics;
    let _ = writeln!(
        s,
        "  <numerics dp=\"{}\" cs=\"{}\" alpha=\"{}\" cfl=\"{}\" hcoef=\"{}\"/>",
        Num(n.dp),
        Num(n.cs),
        Num(n.alpha),
        Num(n.cfl),
        Num(n.h_coef)
    );
    let _ = writeln!(s, "  <materials>");
    for m in &case.materials {
        let _ = writeln!(
            s,
            "    <rheology group=\"{}\" rho0=\"{}\" mu=\"{}\" n=\"{}\" tauy=\"{}\" m=\"{}\"/>",
            m.group_id,
            Num(m.rho0),
            Num(m.mu),
            Num(m.n),
            Num(m.tau_y),
            Num(m.m_papanastasiou)
        );
    }
    let _ = writeln!(s, "  </materials>");
    let _ = writeln!(s, "  <geometry>");
    for p in &case.primitives {
        let tag = p.kind.tag();
        let mut attrs = String::new();
        if p.kind == PrimitiveKind::Box {
            let _ = write!(attrs, " role=\"{}\"", p.role.as_str());
        }
        let _ = write!(attrs, " group=\"{}\"", p.group_id);
        if let Some(l) = p.layers {
            let _ = write!(attrs, " layers=\"{l}\"");
        }
        if let Some(d) = p.mass_density {
            let _ = write!(attrs, " massdensity=\"{}\"", Num(d));
        }
        if p.skew_deg != 0.0 {
            let _ = write!(attrs, " skew=\"{}\"", Num(p.skew_deg));
        }
        let _ = writeln!(s, "    <{tag}{attrs}>");
        write_vec(&mut s, "      ", "origin", &p.frame.origin);
        write_vec(&mut s, "      ", "rotation", &p.frame.rotation_deg);
        write_vec(&mut s, "      ", "size", &p.extents);
        let _ = writeln!(s, "    </{tag}>");
    }
    let _ = writeln!(s, "  </geometry>");
    let c = &case.controls;
    let _ = writeln!(s, "  <run tmax=\"{}\" tout=\"{}\" seed=\"{}\"/>", Num(c.t_end), Num(c.output_interval), c.seed);
    let _ = writeln!(s, "</case>");
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentRef {
    pub kind: PrimitiveKind,
    pub role: Role,
    pub group_id: u32,
}

impl ComponentRef {
    pub fn of(p: &GeometryPrimitive) -> Self {
        Self {
            kind: p.kind,
            role: p.role,
            group_id: p.group_id,
        }
    }

    pub fn path(&self) -> String {
        format!("{}[g{}]", self.kind.tag(), self.group_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionDelta {
    pub path: String,
    pub axis: usize,
    pub expected: f64,
    pub actual: f64,
}

impl DimensionDelta {
    pub fn delta(&self) -> f64 {
        self.actual - self.expected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDelta {
    pub path: String,
    /// Angle of the relative rotation, degrees.
    pub rotation_deg: f64,
    /// Origin offset, m.
    pub translation: f64,
    /// Difference in skew angle, degrees.
    pub skew_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralDiff {
    pub missing_components: Vec<ComponentRef>,
    pub extra_components: Vec<ComponentRef>,
    pub dimension_deltas: Vec<DimensionDelta>,
    pub frame_deltas: Vec<FrameDelta>,
}

impl StructuralDiff {
    pub fn is_empty(&self) -> bool {
        self.missing_components.is_empty()
            && self.extra_components.is_empty()
            && self.dimension_deltas.is_empty()
            && self.frame_deltas.is_empty()
    }
}

/// Angle in degrees of the rotation taking frame `a` to frame `b`.
pub fn relative_rotation_deg(a: &Frame, b: &Frame) -> f64 {
    (a.rotation().inverse() * b.rotation()).angle().to_degrees()
}

/// Threshold below which rotation and skew differences are treated as equal.
const ANGLE_EPS_DEG: f64 = 1e-9;

/// Compare two cases component by component. Components are matched on
/// (kind, role, group_id); a group whose kind or role changed shows up as
/// one missing and one extra component.
pub fn diff_cases(reference: &CaseDefinition, candidate: &CaseDefinition, tol_m: f64) -> StructuralDiff {
    let mut diff = StructuralDiff::default();
    for r in &reference.primitives {
        let key = ComponentRef::of(r);
        match candidate.primitives.iter().find(|c| ComponentRef::of(c) == key) {
            None => diff.missing_components.push(key),
            Some(c) => {
                for axis in r.active_axes(reference.dim) {
                    if (c.extents[axis] - r.extents[axis]).abs() > tol_m {
                        diff.dimension_deltas.push(DimensionDelta {
                            path: key.path(),
                            axis,
                            expected: r.extents[axis],
                            actual: c.extents[axis],
                        });
                    }
                }
                let rotation_deg = relative_rotation_deg(&r.frame, &c.frame);
                let translation = (c.frame.origin - r.frame.origin).norm();
                let skew_deg = c.skew_deg - r.skew_deg;
                if rotation_deg > ANGLE_EPS_DEG || translation > tol_m || skew_deg.abs() > ANGLE_EPS_DEG {
                    diff.frame_deltas.push(FrameDelta {
                        path: key.path(),
                        rotation_deg,
                        translation,
                        skew_deg,
                    });
                }
            }
        }
    }
    for c in &candidate.primitives {
        let key = ComponentRef::of(c);
        if !reference.primitives.iter().any(|r| ComponentRef::of(r) == key) {
            diff.extra_components.push(key);
        }
    }
    diff
}
