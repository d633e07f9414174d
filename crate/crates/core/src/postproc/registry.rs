//! Tool descriptors and a JSON-argument dispatcher. Descriptors are plain
//! data so a planner can pick a tool by matching names, parameter types and
//! docs; arguments are checked against them before any tool runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::*;
use crate::render::{render_snapshot, ViewSpec};

/// The five kinds of post-processing request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    ScalarExtraction,
    GroupIdentification,
    PhysicalDerivation,
    GeometricDisambiguation,
    Visualization,
}

impl TaskType {
    pub const ALL: [Self; 5] = [
        Self::ScalarExtraction,
        Self::GroupIdentification,
        Self::PhysicalDerivation,
        Self::GeometricDisambiguation,
        Self::Visualization,
    ];

    /// Short code used in task tables: scalar, group, phys, geodis, visual.
    pub fn code(self) -> &'static str {
        match self {
            Self::ScalarExtraction => "scalar",
            Self::GroupIdentification => "group",
            Self::PhysicalDerivation => "phys",
            Self::GeometricDisambiguation => "geodis",
            Self::Visualization => "visual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == s || serde_json::to_value(t).ok().and_then(|v| v.as_str().map(|x| x == s)) == Some(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "values")]
pub enum ParamKind {
    Number,
    Integer,
    Vec3,
    Text,
    Bool,
    Choice(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    pub default: Option<Value>,
    pub units: String,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub task_type: TaskType,
    pub doc: String,
    pub params: Vec<ParamSpec>,
    /// What the tool writes: "csv", "svg" or "json".
    pub output: String,
}

fn p(name: &str, kind: ParamKind, units: &str, doc: &str) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        kind,
        required: true,
        default: None,
        units: units.into(),
        doc: doc.into(),
    }
}

fn opt(name: &str, kind: ParamKind, default: Option<Value>, units: &str, doc: &str) -> ParamSpec {
    ParamSpec {
        required: false,
        default,
        ..p(name, kind, units, doc)
    }
}

fn choice(v: &[&str]) -> ParamKind {
    ParamKind::Choice(v.iter().map(|s| s.to_string()).collect())
}

fn tool(name: &str, task_type: TaskType, output: &str, doc: &str, params: Vec<ParamSpec>) -> ToolDescriptor {
    ToolDescriptor {
        name: name.into(),
        task_type,
        doc: doc.into(),
        params,
        output: output.into(),
    }
}

/// Every registered tool.
pub fn descriptors() -> Vec<ToolDescriptor> {
    use ParamKind::*;
    use TaskType::*;
    let group = || p("group", Integer, "", "particle group id");
    let plane = || {
        vec![
            p("plane_point", Vec3, "m", "a point on the plane"),
            p("plane_normal", Vec3, "", "plane normal; positive side is downstream"),
        ]
    };
    let window = || {
        vec![
            opt("window_lo", Vec3, None, "m", "lower corner of the search box"),
            opt("window_hi", Vec3, None, "m", "upper corner of the search box"),
        ]
    };
    vec![
        tool(
            "scalar_series",
            ScalarExtraction,
            "csv",
            "Reduce a field over selected particles in every frame",
            vec![
                p("reducer", choice(&["max", "min", "mean", "count", "extent"]), "", "reduction"),
                opt("field", Text, Some(json!("x")), "", "x, y, z, speed, vx, vy, vz, rho, p, mass"),
                opt("group", Integer, None, "", "restrict to one group"),
                opt("kind", choice(&["fluid", "boundary", "floating"]), None, "", "restrict to one particle kind"),
                opt("axis", Vec3, Some(json!([1.0, 0.0, 0.0])), "", "direction for extent"),
                opt("window_lo", Vec3, None, "m", "lower corner of the selection box"),
                opt("window_hi", Vec3, None, "m", "upper corner of the selection box"),
            ],
        ),
        tool(
            "runout_distance",
            ScalarExtraction,
            "csv",
            "Leading edge of a phase along an axis minus a reference position",
            vec![
                group(),
                opt("axis", Vec3, Some(json!([1.0, 0.0, 0.0])), "", "flow direction"),
                opt("reference", Number, Some(json!(0.0)), "m", "position subtracted from the edge"),
            ],
        ),
        tool(
            "front_position",
            ScalarExtraction,
            "csv",
            "Leading edge of a phase along an axis",
            vec![group(), opt("axis", Vec3, Some(json!([1.0, 0.0, 0.0])), "", "flow direction")],
        ),
        tool(
            "surge_height",
            GroupIdentification,
            "csv",
            "Highest surface elevation of a phase inside a box",
            [vec![group()], window()].concat(),
        ),
        tool(
            "sinking_depth",
            ScalarExtraction,
            "csv",
            "Drop of a phase's top surface inside a box since t = 0; reports the time of the deepest point",
            [vec![group()], window()].concat(),
        ),
        tool(
            "surface_profile",
            Visualization,
            "csv",
            "Free-surface envelope at a cross-section plane (surface particles only)",
            [
                plane(),
                vec![
                    p("time", Number, "s", "frame time; nearest frame is used"),
                    opt("band", Number, None, "m", "half-width of the slab; defaults to dp"),
                    opt("group", Integer, None, "", "restrict to one phase"),
                ],
            ]
            .concat(),
        ),
        tool(
            "partition_flow",
            GroupIdentification,
            "csv",
            "Label fluid as upstream, overtopped or leaked relative to a barrier",
            vec![
                p("barrier_group", Integer, "", "group id of the barrier"),
                opt("mode", choice(&["trajectory", "static"]), Some(json!("trajectory")), "", "path history or final frame only"),
            ],
        ),
        tool(
            "render_partition",
            Visualization,
            "svg",
            "Draw the upstream / overtopped / leaked partition",
            vec![
                p("barrier_group", Integer, "", "group id of the barrier"),
                opt("mode", choice(&["trajectory", "static"]), Some(json!("trajectory")), "", "partition mode"),
                opt("time", Number, None, "s", "frame to draw; defaults to the last"),
                opt("view", choice(&["side", "plan"]), Some(json!("plan")), "", "camera"),
            ],
        ),
        tool(
            "downstream_mass",
            GroupIdentification,
            "csv",
            "Fluid mass on the positive side of a plane",
            [plane(), vec![opt("group", Integer, None, "", "restrict to one phase")]].concat(),
        ),
        tool(
            "mass_flux",
            PhysicalDerivation,
            "csv",
            "Mass flow rate through a plane from particle crossings (constant particle mass)",
            plane(),
        ),
        tool(
            "reaction_force",
            GroupIdentification,
            "csv",
            "Force of the fluid on a boundary group; echoes the group size",
            vec![group()],
        ),
        tool(
            "bending_moment",
            PhysicalDerivation,
            "csv",
            "Moment of the fluid load on a group about a base point",
            vec![
                group(),
                p("base_point", Vec3, "m", "moment reference point"),
                opt("axis", Vec3, Some(json!([0.0, 1.0, 0.0])), "", "axis for the reported component"),
            ],
        ),
        tool(
            "infer_wall_face",
            GeometricDisambiguation,
            "json",
            "Wetted face of a finite-thickness boundary structure",
            vec![group()],
        ),
        tool(
            "hit_time",
            GeometricDisambiguation,
            "json",
            "First time the fluid interacts with a wall face (kernel range or pressure rise, not geometric crossing)",
            vec![
                group(),
                opt("criterion", choice(&["kernel_range", "pressure_rise"]), Some(json!("kernel_range")), "", "contact criterion"),
                opt("threshold", Number, Some(json!(100.0)), "Pa", "pressure rise threshold"),
            ],
        ),
        tool(
            "sink_bulge_volume",
            GeometricDisambiguation,
            "csv",
            "Volume sunk below and bulged above the initial top surface of a phase",
            vec![group()],
        ),
        tool(
            "body_com_series",
            GroupIdentification,
            "csv",
            "Centre of mass of floating bodies; all bodies when no group is given",
            vec![opt("group", Integer, None, "", "floating group id")],
        ),
        tool(
            "render_snapshot",
            Visualization,
            "svg",
            "Scatter image of one frame coloured by a field",
            vec![
                p("time", Number, "s", "frame time; nearest frame is used"),
                opt("color_by", Text, Some(json!("speed")), "", "speed, vx, vy, vz, rho, p, mass, group, kind"),
                opt("view", choice(&["side", "plan", "front"]), Some(json!("side")), "", "side: x-z, plan: x-y, front: y-z"),
                opt("slice_axis", choice(&["x", "y", "z"]), None, "", "keep a slab normal to this axis"),
                opt("slice_value", Number, None, "m", "slab centre"),
                opt("slice_band", Number, None, "m", "slab half-width"),
                opt("include_boundaries", Bool, Some(json!(true)), "", "draw boundary particles"),
            ],
        ),
    ]
}

pub fn descriptor(name: &str) -> Option<ToolDescriptor> {
    descriptors().into_iter().find(|d| d.name == name)
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("invalid arguments for {tool}: {}", problems.join("; "))]
    BadArgs { tool: String, problems: Vec<String> },
    #[error(transparent)]
    Failed(#[from] PostprocError),
}

/// Checked arguments with defaults filled in.
#[derive(Debug, Clone, Default)]
pub struct Args(BTreeMap<String, Value>);

impl Args {
    fn get(&self, k: &str) -> Option<&Value> {
        self.0.get(k)
    }

    pub fn f64(&self, k: &str) -> Option<f64> {
        self.get(k).and_then(Value::as_f64)
    }

    pub fn u32(&self, k: &str) -> Option<u32> {
        self.get(k).and_then(Value::as_u64).map(|v| v as u32)
    }

    pub fn text(&self, k: &str) -> Option<&str> {
        self.get(k).and_then(Value::as_str)
    }

    pub fn bool(&self, k: &str) -> Option<bool> {
        self.get(k).and_then(Value::as_bool)
    }

    pub fn vec3(&self, k: &str) -> Option<Vec3> {
        let a = self.get(k)?.as_array()?;
        Some(Vec3::new(a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?))
    }
}

fn type_ok(kind: &ParamKind, v: &Value) -> bool {
    match kind {
        ParamKind::Number => v.as_f64().is_some_and(f64::is_finite),
        ParamKind::Integer => v.as_u64().is_some_and(|x| x <= u32::MAX as u64),
        ParamKind::Vec3 => v.as_array().is_some_and(|a| a.len() == 3 && a.iter().all(|x| x.as_f64().is_some_and(f64::is_finite))),
        ParamKind::Text => v.is_string(),
        ParamKind::Bool => v.is_boolean(),
        ParamKind::Choice(opts) => v.as_str().is_some_and(|s| opts.iter().any(|o| o == s)),
    }
}

/// Check `args` against the tool's parameters: it must be an object with
/// no unknown keys, all required keys, and values of the declared types.
pub fn validate_args(desc: &ToolDescriptor, args: &Value) -> Result<Args, ToolError> {
    let empty = Map::new();
    let obj = match args {
        Value::Object(m) => m,
        Value::Null => &empty,
        _ => {
            return Err(ToolError::BadArgs {
                tool: desc.name.clone(),
                problems: vec!["arguments must be a JSON object".into()],
            })
        }
    };
    let mut problems = Vec::new();
    for k in obj.keys() {
        if !desc.params.iter().any(|p| &p.name == k) {
            problems.push(format!("unknown parameter '{k}'"));
        }
    }
    let mut out = BTreeMap::new();
    for spec in &desc.params {
        match obj.get(&spec.name) {
            Some(v) if type_ok(&spec.kind, v) => {
                out.insert(spec.name.clone(), v.clone());
            }
            Some(v) => problems.push(format!("'{}' expects {:?}, got {v}", spec.name, spec.kind)),
            None if spec.required => problems.push(format!("missing required parameter '{}'", spec.name)),
            None => {
                if let Some(d) = &spec.default {
                    out.insert(spec.name.clone(), d.clone());
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(Args(out))
    } else {
        Err(ToolError::BadArgs {
            tool: desc.name.clone(),
            problems,
        })
    }
}

/// Files written and a short result for one tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub tool: String,
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub value: Value,
}

fn plane_arg(a: &Args) -> Result<PlaneSpec, PostprocError> {
    PlaneSpec::new(a.vec3("plane_point").unwrap(), a.vec3("plane_normal").unwrap())
}

fn window_arg(a: &Args) -> Aabb {
    let all = Aabb::everything();
    Aabb::new(a.vec3("window_lo").unwrap_or(all.lo), a.vec3("window_hi").unwrap_or(all.hi))
}

fn last(s: &TimeSeries) -> String {
    match (s.times.last(), s.values.last()) {
        (Some(t), Some(v)) => format!("{} rows, last t = {t}: {:?}", s.len(), v),
        _ => "empty".into(),
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<(), PostprocError> {
        std::fs::create_dir_all(self.dir).map_err(|e| IoError::io(self.dir, e))?;
        let path = self.dir.join(name);
        write_file(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn series(&mut self, name: &str, s: &TimeSeries) -> Result<(), PostprocError> {
        self.put(&format!("{name}.csv"), &s.to_csv())
    }
}

/// Validate `args` and run the named tool on `run`, writing results under
/// `out_dir`.
pub fn invoke_tool(run: &RunData, name: &str, args: &Value, out_dir: &Path) -> Result<ToolOutput, ToolError> {
    let desc = descriptor(name).ok_or_else(|| ToolError::UnknownTool(name.into()))?;
    let a = validate_args(&desc, args)?;
    let mut w = Writer { dir: out_dir, files: Vec::new() };
    let (summary, value) = run_tool(run, name, &a, &mut w)?;
    Ok(ToolOutput {
        tool: name.into(),
        files: w.files,
        summary,
        value,
    })
}

fn partition_mode(a: &Args) -> PartitionMode {
    if a.text("mode") == Some("static") {
        PartitionMode::Static
    } else {
        PartitionMode::Trajectory
    }
}

fn run_tool(run: &RunData, name: &str, a: &Args, w: &mut Writer) -> Result<(String, Value), PostprocError> {
    let dp = run.dp();
    let group = a.u32("group");
    Ok(match name {
        "scalar_series" => {
            let field = a.text("field").unwrap_or("x").to_string();
            let reducer = match a.text("reducer").unwrap() {
                "max" => Reducer::Max(field),
                "min" => Reducer::Min(field),
                "mean" => Reducer::Mean(field),
                "count" => Reducer::Count,
                _ => Reducer::Extent(a.vec3("axis").unwrap()),
            };
            let sel = Selector {
                kinds: a.text("kind").and_then(ParticleKind::parse).into_iter().collect(),
                groups: group.into_iter().collect(),
                region: (a.get("window_lo").is_some() || a.get("window_hi").is_some()).then(|| window_arg(a)),
            };
            let s = scalar_series(run, &sel, &reducer)?;
            w.series(name, &s)?;
            (last(&s), serde_json::to_value(&s).unwrap())
        }
        "runout_distance" | "front_position" => {
            let g = group.unwrap();
            let axis = a.vec3("axis").unwrap();
            let s = if name == "runout_distance" {
                runout_distance(run, g, &axis, a.f64("reference").unwrap())?
            } else {
                front_position(run, g, &axis)?
            };
            w.series(name, &s)?;
            (last(&s), serde_json::to_value(&s).unwrap())
        }
        "surge_height" => {
            let s = surge_height(run, group.unwrap(), &window_arg(a))?;
            w.series(name, &s)?;
            let peak = s.scalars().into_iter().fold(f64::NEG_INFINITY, f64::max);
            (format!("peak surge {peak:.4} m at t = {:?}", s.argmax_time()), serde_json::to_value(&s).unwrap())
        }
        "sinking_depth" => {
            let s = sinking_depth(run, group.unwrap(), &window_arg(a))?;
            w.series(name, &s)?;
            let t = s.argmax_time();
            (format!("deepest point at t = {t:?}"), json!({ "series": s, "deepest_time": t }))
        }
        "surface_profile" => {
            let plane = plane_arg(a)?;
            let frame = run.frame_at(a.f64("time").unwrap());
            let band = a.f64("band").unwrap_or(dp);
            let prof = surface_profile(frame, &plane, band, dp, group)?;
            let mut csv = String::from("s,height\n");
            for q in &prof {
                csv.push_str(&format!("{},{}\n", q.s, q.height));
            }
            w.put(&format!("{name}_t{:.3}.csv", frame.time), &csv)?;
            (format!("{} bins at t = {}", prof.len(), frame.time), serde_json::to_value(&prof).unwrap())
        }
        "partition_flow" | "render_partition" => {
            let bg = a.u32("barrier_group").unwrap();
            run.require_group(bg, &[ParticleKind::Boundary, ParticleKind::Floating], "boundary or floating")?;
            let face = infer_wall_face(run.first(), bg, dp)?;
            let r = partition_flow(run, &face, partition_mode(a))?;
            let summary = PartitionLabel::ALL
                .iter()
                .map(|l| format!("{} {:.4}", l.as_str(), r.fraction(*l)))
                .collect::<Vec<_>>()
                .join(", ");
            if name == "partition_flow" {
                w.put("partition_flow.csv", &r.to_csv())?;
            } else {
                let frame = a.f64("time").map_or_else(|| run.frames.last().unwrap(), |t| run.frame_at(t));
                let view = if a.text("view") == Some("side") { ViewSpec::side("group") } else { ViewSpec::plan("group") };
                w.put("partition.svg", &render_partition(frame, &r, &view)?)?;
            }
            (summary, json!({ "counts": r.counts, "fractions": r.fractions, "mass_fractions": r.mass_fractions }))
        }
        "downstream_mass" => {
            let s = downstream_mass(run, &plane_arg(a)?, group);
            w.series(name, &s)?;
            (last(&s), serde_json::to_value(&s).unwrap())
        }
        "mass_flux" => {
            let r = mass_flux(run, &plane_arg(a)?)?;
            w.series("mass_flux", &r.flux)?;
            w.series("mass_flux_cumulative", &r.cumulative)?;
            let total = r.cumulative.scalars().last().copied().unwrap_or(0.0);
            (
                format!("net {} crossings, {total} kg", r.net_crossings),
                json!({ "net_crossings": r.net_crossings, "cumulative_kg": total }),
            )
        }
        "reaction_force" => {
            let r = reaction_force(run, group.unwrap())?;
            w.series(name, &r.total)?;
            let peak = r.total.vectors().iter().map(|v| v.norm()).fold(0.0, f64::max);
            (
                format!("group {} ({} particles): peak |F| = {peak:.4} {}", r.group, r.group_size, r.total.units),
                json!({ "group": r.group, "group_size": r.group_size, "peak": peak, "units": r.total.units }),
            )
        }
        "bending_moment" => {
            let r = reaction_force(run, group.unwrap())?;
            let m = bending_moment(&r, &a.vec3("base_point").unwrap(), &a.vec3("axis").unwrap())?;
            w.series(name, &m)?;
            let peak = m.column(3).into_iter().map(f64::abs).fold(0.0, f64::max);
            (
                format!("group {} ({} particles): peak |M| = {peak:.4} {}", r.group, r.group_size, m.units),
                json!({ "group_size": r.group_size, "peak": peak }),
            )
        }
        "infer_wall_face" => {
            let face = infer_wall_face(run.first(), group.unwrap(), dp)?;
            let v = serde_json::to_value(&face).unwrap();
            w.put("wall_face.json", &serde_json::to_string_pretty(&v).unwrap())?;
            (format!("face at {:?}, normal {:?}, {} layers", face.point, face.normal, face.layers), v)
        }
        "hit_time" => {
            let face = infer_wall_face(run.first(), group.unwrap(), dp)?;
            let crit = match a.text("criterion") {
                Some("pressure_rise") => HitCriterion::PressureRise {
                    threshold: a.f64("threshold").unwrap(),
                },
                _ => HitCriterion::KernelRange,
            };
            let t = hit_time(run, &face, crit, run.h())?;
            let v = json!({ "time": t, "face": face, "criterion": crit });
            w.put("hit_time.json", &serde_json::to_string_pretty(&v).unwrap())?;
            (format!("hit at t = {t} s"), v)
        }
        "sink_bulge_volume" => {
            let s = sink_bulge_volume(run, group.unwrap())?;
            w.series(name, &s)?;
            (last(&s), serde_json::to_value(&s).unwrap())
        }
        "body_com_series" => {
            let all = match group {
                Some(g) => vec![(g, body_com_series(run, g)?)],
                None => body_com_all(run)?,
            };
            for (g, s) in &all {
                w.series(&format!("body_com_group_{g}"), s)?;
            }
            (format!("{} bodies", all.len()), json!(all.iter().map(|(g, _)| g).collect::<Vec<_>>()))
        }
        "render_snapshot" => {
            let frame = run.frame_at(a.f64("time").unwrap());
            let axes = match a.text("view") {
                Some("plan") => (0, 1),
                Some("front") => (1, 2),
                _ => (0, 2),
            };
            let slice = match (a.text("slice_axis"), a.f64("slice_value")) {
                (Some(ax), Some(v)) => Some((["x", "y", "z"].iter().position(|n| *n == ax).unwrap(), v, a.f64("slice_band").unwrap_or(dp))),
                _ => None,
            };
            let view = ViewSpec {
                axes,
                color_by: a.text("color_by").unwrap().into(),
                slice,
                include_boundaries: a.bool("include_boundaries").unwrap(),
                title: format!("t = {} s", frame.time),
                ..ViewSpec::default()
            };
            let svg = render_snapshot(frame, &view)?;
            w.put(&format!("snapshot_{}_t{:.3}.svg", view.color_by, frame.time), &svg)?;
            (format!("rendered t = {}", frame.time), json!({ "time": frame.time }))
        }
        other => unreachable!("descriptor without implementation: {other}"),
    })
}
