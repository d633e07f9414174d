//! Scalar and per-body time series.

use serde::{Deserialize, Serialize};

use super::{PostprocError, RunData, TimeSeries};
use crate::case::Vec3;
use crate::particles::{ParticleFrame, ParticleKind};
use crate::render::field_value;

/// Axis-aligned box, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn everything() -> Self {
        Self::new(Vec3::repeat(f64::NEG_INFINITY), Vec3::repeat(f64::INFINITY))
    }
}

/// Particle predicate. Empty lists mean "any".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Selector {
    pub kinds: Vec<ParticleKind>,
    pub groups: Vec<u32>,
    pub region: Option<Aabb>,
}

impl Selector {
    pub fn group(group: u32) -> Self {
        Self {
            groups: vec![group],
            ..Self::default()
        }
    }

    pub fn fluid() -> Self {
        Self {
            kinds: vec![ParticleKind::Fluid],
            ..Self::default()
        }
    }

    pub fn within(mut self, region: Aabb) -> Self {
        self.region = Some(region);
        self
    }

    pub fn matches(&self, f: &ParticleFrame, i: usize) -> bool {
        (self.kinds.is_empty() || self.kinds.contains(&f.kind[i]))
            && (self.groups.is_empty() || self.groups.contains(&f.group[i]))
            && self.region.is_none_or(|r| r.contains(&f.position[i]))
    }

    pub fn indices(&self, f: &ParticleFrame) -> Vec<usize> {
        (0..f.len()).filter(|&i| self.matches(f, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "arg")]
pub enum Reducer {
    Max(String),
    Min(String),
    Mean(String),
    Count,
    /// max − min of the coordinate along an axis direction.
    Extent(Vec3),
}

fn value(f: &ParticleFrame, field: &str, i: usize) -> Option<f64> {
    match field {
        "x" => Some(f.position[i].x),
        "y" => Some(f.position[i].y),
        "z" => Some(f.position[i].z),
        _ => field_value(f, field, i),
    }
}

fn check_field(field: &str) -> Result<(), PostprocError> {
    if ["x", "y", "z"].contains(&field) || crate::render::FIELDS.contains(&field) {
        Ok(())
    } else {
        Err(PostprocError::InvalidArgument(format!("unknown field '{field}'")))
    }
}

fn reduce(f: &ParticleFrame, idx: &[usize], reducer: &Reducer) -> f64 {
    let vals = |field: &str| idx.iter().map(|&i| value(f, field, i).unwrap_or(f64::NAN)).collect::<Vec<_>>();
    if idx.is_empty() {
        return if *reducer == Reducer::Count { 0.0 } else { f64::NAN };
    }
    match reducer {
        Reducer::Max(field) => vals(field).into_iter().fold(f64::NEG_INFINITY, f64::max),
        Reducer::Min(field) => vals(field).into_iter().fold(f64::INFINITY, f64::min),
        Reducer::Mean(field) => vals(field).iter().sum::<f64>() / idx.len() as f64,
        Reducer::Count => idx.len() as f64,
        Reducer::Extent(axis) => {
            let a = axis.normalize();
            let (lo, hi) = idx
                .iter()
                .map(|&i| f.position[i].dot(&a))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            hi - lo
        }
    }
}

/// One reduced value per frame. Frames where the selector matches nothing
/// give NaN (0 for `Count`); frame 0 must match something.
pub fn scalar_series(run: &RunData, selector: &Selector, reducer: &Reducer) -> Result<TimeSeries, PostprocError> {
    match reducer {
        Reducer::Max(f) | Reducer::Min(f) | Reducer::Mean(f) => check_field(f)?,
        Reducer::Extent(a) if a.norm() == 0.0 => return Err(PostprocError::InvalidArgument("extent axis is zero".into())),
        _ => {}
    }
    if selector.indices(run.first()).is_empty() {
        return Err(PostprocError::EmptySelection("selector matches nothing in frame 0".into()));
    }
    let values = run.frames.iter().map(|f| reduce(f, &selector.indices(f), reducer)).collect();
    Ok(TimeSeries::scalar("scalar", "", run.times(), values))
}

fn leading_edge(run: &RunData, group: u32, axis: &Vec3) -> Result<Vec<f64>, PostprocError> {
    let a = axis.normalize();
    let sel = Selector::group(group);
    if sel.indices(run.first()).is_empty() {
        return Err(PostprocError::EmptySelection(format!("group {group} has no particles")));
    }
    let half = 0.5 * run.dp();
    Ok(run
        .frames
        .iter()
        .map(|f| sel.indices(f).iter().map(|&i| f.position[i].dot(&a)).fold(f64::NEG_INFINITY, f64::max) + half)
        .collect())
}

/// Leading edge of a phase along `axis` (particle extent included) minus
/// `reference`.
pub fn runout_distance(run: &RunData, group: u32, axis: &Vec3, reference: f64) -> Result<TimeSeries, PostprocError> {
    let v = leading_edge(run, group, axis)?.into_iter().map(|x| x - reference).collect();
    Ok(TimeSeries::scalar("runout_distance", "m", run.times(), v))
}

pub fn front_position(run: &RunData, group: u32, axis: &Vec3) -> Result<TimeSeries, PostprocError> {
    let v = leading_edge(run, group, axis)?;
    Ok(TimeSeries::scalar("front_position", "m", run.times(), v))
}

fn top_in(f: &ParticleFrame, group: u32, window: &Aabb, half: f64) -> Option<f64> {
    let sel = Selector::group(group).within(*window);
    let idx = sel.indices(f);
    (!idx.is_empty()).then(|| idx.iter().map(|&i| f.position[i].z).fold(f64::NEG_INFINITY, f64::max) + half)
}

/// Highest free-surface elevation of a phase inside `window`; 0 while the
/// window holds none of it.
pub fn surge_height(run: &RunData, group: u32, window: &Aabb) -> Result<TimeSeries, PostprocError> {
    if Selector::group(group).indices(run.first()).is_empty() {
        return Err(PostprocError::EmptySelection(format!("group {group} has no particles")));
    }
    let half = 0.5 * run.dp();
    let v = run.frames.iter().map(|f| top_in(f, group, window, half).unwrap_or(0.0)).collect();
    Ok(TimeSeries::scalar("surge_height", "m", run.times(), v))
}

/// Drop of a phase's top surface inside `window` relative to frame 0;
/// positive when the surface sinks.
pub fn sinking_depth(run: &RunData, group: u32, window: &Aabb) -> Result<TimeSeries, PostprocError> {
    let half = 0.5 * run.dp();
    let z0 = top_in(run.first(), group, window, half)
        .ok_or_else(|| PostprocError::EmptySelection(format!("group {group} has no particles in the window")))?;
    let v = run
        .frames
        .iter()
        .map(|f| top_in(f, group, window, half).map_or(f64::NAN, |z| z0 - z))
        .collect();
    Ok(TimeSeries::scalar("sinking_depth", "m", run.times(), v))
}

/// Mass-weighted centre of a floating group per frame.
pub fn body_com_series(run: &RunData, group: u32) -> Result<TimeSeries, PostprocError> {
    run.require_group(group, &[ParticleKind::Floating], "floating")?;
    let v = run
        .frames
        .iter()
        .map(|f| {
            let idx = f.indices_of_group(group);
            let m: f64 = idx.iter().map(|&i| f.mass[i]).sum();
            idx.iter().map(|&i| f.mass[i] * f.position[i]).sum::<Vec3>() / m
        })
        .collect();
    Ok(TimeSeries::vector(&format!("com_group_{group}"), "m", run.times(), v))
}

/// [`body_com_series`] for every floating group, sorted by group id.
pub fn body_com_all(run: &RunData) -> Result<Vec<(u32, TimeSeries)>, PostprocError> {
    let groups = run.first().groups_of_kind(ParticleKind::Floating);
    if groups.is_empty() {
        return Err(PostprocError::EmptySelection("run has no floating bodies".into()));
    }
    groups.into_iter().map(|g| body_com_series(run, g).map(|s| (g, s))).collect()
}
