//! Plane- and face-based tools: wetted faces, profiles, partitions, fluxes,
//! hit times and surface change.

use std::collections::{BTreeMap, HashMap};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{PlaneSpec, PostprocError, RunData, TimeSeries};
use crate::case::Vec3;
use crate::particles::{ParticleFrame, ParticleKind};
use crate::render::{render_snapshot, ViewSpec};

/// Wetted face of a finite-thickness boundary structure, inferred from its
/// particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallFace {
    pub group: u32,
    /// A point on the outermost particle layer facing the fluid.
    pub point: Vec3,
    /// Unit normal pointing away from the structure, towards the fluid.
    pub normal: Vec3,
    /// Layer count times spacing.
    pub thickness: f64,
    pub layers: usize,
    /// In-face axes and the particle extent along them, padded by dp/2.
    pub tangents: [Vec3; 2],
    pub lateral: [(f64, f64); 2],
    /// Highest point of the structure, padded by dp/2.
    pub crest: f64,
    pub particles: usize,
}

impl WallFace {
    pub fn plane(&self) -> PlaneSpec {
        PlaneSpec {
            point: self.point,
            normal: self.normal,
        }
    }

    /// Euclidean distance from `p` to the face rectangle; zero for points
    /// behind the face plane and inside the lateral extent.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = p - self.point;
        let normal = d.dot(&self.normal).max(0.0);
        let mut sq = normal * normal;
        for k in 0..2 {
            let s = d.dot(&self.tangents[k]) + self.point.dot(&self.tangents[k]);
            let (lo, hi) = self.lateral[k];
            let out = if s < lo { lo - s } else if s > hi { s - hi } else { 0.0 };
            sq += out * out;
        }
        sq.sqrt()
    }

    /// Horizontal in-face axis and its extent; the lateral window used to
    /// tell overtopping from side leakage.
    fn horizontal_span(&self) -> (Vec3, f64, f64) {
        let k = if self.tangents[0].z.abs() <= self.tangents[1].z.abs() { 0 } else { 1 };
        (self.tangents[k], self.lateral[k].0, self.lateral[k].1)
    }
}

fn candidate_axes(pts: &[Vec3], planar: bool) -> Vec<Vec3> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vec3>() / n;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= n;
    let scale = cov.trace().max(1e-300);
    let off = cov[(0, 1)].abs() + cov[(0, 2)].abs() + cov[(1, 2)].abs();
    let axes: Vec<Vec3> = if off < 1e-9 * scale {
        vec![Vec3::x(), Vec3::y(), Vec3::z()]
    } else {
        if planar {
            cov[(0, 1)] = 0.0;
            cov[(1, 0)] = 0.0;
            cov[(1, 2)] = 0.0;
            cov[(2, 1)] = 0.0;
        }
        let eig = SymmetricEigen::new(cov);
        (0..3).map(|k| eig.eigenvectors.column(k).into_owned().normalize()).collect()
    };
    // In a planar frame the out-of-plane axis is never a thickness direction.
    axes.into_iter().filter(|a| !(planar && a.y.abs() > 0.5)).collect()
}

/// Infer which face of a boundary or floating group the fluid wets: the
/// thickness direction is the narrowest principal axis (ties broken towards
/// the axis along which the fluid centroid lies furthest outside the
/// structure), and the face is the outermost layer nearer the centroid.
pub fn infer_wall_face(frame: &ParticleFrame, group: u32, dp: f64) -> Result<WallFace, PostprocError> {
    let idx = frame.indices_of_group(group);
    if idx.is_empty() {
        return Err(PostprocError::EmptySelection(format!("group {group} has no particles")));
    }
    if idx.iter().any(|&i| frame.kind[i] == ParticleKind::Fluid) {
        return Err(PostprocError::WrongGroupKind {
            group,
            expected: "boundary or floating",
        });
    }
    let fluid = frame.indices_of_kind(ParticleKind::Fluid);
    if fluid.is_empty() {
        return Err(PostprocError::EmptySelection("frame has no fluid".into()));
    }
    let centroid = fluid.iter().map(|&i| frame.position[i]).sum::<Vec3>() / fluid.len() as f64;
    let pts: Vec<Vec3> = idx.iter().map(|&i| frame.position[i]).collect();
    let planar = frame.is_planar();
    let axes = candidate_axes(&pts, planar);
    let range = |a: &Vec3| {
        pts.iter()
            .map(|p| p.dot(a))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let ranges: Vec<(f64, f64)> = axes.iter().map(range).collect();
    let min_extent = ranges.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let outside = |k: usize| {
        let c = centroid.dot(&axes[k]);
        let (lo, hi) = ranges[k];
        (lo - c).max(c - hi).max(0.0)
    };
    let k = (0..axes.len())
        .filter(|&k| ranges[k].1 - ranges[k].0 <= min_extent + 0.5 * dp)
        .max_by(|&a, &b| outside(a).total_cmp(&outside(b)).then(b.cmp(&a)))
        .expect("at least one axis");
    let axis = axes[k];
    let (lo, hi) = ranges[k];
    let extent = hi - lo;
    let layers = (extent / dp).round() as usize + 1;
    let c = centroid.dot(&axis);
    let (d_lo, d_hi) = ((c - lo).abs(), (c - hi).abs());
    if layers >= 2 && (d_hi - d_lo).abs() < dp * (1.0 - 1e-6) {
        return Err(PostprocError::AmbiguousFace(group));
    }
    let (normal, level) = if d_hi < d_lo || (layers == 1 && c >= hi) { (axis, hi) } else { (-axis, lo) };
    let mut tangents: Vec<Vec3> = if planar {
        let t = normal.cross(&Vec3::y()).normalize();
        vec![t, Vec3::y()]
    } else {
        axes.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, a)| *a).collect()
    };
    if tangents.len() < 2 {
        tangents.push(normal.cross(&tangents[0]).normalize());
    }
    let tangents = [tangents[0], tangents[1]];
    let lateral = tangents.map(|t| {
        let (a, b) = range(&t);
        (a - 0.5 * dp, b + 0.5 * dp)
    });
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let point = mean + (level - mean.dot(&axis)) * axis;
    let crest = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max) + 0.5 * dp;
    Ok(WallFace {
        group,
        point,
        normal,
        thickness: extent + dp,
        layers,
        tangents,
        lateral,
        crest,
        particles: idx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    /// Bin centre along the plane's horizontal axis, m.
    pub s: f64,
    /// Free-surface elevation in the bin: top particle centre plus dp/2.
    pub height: f64,
}

/// Upper envelope of the fluid within `band` of `plane`, binned at `dp`
/// along the plane's horizontal axis. Only in-band particles matter.
pub fn surface_profile(
    frame: &ParticleFrame,
    plane: &PlaneSpec,
    band: f64,
    dp: f64,
    group: Option<u32>,
) -> Result<Vec<ProfilePoint>, PostprocError> {
    if band < dp {
        return Err(PostprocError::InvalidArgument(format!("band {band} is narrower than the spacing {dp}")));
    }
    let axis = plane.in_plane_axis();
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for i in 0..frame.len() {
        if frame.kind[i] != ParticleKind::Fluid || group.is_some_and(|g| frame.group[i] != g) {
            continue;
        }
        let p = frame.position[i];
        if plane.signed_distance(&p).abs() > band {
            continue;
        }
        let b = ((p - plane.point).dot(&axis) / dp).floor() as i64;
        let z = bins.entry(b).or_insert(f64::NEG_INFINITY);
        *z = z.max(p.z);
    }
    if bins.is_empty() {
        return Err(PostprocError::EmptySelection("no fluid particles within the band".into()));
    }
    Ok(bins
        .into_iter()
        .map(|(b, z)| ProfilePoint {
            s: (b as f64 + 0.5) * dp,
            height: z + 0.5 * dp,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionLabel {
    Upstream,
    Overtopped,
    Leaked,
    Other,
}

impl PartitionLabel {
    pub const ALL: [Self; 4] = [Self::Upstream, Self::Overtopped, Self::Leaked, Self::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Upstream => "upstream",
            Self::Overtopped => "overtopped",
            Self::Leaked => "leaked",
            Self::Other => "other",
        }
    }

    fn code(self) -> u32 {
        self as u32 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Final-frame positions only.
    Static,
    /// Where each particle first crossed the barrier face.
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub labels: BTreeMap<u32, PartitionLabel>,
    pub counts: BTreeMap<PartitionLabel, usize>,
    pub fractions: BTreeMap<PartitionLabel, f64>,
    /// Fractions weighted by particle mass.
    pub mass_fractions: BTreeMap<PartitionLabel, f64>,
}

impl PartitionResult {
    fn from_labels(labels: BTreeMap<u32, PartitionLabel>, mass: &HashMap<u32, f64>) -> Self {
        let n = labels.len() as f64;
        let total: f64 = labels.keys().map(|id| mass[id]).sum();
        let mut counts = BTreeMap::new();
        let mut masses = BTreeMap::new();
        for l in PartitionLabel::ALL {
            counts.insert(l, 0);
            masses.insert(l, 0.0);
        }
        for (id, l) in &labels {
            *counts.get_mut(l).unwrap() += 1;
            *masses.get_mut(l).unwrap() += mass[id];
        }
        let fractions = counts.iter().map(|(k, &c)| (*k, c as f64 / n)).collect();
        let mass_fractions = masses.iter().map(|(k, &m)| (*k, m / total)).collect();
        Self {
            labels,
            counts,
            fractions,
            mass_fractions,
        }
    }

    pub fn fraction(&self, l: PartitionLabel) -> f64 {
        self.fractions[&l]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,label\n");
        for (id, l) in &self.labels {
            s.push_str(&format!("{id},{}\n", l.as_str()));
        }
        s
    }
}

fn classify_downstream(barrier: &WallFace, p: &Vec3) -> PartitionLabel {
    let (t, lo, hi) = barrier.horizontal_span();
    let s = p.dot(&t);
    if s < lo || s > hi {
        PartitionLabel::Leaked
    } else if p.z >= barrier.crest - 1e-12 {
        PartitionLabel::Overtopped
    } else {
        PartitionLabel::Other
    }
}

/// Split fluid particles into upstream, overtopped and leaked relative to a
/// barrier face.
pub fn partition_flow(run: &RunData, barrier: &WallFace, mode: PartitionMode) -> Result<PartitionResult, PostprocError> {
    let first = run.first();
    let fluid = first.indices_of_kind(ParticleKind::Fluid);
    if fluid.is_empty() {
        return Err(PostprocError::EmptySelection("no fluid particles".into()));
    }
    if mode == PartitionMode::Trajectory && run.frames.len() < 2 {
        return Err(PostprocError::InvalidArgument("trajectory partition needs at least two frames".into()));
    }
    let plane = barrier.plane();
    let mass: HashMap<u32, f64> = fluid.iter().map(|&i| (first.id[i], first.mass[i])).collect();
    let index_maps: Vec<HashMap<u32, usize>> = run.frames.iter().map(|f| f.id.iter().enumerate().map(|(k, &id)| (id, k)).collect()).collect();
    let mut labels = BTreeMap::new();
    for &i0 in &fluid {
        let id = first.id[i0];
        let label = match mode {
            PartitionMode::Static => {
                let f = run.frames.last().unwrap();
                let p = index_maps.last().unwrap().get(&id).map(|&k| f.position[k]);
                match p {
                    None => PartitionLabel::Other,
                    Some(p) if plane.signed_distance(&p) >= 0.0 => PartitionLabel::Upstream,
                    Some(p) => classify_downstream(barrier, &p),
                }
            }
            PartitionMode::Trajectory => {
                let mut label = PartitionLabel::Upstream;
                let mut prev: Option<Vec3> = None;
                for (f, map) in run.frames.iter().zip(&index_maps) {
                    let Some(&k) = map.get(&id) else { continue };
                    let p = f.position[k];
                    let d = plane.signed_distance(&p);
                    if d < 0.0 {
                        // Position where the path meets the face plane.
                        let at = match prev {
                            Some(q) => {
                                let dq = plane.signed_distance(&q);
                                q + (p - q) * (dq / (dq - d))
                            }
                            None => p,
                        };
                        label = classify_downstream(barrier, &at);
                        if label == PartitionLabel::Other {
                            label = classify_downstream(barrier, &p);
                        }
                        break;
                    }
                    prev = Some(p);
                }
                label
            }
        };
        labels.insert(id, label);
    }
    Ok(PartitionResult::from_labels(labels, &mass))
}

/// Partition labels drawn as categories: 1 upstream, 2 overtopped,
/// 3 leaked, 4 other.
pub fn render_partition(frame: &ParticleFrame, result: &PartitionResult, view: &ViewSpec) -> Result<String, PostprocError> {
    let mut f = frame.clone();
    for i in 0..f.len() {
        if let Some(l) = result.labels.get(&f.id[i]) {
            f.group[i] = l.code();
        }
    }
    let view = ViewSpec {
        color_by: "group".into(),
        include_boundaries: false,
        title: if view.title.is_empty() { "1 upstream, 2 overtopped, 3 leaked, 4 other".into() } else { view.title.clone() },
        ..view.clone()
    };
    Ok(render_snapshot(&f, &view)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFlux {
    /// kg/s over each frame interval, stamped at the interval end.
    pub flux: TimeSeries,
    /// Net mass that has crossed in the normal direction, kg, per frame.
    pub cumulative: TimeSeries,
    pub net_crossings: i64,
}

/// Mass flux of fluid through a plane from consecutive-frame sign changes of
/// each particle's signed distance. Negative-to-non-negative counts +1.
pub fn mass_flux(run: &RunData, plane: &PlaneSpec) -> Result<MassFlux, PostprocError> {
    if run.frames.len() < 2 {
        return Err(PostprocError::InvalidArgument("mass flux needs at least two frames".into()));
    }
    // Crossings are tallied per distinct particle mass so the cumulative
    // total is exactly mass times an integer count.
    let mut totals: BTreeMap<u64, i64> = BTreeMap::new();
    let mut flux = Vec::new();
    let mut cumulative = vec![0.0];
    let mut net = 0i64;
    for w in run.frames.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let prev: HashMap<u32, f64> = (0..a.len())
            .filter(|&i| a.kind[i] == ParticleKind::Fluid)
            .map(|i| (a.id[i], plane.signed_distance(&a.position[i])))
            .collect();
        let mut interval: BTreeMap<u64, i64> = BTreeMap::new();
        for i in 0..b.len() {
            let Some(&d0) = prev.get(&b.id[i]) else { continue };
            let d1 = plane.signed_distance(&b.position[i]);
            let s = match (d0 < 0.0, d1 < 0.0) {
                (true, false) => 1,
                (false, true) => -1,
                _ => 0,
            };
            if s != 0 {
                *interval.entry(b.mass[i].to_bits()).or_default() += s;
                *totals.entry(b.mass[i].to_bits()).or_default() += s;
                net += s;
            }
        }
        let dt = b.time - a.time;
        let crossed: f64 = interval.iter().map(|(m, c)| f64::from_bits(*m) * *c as f64).sum();
        flux.push(if dt > 0.0 { crossed / dt } else { 0.0 });
        cumulative.push(totals.iter().map(|(m, c)| f64::from_bits(*m) * *c as f64).sum());
    }
    let times = run.times();
    Ok(MassFlux {
        flux: TimeSeries::scalar("mass_flux", "kg/s", times[1..].to_vec(), flux),
        cumulative: TimeSeries::scalar("cumulative_mass", "kg", times, cumulative),
        net_crossings: net,
    })
}

/// Fluid mass on the positive side of `plane` per frame.
pub fn downstream_mass(run: &RunData, plane: &PlaneSpec, group: Option<u32>) -> TimeSeries {
    let v = run
        .frames
        .iter()
        .map(|f| {
            (0..f.len())
                .filter(|&i| f.kind[i] == ParticleKind::Fluid && group.is_none_or(|g| f.group[i] == g))
                .filter(|&i| plane.signed_distance(&f.position[i]) > 0.0)
                .map(|i| f.mass[i])
                .sum()
        })
        .collect();
    TimeSeries::scalar("downstream_mass", "kg", run.times(), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "criterion")]
pub enum HitCriterion {
    /// Fluid comes within kernel support (2h) of the face.
    KernelRange,
    /// Mean pressure of the structure's particles exceeds its frame-0 mean
    /// by `threshold` Pa.
    PressureRise { threshold: f64 },
}

/// First frame time at which the fluid interacts with a face.
pub fn hit_time(run: &RunData, face: &WallFace, criterion: HitCriterion, h: f64) -> Result<f64, PostprocError> {
    match criterion {
        HitCriterion::KernelRange => {
            for f in &run.frames {
                let near = (0..f.len())
                    .filter(|&i| f.kind[i] == ParticleKind::Fluid)
                    .any(|i| face.distance(&f.position[i]) <= 2.0 * h);
                if near {
                    return Ok(f.time);
                }
            }
            Err(PostprocError::NotReached)
        }
        HitCriterion::PressureRise { threshold } => {
            let mean_p = |f: &ParticleFrame| {
                let idx = f.indices_of_group(face.group);
                idx.iter().map(|&i| f.pressure[i]).sum::<f64>() / idx.len().max(1) as f64
            };
            let base = mean_p(run.first());
            run.frames
                .iter()
                .find(|f| mean_p(f) - base > threshold)
                .map(|f| f.time)
                .ok_or(PostprocError::NotReached)
        }
    }
}

fn height_map(f: &ParticleFrame, group: u32, dp: f64) -> BTreeMap<(i64, i64), f64> {
    let mut m: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for i in f.indices_of_group(group) {
        let p = f.position[i];
        let key = ((p.x / dp).floor() as i64, (p.y / dp).floor() as i64);
        let z = m.entry(key).or_insert(f64::NEG_INFINITY);
        *z = z.max(p.z + 0.5 * dp);
    }
    m
}

/// Volume (area per unit width in 2D) by which a phase's top surface has
/// sunk below and bulged above its frame-0 surface, per frame.
pub fn sink_bulge_volume(run: &RunData, group: u32) -> Result<TimeSeries, PostprocError> {
    let dp = run.dp();
    let first = run.first();
    let z_min = first
        .indices_of_group(group)
        .iter()
        .map(|&i| first.position[i].z)
        .fold(f64::INFINITY, f64::min);
    if !z_min.is_finite() {
        return Err(PostprocError::EmptySelection(format!("group {group} has no particles")));
    }
    let base = z_min - 0.5 * dp;
    let cell = if first.is_planar() { dp } else { dp * dp };
    let h0 = height_map(first, group, dp);
    let values = run
        .frames
        .iter()
        .map(|f| {
            let h = height_map(f, group, dp);
            let (mut sink, mut bulge) = (0.0, 0.0);
            let keys: std::collections::BTreeSet<_> = h0.keys().chain(h.keys()).collect();
            for k in keys {
                let dz = h.get(k).copied().unwrap_or(base) - h0.get(k).copied().unwrap_or(base);
                if dz < 0.0 {
                    sink -= dz * cell;
                } else {
                    bulge += dz * cell;
                }
            }
            vec![sink, bulge]
        })
        .collect();
    Ok(TimeSeries {
        label: "sink_bulge_volume".into(),
        units: if first.is_planar() { "m^2" } else { "m^3" }.into(),
        columns: vec!["sink".into(), "bulge".into()],
        times: run.times(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{static_run, translating_run};
    use super::*;
    use crate::case::{CaseDefinition, Frame, GeometryPrimitive};
    use crate::fixtures;
    use crate::particles::generate_particles;
    use proptest::prelude::*;

    fn case_frame(case: &CaseDefinition) -> ParticleFrame {
        generate_particles(case).unwrap()
    }

    #[test]
    fn right_wall_face_is_its_inner_plane() {
        let case = fixtures::c1_dam_break();
        let f = case_frame(&case);
        let face = infer_wall_face(&f, 3, 0.02).unwrap();
        assert!((face.normal - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((face.point.x - 2.01).abs() < 1e-9, "{}", face.point.x);
        assert_eq!(face.layers, 4);
        assert!((face.thickness - 0.08).abs() < 1e-9);
        let floor = infer_wall_face(&f, 1, 0.02).unwrap();
        assert!((floor.normal - Vec3::z()).norm() < 1e-12);
        assert!((floor.point.z + 0.01).abs() < 1e-9);
    }

    #[test]
    fn barrier_face_points_upstream() {
        let case = fixtures::c2_barrier();
        let f = case_frame(&case);
        let face = infer_wall_face(&f, 20, 0.05).unwrap();
        assert!((face.normal - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12, "{:?}", face.normal);
        assert!((face.point.x - 0.925).abs() < 1e-9);
        assert!((face.crest - 0.25).abs() < 1e-9);
    }

    #[test]
    fn single_layer_wall_face_is_the_layer() {
        let mut case = fixtures::c1_dam_break();
        case.primitives.retain(|p| p.group_id != 3);
        case.primitives.push(GeometryPrimitive::wall(
            3,
            Frame::rotated(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -90.0, 0.0)),
            Vec3::new(0.3, 0.0, 0.0),
            1,
        ));
        let f = case_frame(&case);
        let face = infer_wall_face(&f, 3, 0.02).unwrap();
        assert_eq!(face.layers, 1);
        let xs: Vec<f64> = f.indices_of_group(3).iter().map(|&i| f.position[i].x).collect();
        assert!(xs.iter().all(|x| (x - face.point.x).abs() < 1e-12));
        assert!(face.normal.x < 0.0);
    }

    #[test]
    fn fluid_on_both_sides_is_ambiguous() {
        let dp = 0.02;
        let mut f = ParticleFrame::default();
        let mut id = 0;
        for layer in 0..3 {
            for k in 0..10 {
                f.push(id, ParticleKind::Boundary, 5, Vec3::new(layer as f64 * dp, 0.0, k as f64 * dp), Vec3::zeros(), 1000.0, 0.0, 0.4);
                id += 1;
            }
        }
        for side in [-1.0, 1.0] {
            for k in 0..10 {
                let x = dp + side * (0.1 + k as f64 * dp);
                f.push(id, ParticleKind::Fluid, 10, Vec3::new(x, 0.0, 0.05), Vec3::zeros(), 1000.0, 0.0, 0.4);
                id += 1;
            }
        }
        assert!(matches!(infer_wall_face(&f, 5, dp), Err(PostprocError::AmbiguousFace(5))));
    }

    #[test]
    fn block_profile_is_flat() {
        let case = fixtures::c2_barrier();
        let f = case_frame(&case);
        let plane = PlaneSpec::new(Vec3::new(0.0, 0.25, 0.0), Vec3::y()).unwrap();
        let prof = surface_profile(&f, &plane, 0.05, 0.05, None).unwrap();
        assert_eq!(prof.len(), 8);
        for p in &prof {
            assert!((p.height - 0.3).abs() <= 0.05);
        }
        let far = PlaneSpec::new(Vec3::new(0.0, 5.0, 0.0), Vec3::y()).unwrap();
        assert!(matches!(surface_profile(&f, &far, 0.05, 0.05, None), Err(PostprocError::EmptySelection(_))));
        assert!(surface_profile(&f, &plane, 0.01, 0.05, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn profile_ignores_out_of_band_particles(dx in -1.0f64..1.0, dz in -1.0f64..1.0, seed in 0usize..50) {
            let case = fixtures::c2_barrier();
            let f = case_frame(&case);
            let plane = PlaneSpec::new(Vec3::new(0.0, 0.25, 0.0), Vec3::y()).unwrap();
            let base = surface_profile(&f, &plane, 0.05, 0.05, None).unwrap();
            let mut g = f.clone();
            for i in 0..g.len() {
                if plane.signed_distance(&g.position[i]).abs() > 0.05 && (i + seed) % 3 == 0 {
                    let p = g.position[i];
                    let y = if p.y > 0.25 { p.y.max(0.31) } else { p.y.min(0.19) };
                    g.position[i] = Vec3::new(p.x + dx, y, p.z + dz);
                }
            }
            prop_assert_eq!(surface_profile(&g, &plane, 0.05, 0.05, None).unwrap(), base);
        }
    }

    fn synthetic_paths() -> (RunData, WallFace) {
        // Barrier face at x = 1 facing -x, lateral span y ∈ [0.2, 0.8],
        // crest z = 0.5.
        let face = WallFace {
            group: 20,
            point: Vec3::new(1.0, 0.5, 0.25),
            normal: Vec3::new(-1.0, 0.0, 0.0),
            thickness: 0.2,
            layers: 4,
            tangents: [Vec3::y(), Vec3::z()],
            lateral: [(0.2, 0.8), (0.0, 0.5)],
            crest: 0.5,
            particles: 1,
        };
        let paths: Vec<Vec<Vec3>> = (0..100)
            .map(|k| {
                let y = 0.3 + 0.004 * k as f64;
                if k < 10 {
                    vec![Vec3::new(0.5, y, 0.3), Vec3::new(0.9, y, 0.6), Vec3::new(1.4, y, 0.6)]
                } else if k < 15 {
                    vec![Vec3::new(0.5, 0.1, 0.1), Vec3::new(0.9, 0.1, 0.1), Vec3::new(1.3, 0.1, 0.1)]
                } else {
                    vec![Vec3::new(0.5, y, 0.1), Vec3::new(0.7, y, 0.1), Vec3::new(0.9, y, 0.1)]
                }
            })
            .collect();
        let frames = (0..3)
            .map(|t| {
                let mut f = ParticleFrame {
                    time: t as f64,
                    ..Default::default()
                };
                for (id, p) in paths.iter().enumerate() {
                    f.push(id as u32, ParticleKind::Fluid, 10, p[t], Vec3::zeros(), 1000.0, 0.0, 0.5);
                }
                f
            })
            .collect();
        (RunData::from_frames(fixtures::c2_barrier(), frames), face)
    }

    #[test]
    fn trajectory_partition_fractions() {
        let (run, face) = synthetic_paths();
        let r = partition_flow(&run, &face, PartitionMode::Trajectory).unwrap();
        assert_eq!(r.fraction(PartitionLabel::Upstream), 0.85);
        assert_eq!(r.fraction(PartitionLabel::Overtopped), 0.10);
        assert_eq!(r.fraction(PartitionLabel::Leaked), 0.05);
        assert!((r.fractions.values().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(r.labels.len(), 100);
    }

    #[test]
    fn fall_back_particle_stays_overtopped() {
        let (mut run, face) = synthetic_paths();
        // Particle 0 goes over the crest and is then carried back upstream.
        let i = run.frames[1].id.iter().position(|&id| id == 0).unwrap();
        run.frames[1].position[i] = Vec3::new(1.05, 0.3, 0.6);
        run.frames[2].position[i] = Vec3::new(0.8, 0.3, 0.1);
        let traj = partition_flow(&run, &face, PartitionMode::Trajectory).unwrap();
        let stat = partition_flow(&run, &face, PartitionMode::Static).unwrap();
        assert_eq!(traj.labels[&0], PartitionLabel::Overtopped);
        assert_eq!(stat.labels[&0], PartitionLabel::Upstream);
    }

    #[test]
    fn all_upstream_when_nothing_moves() {
        let run = static_run(fixtures::c2_barrier(), 3, 0.1);
        let face = infer_wall_face(run.first(), 20, 0.05).unwrap();
        for mode in [PartitionMode::Static, PartitionMode::Trajectory] {
            assert_eq!(partition_flow(&run, &face, mode).unwrap().fraction(PartitionLabel::Upstream), 1.0);
        }
    }

    #[test]
    fn flux_matches_crossing_count() {
        let v = 0.5;
        let dt = 0.1;
        let run = translating_run(Vec3::new(v, 0.0, 0.0), 8, dt);
        let plane = PlaneSpec::new(Vec3::new(0.55, 0.0, 0.0), Vec3::x()).unwrap();
        let r = mass_flux(&run, &plane).unwrap();
        // Brute-force oracle: count ids changing side per interval.
        let m = run.first().mass[run.first().indices_of_kind(ParticleKind::Fluid)[0]];
        let mut net = 0i64;
        for (k, w) in run.frames.windows(2).enumerate() {
            let mut c = 0i64;
            for i in 0..w[0].len() {
                if w[0].kind[i] != ParticleKind::Fluid {
                    continue;
                }
                let (a, b) = (w[0].position[i].x - 0.55, w[1].position[i].x - 0.55);
                if a < 0.0 && b >= 0.0 {
                    c += 1;
                } else if a >= 0.0 && b < 0.0 {
                    c -= 1;
                }
            }
            net += c;
            assert_eq!(r.flux.scalars()[k], c as f64 * m / (w[1].time - w[0].time));
        }
        assert!(net > 0);
        assert_eq!(r.net_crossings, net);
        assert_eq!(*r.cumulative.scalars().last().unwrap(), m * net as f64);
        let still = static_run(fixtures::c1_dam_break(), 3, 0.1);
        assert!(mass_flux(&still, &plane).unwrap().flux.scalars().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_range_hit_time() {
        let case = fixtures::c1_dam_break();
        let h = case.smoothing_length();
        let v = 1.0;
        let dt = 0.02;
        let run = translating_run(Vec3::new(v, 0.0, 0.0), 120, dt);
        let face = infer_wall_face(run.first(), 3, 0.02).unwrap();
        let front = run.first().indices_of_kind(ParticleKind::Fluid).iter().map(|&i| run.first().position[i].x).fold(f64::MIN, f64::max);
        let gap = face.point.x - front;
        let t = hit_time(&run, &face, HitCriterion::KernelRange, h).unwrap();
        assert!((t - (gap - 2.0 * h) / v).abs() <= dt + 1e-12, "{t}");
        let geometric = run
            .frames
            .iter()
            .find(|f| (0..f.len()).any(|i| f.kind[i] == ParticleKind::Fluid && f.position[i].x >= face.point.x))
            .map(|f| f.time)
            .unwrap();
        assert!(t <= geometric);
        let short = translating_run(Vec3::zeros(), 3, dt);
        assert!(matches!(hit_time(&short, &face, HitCriterion::KernelRange, h), Err(PostprocError::NotReached)));
    }

    #[test]
    fn pressure_rise_hit_time() {
        let mut run = static_run(fixtures::c1_dam_break(), 4, 0.1);
        for i in run.frames[2].indices_of_group(3) {
            run.frames[2].pressure[i] += 500.0;
        }
        let face = infer_wall_face(run.first(), 3, 0.02).unwrap();
        assert_eq!(hit_time(&run, &face, HitCriterion::PressureRise { threshold: 100.0 }, 0.03).unwrap(), 0.2);
        assert!(hit_time(&run, &face, HitCriterion::PressureRise { threshold: 1000.0 }, 0.03).is_err());
    }

    #[test]
    fn sink_and_bulge_areas() {
        let mut run = static_run(fixtures::c4_erosion(), 2, 0.1);
        let dp = run.dp();
        let f = &mut run.frames[1];
        let bed = f.indices_of_group(11);
        let top = bed.iter().map(|&i| f.position[i].z).fold(f64::MIN, f64::max);
        // Lower the top row in three columns by one spacing, raise one.
        let mut cols: Vec<i64> = bed.iter().map(|&i| (f.position[i].x / dp).floor() as i64).collect();
        cols.sort();
        cols.dedup();
        for &i in &bed {
            let c = (f.position[i].x / dp).floor() as i64;
            if (f.position[i].z - top).abs() < 1e-9 {
                let mid = cols.len() / 2;
                if cols[mid..mid + 3].contains(&c) {
                    f.position[i].z -= 5.0;
                } else if c == cols[mid + 5] {
                    f.position[i].z += dp;
                }
            }
        }
        let s = sink_bulge_volume(&run, 11).unwrap();
        assert_eq!(s.values[0], vec![0.0, 0.0]);
        let [sink, bulge] = [s.values[1][0], s.values[1][1]];
        assert!((sink - 3.0 * dp * dp).abs() < 1e-12, "{sink}");
        assert!((bulge - dp * dp).abs() < 1e-12, "{bulge}");
    }

    #[test]
    fn downstream_mass_counts_positive_side() {
        let run = static_run(fixtures::c1_dam_break(), 2, 0.1);
        let plane = PlaneSpec::new(Vec3::new(0.2, 0.0, 0.0), Vec3::x()).unwrap();
        let total = run.first().total_mass(ParticleKind::Fluid);
        let s = downstream_mass(&run, &plane, None).scalars();
        assert!((s[0] - total / 2.0).abs() < 1e-9 * total);
    }

    #[test]
    fn partition_render_has_categories() {
        let (run, face) = synthetic_paths();
        let r = partition_flow(&run, &face, PartitionMode::Trajectory).unwrap();
        let svg = render_partition(run.frames.last().unwrap(), &r, &ViewSpec::side("group")).unwrap();
        assert!(svg.contains("1 upstream"));
        assert_eq!(svg.matches("<circle").count(), 100);
    }
}
