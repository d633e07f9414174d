//! Analysis tools over exported run directories. Every tool is a pure
//! function of the frames it is given; [`registry`] exposes them by name
//! with typed arguments.

mod forces;
mod geometry;
pub mod registry;
mod series;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseDefinition, Vec3};
use crate::io::{read_frame_csv, read_manifest, IoError, MANIFEST_FILE};
use crate::particles::{ParticleFrame, ParticleKind};
use crate::pipeline::CASE_FILE;
use crate::render::RenderError;
use crate::xml::{parse_case, ParseError};

pub use forces::{bending_moment, pair_force_bookkeeping, reaction_force, ReactionForce};
pub use geometry::{
    downstream_mass, hit_time, infer_wall_face, mass_flux, partition_flow, render_partition, sink_bulge_volume,
    surface_profile, HitCriterion, MassFlux, PartitionLabel, PartitionMode, PartitionResult, ProfilePoint, WallFace,
};
pub use series::{
    body_com_all, body_com_series, front_position, runout_distance, scalar_series, sinking_depth, surge_height, Aabb,
    Reducer, Selector,
};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("selection matched no particles: {0}")]
    EmptySelection(String),
    #[error("group {group} is not a {expected} group")]
    WrongGroupKind { group: u32, expected: &'static str },
    #[error("wetted face of group {0} is ambiguous: fluid centroid is equally close to both faces")]
    AmbiguousFace(u32),
    #[error("criterion never satisfied within the run")]
    NotReached,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("run directory {path}: {message}")]
    RunDir { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl From<ParseError> for PostprocError {
    fn from(e: ParseError) -> Self {
        Self::InvalidArgument(format!("case_used.xml: {e}"))
    }
}

/// The case and all frames of one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub case: CaseDefinition,
    pub frames: Vec<ParticleFrame>,
}

impl RunData {
    pub fn from_frames(case: CaseDefinition, frames: Vec<ParticleFrame>) -> Self {
        Self { case, frames }
    }

    /// Load `case_used.xml`, the manifest and every listed frame CSV.
    pub fn load(dir: &Path) -> Result<Self, PostprocError> {
        let case_path = dir.join(CASE_FILE);
        let text = fs::read_to_string(&case_path).map_err(|e| IoError::io(&case_path, e))?;
        let case = parse_case(&text)?;
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        if manifest.is_empty() {
            return Err(PostprocError::RunDir {
                path: dir.to_path_buf(),
                message: "manifest lists no frames".into(),
            });
        }
        let frames = manifest
            .iter()
            .map(|e| read_frame_csv(&dir.join(format!("{}.csv", e.stem)), e.time))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { case, frames })
    }

    pub fn dp(&self) -> f64 {
        self.case.numerics.dp
    }

    pub fn h(&self) -> f64 {
        self.case.smoothing_length()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    /// Frame whose time is closest to `t`.
    pub fn frame_at(&self, t: f64) -> &ParticleFrame {
        self.frames
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("run has at least one frame")
    }

    pub fn first(&self) -> &ParticleFrame {
        &self.frames[0]
    }

    /// Error unless `group` is present in frame 0 with one of `kinds`.
    pub fn require_group(&self, group: u32, kinds: &[ParticleKind], expected: &'static str) -> Result<usize, PostprocError> {
        let f = self.first();
        let idx = f.indices_of_group(group);
        if idx.is_empty() {
            return Err(PostprocError::EmptySelection(format!("group {group} has no particles")));
        }
        if !idx.iter().all(|&i| kinds.contains(&f.kind[i])) {
            return Err(PostprocError::WrongGroupKind { group, expected });
        }
        Ok(idx.len())
    }
}

/// Sampled quantity with one or more named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub label: String,
    pub units: String,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time, one entry per column.
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn scalar(label: &str, units: &str, times: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            units: units.into(),
            columns: vec!["value".into()],
            times,
            values: values.into_iter().map(|v| vec![v]).collect(),
        }
    }

    pub fn vector(label: &str, units: &str, times: Vec<f64>, values: Vec<Vec3>) -> Self {
        Self {
            label: label.into(),
            units: units.into(),
            columns: vec!["x".into(), "y".into(), "z".into()],
            times,
            values: values.into_iter().map(|v| vec![v.x, v.y, v.z]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First column.
    pub fn scalars(&self) -> Vec<f64> {
        self.values.iter().map(|r| r[0]).collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[k]).collect()
    }

    pub fn vectors(&self) -> Vec<Vec3> {
        self.values.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect()
    }

    /// Time of the largest first-column value.
    pub fn argmax_time(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(&self.times)
            .filter(|(r, _)| r[0].is_finite())
            .max_by(|a, b| a.0[0].total_cmp(&b.0[0]))
            .map(|(_, &t)| t)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.values) {
            let _ = write!(s, "{t}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Oriented plane through `point`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub point: Vec3,
    pub normal: Vec3,
}

impl PlaneSpec {
    /// Normalises `normal`; rejects zero vectors.
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self, PostprocError> {
        let n = normal.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(PostprocError::InvalidArgument("plane normal must be non-zero".into()));
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// Horizontal unit vector in the plane, n × ẑ; x̂ for horizontal planes.
    pub fn in_plane_axis(&self) -> Vec3 {
        let t = self.normal.cross(&Vec3::z());
        if t.norm() > 1e-9 {
            t.normalize()
        } else {
            Vec3::x()
        }
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), PostprocError> {
    fs::write(path, text).map_err(|e| IoError::io(path, e).into())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::fixtures;
    use crate::particles::generate_particles;

    /// `n` frames of a rigid translation of the C1 fluid by `v·t`.
    pub fn translating_run(v: Vec3, n: usize, dt: f64) -> RunData {
        let case = fixtures::c1_dam_break();
        let base = generate_particles(&case).unwrap();
        let frames = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let mut f = base.clone();
                f.time = t;
                for i in 0..f.len() {
                    if f.kind[i] == ParticleKind::Fluid {
                        f.position[i] += v * t;
                        f.velocity[i] = v;
                    }
                }
                f
            })
            .collect();
        RunData::from_frames(case, frames)
    }

    pub fn static_run(case: CaseDefinition, n: usize, dt: f64) -> RunData {
        let base = generate_particles(&case).unwrap();
        let frames = (0..n)
            .map(|k| {
                let mut f = base.clone();
                f.time = k as f64 * dt;
                f
            })
            .collect();
        RunData::from_frames(case, frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_csv_layout() {
        let s = TimeSeries::vector("f", "N", vec![0.0, 0.5], vec![Vec3::new(1.0, 0.0, -2.0), Vec3::zeros()]);
        assert_eq!(s.to_csv(), "time,x,y,z\n0,1,0,-2\n0.5,0,0,0\n");
        let s = TimeSeries::scalar("h", "m", vec![0.0, 1.0, 2.0], vec![0.1, 0.4, 0.2]);
        assert_eq!(s.argmax_time(), Some(1.0));
    }

    #[test]
    fn plane_normal_is_normalised() {
        let p = PlaneSpec::new(Vec3::zeros(), Vec3::new(3.0, 0.0, 4.0)).unwrap();
        assert!((p.normal.norm() - 1.0).abs() < 1e-12);
        assert!(PlaneSpec::new(Vec3::zeros(), Vec3::zeros()).is_err());
        assert!((p.in_plane_axis().dot(&p.normal)).abs() < 1e-12);
    }

    #[test]
    fn load_round_trips_a_pipeline_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut case = crate::fixtures::hydrostatic_tank();
        case.controls.t_end = 0.02;
        case.controls.output_interval = 0.01;
        crate::pipeline::run_pipeline(&case, dir.path()).unwrap();
        let run = RunData::load(dir.path()).unwrap();
        assert_eq!(run.frames.len(), 3);
        assert_eq!(run.case, case);
        assert_eq!(run.frame_at(0.011).time, 0.01);
    }
}
