//! Deterministic run pipeline: a fixed sequence of stages from a case to a
//! directory of frame files. No stage takes decisions at run time.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::CaseDefinition;
use crate::io::{export_frame, frame_stem, manifest_to_string, ExportFormat, IoError, ManifestEntry, MANIFEST_FILE};
use crate::particles::{generate_particles, GenerationError, ParticleFrame};
use crate::render::{render_snapshot, ViewSpec};
use crate::sph::{BlowUpError, SolverError, SolverState};
use crate::validate::{validate_all, GroundTruthSpec, ValidationReport};
use crate::xml::{emit_case, EmitError};

pub const CASE_FILE: &str = "case_used.xml";
pub const PREVIEW_FILE: &str = "preview.svg";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VALIDATION_FILE: &str = "validation.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    EmitCase,
    Generate,
    Validate,
    Preview,
    Solve,
    Export,
    Summarize,
}

/// The stage order. `Validate` is skipped when no reference is supplied;
/// `Solve` and `Export` alternate once per output interval.
pub const STAGES: [Stage; 7] = [
    Stage::EmitCase,
    Stage::Generate,
    Stage::Validate,
    Stage::Preview,
    Stage::Solve,
    Stage::Export,
    Stage::Summarize,
];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("case cannot be emitted: {0}")]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Run the geometry validator against this reference before solving.
    pub truth: Option<GroundTruthSpec>,
    /// Skip the VTK copy of each frame.
    pub csv_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: Stage,
    /// Completed fraction of simulated time, in [0, 1].
    pub fraction: f64,
    pub time: f64,
    pub frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames_written: usize,
    /// Seconds of wall-clock time.
    pub wall_time: f64,
    /// Simulated time of the last state reached.
    pub final_time: f64,
    pub instability_flag: bool,
    pub instability: Option<BlowUpError>,
    pub output_dir: PathBuf,
    pub steps: u64,
    pub particles: usize,
    /// Largest per-step fluid momentum residual, relative to the fluid
    /// momentum scale.
    pub max_momentum_residual: f64,
    pub validation: Option<ValidationReport>,
    pub trace: Vec<Stage>,
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

fn export(frame: &ParticleFrame, dir: &Path, index: usize, csv_only: bool) -> Result<ManifestEntry, IoError> {
    let stem = frame_stem(index);
    export_frame(frame, ExportFormat::Csv, &dir.join(format!("{stem}.csv")))?;
    if !csv_only {
        export_frame(frame, ExportFormat::VtkLegacyAscii, &dir.join(format!("{stem}.vtk")))?;
    }
    Ok(ManifestEntry {
        index,
        time: frame.time,
        stem,
    })
}

/// [`run_pipeline_with`] with default options and no progress reporting.
pub fn run_pipeline(case: &CaseDefinition, out_dir: &Path) -> Result<RunSummary, PipelineError> {
    run_pipeline_with(case, out_dir, &PipelineOptions::default(), |_| {})
}

/// Run a case to completion. A numerical blow-up ends the run early and is
/// reported through `instability_flag`; the frames written before it stay
/// on disk. Generation and I/O failures are errors.
pub fn run_pipeline_with(
    case: &CaseDefinition,
    out_dir: &Path,
    options: &PipelineOptions,
    mut progress: impl FnMut(&Progress),
) -> Result<RunSummary, PipelineError> {
    let started = Instant::now();
    let mut trace = Vec::new();
    fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;

    trace.push(Stage::EmitCase);
    write(&out_dir.join(CASE_FILE), &emit_case(case)?)?;

    trace.push(Stage::Generate);
    let frame = generate_particles(case)?;
    let particles = frame.len();

    let validation = options.truth.as_ref().map(|truth| {
        trace.push(Stage::Validate);
        let report = validate_all(case, &frame, truth, &case.numerics);
        (report.clone(), report.to_text())
    });
    if let Some((_, text)) = &validation {
        write(&out_dir.join(VALIDATION_FILE), text)?;
    }

    trace.push(Stage::Preview);
    let view = ViewSpec {
        title: "t = 0 s".into(),
        ..ViewSpec::side("kind")
    };
    let preview = render_snapshot(&frame, &view).expect("built-in view is valid");
    write(&out_dir.join(PREVIEW_FILE), &preview)?;

    let mut state = SolverState::new(case, frame)?;
    let t_end = case.controls.t_end;
    let interval = case.controls.output_interval;
    let total = case.controls.frame_count();

    let mut manifest = vec![export(&state.frame, out_dir, 0, options.csv_only)?];
    trace.push(Stage::Export);
    progress(&Progress {
        stage: Stage::Export,
        fraction: 0.0,
        time: 0.0,
        frame: Some(0),
    });

    let mut instability = None;
    let mut max_residual: f64 = 0.0;
    'frames: for k in 1..total {
        trace.push(Stage::Solve);
        let target = k as f64 * interval;
        while state.time() < target - 1e-12 {
            let dt = state.compute_dt().min(target - state.time());
            match state.step(dt) {
                Ok(d) => max_residual = max_residual.max(d.momentum_residual(&case.gravity)),
                Err(e) => {
                    instability = Some(e);
                    break 'frames;
                }
            }
        }
        // Absorb accumulated rounding so frame times are exact multiples.
        state.frame.time = target;
        trace.push(Stage::Export);
        manifest.push(export(&state.frame, out_dir, k, options.csv_only)?);
        progress(&Progress {
            stage: Stage::Export,
            fraction: (target / t_end).min(1.0),
            time: target,
            frame: Some(k),
        });
    }
    write(&out_dir.join(MANIFEST_FILE), &manifest_to_string(&manifest))?;

    trace.push(Stage::Summarize);
    let summary = RunSummary {
        frames_written: manifest.len(),
        wall_time: started.elapsed().as_secs_f64(),
        final_time: state.time(),
        instability_flag: instability.is_some(),
        instability,
        output_dir: out_dir.to_path_buf(),
        steps: state.step_count,
        particles,
        max_momentum_residual: max_residual,
        validation: validation.map(|(r, _)| r),
        trace,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out_dir.join(SUMMARY_FILE), &json)?;
    progress(&Progress {
        stage: Stage::Summarize,
        fraction: if summary.instability_flag { summary.final_time / t_end } else { 1.0 },
        time: summary.final_time,
        frame: None,
    });
    Ok(summary)
}

/// Collapse consecutive Solve/Export repeats so traces of runs with
/// different frame counts compare equal.
pub fn stage_sequence(trace: &[Stage]) -> Vec<Stage> {
    let mut out: Vec<Stage> = Vec::new();
    for &s in trace {
        let cycle = matches!(s, Stage::Solve | Stage::Export) && out.ends_with(&[Stage::Solve, Stage::Export]);
        if !cycle && out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::io::read_manifest;

    fn short(mut case: CaseDefinition, t_end: f64, interval: f64) -> CaseDefinition {
        case.controls.t_end = t_end;
        case.controls.output_interval = interval;
        case
    }

    #[test]
    fn frame_count_and_manifest_times() {
        let dir = tempfile::tempdir().unwrap();
        let case = short(fixtures::hydrostatic_tank(), 0.05, 0.01);
        let mut seen = Vec::new();
        let s = run_pipeline_with(&case, dir.path(), &PipelineOptions::default(), |p| seen.push(p.clone())).unwrap();
        assert_eq!(s.frames_written, 6);
        assert!(!s.instability_flag);
        let m = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.len(), 6);
        for (k, e) in m.iter().enumerate() {
            assert_eq!(e.time, k as f64 * 0.01);
            assert!(dir.path().join(format!("{}.csv", e.stem)).exists());
            assert!(dir.path().join(format!("{}.vtk", e.stem)).exists());
        }
        for f in [CASE_FILE, PREVIEW_FILE, SUMMARY_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let fr: Vec<f64> = seen.iter().map(|p| p.fraction).collect();
        assert!(fr.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*fr.last().unwrap(), 1.0);
    }

    #[test]
    fn stage_order_is_fixed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s1 = run_pipeline(&short(fixtures::hydrostatic_tank(), 0.02, 0.01), a.path()).unwrap();
        let s2 = run_pipeline(&short(fixtures::hydrostatic_tank(), 0.04, 0.01), b.path()).unwrap();
        let expect = vec![Stage::EmitCase, Stage::Generate, Stage::Preview, Stage::Export, Stage::Solve, Stage::Export, Stage::Summarize];
        assert_eq!(stage_sequence(&s1.trace), expect);
        assert_eq!(stage_sequence(&s2.trace), expect);
        let c = tempfile::tempdir().unwrap();
        let opts = PipelineOptions {
            truth: Some(fixtures::c1_truth()),
            csv_only: true,
        };
        let s3 = run_pipeline_with(&short(fixtures::c1_dam_break(), 0.01, 0.01), c.path(), &opts, |_| {}).unwrap();
        assert_eq!(s3.trace[..4], [Stage::EmitCase, Stage::Generate, Stage::Validate, Stage::Preview]);
        assert!(s3.validation.unwrap().passed);
        assert!(!c.path().join("frame_0000.vtk").exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let case = short(fixtures::c1_dam_break(), 0.04, 0.02);
        run_pipeline(&case, a.path()).unwrap();
        run_pipeline(&case, b.path()).unwrap();
        for name in ["frame_0000.csv", "frame_0002.csv", "frame_0002.vtk", MANIFEST_FILE, CASE_FILE, PREVIEW_FILE] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn low_sound_speed_stops_early_and_keeps_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut case = fixtures::c1_dam_break();
        case.numerics.cs = 0.05;
        let s = run_pipeline(&case, dir.path()).unwrap();
        assert!(s.instability_flag);
        assert!(s.frames_written < case.controls.frame_count());
        assert!(s.frames_written >= 1);
        assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap().len(), s.frames_written);
    }

    #[test]
    fn overlap_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut case = fixtures::c1_dam_break();
        case.primitives.iter_mut().find(|p| p.group_id == 10).unwrap().frame.origin.x = -0.02;
        assert!(matches!(run_pipeline(&case, dir.path()), Err(PipelineError::Generation(_))));
    }
}
