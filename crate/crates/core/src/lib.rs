//! Particle-based debris-flow workbench: case model and XML documents,
//! particle generation, geometry validation, a weakly-compressible SPH
//! solver with Herschel–Bulkley–Papanastasiou rheology, the run pipeline,
//! post-processing tools, the session orchestrator and evaluation helpers.

pub mod case;
pub mod evalkit;
pub mod fixtures;
pub mod io;
pub mod orchestrator;
pub mod particles;
pub mod pipeline;
pub mod postproc;
pub mod render;
pub mod sph;
pub mod validate;
pub mod xml;

pub use case::{
    required_boundary_layers, validate_semantics, CaseDefinition, Dimensionality, Frame, GeometryPrimitive, MaterialSpec,
    NumericalSpec, PrimitiveKind, Role, RunControls, SemanticIssue, Vec3,
};
pub use particles::{generate_particles, transform_local_to_global, GenerationError, ParticleFrame, ParticleKind};
pub use validate::{ContactPair, FailureMode, Finding, GroundTruthSpec, ValidationReport};
pub use xml::{diff_cases, emit_case, parse_case, ParseError, ParseErrorCategory, StructuralDiff};
pub use io::{export_frame, read_frame_csv, ExportFormat, IoError};
pub use render::{render_snapshot, RenderError, ViewSpec};
pub use pipeline::{run_pipeline, run_pipeline_with, PipelineError, PipelineOptions, Progress, RunSummary, Stage};
pub use postproc::{PlaneSpec, PostprocError, RunData, TimeSeries};
pub use orchestrator::{Action, InputEnvelope, Phase, Planner, ScriptedPlanner, Session, SessionConfig, SkillContext};
