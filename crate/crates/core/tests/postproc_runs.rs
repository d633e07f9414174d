//! Post-processing oracles on short solver runs.

use sphflow_core::fixtures;
use sphflow_core::postproc::{reaction_force, RunData};
use sphflow_core::{run_pipeline, ParticleKind};

#[test]
fn settled_tank_floor_carries_the_fluid_weight() {
    let dir = tempfile::tempdir().unwrap();
    let mut case = fixtures::hydrostatic_tank();
    case.controls.t_end = 1.0;
    case.controls.output_interval = 0.5;
    let summary = run_pipeline(&case, dir.path()).unwrap();
    assert!(!summary.instability_flag);
    let run = RunData::load(dir.path()).unwrap();
    let last = run.frames.last().unwrap();
    let weight = last.total_mass(ParticleKind::Fluid) * 9.81;
    let f = reaction_force(&run, 1).unwrap();
    let fz = f.total.vectors().last().unwrap().z;
    let rel = (fz.abs() - weight) / weight;
    println!("floor force {fz:.3} N/m, weight {weight:.3} N/m, relative error {rel:.4}");
    assert!(fz < 0.0);
    assert!(rel.abs() <= 0.15);
}
