//! Canonical desk-scale versions of the five benchmark configurations (2D dam
//! break, 3D barrier impact, inclined trench, two-phase erosion, floating
//! blocks) together with their ground-truth specifications.
//!
//! These are used by the mock planner, the CLI demo commands and the test
//! suites; they are small enough to run on one laptop core.

use crate::case::{
    default_speed_of_sound, CaseDefinition, Dimensionality, Frame, GeometryPrimitive, MaterialSpec,
    NumericalSpec, RunControls, Vec3,
};
use crate::validate::{ContactPair, GroundTruthSpec};

const G: f64 = 9.81;

/// Floor plus side walls of an open-top rectangular tank spanning
/// `[x0, x1] × [y0, y1]` (y ignored in 2D). Group ids are assigned from
/// `first_group` upwards: floor, −x wall, +x wall, then (3D) −y and +y walls.
pub fn tank_walls(
    dim: Dimensionality,
    x: (f64, f64),
    y: (f64, f64),
    height: f64,
    layers: u32,
    dp: f64,
    first_group: u32,
) -> Vec<GeometryPrimitive> {
    let t = layers as f64 * dp;
    let three = dim == Dimensionality::Three;
    let (x0, x1) = x;
    let (y0, y1) = if three { y } else { (0.0, 0.0) };
    let span_y = if three { y1 - y0 + 2.0 * t } else { 0.0 };
    let oy = if three { y0 - t } else { 0.0 };
    let mut walls = vec![
        GeometryPrimitive::wall(
            first_group,
            Frame::at(Vec3::new(x0 - t, oy, 0.0)),
            Vec3::new(x1 - x0 + 2.0 * t, span_y, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            first_group + 1,
            Frame::rotated(Vec3::new(x0, oy, height), Vec3::new(0.0, 90.0, 0.0)),
            Vec3::new(height, span_y, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            first_group + 2,
            Frame::rotated(Vec3::new(x1, oy, 0.0), Vec3::new(0.0, -90.0, 0.0)),
            Vec3::new(height, span_y, 0.0),
            layers,
        ),
    ];
    if three {
        walls.push(GeometryPrimitive::wall(
            first_group + 3,
            Frame::rotated(Vec3::new(x0, y0, height), Vec3::new(-90.0, 0.0, 0.0)),
            Vec3::new(x1 - x0, height, 0.0),
            layers,
        ));
        walls.push(GeometryPrimitive::wall(
            first_group + 4,
            Frame::rotated(Vec3::new(x0, y1, 0.0), Vec3::new(90.0, 0.0, 0.0)),
            Vec3::new(x1 - x0, height, 0.0),
            layers,
        ));
    }
    walls
}

fn debris_material(group_id: u32, rho0: f64) -> MaterialSpec {
    MaterialSpec {
        group_id,
        rho0,
        mu: 2.0,
        n: 1.0,
        tau_y: 2.0,
        m_papanastasiou: 10.0,
    }
}

fn numerics(dp: f64, fluid_height: f64) -> NumericalSpec {
    NumericalSpec {
        dp,
        cs: (default_speed_of_sound(&Vec3::new(0.0, 0.0, -G), fluid_height) * 100.0).round() / 100.0,
        alpha: 0.02,
        cfl: 0.2,
        h_coef: 1.2,
    }
}

/// C1: collapse of a rectangular 2D debris mass in a flat tank.
pub fn c1_dam_break() -> CaseDefinition {
    let dp = 0.02;
    let dim = Dimensionality::Two;
    let mut primitives = tank_walls(dim, (0.0, 2.0), (0.0, 0.0), 0.6, 4, dp, 1);
    primitives.push(GeometryPrimitive::fluid_box(
        10,
        Frame::at(Vec3::zeros()),
        Vec3::new(0.4, 0.0, 0.4),
    ));
    CaseDefinition {
        dim,
        gravity: Vec3::new(0.0, 0.0, -G),
        primitives,
        materials: vec![debris_material(10, 1500.0)],
        numerics: numerics(dp, 0.4),
        controls: RunControls {
            t_end: 2.0,
            output_interval: 0.1,
            seed: 0,
        },
    }
}

pub fn c1_truth() -> GroundTruthSpec {
    let case = c1_dam_break();
    let dp = case.numerics.dp;
    GroundTruthSpec::from_reference(case, 0.01, dp / 2.0)
        .with_contacts(vec![ContactPair::new(10, 1), ContactPair::new(10, 2)])
}

/// C2: 3D debris collapse against a small barrier that leaves side gaps.
pub fn c2_barrier() -> CaseDefinition {
    let dp = 0.05;
    let dim = Dimensionality::Three;
    let mut primitives = tank_walls(dim, (0.0, 1.5), (0.0, 0.5), 0.4, 5, dp, 1);
    primitives.push(GeometryPrimitive::fluid_box(
        10,
        Frame::at(Vec3::zeros()),
        Vec3::new(0.4, 0.5, 0.3),
    ));
    primitives.push(GeometryPrimitive::solid_box(
        20,
        Frame::at(Vec3::new(0.9, 0.1, 0.0)),
        Vec3::new(0.25, 0.3, 0.25),
    ));
    CaseDefinition {
        dim,
        gravity: Vec3::new(0.0, 0.0, -G),
        primitives,
        materials: vec![debris_material(10, 1500.0)],
        numerics: numerics(dp, 0.3),
        controls: RunControls {
            t_end: 1.0,
            output_interval: 0.05,
            seed: 0,
        },
    }
}

pub fn c2_truth() -> GroundTruthSpec {
    let case = c2_barrier();
    let dp = case.numerics.dp;
    GroundTruthSpec::from_reference(case, 0.01, dp / 2.0).with_contacts(vec![
        ContactPair::new(10, 1),
        ContactPair::new(10, 2),
        ContactPair::new(10, 4),
        ContactPair::new(10, 5),
    ])
}

/// C3: debris released in an inclined trench that opens onto a flat
/// deposition surface.
pub fn c3_trench() -> CaseDefinition {
    let dp = 0.05;
    let dim = Dimensionality::Three;
    let layers = 5;
    let t = layers as f64 * dp;
    let angle = 20.0_f64;
    let (s, c) = angle.to_radians().sin_cos();
    let length = 1.0;
    let width = 0.4;
    let side_h = 0.3;
    let top = Vec3::new(0.0, 0.0, length * s);
    let normal = Vec3::new(s, 0.0, c);
    let toe_x = length * c;

    let primitives = vec![
        GeometryPrimitive::wall(
            1,
            Frame::rotated(top + Vec3::new(0.0, -t, 0.0), Vec3::new(0.0, angle, 0.0)),
            Vec3::new(length, width + 2.0 * t, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            2,
            Frame::rotated(top + normal * side_h, Vec3::new(-90.0, angle, 0.0)),
            Vec3::new(length, side_h, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            3,
            Frame::rotated(top + Vec3::new(0.0, width, 0.0), Vec3::new(90.0, angle, 0.0)),
            Vec3::new(length, side_h, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            4,
            Frame::rotated(
                top + normal * side_h + Vec3::new(0.0, -t, 0.0),
                Vec3::new(0.0, angle + 90.0, 0.0),
            ),
            Vec3::new(side_h, width + 2.0 * t, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            5,
            Frame::at(Vec3::new(toe_x, -0.6, 0.0)),
            Vec3::new(1.2, width + 1.2, 0.0),
            layers,
        ),
        GeometryPrimitive::fluid_box(
            10,
            Frame::rotated(top, Vec3::new(0.0, angle, 0.0)),
            Vec3::new(0.3, width, 0.2),
        ),
    ];
    CaseDefinition {
        dim,
        gravity: Vec3::new(0.0, 0.0, -G),
        primitives,
        materials: vec![debris_material(10, 1500.0)],
        numerics: numerics(dp, length * s + 0.2),
        controls: RunControls {
            t_end: 2.0,
            output_interval: 0.1,
            seed: 0,
        },
    }
}

pub fn c3_truth() -> GroundTruthSpec {
    let case = c3_trench();
    let dp = case.numerics.dp;
    GroundTruthSpec::from_reference(case, 0.01, dp / 2.0).with_contacts(vec![
        ContactPair::new(10, 1),
        ContactPair::new(10, 2),
        ContactPair::new(10, 3),
        ContactPair::new(10, 4),
    ])
}

/// C4: 2D debris sliding down a 30° slope onto an erodible bed of a second
/// phase.
pub fn c4_erosion() -> CaseDefinition {
    let dp = 0.02;
    let dim = Dimensionality::Two;
    let layers = 4;
    let angle = 30.0_f64;
    let (s, c) = angle.to_radians().sin_cos();
    let length = 0.8;
    let top = Vec3::new(0.0, 0.0, length * s);
    let normal = Vec3::new(s, 0.0, c);
    let toe_x = length * c;
    let run = 1.2;
    let wall_h = 0.3;

    let primitives = vec![
        GeometryPrimitive::wall(1, Frame::at(Vec3::new(toe_x, 0.0, 0.0)), Vec3::new(run + 0.08, 0.0, 0.0), layers),
        GeometryPrimitive::wall(
            2,
            Frame::rotated(top, Vec3::new(0.0, angle, 0.0)),
            Vec3::new(length, 0.0, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            3,
            Frame::rotated(Vec3::new(toe_x + run, 0.0, 0.0), Vec3::new(0.0, -90.0, 0.0)),
            Vec3::new(wall_h, 0.0, 0.0),
            layers,
        ),
        GeometryPrimitive::wall(
            4,
            Frame::rotated(top + normal * wall_h, Vec3::new(0.0, angle + 90.0, 0.0)),
            Vec3::new(wall_h, 0.0, 0.0),
            layers,
        ),
        GeometryPrimitive::fluid_box(
            10,
            Frame::rotated(top, Vec3::new(0.0, angle, 0.0)),
            Vec3::new(0.3, 0.0, 0.16),
        ),
        GeometryPrimitive::fill(11, Frame::at(Vec3::new(toe_x, 0.0, 0.0)), Vec3::new(run, 0.0, 0.1)),
    ];
    CaseDefinition {
        dim,
        gravity: Vec3::new(0.0, 0.0, -G),
        primitives,
        materials: vec![debris_material(10, 1800.0), debris_material(11, 1600.0)],
        numerics: numerics(dp, length * s + 0.16),
        controls: RunControls {
            t_end: 2.0,
            output_interval: 0.1,
            seed: 0,
        },
    }
}

pub fn c4_truth() -> GroundTruthSpec {
    let case = c4_erosion();
    let dp = case.numerics.dp;
    GroundTruthSpec::from_reference(case, 0.01, dp / 2.0).with_contacts(vec![
        ContactPair::new(10, 2),
        ContactPair::new(10, 4),
        ContactPair::new(11, 1),
        ContactPair::new(11, 3),
    ])
}

/// Group ids of the six floating blocks in [`c5_floating_blocks`].
pub const C5_BLOCK_GROUPS: [u32; 6] = [30, 31, 32, 33, 34, 35];

/// C5: like C2 but the barrier is six movable blocks (3 across, 2 high).
pub fn c5_floating_blocks() -> CaseDefinition {
    let mut case = c2_barrier();
    case.primitives.retain(|p| p.group_id != 20);
    let mut groups = C5_BLOCK_GROUPS.iter();
    for level in 0..2 {
        for column in 0..3 {
            let origin = Vec3::new(0.9, 0.025 + 0.15 * column as f64, 0.1 * level as f64);
            case.primitives.push(GeometryPrimitive::floating_box(
                *groups.next().unwrap(),
                Frame::at(origin),
                Vec3::new(0.15, 0.15, 0.1),
                2000.0,
            ));
        }
    }
    case
}

pub fn c5_truth() -> GroundTruthSpec {
    let case = c5_floating_blocks();
    let dp = case.numerics.dp;
    GroundTruthSpec::from_reference(case, 0.01, dp / 2.0).with_contacts(vec![
        ContactPair::new(10, 1),
        ContactPair::new(10, 2),
        ContactPair::new(10, 4),
        ContactPair::new(10, 5),
    ])
}

/// Newtonian water-like column at rest in a 2D tank, used for hydrostatic
/// checks.
pub fn hydrostatic_tank() -> CaseDefinition {
    let dp = 0.02;
    let dim = Dimensionality::Two;
    let mut primitives = tank_walls(dim, (0.0, 0.4), (0.0, 0.0), 0.5, 4, dp, 1);
    primitives.push(GeometryPrimitive::fluid_box(
        10,
        Frame::at(Vec3::zeros()),
        Vec3::new(0.4, 0.0, 0.3),
    ));
    CaseDefinition {
        dim,
        gravity: Vec3::new(0.0, 0.0, -G),
        primitives,
        materials: vec![MaterialSpec::newtonian(10, 1000.0, 2.0)],
        numerics: NumericalSpec {
            dp,
            cs: 25.0,
            alpha: 0.02,
            cfl: 0.2,
            h_coef: 1.2,
        },
        controls: RunControls {
            t_end: 1.5,
            output_interval: 0.5,
            seed: 0,
        },
    }
}

/// All benchmark cases keyed by their short id.
pub fn by_id(id: &str) -> Option<(CaseDefinition, GroundTruthSpec)> {
    match id.to_ascii_uppercase().as_str() {
        "C1" => Some((c1_dam_break(), c1_truth())),
        "C2" => Some((c2_barrier(), c2_truth())),
        "C3" => Some((c3_trench(), c3_truth())),
        "C4" => Some((c4_erosion(), c4_truth())),
        "C5" => Some((c5_floating_blocks(), c5_truth())),
        _ => None,
    }
}

pub const CASE_IDS: [&str; 5] = ["C1", "C2", "C3", "C4", "C5"];
