//! Analytic road scenes with exact ground truth, used as the oracle for
//! segmentation, geometry and end-to-end tests.

mod crops;
mod eval;
mod fixture;
mod planted;
mod scene;

pub use crops::{crossing_crop, ellipse_crop, line_crop, CropFixture};
pub use eval::{evaluate, ErrorReport, MetricError};
pub use fixture::{write_fixture, DetectionTruth, FixtureSpec, WrittenFixture};
pub use planted::{planted_fixture, PlantedFixture, PlantedFrame, PlantedPaths};
pub use scene::{render_scene, Marking, Primitive, PrimitiveTruth, RenderedScene, SceneDetection, SceneSpec, Shape};

use crate::segment::DamageClass;

/// Default scene with a deep 0.5 m × 0.5 m pothole 6 m ahead.
pub fn pothole_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![Primitive {
            class: DamageClass::Pothole,
            shape: Shape::Rectangle {
                center: [0.2, 6.0],
                size: [0.5, 0.5],
            },
            intensity_delta: -85.0,
            depth_offset: 0.08,
        }],
        ..Default::default()
    }
}

/// Points along the circular arc of `radius` about `center` between the two
/// angles, as a polyline of `segments` chords.
pub fn arc_points(center: [f64; 2], radius: f64, from: f64, to: f64, segments: usize) -> Vec<[f64; 2]> {
    (0..=segments)
        .map(|i| {
            let t = from + (to - from) * i as f64 / segments as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

/// Default scene with a curved 4 cm crack whose polyline length is 2.0 m,
/// running diagonally between about 5.8 m and 7.0 m ahead.
pub fn crack_scene() -> SceneSpec {
    // 0.8 rad of a 2.5 m circle, sampled finely enough that the chord
    // polyline (which is the ground truth) stays within 0.03% of the arc.
    let from = std::f64::consts::FRAC_PI_2 + 0.25;
    SceneSpec {
        primitives: vec![Primitive {
            class: DamageClass::LongitudinalCrack,
            shape: Shape::Polyline {
                points: arc_points([1.2, 4.6], 2.5, from, from + 0.8, 64),
                width: 0.04,
            },
            intensity_delta: -80.0,
            depth_offset: 0.0,
        }],
        seed: 1,
        ..Default::default()
    }
}

/// A straight crack along the driving direction, from 5.5 m to 7.5 m. It
/// is the hardest orientation for length: every image row covers several
/// centimetres of road.
pub fn straight_crack_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![Primitive {
            class: DamageClass::LongitudinalCrack,
            shape: Shape::Polyline {
                points: vec![[-0.4, 5.5], [-0.4, 7.5]],
                width: 0.03,
            },
            intensity_delta: -80.0,
            depth_offset: 0.0,
        }],
        seed: 1,
        ..Default::default()
    }
}

/// Default scene with a 1 m × 1 m alligator patch 5 m ahead.
pub fn alligator_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![Primitive {
            class: DamageClass::AlligatorCrack,
            shape: Shape::Grid {
                center: [0.0, 5.0],
                size: [1.0, 1.0],
                spacing: 0.2,
                width: 0.06,
            },
            intensity_delta: -80.0,
            depth_offset: 0.0,
        }],
        seed: 2,
        ..Default::default()
    }
}
