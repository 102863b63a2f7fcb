use super::{Diagnostic, DiagnosticKind, SceneBundle};

/// Views linked to fewer sparse points than this are reported.
pub const MIN_OBSERVED_POINTS: usize = 10;
/// Centers closer than this fraction of the rig diameter are reported as
/// possibly merged views.
pub const MERGE_FRACTION: f64 = 0.01;

/// Registration shortfalls of a parsed reconstruction against the rig it
/// came from. Never fails; every finding is a warning.
pub fn diagnose_registration(bundle: &SceneBundle, expected_cameras: usize) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let registered = bundle.poses.len();
    if registered < expected_cameras {
        out.push(Diagnostic {
            kind: DiagnosticKind::MissingViews {
                registered,
                expected: expected_cameras,
                names: bundle.poses.iter().map(|p| p.image_name.clone()).collect(),
            },
        });
    }

    let centers = bundle.camera_centers();
    let mut diameter: f64 = 0.0;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            diameter = diameter.max((centers[i] - centers[j]).norm());
        }
    }
    let threshold = MERGE_FRACTION * diameter;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let distance = (centers[i] - centers[j]).norm();
            if distance <= threshold {
                out.push(Diagnostic {
                    kind: DiagnosticKind::MergedViews {
                        first: bundle.poses[i].image_name.clone(),
                        second: bundle.poses[j].image_name.clone(),
                        distance,
                    },
                });
            }
        }
    }

    for pose in &bundle.poses {
        if pose.num_observations < MIN_OBSERVED_POINTS {
            out.push(Diagnostic {
                kind: DiagnosticKind::SparseView {
                    image: pose.image_name.clone(),
                    observed: pose.num_observations,
                },
            });
        }
    }
    out
}
