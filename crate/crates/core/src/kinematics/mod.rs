//! Articulated body model: a tree of revolute joints with attached virtual
//! markers, and the forward kinematics mapping a pose to marker world
//! positions.
//!
//! Conventions (also documented in the model schema):
//! - lengths in millimeters, angles in radians;
//! - root orientation and all `rpy` fields compose intrinsically in
//!   x-y-z order: `R = Rx(roll) * Ry(pitch) * Rz(yaw)`;
//! - the implicit root segment is named `root`; every joint introduces a
//!   child segment carrying the joint's name.

pub mod model_file;

pub use model_file::{bundled_model, load_model};

use nalgebra::{DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Inclusive angle limits of a revolute joint, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBounds {
    pub lower: f64,
    pub upper: f64,
}

impl JointBounds {
    /// Midpoint of the admissible range.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Half-width of the admissible range.
    pub fn half_range(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.lower && angle <= self.upper
    }
}

/// A single revolute joint in the tree.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    /// Index of the parent segment (see [`KinematicModel::segment_index`]).
    /// Segment 0 is the root body; segment `j + 1` is the body moved by
    /// joint `j`.
    pub parent_segment: usize,
    /// Fixed transform from the parent segment frame to the joint frame.
    pub origin: Isometry3<f64>,
    /// Rotation axis in the joint frame, unit length.
    pub axis: Vector3<f64>,
    pub limits: JointBounds,
}

/// A labeled virtual marker rigidly attached to a segment.
#[derive(Debug, Clone)]
pub struct MarkerAttachment {
    pub label: String,
    /// Segment the marker rides on (0 = root, `j + 1` = joint `j`'s segment).
    pub segment: usize,
    /// Offset in the segment frame, millimeters.
    pub local_offset: Vector3<f64>,
}

/// Full pose of the articulated body.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Root position, millimeters.
    pub root_position: Vector3<f64>,
    /// Root orientation as (roll, pitch, yaw), radians.
    pub root_orientation: Vector3<f64>,
    /// One angle per joint in model order, radians.
    pub joint_angles: DVector<f64>,
}

impl Pose {
    /// Identity root with all joint angles zero.
    pub fn zero(joint_count: usize) -> Self {
        Pose {
            root_position: Vector3::zeros(),
            root_orientation: Vector3::zeros(),
            joint_angles: DVector::zeros(joint_count),
        }
    }

    /// Rigid transform of the root segment.
    pub fn root_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.root_position),
            rotation_rpy(
                self.root_orientation[0],
                self.root_orientation[1],
                self.root_orientation[2],
            ),
        )
    }
}

/// Apply a segment's world transform to a marker offset (a point, so the
/// translation participates).
fn marker_world(transform: &Isometry3<f64>, marker: &MarkerAttachment) -> Vector3<f64> {
    transform
        .transform_point(&Point3::from(marker.local_offset))
        .coords
}

/// Intrinsic x-y-z rotation: `Rx(roll) * Ry(pitch) * Rz(yaw)`.
pub fn rotation_rpy(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll)
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Immutable joint tree with attached markers.
///
/// Construction validates all structural invariants; after that the model is
/// read-only and forward kinematics is a pure function, safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    name: String,
    joints: Vec<Joint>,
    markers: Vec<MarkerAttachment>,
}

impl KinematicModel {
    /// Assemble and validate a model.
    pub fn new(name: String, joints: Vec<Joint>, markers: Vec<MarkerAttachment>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::ModelInvalid("model declares no joints".into()));
        }
        if markers.is_empty() {
            return Err(Error::ModelInvalid("model declares no markers".into()));
        }
        for (j, joint) in joints.iter().enumerate() {
            if joint.name.is_empty() {
                return Err(Error::ModelInvalid(format!("joint #{j} has empty name")));
            }
            // Parent must be the root (0) or a previously declared joint's
            // segment, which makes the declaration order a topological order.
            if joint.parent_segment > j {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` references a segment declared after it",
                    joint.name
                )));
            }
            if joints[..j].iter().any(|other| other.name == joint.name) {
                return Err(Error::ModelInvalid(format!(
                    "duplicate joint name `{}`",
                    joint.name
                )));
            }
            if !(joint.limits.lower.is_finite() && joint.limits.upper.is_finite()) {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` has non-finite limits",
                    joint.name
                )));
            }
            if joint.limits.lower >= joint.limits.upper {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` has empty limit range [{}, {}]",
                    joint.name, joint.limits.lower, joint.limits.upper
                )));
            }
            if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` axis is not unit length (norm {})",
                    joint.name,
                    joint.axis.norm()
                )));
            }
        }
        for (m, marker) in markers.iter().enumerate() {
            if marker.label.is_empty() {
                return Err(Error::ModelInvalid(format!("marker #{m} has empty label")));
            }
            if marker.segment > joints.len() {
                return Err(Error::ModelInvalid(format!(
                    "marker `{}` attaches to unknown segment index {}",
                    marker.label, marker.segment
                )));
            }
            if markers[..m].iter().any(|other| other.label == marker.label) {
                return Err(Error::ModelInvalid(format!(
                    "duplicate marker label `{}`",
                    marker.label
                )));
            }
        }
        Ok(KinematicModel {
            name,
            joints,
            markers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn markers(&self) -> &[MarkerAttachment] {
        &self.markers
    }

    /// Number of joints J.
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Number of markers M.
    pub fn marker_count(&self) -> usize {
        self.markers.len()
    }

    /// Marker labels in declaration order (the canonical stacking order).
    pub fn marker_labels(&self) -> impl Iterator<Item = &str> {
        self.markers.iter().map(|m| m.label.as_str())
    }

    /// Index of a marker by label.
    pub fn marker_index(&self, label: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.label == label)
    }

    /// Index of a segment by name (`root` or a joint name).
    pub fn segment_index(&self, name: &str) -> Option<usize> {
        if name == "root" {
            return Some(0);
        }
        self.joints
            .iter()
            .position(|j| j.name == name)
            .map(|j| j + 1)
    }

    /// Name of a segment by index.
    pub fn segment_name(&self, index: usize) -> &str {
        if index == 0 {
            "root"
        } else {
            &self.joints[index - 1].name
        }
    }

    /// Check that every joint angle of `pose` respects its bounds.
    pub fn pose_in_bounds(&self, pose: &Pose) -> bool {
        pose.joint_angles.len() == self.joint_count()
            && self
                .joints
                .iter()
                .zip(pose.joint_angles.iter())
                .all(|(joint, &angle)| joint.limits.contains(angle))
    }

    /// World transforms of all segments for a pose, indexed by segment.
    ///
    /// Segment 0 is the root; segment `j + 1` is driven by joint `j`. The
    /// per-joint transform composes the parent frame, the joint's fixed
    /// origin, and the rotation about its axis by the joint angle.
    pub fn segment_transforms(&self, pose: &Pose) -> Vec<Isometry3<f64>> {
        let mut transforms = Vec::with_capacity(self.joints.len() + 1);
        transforms.push(pose.root_isometry());
        for (j, joint) in self.joints.iter().enumerate() {
            let angle = pose.joint_angles[j];
            let spin = UnitQuaternion::from_scaled_axis(joint.axis * angle);
            let world = transforms[joint.parent_segment]
                * joint.origin
                * Isometry3::from_parts(Translation3::identity(), spin);
            transforms.push(world);
        }
        transforms
    }

    /// World position of a single labeled marker.
    pub fn forward_kinematics(&self, pose: &Pose, label: &str) -> Result<Vector3<f64>> {
        let idx = self
            .marker_index(label)
            .ok_or_else(|| Error::UnknownMarker(label.to_string()))?;
        let transforms = self.segment_transforms(pose);
        let marker = &self.markers[idx];
        Ok(marker_world(&transforms[marker.segment], marker))
    }

    /// World positions of all markers in declaration order.
    ///
    /// The order is stable across calls and matches [`Self::marker_labels`].
    pub fn forward_kinematics_all(&self, pose: &Pose) -> Vec<(&str, Vector3<f64>)> {
        let transforms = self.segment_transforms(pose);
        self.markers
            .iter()
            .map(|m| (m.label.as_str(), marker_world(&transforms[m.segment], m)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_joint_model() -> KinematicModel {
        KinematicModel::new(
            "test".into(),
            vec![Joint {
                name: "hinge".into(),
                parent_segment: 0,
                origin: Isometry3::identity(),
                axis: Vector3::z(),
                limits: JointBounds {
                    lower: -2.0,
                    upper: 2.0,
                },
            }],
            vec![
                MarkerAttachment {
                    label: "tip".into(),
                    segment: 1,
                    local_offset: Vector3::new(1.0, 0.0, 0.0),
                },
                MarkerAttachment {
                    label: "base".into(),
                    segment: 0,
                    local_offset: Vector3::new(100.0, 0.0, 0.0),
                },
            ],
        )
        .unwrap()
    }

    /// Two z-axis revolute joints in the xy-plane, 100 mm links.
    fn two_link_model() -> KinematicModel {
        KinematicModel::new(
            "planar2".into(),
            vec![
                Joint {
                    name: "shoulder".into(),
                    parent_segment: 0,
                    origin: Isometry3::identity(),
                    axis: Vector3::z(),
                    limits: JointBounds {
                        lower: -3.0,
                        upper: 3.0,
                    },
                },
                Joint {
                    name: "elbow".into(),
                    parent_segment: 1,
                    origin: Isometry3::translation(100.0, 0.0, 0.0),
                    axis: Vector3::z(),
                    limits: JointBounds {
                        lower: -3.0,
                        upper: 3.0,
                    },
                },
            ],
            vec![MarkerAttachment {
                label: "end".into(),
                segment: 2,
                local_offset: Vector3::new(100.0, 0.0, 0.0),
            }],
        )
        .unwrap()
    }

    #[test]
    fn identity_chain_returns_local_offset() {
        let model = single_joint_model();
        let pose = Pose::zero(1);
        let p = model.forward_kinematics(&pose, "base").unwrap();
        assert_relative_eq!(p, Vector3::new(100.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let model = single_joint_model();
        let mut pose = Pose::zero(1);
        pose.root_position = Vector3::new(10.0, 20.0, 30.0);
        pose.joint_angles[0] = std::f64::consts::FRAC_PI_2;
        let p = model.forward_kinematics(&pose, "tip").unwrap();
        assert_relative_eq!(p, Vector3::new(10.0, 21.0, 30.0), epsilon = 1e-12);
    }

    #[test]
    fn two_link_matches_symbolic_oracle() {
        // Independent symbolic FK for a planar 2R chain:
        //   x = L (cos q1 + cos(q1 + q2)), y = L (sin q1 + sin(q1 + q2)).
        let model = two_link_model();
        let (q1, q2) = (std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_4);
        let mut pose = Pose::zero(2);
        pose.joint_angles[0] = q1;
        pose.joint_angles[1] = q2;
        let p = model.forward_kinematics(&pose, "end").unwrap();
        let expected = Vector3::new(
            100.0 * (q1.cos() + (q1 + q2).cos()),
            100.0 * (q1.sin() + (q1 + q2).sin()),
            0.0,
        );
        assert_relative_eq!(p, expected, epsilon = 1e-9);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let model = single_joint_model();
        assert!(matches!(
            model.forward_kinematics(&Pose::zero(1), "nope"),
            Err(Error::UnknownMarker(_))
        ));
    }

    #[test]
    fn all_markers_match_per_label_fk() {
        let model = two_link_model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut pose = Pose::zero(2);
            pose.root_position = Vector3::new(
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
            );
            pose.root_orientation = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            pose.joint_angles[0] = rng.gen_range(-2.0..2.0);
            pose.joint_angles[1] = rng.gen_range(-2.0..2.0);
            for (label, pos) in model.forward_kinematics_all(&pose) {
                let single = model.forward_kinematics(&pose, label).unwrap();
                assert_relative_eq!(pos, single, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn marker_order_is_stable() {
        let model = single_joint_model();
        let pose = Pose::zero(1);
        let a: Vec<_> = model
            .forward_kinematics_all(&pose)
            .into_iter()
            .map(|(l, _)| l.to_string())
            .collect();
        let b: Vec<_> = model
            .forward_kinematics_all(&pose)
            .into_iter()
            .map(|(l, _)| l.to_string())
            .collect();
        assert_eq!(a, b);
        assert_eq!(a, vec!["tip".to_string(), "base".to_string()]);
    }

    #[test]
    fn rigid_body_consistency_same_segment_distance_constant() {
        let model = KinematicModel::new(
            "rigid".into(),
            vec![Joint {
                name: "j".into(),
                parent_segment: 0,
                origin: Isometry3::translation(10.0, -5.0, 3.0),
                axis: Vector3::new(1.0, 1.0, 1.0).normalize(),
                limits: JointBounds {
                    lower: -3.0,
                    upper: 3.0,
                },
            }],
            vec![
                MarkerAttachment {
                    label: "a".into(),
                    segment: 1,
                    local_offset: Vector3::new(50.0, 20.0, -10.0),
                },
                MarkerAttachment {
                    label: "b".into(),
                    segment: 1,
                    local_offset: Vector3::new(-30.0, 5.0, 60.0),
                },
            ],
        )
        .unwrap();
        let reference =
            (Vector3::<f64>::new(50.0, 20.0, -10.0) - Vector3::new(-30.0, 5.0, 60.0)).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut pose = Pose::zero(1);
            pose.root_position = Vector3::new(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
            );
            pose.root_orientation = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-2.0..2.0),
            );
            pose.joint_angles[0] = rng.gen_range(-3.0..3.0);
            let a = model.forward_kinematics(&pose, "a").unwrap();
            let b = model.forward_kinematics(&pose, "b").unwrap();
            let d = (a - b).norm();
            assert!((d - reference).abs() / reference < 1e-9);
        }
    }

    #[test]
    fn frame_composition_root_transform_factors_out() {
        let model = two_link_model();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let mut pose = Pose::zero(2);
            pose.joint_angles[0] = rng.gen_range(-2.0..2.0);
            pose.joint_angles[1] = rng.gen_range(-2.0..2.0);
            let base = model.forward_kinematics(&pose, "end").unwrap();

            let mut moved = pose.clone();
            moved.root_position = Vector3::new(
                rng.gen_range(-300.0..300.0),
                rng.gen_range(-300.0..300.0),
                rng.gen_range(-300.0..300.0),
            );
            moved.root_orientation = Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.5..1.5),
            );
            let transformed = model.forward_kinematics(&moved, "end").unwrap();
            let expected = moved.root_isometry().transform_point(&Point3::from(base));
            assert_relative_eq!(transformed, expected.coords, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_inverted_limits() {
        let err = KinematicModel::new(
            "bad".into(),
            vec![Joint {
                name: "j1".into(),
                parent_segment: 0,
                origin: Isometry3::identity(),
                axis: Vector3::z(),
                limits: JointBounds {
                    lower: 1.0,
                    upper: -1.0,
                },
            }],
            vec![MarkerAttachment {
                label: "m".into(),
                segment: 0,
                local_offset: Vector3::zeros(),
            }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("j1"));
    }

    #[test]
    fn rejects_non_unit_axis() {
        let err = KinematicModel::new(
            "bad".into(),
            vec![Joint {
                name: "j1".into(),
                parent_segment: 0,
                origin: Isometry3::identity(),
                axis: Vector3::new(1.0, 1.0, 0.0),
                limits: JointBounds {
                    lower: -1.0,
                    upper: 1.0,
                },
            }],
            vec![MarkerAttachment {
                label: "m".into(),
                segment: 0,
                local_offset: Vector3::zeros(),
            }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("axis"));
    }
}
