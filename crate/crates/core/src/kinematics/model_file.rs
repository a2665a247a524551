//! Model file loading.
//!
//! Models are TOML documents:
//!
//! ```toml
//! name = "minimal_1dof"
//!
//! [[joints]]
//! name = "hinge"
//! parent = "root"
//! origin = { xyz = [0.0, 0.0, 100.0], rpy = [0.0, 0.0, 0.0] }
//! axis = [0.0, 0.0, 1.0]
//! limits = { lower = -1.2, upper = 1.2 }
//!
//! [[markers]]
//! label = "tip"
//! segment = "hinge"
//! offset = [120.0, 0.0, 0.0]
//! ```
//!
//! `xyz`/`offset` are millimeters, `rpy`/`limits` radians. `parent` and
//! `segment` name either `root` or a previously declared joint; declaring a
//! joint before its parent is rejected, which rules out cycles. `rpy`
//! composes intrinsically in x-y-z order.

use nalgebra::{Isometry3, Translation3, Vector3};
use serde::Deserialize;

use super::{rotation_rpy, Joint, JointBounds, KinematicModel, MarkerAttachment};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    joints: Vec<JointDoc>,
    markers: Vec<MarkerDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    name: String,
    parent: String,
    #[serde(default)]
    origin: OriginDoc,
    axis: [f64; 3],
    limits: LimitsDoc,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginDoc {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsDoc {
    lower: f64,
    upper: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerDoc {
    label: String,
    segment: String,
    offset: [f64; 3],
}

/// Parse and validate a model from TOML text.
pub fn load_model(source: &str) -> Result<KinematicModel> {
    let doc: ModelDoc = toml::from_str(source).map_err(|e| Error::ModelParse(e.to_string()))?;

    let mut joints = Vec::with_capacity(doc.joints.len());
    let mut segment_names: Vec<String> = vec!["root".to_string()];
    for jd in &doc.joints {
        let parent_segment = segment_names
            .iter()
            .position(|s| *s == jd.parent)
            .ok_or_else(|| {
                Error::ModelInvalid(format!(
                    "joint `{}`: parent segment `{}` is not `root` or a previously declared joint",
                    jd.name, jd.parent
                ))
            })?;
        segment_names.push(jd.name.clone());
        joints.push(Joint {
            name: jd.name.clone(),
            parent_segment,
            origin: Isometry3::from_parts(
                Translation3::new(jd.origin.xyz[0], jd.origin.xyz[1], jd.origin.xyz[2]),
                rotation_rpy(jd.origin.rpy[0], jd.origin.rpy[1], jd.origin.rpy[2]),
            ),
            axis: Vector3::new(jd.axis[0], jd.axis[1], jd.axis[2]),
            limits: JointBounds {
                lower: jd.limits.lower,
                upper: jd.limits.upper,
            },
        });
    }

    let mut markers = Vec::with_capacity(doc.markers.len());
    for md in &doc.markers {
        let segment = segment_names
            .iter()
            .position(|s| *s == md.segment)
            .ok_or_else(|| {
                Error::ModelInvalid(format!(
                    "marker `{}`: unknown segment `{}`",
                    md.label, md.segment
                ))
            })?;
        markers.push(MarkerAttachment {
            label: md.label.clone(),
            segment,
            local_offset: Vector3::new(md.offset[0], md.offset[1], md.offset[2]),
        });
    }

    KinematicModel::new(doc.name, joints, markers)
}

/// Bundled single-joint test model.
pub const MINIMAL_1DOF: &str = include_str!("../../models/minimal_1dof.toml");

/// Bundled 40-joint, 50-marker humanoid-like test model.
pub const HUMANOID40: &str = include_str!("../../models/humanoid40.toml");

/// Resolve `--model` arguments: a bundled model name or a file path.
pub fn bundled_model(name: &str) -> Option<&'static str> {
    match name {
        "minimal_1dof" => Some(MINIMAL_1DOF),
        "humanoid40" => Some(HUMANOID40),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_smallest_valid_model() {
        let model = load_model(
            r#"
            name = "one"
            [[joints]]
            name = "j"
            parent = "root"
            axis = [0.0, 0.0, 1.0]
            limits = { lower = -1.0, upper = 1.0 }
            [[markers]]
            label = "m"
            segment = "j"
            offset = [10.0, 0.0, 0.0]
            "#,
        )
        .unwrap();
        assert_eq!(model.joint_count(), 1);
        assert_eq!(model.marker_count(), 1);
    }

    #[test]
    fn inverted_limits_name_the_joint() {
        let err = load_model(
            r#"
            name = "bad"
            [[joints]]
            name = "elbow"
            parent = "root"
            axis = [0.0, 0.0, 1.0]
            limits = { lower = 1.0, upper = -1.0 }
            [[markers]]
            label = "m"
            segment = "elbow"
            offset = [0.0, 0.0, 0.0]
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("elbow"), "got: {err}");
    }

    #[test]
    fn parse_error_reports_location() {
        let err = load_model("name = \"x\"\njoints = 3\n").unwrap_err();
        assert!(matches!(err, Error::ModelParse(_)));
    }

    #[test]
    fn unknown_parent_is_rejected() {
        let err = load_model(
            r#"
            name = "bad"
            [[joints]]
            name = "a"
            parent = "ghost"
            axis = [1.0, 0.0, 0.0]
            limits = { lower = -1.0, upper = 1.0 }
            [[markers]]
            label = "m"
            segment = "a"
            offset = [0.0, 0.0, 0.0]
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn bundled_minimal_model_loads() {
        let model = load_model(MINIMAL_1DOF).unwrap();
        assert_eq!(model.joint_count(), 1);
        assert_eq!(model.marker_count(), 3);
    }

    #[test]
    fn bundled_humanoid_has_forty_joints_fifty_markers() {
        let model = load_model(HUMANOID40).unwrap();
        assert_eq!(model.joint_count(), 40);
        assert_eq!(model.marker_count(), 50);
    }
}
