//! Delimited text formats and the tracker configuration file.
//!
//! - Marker frames: `frame,time_s,label,x_mm,y_mm,z_mm,visible`, one row per
//!   marker per frame, `visible` in {0,1}.
//! - Pose trajectories: `frame,time_s,rx,ry,rz,roll,pitch,yaw,theta_1..theta_J`
//!   (mm, rad).
//! - Metrics: `frame,avg_marker_dist_mm,visible_markers,runtime_s`.
//! - Monte Carlo summary: `frame,dist_min_mm,dist_mean_mm,dist_max_mm,mean_hidden`.
//!
//! Floats are written in shortest round-trip form, so identical inputs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{MetricsRecord, MonteCarloSummary};
use crate::kinematics::{KinematicModel, Pose};
use crate::tracker::{InitConstants, MarkerFrame, MarkerObservation, SampleSource, TrackerConfig};

/// Write marker frames; rows are emitted per frame in label order.
pub fn write_frames_csv(path: &Path, frames: &[MarkerFrame]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,time_s,label,x_mm,y_mm,z_mm,visible")?;
    for (k, frame) in frames.iter().enumerate() {
        for (label, obs) in &frame.observations {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                k,
                frame.timestamp,
                label,
                obs.position.x,
                obs.position.y,
                obs.position.z,
                u8::from(obs.visible)
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct FrameRow {
    frame: u64,
    time_s: f64,
    label: String,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
    visible: u8,
}

/// Read marker frames, grouping rows by frame index (ascending).
pub fn read_frames_csv(path: &Path) -> Result<Vec<MarkerFrame>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let mut by_index: BTreeMap<u64, MarkerFrame> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: FrameRow = row.map_err(|e| Error::Csv(e.to_string()))?;
        let frame = by_index
            .entry(row.frame)
            .or_insert_with(|| MarkerFrame::new(row.time_s));
        if (frame.timestamp - row.time_s).abs() > 1e-12 {
            return Err(Error::FrameData(format!(
                "frame {} has inconsistent timestamps",
                row.frame
            )));
        }
        frame.observations.insert(
            row.label,
            MarkerObservation {
                position: Vector3::new(row.x_mm, row.y_mm, row.z_mm),
                visible: row.visible != 0,
            },
        );
    }
    Ok(by_index.into_values().collect())
}

/// Write a pose trajectory.
pub fn write_poses_csv(path: &Path, rows: &[(f64, Pose)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let joint_count = rows.first().map_or(0, |(_, p)| p.joint_angles.len());
    write!(w, "frame,time_s,rx,ry,rz,roll,pitch,yaw")?;
    for j in 1..=joint_count {
        write!(w, ",theta_{j}")?;
    }
    writeln!(w)?;
    for (k, (time, pose)) in rows.iter().enumerate() {
        write!(
            w,
            "{},{},{},{},{},{},{},{}",
            k,
            time,
            pose.root_position.x,
            pose.root_position.y,
            pose.root_position.z,
            pose.root_orientation.x,
            pose.root_orientation.y,
            pose.root_orientation.z
        )?;
        for a in pose.joint_angles.iter() {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read a pose trajectory written by [`write_poses_csv`].
pub fn read_poses_csv(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.len() < 8 {
        return Err(Error::Csv("pose file needs at least 8 columns".into()));
    }
    let joint_count = headers.len() - 8;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Csv("short row".into()))?
                .parse()
                .map_err(|e| Error::Csv(format!("bad float: {e}")))
        };
        let time = field(1)?;
        let mut pose = Pose::zero(joint_count);
        pose.root_position = Vector3::new(field(2)?, field(3)?, field(4)?);
        pose.root_orientation = Vector3::new(field(5)?, field(6)?, field(7)?);
        for j in 0..joint_count {
            pose.joint_angles[j] = field(8 + j)?;
        }
        out.push((time, pose));
    }
    Ok(out)
}

/// Write per-frame metric records.
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,avg_marker_dist_mm,visible_markers,runtime_s")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            r.frame, r.avg_marker_dist_mm, r.visible_markers, r.runtime_s
        )?;
    }
    Ok(())
}

/// Write the Monte Carlo per-frame envelope.
pub fn write_montecarlo_csv(path: &Path, summary: &MonteCarloSummary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,dist_min_mm,dist_mean_mm,dist_max_mm,mean_hidden")?;
    for f in &summary.per_frame {
        writeln!(
            w,
            "{},{},{},{},{}",
            f.frame, f.dist_min_mm, f.dist_mean_mm, f.dist_max_mm, f.mean_hidden
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration file
// ---------------------------------------------------------------------------

/// TOML configuration overriding the built-in defaults, e.g.
///
/// ```toml
/// [measurement]
/// marker_var = 1e-4            # mm^2, isotropic per marker
///
/// [process]
/// root_position_var = 25.0     # mm^2 per frame
/// orientation_var = 1e-10      # rad^2 per frame
/// joint_var = 1e-10
///
/// [init]
/// orientation_var = 1e-6
/// joint_param_var = 1e-10
/// scatter_floor = 1e-6
///
/// [samples]
/// source = "smart"             # or "unscented"
/// count = 301
/// seed = 0
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub process: ProcessSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub samples: SamplesSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    pub marker_var: f64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        MeasurementSection { marker_var: 1e-4 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub root_position_var: f64,
    pub orientation_var: f64,
    pub joint_var: f64,
}

impl Default for ProcessSection {
    fn default() -> Self {
        ProcessSection {
            root_position_var: 25.0,
            orientation_var: 1e-10,
            joint_var: 1e-10,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub orientation_var: f64,
    pub joint_param_var: f64,
    pub scatter_floor: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        let d = InitConstants::default();
        InitSection {
            orientation_var: d.orientation_var,
            joint_param_var: d.joint_param_var,
            scatter_floor: d.scatter_floor,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSection {
    pub source: String,
    pub count: usize,
    pub seed: u64,
    pub kappa: Option<f64>,
}

impl Default for SamplesSection {
    fn default() -> Self {
        SamplesSection {
            source: "smart".into(),
            count: 301,
            seed: 0,
            kappa: None,
        }
    }
}

/// Parse a configuration file.
pub fn load_config(text: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| Error::ModelParse(format!("config: {e}")))
}

impl ConfigFile {
    /// Build a tracker configuration for a model.
    pub fn tracker_config(&self, model: &KinematicModel) -> Result<TrackerConfig> {
        let n = 6 + model.joint_count();
        let mut q = DVector::from_element(n, self.process.joint_var);
        for i in 0..3 {
            q[i] = self.process.root_position_var;
        }
        for i in 3..6 {
            q[i] = self.process.orientation_var;
        }
        let samples = match self.samples.source.as_str() {
            "smart" => SampleSource::Smart {
                count: self.samples.count,
                seed: self.samples.seed,
            },
            "unscented" => SampleSource::Unscented {
                kappa: self.samples.kappa,
            },
            other => {
                return Err(Error::ModelParse(format!(
                    "config: unknown sample source `{other}`"
                )))
            }
        };
        Ok(TrackerConfig {
            marker_noise: Matrix3::identity() * self.measurement.marker_var,
            process_noise: crate::filter::NoiseSpec::from_diagonal(&q)?,
            samples,
            init_pose: None,
            init: InitConstants {
                orientation_var: self.init.orientation_var,
                joint_param_var: self.init.joint_param_var,
                scatter_floor: self.init.scatter_floor,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::load_model;
    use crate::kinematics::model_file::MINIMAL_1DOF;
    use crate::synth::render_markers;
    use approx::assert_relative_eq;

    #[test]
    fn frames_round_trip() {
        let model = load_model(MINIMAL_1DOF).unwrap();
        let mut pose = Pose::zero(1);
        pose.joint_angles[0] = 0.4;
        let frames = render_markers(
            &vec![pose; 5],
            &model,
            &(Matrix3::identity() * 1e-4),
            100.0,
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.csv");
        write_frames_csv(&path, &frames).unwrap();
        let back = read_frames_csv(&path).unwrap();
        assert_eq!(frames, back);
    }

    #[test]
    fn poses_round_trip() {
        let mut rows = Vec::new();
        for k in 0..4 {
            let mut pose = Pose::zero(2);
            pose.root_position = Vector3::new(k as f64, 0.25, -3.5);
            pose.joint_angles[0] = 0.1 * k as f64;
            pose.joint_angles[1] = -0.2;
            rows.push((k as f64 / 100.0, pose));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.csv");
        write_poses_csv(&path, &rows).unwrap();
        let back = read_poses_csv(&path).unwrap();
        assert_eq!(rows.len(), back.len());
        for ((ta, pa), (tb, pb)) in rows.iter().zip(&back) {
            assert_eq!(ta, tb);
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn identical_inputs_write_identical_bytes() {
        let model = load_model(MINIMAL_1DOF).unwrap();
        let frames = render_markers(
            &vec![Pose::zero(1); 10],
            &model,
            &(Matrix3::identity() * 1e-4),
            100.0,
            9,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_frames_csv(&a, &frames).unwrap();
        write_frames_csv(&b, &frames).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn default_config_mirrors_reference_values() {
        let model = load_model(MINIMAL_1DOF).unwrap();
        let cfg = load_config("").unwrap().tracker_config(&model).unwrap();
        assert_relative_eq!(cfg.marker_noise[(0, 0)], 1e-4);
        assert_relative_eq!(cfg.process_noise.matrix()[(0, 0)], 25.0);
        assert_relative_eq!(cfg.process_noise.matrix()[(6, 6)], 1e-10);
        assert!(matches!(
            cfg.samples,
            SampleSource::Smart { count: 301, seed: 0 }
        ));
    }

    #[test]
    fn config_overrides_apply() {
        let model = load_model(MINIMAL_1DOF).unwrap();
        let cfg = load_config(
            r#"
            [measurement]
            marker_var = 0.5
            [samples]
            source = "unscented"
            count = 0
            seed = 0
            kappa = 1.5
            "#,
        )
        .unwrap()
        .tracker_config(&model)
        .unwrap();
        assert_relative_eq!(cfg.marker_noise[(1, 1)], 0.5);
        assert!(matches!(
            cfg.samples,
            SampleSource::Unscented { kappa: Some(k) } if (k - 1.5).abs() < 1e-12
        ));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(load_config("[measurement]\ntypo_var = 1.0\n").is_err());
    }
}
