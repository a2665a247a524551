//! Evaluation: the average marker distance metric, per-run metric records,
//! and the Monte Carlo occlusion study.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::{KinematicModel, Pose};
use crate::synth::{apply_occlusion, OcclusionConfig};
use crate::tracker::{track, MarkerFrame, TrackedPose, TrackerConfig};

/// Per-frame evaluation record.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRecord {
    pub frame: usize,
    /// Mean Euclidean distance over all model markers, millimeters.
    pub avg_marker_dist_mm: f64,
    pub visible_markers: usize,
    pub runtime_s: f64,
}

/// Mean distance between the pose's expected marker positions and the
/// reference frame's positions, over all model markers.
///
/// Hidden markers still count: the reference retains their recorded
/// positions even when the tracker never saw them.
pub fn marker_distance(
    model: &KinematicModel,
    pose: &Pose,
    reference: &MarkerFrame,
) -> Result<f64> {
    let mut total = 0.0;
    for (label, expected) in model.forward_kinematics_all(pose) {
        let obs = reference
            .observations
            .get(label)
            .ok_or_else(|| Error::MissingReference(label.to_string()))?;
        total += (expected - obs.position).norm();
    }
    Ok(total / model.marker_count() as f64)
}

/// Metric records for a tracked sequence against reference frames.
pub fn metrics_for_run(
    model: &KinematicModel,
    tracked: &[TrackedPose],
    reference: &[MarkerFrame],
) -> Result<Vec<MetricsRecord>> {
    if tracked.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: tracked.len(),
        });
    }
    tracked
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(k, (t, frame))| {
            Ok(MetricsRecord {
                frame: k,
                avg_marker_dist_mm: marker_distance(model, &t.pose, frame)?,
                visible_markers: t.diagnostics.visible_markers,
                runtime_s: t.diagnostics.runtime_s,
            })
        })
        .collect()
}

/// Per-frame aggregate of the Monte Carlo study.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloFrame {
    pub frame: usize,
    pub dist_min_mm: f64,
    pub dist_mean_mm: f64,
    pub dist_max_mm: f64,
    pub mean_hidden: f64,
}

/// Envelope of average marker distances across occlusion runs.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub per_frame: Vec<MonteCarloFrame>,
    /// Hidden markers per frame, averaged over all runs and frames.
    pub mean_hidden_markers: f64,
}

/// Derive a distinct, reproducible seed for one run of a study.
pub fn derive_seed(master: u64, run: usize) -> u64 {
    // SplitMix64 step keeps run seeds decorrelated.
    let mut z = master ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run the occlusion study: for each run, hide markers with a distinct seed,
/// track the modified sequence, and aggregate the per-frame distance
/// envelope. Runs execute in parallel; aggregation is order-independent.
pub fn run_montecarlo(
    model: &KinematicModel,
    frames: &[MarkerFrame],
    config: &TrackerConfig,
    hide_probability: f64,
    mean_hidden_frames: f64,
    runs: usize,
    master_seed: u64,
) -> Result<MonteCarloSummary> {
    if runs == 0 {
        return Err(Error::FrameData("montecarlo needs at least one run".into()));
    }
    if frames.is_empty() {
        return Err(Error::FrameData("no frames".into()));
    }

    let per_run: Vec<(Vec<f64>, Vec<usize>)> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<(Vec<f64>, Vec<usize>)> {
            let occlusion = OcclusionConfig {
                hide_probability,
                mean_hidden_frames,
                seed: derive_seed(master_seed, run),
            };
            let occluded = apply_occlusion(frames, &occlusion)?;
            let tracked = track(&occluded, model, config.clone())
                .map_err(|e| Error::FrameData(format!("run {run}: {e}")))?;
            let mut dists = Vec::with_capacity(frames.len());
            for (t, reference) in tracked.iter().zip(frames) {
                dists.push(marker_distance(model, &t.pose, reference)?);
            }
            let hidden = occluded
                .iter()
                .map(|f| f.observations.len() - f.visible_count())
                .collect();
            Ok((dists, hidden))
        })
        .collect::<Result<Vec<_>>>()?;

    let frame_count = frames.len();
    let mut per_frame = Vec::with_capacity(frame_count);
    let mut hidden_total = 0.0;
    for k in 0..frame_count {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut hidden_sum = 0.0;
        for (dists, hidden) in &per_run {
            let d = dists[k];
            min = min.min(d);
            max = max.max(d);
            sum += d;
            hidden_sum += hidden[k] as f64;
        }
        hidden_total += hidden_sum / runs as f64;
        per_frame.push(MonteCarloFrame {
            frame: k,
            dist_min_mm: min,
            dist_mean_mm: sum / runs as f64,
            dist_max_mm: max,
            mean_hidden: hidden_sum / runs as f64,
        });
    }
    Ok(MonteCarloSummary {
        runs,
        per_frame,
        mean_hidden_markers: hidden_total / frame_count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::load_model;
    use crate::kinematics::model_file::MINIMAL_1DOF;
    use crate::synth::{generate_truth, render_markers, Channel, MotionScript};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn short_run() -> (KinematicModel, Vec<Pose>, Vec<MarkerFrame>) {
        let model = load_model(MINIMAL_1DOF).unwrap();
        let limits = model.joints()[0].limits;
        let script = MotionScript {
            duration_s: 0.6,
            rate_hz: 100.0,
            root_position: [Channel::Constant(0.0); 3],
            root_orientation: [Channel::Constant(0.0); 3],
            joints: vec![Channel::Sinusoid {
                amplitude: 0.4 * limits.half_range(),
                frequency_hz: 1.0,
                phase: 0.7,
                offset: limits.midpoint(),
            }],
        };
        let poses = generate_truth(&script, &model).unwrap();
        let frames = render_markers(&poses, &model, &Matrix3::zeros(), 100.0, 0).unwrap();
        (model, poses, frames)
    }

    #[test]
    fn distance_of_truth_pose_on_noiseless_frame_is_zero() {
        let (model, poses, frames) = short_run();
        for (pose, frame) in poses.iter().zip(&frames) {
            let d = marker_distance(&model, pose, frame).unwrap();
            assert!(d < 1e-12, "distance {d}");
        }
    }

    #[test]
    fn uniform_offset_shifts_distance_by_its_length() {
        let (model, poses, mut frames) = short_run();
        let offset = Vector3::new(3.0, -4.0, 12.0);
        for obs in frames[0].observations.values_mut() {
            obs.position += offset;
        }
        let d = marker_distance(&model, &poses[0], &frames[0]).unwrap();
        assert_relative_eq!(d, offset.norm(), epsilon = 1e-12);
    }

    #[test]
    fn random_pose_pair_matches_per_marker_oracle() {
        let (model, poses, frames) = short_run();
        let pose = &poses[30];
        let frame = &frames[3];
        let d = marker_distance(&model, pose, frame).unwrap();
        // Independent per-marker FK + norm loop.
        let mut total = 0.0;
        for marker in model.markers() {
            let p = model.forward_kinematics(pose, &marker.label).unwrap();
            total += (p - frame.observations[&marker.label].position).norm();
        }
        assert_relative_eq!(d, total / model.marker_count() as f64, epsilon = 1e-12);
    }

    #[test]
    fn missing_reference_marker_is_an_error() {
        let (model, poses, mut frames) = short_run();
        frames[0].observations.remove("mid");
        assert!(matches!(
            marker_distance(&model, &poses[0], &frames[0]),
            Err(Error::MissingReference(_))
        ));
    }

    #[test]
    fn single_run_envelope_collapses() {
        let (model, _, frames) = short_run();
        let config = TrackerConfig::defaults(&model);
        let summary =
            run_montecarlo(&model, &frames, &config, 0.02, 10.0, 1, 7).unwrap();
        assert_eq!(summary.runs, 1);
        for f in &summary.per_frame {
            assert_eq!(f.dist_min_mm, f.dist_max_mm);
            assert_eq!(f.dist_min_mm, f.dist_mean_mm);
        }
    }

    #[test]
    fn montecarlo_is_deterministic_for_a_master_seed() {
        let (model, _, frames) = short_run();
        let config = TrackerConfig::defaults(&model);
        let a = run_montecarlo(&model, &frames, &config, 0.02, 10.0, 4, 11).unwrap();
        let b = run_montecarlo(&model, &frames, &config, 0.02, 10.0, 4, 11).unwrap();
        for (x, y) in a.per_frame.iter().zip(&b.per_frame) {
            assert_eq!(x.dist_min_mm, y.dist_min_mm);
            assert_eq!(x.dist_mean_mm, y.dist_mean_mm);
            assert_eq!(x.dist_max_mm, y.dist_max_mm);
            assert_eq!(x.mean_hidden, y.mean_hidden);
        }
    }

    #[test]
    fn derive_seed_is_injective_enough() {
        let mut seen = std::collections::HashSet::new();
        for run in 0..1000 {
            assert!(seen.insert(derive_seed(42, run)));
        }
    }
}
