//! Framewise damped-least-squares pose fitting, the gradient-based
//! comparator for the recursive tracker.
//!
//! Each frame is fit independently: iterate `(J^T J + damping^2 I) d =
//! J^T r` on the stacked visible-marker residual with a forward-difference
//! Jacobian, warm-started from the previous pose, projecting joint angles
//! back into their bounds after every step. There is no noise model.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::eval::MetricsRecord;
use crate::kinematics::{KinematicModel, Pose};
use crate::tracker::{stack_measurement, MarkerFrame};

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    /// Levenberg damping added as `damping^2` on the normal equations.
    pub damping: f64,
    pub max_iterations: usize,
    /// Forward-difference step for the numerical Jacobian.
    pub fd_step: f64,
    /// Stop when the residual norm improves by less than this factor.
    pub min_improvement: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            damping: 1e-2,
            max_iterations: 50,
            fd_step: 1e-5,
            min_improvement: 1e-12,
        }
    }
}

/// Result of fitting one frame.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub pose: Pose,
    /// Mean per-marker distance of the returned pose to the visible
    /// markers, millimeters.
    pub residual_mm: f64,
    pub iterations: usize,
    /// The residual never improved on the warm start; the best iterate is
    /// still returned.
    pub diverged: bool,
}

fn params_from_pose(pose: &Pose) -> DVector<f64> {
    let j = pose.joint_angles.len();
    let mut q = DVector::zeros(6 + j);
    for i in 0..3 {
        q[i] = pose.root_position[i];
        q[3 + i] = pose.root_orientation[i];
    }
    q.rows_mut(6, j).copy_from(&pose.joint_angles);
    q
}

fn pose_from_params(q: &DVector<f64>) -> Pose {
    let j = q.len() - 6;
    Pose {
        root_position: Vector3::new(q[0], q[1], q[2]),
        root_orientation: Vector3::new(q[3], q[4], q[5]),
        joint_angles: DVector::from_fn(j, |i, _| q[6 + i]),
    }
}

fn clamp_joints(model: &KinematicModel, q: &mut DVector<f64>) {
    for (j, joint) in model.joints().iter().enumerate() {
        q[6 + j] = q[6 + j].clamp(joint.limits.lower, joint.limits.upper);
    }
}

fn stacked_positions(
    model: &KinematicModel,
    marker_indices: &[usize],
    q: &DVector<f64>,
) -> DVector<f64> {
    let pose = pose_from_params(q);
    let transforms = model.segment_transforms(&pose);
    let mut out = DVector::zeros(3 * marker_indices.len());
    for (k, &mi) in marker_indices.iter().enumerate() {
        let marker = &model.markers()[mi];
        let p = transforms[marker.segment]
            .transform_point(&nalgebra::Point3::from(marker.local_offset));
        out[3 * k] = p.x;
        out[3 * k + 1] = p.y;
        out[3 * k + 2] = p.z;
    }
    out
}

/// Fit one frame's visible markers starting from `warm_start`.
pub fn baseline_fit(
    frame: &MarkerFrame,
    model: &KinematicModel,
    warm_start: &Pose,
    config: &BaselineConfig,
) -> Result<BaselineFit> {
    let stacked = stack_measurement(frame, model, &Matrix3::identity())?;
    let indices = stacked.marker_indices;
    let target = stacked.vector;
    let n = 6 + model.joint_count();
    let rows = target.len();

    let mut q = params_from_pose(warm_start);
    clamp_joints(model, &mut q);

    let residual_norm = |q: &DVector<f64>| (&target - stacked_positions(model, &indices, q)).norm();

    let initial_norm = residual_norm(&q);
    let mut best_q = q.clone();
    let mut best_norm = initial_norm;
    let mut previous_norm = initial_norm;
    let mut iterations = 0;

    for it in 0..config.max_iterations {
        iterations = it + 1;
        let h0 = stacked_positions(model, &indices, &q);
        let r = &target - &h0;

        // Forward-difference Jacobian of the stacked positions.
        let mut jac = DMatrix::zeros(rows, n);
        let mut q_pert = q.clone();
        for c in 0..n {
            q_pert[c] += config.fd_step;
            let h1 = stacked_positions(model, &indices, &q_pert);
            q_pert[c] = q[c];
            jac.set_column(c, &((h1 - &h0) / config.fd_step));
        }

        let jtj = jac.transpose() * &jac
            + DMatrix::identity(n, n) * (config.damping * config.damping);
        let jtr = jac.transpose() * &r;
        let Some(chol) = Cholesky::new(jtj) else {
            break;
        };
        let delta = chol.solve(&jtr);
        q += &delta;
        clamp_joints(model, &mut q);

        let norm = residual_norm(&q);
        if norm < best_norm {
            best_norm = norm;
            best_q.copy_from(&q);
        }
        if (previous_norm - norm).abs() <= config.min_improvement * previous_norm.max(1.0) {
            break;
        }
        previous_norm = norm;
    }

    let pose = pose_from_params(&best_q);
    let visible = indices.len() as f64;
    let mut per_marker = 0.0;
    let h = stacked_positions(model, &indices, &best_q);
    for k in 0..indices.len() {
        let d = Vector3::new(
            target[3 * k] - h[3 * k],
            target[3 * k + 1] - h[3 * k + 1],
            target[3 * k + 2] - h[3 * k + 2],
        );
        per_marker += d.norm();
    }
    Ok(BaselineFit {
        pose,
        residual_mm: per_marker / visible,
        iterations,
        diverged: best_norm > initial_norm * (1.0 + 1e-12),
    })
}

/// Uninformed starting pose mirroring the tracker's initialization: root at
/// the visible-marker centroid, zero orientation, joint angles at their
/// bound midpoints.
pub fn uninformed_pose(model: &KinematicModel, frame: &MarkerFrame) -> Result<Pose> {
    let visible: Vec<Vector3<f64>> = frame
        .observations
        .values()
        .filter(|o| o.visible)
        .map(|o| o.position)
        .collect();
    if visible.is_empty() {
        return Err(Error::NoVisibleMarkers);
    }
    let centroid = visible.iter().sum::<Vector3<f64>>() / visible.len() as f64;
    let mut pose = Pose::zero(model.joint_count());
    pose.root_position = centroid;
    for (j, joint) in model.joints().iter().enumerate() {
        pose.joint_angles[j] = joint.limits.midpoint();
    }
    Ok(pose)
}

/// Fit a whole sequence, warm-starting each frame from the previous fit.
/// Returns the fits and per-frame metric records (distance over all
/// markers against the same frames).
pub fn run_baseline(
    frames: &[MarkerFrame],
    model: &KinematicModel,
    config: &BaselineConfig,
) -> Result<(Vec<BaselineFit>, Vec<MetricsRecord>)> {
    if frames.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut warm = uninformed_pose(model, &frames[0]).map_err(|e| e.at_frame(0))?;
    let mut fits = Vec::with_capacity(frames.len());
    let mut records = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let fit = baseline_fit(frame, model, &warm, config).map_err(|e| e.at_frame(k))?;
        let runtime_s = start.elapsed().as_secs_f64();
        warm = fit.pose.clone();
        records.push(MetricsRecord {
            frame: k,
            avg_marker_dist_mm: crate::eval::marker_distance(model, &fit.pose, frame)?,
            visible_markers: frame.visible_count(),
            runtime_s,
        });
        fits.push(fit);
    }
    Ok((fits, records))
}
