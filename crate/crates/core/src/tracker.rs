//! Per-frame tracking: measurement stacking, the composite measurement
//! function, initialization from the first frame, and the predict/update
//! recursion.
//!
//! The state vector is `[root position (3), root orientation rpy (3),
//! joint parameters (J)]`. Joint parameters live in the unconstrained
//! space of the periodic transform; reported joint angles therefore always
//! satisfy their bounds without any clamping of estimates.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::filter::{
    kalman_update, predict_random_walk, smart_samples, statistical_moments, unscented_samples,
    GaussianEstimate, NoiseSpec, SampleSet,
};
use crate::kinematics::{KinematicModel, Pose};
use crate::transform::{from_angles, to_angle};

/// Joint-parameter variance above which the periodic transform stops giving
/// meaningful estimates (a quarter period, squared).
const JOINT_UNCERTAINTY_LIMIT: f64 = std::f64::consts::FRAC_PI_2 * std::f64::consts::FRAC_PI_2;

/// Index layout of the state vector for a model with J joints.
#[derive(Debug, Clone)]
pub struct StateLayout {
    joint_names: Vec<String>,
}

impl StateLayout {
    pub fn for_model(model: &KinematicModel) -> Self {
        StateLayout {
            joint_names: model.joints().iter().map(|j| j.name.clone()).collect(),
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    /// Total state dimension `6 + J`.
    pub fn dimension(&self) -> usize {
        6 + self.joint_names.len()
    }

    pub fn root_position_range(&self) -> Range<usize> {
        0..3
    }

    pub fn orientation_range(&self) -> Range<usize> {
        3..6
    }

    pub fn joint_range(&self) -> Range<usize> {
        6..self.dimension()
    }

    /// State index of a named component: `root_x`/`root_y`/`root_z`,
    /// `roll`/`pitch`/`yaw`, or a joint name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        match name {
            "root_x" => Some(0),
            "root_y" => Some(1),
            "root_z" => Some(2),
            "roll" => Some(3),
            "pitch" => Some(4),
            "yaw" => Some(5),
            _ => self
                .joint_names
                .iter()
                .position(|n| n == name)
                .map(|j| 6 + j),
        }
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        match index {
            0 => Some("root_x"),
            1 => Some("root_y"),
            2 => Some("root_z"),
            3 => Some("roll"),
            4 => Some("pitch"),
            5 => Some("yaw"),
            _ => self.joint_names.get(index - 6).map(|s| s.as_str()),
        }
    }
}

/// One labeled marker observation in a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerObservation {
    /// Measured position, millimeters.
    pub position: Vector3<f64>,
    /// Whether the capture system saw the marker this frame.
    pub visible: bool,
}

/// Timestamped set of labeled marker observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrame {
    /// Seconds.
    pub timestamp: f64,
    /// Keyed by marker label; ordered so iteration is deterministic.
    pub observations: BTreeMap<String, MarkerObservation>,
}

impl MarkerFrame {
    pub fn new(timestamp: f64) -> Self {
        MarkerFrame {
            timestamp,
            observations: BTreeMap::new(),
        }
    }

    pub fn visible_count(&self) -> usize {
        self.observations.values().filter(|o| o.visible).count()
    }
}

/// Where the filter's deterministic sample set comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSource {
    /// Symmetric 2N+1 sigma points; `kappa` defaults to `3 - N`.
    Unscented { kappa: Option<f64> },
    /// Moment-corrected point set of the given size.
    Smart { count: usize, seed: u64 },
}

impl SampleSource {
    pub fn build(&self, dimension: usize) -> Result<SampleSet> {
        match *self {
            SampleSource::Unscented { kappa } => unscented_samples(
                dimension,
                kappa.unwrap_or_else(|| crate::filter::default_kappa(dimension)),
            ),
            SampleSource::Smart { count, seed } => smart_samples(dimension, count, seed),
        }
    }
}

/// Constants used to build the initial estimate from the first frame.
#[derive(Debug, Clone, Copy)]
pub struct InitConstants {
    /// Variance of each root-orientation component, rad^2.
    pub orientation_var: f64,
    /// Variance of each joint parameter, rad^2.
    pub joint_param_var: f64,
    /// Added to the root-position scatter when it is near singular, mm^2.
    pub scatter_floor: f64,
}

impl Default for InitConstants {
    fn default() -> Self {
        InitConstants {
            orientation_var: 1e-6,
            joint_param_var: 1e-10,
            scatter_floor: 1e-6,
        }
    }
}

/// Tracker configuration: noise model, sample source, and initialization.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    /// Measurement noise of a single marker, mm^2 (applied to every marker).
    pub marker_noise: Matrix3<f64>,
    /// Process noise over the full state; mm^2 on the root-position block,
    /// rad^2 on orientation and joint parameters.
    pub process_noise: NoiseSpec,
    pub samples: SampleSource,
    /// Optional known initial pose; replaces the uninformed initialization.
    pub init_pose: Option<Pose>,
    pub init: InitConstants,
}

impl TrackerConfig {
    /// Defaults for a model: marker noise `1e-4 I3`, process noise
    /// `diag(25, 25, 25, 1e-10, ...)`, 301 moment-corrected samples.
    pub fn defaults(model: &KinematicModel) -> Self {
        let n = 6 + model.joint_count();
        let mut q = DVector::from_element(n, 1e-10);
        for i in 0..3 {
            q[i] = 25.0;
        }
        TrackerConfig {
            marker_noise: Matrix3::identity() * 1e-4,
            process_noise: NoiseSpec::from_diagonal(&q).expect("diagonal is nonnegative"),
            samples: SampleSource::Smart {
                count: 301,
                seed: 0,
            },
            init_pose: None,
            init: InitConstants::default(),
        }
    }

    fn validate(&self, model: &KinematicModel) -> Result<()> {
        let n = 6 + model.joint_count();
        if self.process_noise.dimension() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.process_noise.dimension(),
            });
        }
        // Marker noise must be a valid 3x3 noise block.
        NoiseSpec::from_psd_blocks(&[self.marker_noise])?;
        Ok(())
    }
}

/// A stacked measurement over the visible markers of one frame.
#[derive(Debug, Clone)]
pub struct StackedMeasurement {
    /// Concatenated visible marker positions, length `3 * visible`.
    pub vector: DVector<f64>,
    /// Model marker indices in stack order (model declaration order).
    pub marker_indices: Vec<usize>,
    /// Block-diagonal measurement noise matching the stack.
    pub noise: NoiseSpec,
}

impl StackedMeasurement {
    /// Visible labels in stack order.
    pub fn labels<'m>(&self, model: &'m KinematicModel) -> Vec<&'m str> {
        self.marker_indices
            .iter()
            .map(|&i| model.markers()[i].label.as_str())
            .collect()
    }
}

/// Stack the visible markers of a frame in model order.
///
/// Labels present in the frame but unknown to the model are rejected; model
/// markers absent from the frame are treated as hidden.
pub fn stack_measurement(
    frame: &MarkerFrame,
    model: &KinematicModel,
    marker_noise: &Matrix3<f64>,
) -> Result<StackedMeasurement> {
    for label in frame.observations.keys() {
        if model.marker_index(label).is_none() {
            return Err(Error::UnknownMarker(label.clone()));
        }
    }
    let mut marker_indices = Vec::new();
    let mut values = Vec::new();
    for (i, marker) in model.markers().iter().enumerate() {
        if let Some(obs) = frame.observations.get(&marker.label) {
            if obs.visible {
                marker_indices.push(i);
                values.extend_from_slice(&[obs.position.x, obs.position.y, obs.position.z]);
            }
        }
    }
    if marker_indices.is_empty() {
        return Err(Error::NoVisibleMarkers);
    }
    let blocks = vec![*marker_noise; marker_indices.len()];
    Ok(StackedMeasurement {
        vector: DVector::from_vec(values),
        marker_indices,
        noise: NoiseSpec::from_psd_blocks(&blocks)?,
    })
}

/// Decode a state vector into a pose. Joint angles come out of the periodic
/// transform, so they always satisfy their bounds.
pub fn pose_from_state(model: &KinematicModel, state: &DVector<f64>) -> Pose {
    let j = model.joint_count();
    debug_assert_eq!(state.len(), 6 + j);
    let joint_angles = DVector::from_iterator(
        j,
        model
            .joints()
            .iter()
            .enumerate()
            .map(|(idx, joint)| to_angle(state[6 + idx], &joint.limits)),
    );
    Pose {
        root_position: Vector3::new(state[0], state[1], state[2]),
        root_orientation: Vector3::new(state[3], state[4], state[5]),
        joint_angles,
    }
}

/// Encode a pose as a state vector (inverse transform on the joints).
pub fn state_from_pose(model: &KinematicModel, pose: &Pose) -> Result<DVector<f64>> {
    let params = from_angles(&pose.joint_angles, model)?;
    let mut state = DVector::zeros(6 + model.joint_count());
    state[0] = pose.root_position.x;
    state[1] = pose.root_position.y;
    state[2] = pose.root_position.z;
    state[3] = pose.root_orientation.x;
    state[4] = pose.root_orientation.y;
    state[5] = pose.root_orientation.z;
    state.rows_mut(6, params.len()).copy_from(&params);
    Ok(state)
}

/// The composite measurement function: state -> stacked world positions of
/// the given markers, in order.
pub fn measurement_function<'a>(
    model: &'a KinematicModel,
    marker_indices: &'a [usize],
) -> impl Fn(&DVector<f64>) -> DVector<f64> + 'a {
    move |state: &DVector<f64>| {
        let pose = pose_from_state(model, state);
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
}

/// Per-frame tracking diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub visible_markers: usize,
    /// Seconds spent in predict + update (monotonic clock, no I/O).
    pub runtime_s: f64,
    /// True when the frame had no visible markers and only the prediction ran.
    pub prediction_only: bool,
    /// True when some joint-parameter variance exceeds a quarter period
    /// squared, the regime where the periodic transform degrades.
    pub joint_uncertainty_high: bool,
}

/// State estimate, decoded pose, and diagnostics for one frame.
#[derive(Debug, Clone)]
pub struct TrackedPose {
    pub estimate: GaussianEstimate,
    pub pose: Pose,
    pub diagnostics: StepDiagnostics,
}

/// Recursive tracker over one model and configuration.
///
/// A tracker is one logical sequence; run independent instances for
/// concurrent tracking jobs.
pub struct Tracker<'m> {
    model: &'m KinematicModel,
    config: TrackerConfig,
    samples: SampleSet,
    warned_uncertainty: bool,
}

impl<'m> Tracker<'m> {
    pub fn new(model: &'m KinematicModel, config: TrackerConfig) -> Result<Self> {
        config.validate(model)?;
        let samples = config.samples.build(6 + model.joint_count())?;
        Ok(Tracker {
            model,
            config,
            samples,
            warned_uncertainty: false,
        })
    }

    pub fn model(&self) -> &KinematicModel {
        self.model
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Initial estimate from the first frame: root mean at the visible
    /// marker centroid with the marker scatter as covariance (floored when
    /// near singular), zero orientation and joint parameters with small
    /// fixed variances. A configured known pose overrides the mean.
    pub fn initialize(&self, frame: &MarkerFrame) -> Result<GaussianEstimate> {
        let n = 6 + self.model.joint_count();

        if let Some(pose) = &self.config.init_pose {
            let mean = state_from_pose(self.model, pose)?;
            let mut diag = DVector::from_element(n, self.config.init.joint_param_var);
            for i in 0..3 {
                diag[i] = self.config.init.scatter_floor;
            }
            for i in 3..6 {
                diag[i] = self.config.init.orientation_var;
            }
            return GaussianEstimate::new(mean, DMatrix::from_diagonal(&diag));
        }

        let visible: Vec<Vector3<f64>> = frame
            .observations
            .values()
            .filter(|o| o.visible)
            .map(|o| o.position)
            .collect();
        if visible.is_empty() {
            return Err(Error::NoVisibleMarkers);
        }
        let count = visible.len() as f64;
        let centroid = visible.iter().sum::<Vector3<f64>>() / count;
        let mut scatter = Matrix3::zeros();
        for p in &visible {
            let d = p - centroid;
            scatter += d * d.transpose();
        }
        scatter /= count;
        let min_eig = scatter
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < self.config.init.scatter_floor {
            scatter += Matrix3::identity() * self.config.init.scatter_floor;
        }

        let mut mean = DVector::zeros(n);
        mean[0] = centroid.x;
        mean[1] = centroid.y;
        mean[2] = centroid.z;

        let mut cov = DMatrix::zeros(n, n);
        cov.view_mut((0, 0), (3, 3)).copy_from(&scatter);
        for i in 3..6 {
            cov[(i, i)] = self.config.init.orientation_var;
        }
        for i in 6..n {
            cov[(i, i)] = self.config.init.joint_param_var;
        }
        GaussianEstimate::new(mean, cov)
    }

    /// One predict + update cycle. Frames without any visible marker fall
    /// back to prediction only and are flagged as such.
    pub fn step(&mut self, state: &GaussianEstimate, frame: &MarkerFrame) -> Result<TrackedPose> {
        let start = Instant::now();
        let predicted = predict_random_walk(state, &self.config.process_noise)?;
        let (estimate, visible, prediction_only) =
            match stack_measurement(frame, self.model, &self.config.marker_noise) {
                Ok(stacked) => {
                    let h = measurement_function(self.model, &stacked.marker_indices);
                    let moments = statistical_moments(&self.samples, &predicted, h, &stacked.noise)?;
                    let posterior = kalman_update(&predicted, &moments, &stacked.vector)?;
                    (posterior, stacked.marker_indices.len(), false)
                }
                Err(Error::NoVisibleMarkers) => (predicted, 0, true),
                Err(e) => return Err(e),
            };
        let runtime_s = start.elapsed().as_secs_f64();

        let joint_uncertainty_high = (6..estimate.dimension())
            .any(|i| estimate.covariance()[(i, i)] > JOINT_UNCERTAINTY_LIMIT);
        if joint_uncertainty_high && !self.warned_uncertainty {
            log::warn!(
                "joint-parameter variance exceeds a quarter period squared; \
                 estimates may alias across the periodic transform"
            );
            self.warned_uncertainty = true;
        }

        let pose = pose_from_state(self.model, estimate.mean());
        Ok(TrackedPose {
            estimate,
            pose,
            diagnostics: StepDiagnostics {
                visible_markers: visible,
                runtime_s,
                prediction_only,
                joint_uncertainty_high,
            },
        })
    }
}

/// Track a time-ordered sequence: initialize from the first frame, then run
/// one step per frame (the first frame is also processed as an update).
pub fn track(
    frames: &[MarkerFrame],
    model: &KinematicModel,
    config: TrackerConfig,
) -> Result<Vec<TrackedPose>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    for pair in frames.windows(2) {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(Error::FrameData(format!(
                "frames not time-ordered at t={} -> t={}",
                pair[0].timestamp, pair[1].timestamp
            )));
        }
    }
    let mut tracker = Tracker::new(model, config)?;
    let mut state = tracker.initialize(&frames[0]).map_err(|e| e.at_frame(0))?;
    let mut out = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let tracked = tracker.step(&state, frame).map_err(|e| e.at_frame(k))?;
        state = tracked.estimate.clone();
        out.push(tracked);
    }
    Ok(out)
}
