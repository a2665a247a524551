//! Synthetic motion-capture generation: ground-truth pose trajectories,
//! noisy marker frames, and a hidden-marker process. This is the
//! verification oracle the test suite tracks against.

use std::collections::HashMap;

use nalgebra::{Cholesky, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::kinematics::{KinematicModel, Pose};
use crate::tracker::{MarkerFrame, MarkerObservation};

/// One scalar trajectory channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Constant(f64),
    /// Linear ramp from `from` at t=0 to `to` at the script end.
    Ramp { from: f64, to: f64 },
    /// `offset + amplitude * sin(2 pi frequency t + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency_hz: f64,
        phase: f64,
        offset: f64,
    },
}

impl Channel {
    fn eval(&self, t: f64, duration: f64) -> f64 {
        match *self {
            Channel::Constant(v) => v,
            Channel::Ramp { from, to } => {
                let s = if duration > 0.0 { (t / duration).clamp(0.0, 1.0) } else { 0.0 };
                from + (to - from) * s
            }
            Channel::Sinusoid {
                amplitude,
                frequency_hz,
                phase,
                offset,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency_hz * t + phase).sin(),
        }
    }
}

/// Per-channel trajectory specification for root and joints.
///
/// Joint channels are clamped into their bounds at evaluation time, so the
/// generated angles respect the limits at every sample.
#[derive(Debug, Clone)]
pub struct MotionScript {
    pub duration_s: f64,
    pub rate_hz: f64,
    pub root_position: [Channel; 3],
    pub root_orientation: [Channel; 3],
    pub joints: Vec<Channel>,
}

impl MotionScript {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }
}

/// Names of the bundled scripts.
pub const BUNDLED_SCRIPTS: &[&str] = &["sine_sweep_40dof", "root_excursion"];

/// Construct a bundled script for a model (675 frames at 100 Hz).
pub fn bundled_script(name: &str, model: &KinematicModel) -> Option<MotionScript> {
    match name {
        "sine_sweep_40dof" => Some(sine_sweep(model)),
        "root_excursion" => Some(root_excursion(model)),
        _ => None,
    }
}

/// Golden-angle phase spreading keeps per-joint phases well separated.
fn spread_phase(index: usize) -> f64 {
    (index as f64 * 2.399_963_229_728_653) % (2.0 * std::f64::consts::PI)
}

/// Fraction of the half-range a joint sweeps: distal joints move less so
/// tracking error under occlusion stays bounded by geometry.
fn sweep_fraction(name: &str) -> f64 {
    if ["wrist", "toe", "ankle", "head", "neck", "clav"]
        .iter()
        .any(|k| name.contains(k))
    {
        0.15
    } else if ["elbow", "knee", "forearm"].iter().any(|k| name.contains(k)) {
        0.30
    } else {
        0.40
    }
}

/// All joints sinusoidal at distinct frequencies; moderate root motion.
fn sine_sweep(model: &KinematicModel) -> MotionScript {
    let joints = model
        .joints()
        .iter()
        .enumerate()
        .map(|(j, joint)| Channel::Sinusoid {
            amplitude: sweep_fraction(&joint.name) * joint.limits.half_range(),
            frequency_hz: 0.12 + 0.011 * j as f64,
            phase: spread_phase(j),
            offset: joint.limits.midpoint(),
        })
        .collect();
    MotionScript {
        duration_s: 6.75,
        rate_hz: 100.0,
        root_position: [
            Channel::Sinusoid {
                amplitude: 120.0,
                frequency_hz: 0.21,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 150.0,
                frequency_hz: 0.17,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 80.0,
                frequency_hz: 0.27,
                phase: 0.0,
                offset: 1000.0,
            },
        ],
        root_orientation: [
            Channel::Sinusoid {
                amplitude: 0.12,
                frequency_hz: 0.19,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 0.10,
                frequency_hz: 0.23,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 0.25,
                frequency_hz: 0.13,
                phase: 0.0,
                offset: 0.0,
            },
        ],
        joints,
    }
}

/// Large root translation and rotation with gentle joint motion.
fn root_excursion(model: &KinematicModel) -> MotionScript {
    let joints = model
        .joints()
        .iter()
        .enumerate()
        .map(|(j, joint)| Channel::Sinusoid {
            amplitude: 0.1 * joint.limits.half_range(),
            frequency_hz: 0.1 + 0.007 * j as f64,
            phase: spread_phase(j),
            offset: joint.limits.midpoint(),
        })
        .collect();
    MotionScript {
        duration_s: 6.75,
        rate_hz: 100.0,
        root_position: [
            Channel::Ramp {
                from: 0.0,
                to: 600.0,
            },
            Channel::Sinusoid {
                amplitude: 300.0,
                frequency_hz: 0.15,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 100.0,
                frequency_hz: 0.30,
                phase: 0.0,
                offset: 1000.0,
            },
        ],
        root_orientation: [
            Channel::Sinusoid {
                amplitude: 0.08,
                frequency_hz: 0.20,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Sinusoid {
                amplitude: 0.08,
                frequency_hz: 0.16,
                phase: 0.0,
                offset: 0.0,
            },
            Channel::Ramp { from: 0.0, to: 0.6 },
        ],
        joints,
    }
}

/// Evaluate a script into ground-truth poses. Deterministic.
pub fn generate_truth(script: &MotionScript, model: &KinematicModel) -> Result<Vec<Pose>> {
    if script.joints.len() != model.joint_count() {
        return Err(Error::ScriptMismatch(format!(
            "script has {} joint channels, model has {} joints",
            script.joints.len(),
            model.joint_count()
        )));
    }
    if !(script.rate_hz > 0.0) {
        return Err(Error::ScriptMismatch("rate must be positive".into()));
    }
    let frames = script.frame_count();
    let mut poses = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 / script.rate_hz;
        let mut pose = Pose::zero(model.joint_count());
        for (i, ch) in script.root_position.iter().enumerate() {
            pose.root_position[i] = ch.eval(t, script.duration_s);
        }
        for (i, ch) in script.root_orientation.iter().enumerate() {
            pose.root_orientation[i] = ch.eval(t, script.duration_s);
        }
        for (j, ch) in script.joints.iter().enumerate() {
            let limits = &model.joints()[j].limits;
            pose.joint_angles[j] = ch.eval(t, script.duration_s).clamp(limits.lower, limits.upper);
        }
        poses.push(pose);
    }
    Ok(poses)
}

/// Render marker frames from poses: forward kinematics plus an independent
/// zero-mean Gaussian draw per marker. Deterministic per seed.
pub fn render_markers(
    poses: &[Pose],
    model: &KinematicModel,
    marker_noise: &Matrix3<f64>,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<MarkerFrame>> {
    let zero_noise = marker_noise.iter().all(|&v| v == 0.0);
    let noise_root = if zero_noise {
        Matrix3::zeros()
    } else {
        Cholesky::new(*marker_noise)
            .ok_or_else(|| Error::InvalidNoise("marker noise not positive definite".into()))?
            .l()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut frames = Vec::with_capacity(poses.len());
    for (k, pose) in poses.iter().enumerate() {
        let mut frame = MarkerFrame::new(k as f64 / rate_hz);
        for (label, position) in model.forward_kinematics_all(pose) {
            let noise = if zero_noise {
                Vector3::zeros()
            } else {
                let z = Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
                noise_root * z
            };
            frame.observations.insert(
                label.to_string(),
                MarkerObservation {
                    position: position + noise,
                    visible: true,
                },
            );
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Hidden-marker process parameters.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionConfig {
    /// Per-frame probability that a visible marker becomes hidden starting
    /// with the next frame.
    pub hide_probability: f64,
    /// Mean hidden duration in frames (Poisson parameter).
    pub mean_hidden_frames: f64,
    pub seed: u64,
}

impl OcclusionConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hide_probability) {
            return Err(Error::FrameData(format!(
                "hide probability {} outside [0, 1]",
                self.hide_probability
            )));
        }
        if self.mean_hidden_frames < 0.0 || !self.mean_hidden_frames.is_finite() {
            return Err(Error::FrameData(format!(
                "mean hidden duration {} invalid",
                self.mean_hidden_frames
            )));
        }
        Ok(())
    }
}

/// Apply the two-stage hidden-marker process to a frame sequence.
///
/// Each frame, every currently visible marker triggers with the configured
/// probability; a trigger hides it for the next `d` frames with `d` drawn
/// from a Poisson distribution (a draw of 0 hides nothing). Hidden markers
/// do not re-trigger; a marker is eligible again on the frame it reappears.
/// Deterministic per seed: markers are processed in label order.
pub fn apply_occlusion(
    frames: &[MarkerFrame],
    config: &OcclusionConfig,
) -> Result<Vec<MarkerFrame>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let poisson = if config.mean_hidden_frames > 0.0 {
        Some(Poisson::new(config.mean_hidden_frames).expect("validated positive"))
    } else {
        None
    };
    let mut hidden_remaining: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut new_frame = frame.clone();
        for (label, obs) in new_frame.observations.iter_mut() {
            let remaining = hidden_remaining.entry(label.clone()).or_insert(0);
            if *remaining > 0 {
                obs.visible = false;
                *remaining -= 1;
            } else if obs.visible && config.hide_probability > 0.0 {
                if rng.gen_bool(config.hide_probability) {
                    let duration = match &poisson {
                        Some(p) => p.sample(&mut rng) as u64,
                        None => 0,
                    };
                    *remaining = duration;
                }
            }
        }
        out.push(new_frame);
    }
    Ok(out)
}
