//! Periodic reparameterization between bounded joint angles and
//! unconstrained joint parameters.
//!
//! A bounded angle `theta` in `[lower, upper]` is expressed through an
//! unconstrained parameter `Theta` via
//!
//! ```text
//! theta = (upper - lower) / 2 * sin(Theta) + (lower + upper) / 2
//! ```
//!
//! Any real `Theta` maps into the bounds, so an estimator can treat the
//! parameter as a free variable while every reported angle respects its
//! limits. The inverse uses the principal arcsine branch; it only needs to
//! produce *some* preimage.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kinematics::{JointBounds, KinematicModel};

/// Tolerance (radians) for accepting angles marginally outside bounds in
/// [`from_angle`].
const BOUNDS_TOL: f64 = 1e-9;

/// Map an unconstrained joint parameter to its bounded joint angle.
///
/// Total on all reals; the result always lies in `[lower, upper]`. The final
/// clamp only absorbs the sub-ulp rounding of the affine evaluation so the
/// mathematical range guarantee survives floating point.
pub fn to_angle(param: f64, bounds: &JointBounds) -> f64 {
    let half_range = 0.5 * (bounds.upper - bounds.lower);
    let midpoint = 0.5 * (bounds.lower + bounds.upper);
    let angle = half_range * param.sin() + midpoint;
    angle.clamp(bounds.lower, bounds.upper)
}

/// Derivative of [`to_angle`] with respect to the parameter.
pub fn to_angle_derivative(param: f64, bounds: &JointBounds) -> f64 {
    0.5 * (bounds.upper - bounds.lower) * param.cos()
}

/// Map a joint parameter vector to the model's joint angles, componentwise.
pub fn to_angles(params: &DVector<f64>, model: &KinematicModel) -> Result<DVector<f64>> {
    if params.len() != model.joint_count() {
        return Err(Error::DimensionMismatch {
            expected: model.joint_count(),
            actual: params.len(),
        });
    }
    Ok(DVector::from_iterator(
        params.len(),
        params
            .iter()
            .zip(model.joints())
            .map(|(&p, joint)| to_angle(p, &joint.limits)),
    ))
}

/// Recover a joint parameter from a bounded angle (principal arcsine branch).
///
/// The result lies in `[-pi/2, pi/2]` and round-trips through [`to_angle`].
/// Angles outside the bounds by more than a small tolerance are rejected.
pub fn from_angle(angle: f64, bounds: &JointBounds) -> Result<f64> {
    if angle < bounds.lower - BOUNDS_TOL || angle > bounds.upper + BOUNDS_TOL {
        return Err(Error::AngleOutOfBounds {
            angle,
            lower: bounds.lower,
            upper: bounds.upper,
        });
    }
    let sine = ((2.0 * angle - bounds.lower - bounds.upper) / (bounds.upper - bounds.lower))
        .clamp(-1.0, 1.0);
    Ok(sine.asin())
}

/// Componentwise [`from_angle`] over a model's joints.
pub fn from_angles(angles: &DVector<f64>, model: &KinematicModel) -> Result<DVector<f64>> {
    if angles.len() != model.joint_count() {
        return Err(Error::DimensionMismatch {
            expected: model.joint_count(),
            actual: angles.len(),
        });
    }
    let mut params = DVector::zeros(angles.len());
    for (i, joint) in model.joints().iter().enumerate() {
        params[i] = from_angle(angles[i], &joint.limits)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bounds(lower: f64, upper: f64) -> JointBounds {
        JointBounds { lower, upper }
    }

    #[test]
    fn midpoint_at_zero_parameter() {
        assert_eq!(to_angle(0.0, &bounds(-1.0, 1.0)), 0.0);
    }

    #[test]
    fn sine_peak_hits_upper_bound() {
        assert_relative_eq!(
            to_angle(std::f64::consts::FRAC_PI_2, &bounds(0.0, 2.0)),
            2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn matches_high_precision_expression() {
        // theta = 0.5 + 1.0 * sin(1.0); sin(1.0) evaluated independently.
        let expected = 0.5 + 0.841_470_984_807_896_5;
        assert_relative_eq!(
            to_angle(1.0, &bounds(-0.5, 1.5)),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn from_angle_midpoint_is_zero() {
        assert_eq!(from_angle(0.5, &bounds(-1.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn from_angle_upper_bound_is_quarter_period() {
        assert_relative_eq!(
            from_angle(1.5, &bounds(-0.5, 1.5)).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn round_trip_recovers_derived_parameter() {
        // theta chosen so the preimage is ~1.0: theta = 0.5 + sin(1.0).
        let b = bounds(-0.5, 1.5);
        let theta = 1.341_470_984_807_896_5;
        let param = from_angle(theta, &b).unwrap();
        assert_relative_eq!(param, 1.0, epsilon = 1e-12);
        assert_relative_eq!(to_angle(param, &b), theta, epsilon = 1e-12);
    }

    #[test]
    fn from_angle_rejects_out_of_bounds() {
        assert!(from_angle(1.5 + 1e-6, &bounds(-0.5, 1.5)).is_err());
        // Inside the tolerance band it is accepted and clamped.
        assert!(from_angle(1.5 + 1e-10, &bounds(-0.5, 1.5)).is_ok());
    }

    #[test]
    fn range_property_million_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..1_000_000 {
            let lower = rng.gen_range(-10.0..10.0);
            let width = rng.gen_range(1e-9..10.0);
            let b = bounds(lower, lower + width);
            let param = rng.gen_range(-100.0..100.0);
            let angle = to_angle(param, &b);
            assert!(
                angle >= b.lower && angle <= b.upper,
                "angle {angle} escaped [{}, {}] for param {param}",
                b.lower,
                b.upper
            );
        }
    }

    #[test]
    fn periodicity_within_rounding() {
        let b = bounds(-2.0, 3.0);
        let mut param = -10.0;
        while param < 10.0 {
            let a = to_angle(param, &b);
            let shifted = to_angle(param + 2.0 * std::f64::consts::PI, &b);
            assert!((a - shifted).abs() < 1e-12, "period violated at {param}");
            param += 0.037;
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let b = bounds(-0.8, 2.2);
        let h = 1e-6;
        let mut param: f64 = -1.4;
        while param < 1.4 {
            let analytic = to_angle_derivative(param, &b);
            // Central difference on the unclamped expression.
            let half = 0.5 * (b.upper - b.lower);
            let mid = 0.5 * (b.lower + b.upper);
            let f = |p: f64| half * p.sin() + mid;
            let numeric = (f(param + h) - f(param - h)) / (2.0 * h);
            assert_relative_eq!(analytic, numeric, max_relative = 1e-6);
            if param.abs() < std::f64::consts::FRAC_PI_2 - 0.05 {
                assert!(analytic.abs() > 0.0, "derivative vanished inside range");
            }
            param += 0.05;
        }
    }

    proptest! {
        #[test]
        fn round_trip_identity_inside_bounds(
            lower in -6.0_f64..6.0,
            width in 1e-6_f64..8.0,
            frac in 1e-3_f64..0.999,
        ) {
            let b = bounds(lower, lower + width);
            let theta = b.lower + frac * width;
            let theta_back = to_angle(from_angle(theta, &b).unwrap(), &b);
            prop_assert!((theta_back - theta).abs() < 1e-12);
        }

        #[test]
        fn range_holds_for_any_parameter(
            lower in -6.0_f64..6.0,
            width in 1e-6_f64..8.0,
            param in -1e4_f64..1e4,
        ) {
            let b = bounds(lower, lower + width);
            let angle = to_angle(param, &b);
            prop_assert!(angle >= b.lower && angle <= b.upper);
        }
    }
}
