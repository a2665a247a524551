//! Sample-based Gaussian filter primitives.
//!
//! The filter represents every belief as a mean vector and covariance matrix
//! ([`GaussianEstimate`]). Nonlinear models are handled by propagating a
//! deterministic, weighted point set with zero mean and identity covariance
//! ([`SampleSet`]) through the model after an affine map onto the current
//! estimate, then matching moments. For affine models this recovers the
//! classic Kalman equations exactly, which is what the oracle tests pin down.
//!
//! Two sample-set constructors are provided:
//! - [`unscented_samples`]: the symmetric 2N+1 sigma-point set;
//! - [`smart_samples`]: an arbitrary-size set built from seeded Gaussian
//!   draws (antithetic when the budget allows) followed by an exact affine
//!   moment correction, so mean and covariance hold regardless of sample
//!   count. The constructor is the single entry point; a differently
//!   optimized point layout can be swapped in behind it without touching
//!   callers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const SAMPLE_MEAN_TOL: f64 = 1e-9;
const SAMPLE_COV_TOL: f64 = 1e-6;
const NOISE_EIGEN_TOL: f64 = 1e-12;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = max_abs(m).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Mean and covariance of a Gaussian state belief.
#[derive(Debug, Clone)]
pub struct GaussianEstimate {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianEstimate {
    /// Validate symmetry and positive definiteness (via factorization).
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: covariance.nrows(),
            });
        }
        check_symmetric(&covariance, "state covariance")?;
        if Cholesky::new(covariance.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(
                "state covariance failed factorization".into(),
            ));
        }
        Ok(GaussianEstimate { mean, covariance })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.covariance.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite("state covariance failed factorization".into())
        })
    }
}

/// Process or measurement noise covariance (symmetric positive semidefinite).
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    covariance: DMatrix<f64>,
}

impl NoiseSpec {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::InvalidNoise("matrix is not square".into()));
        }
        check_symmetric(&covariance, "noise covariance")
            .map_err(|_| Error::InvalidNoise("matrix is not symmetric".into()))?;
        let eigen = covariance.clone().symmetric_eigenvalues();
        let scale = eigen.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if eigen.iter().any(|&v| v < -NOISE_EIGEN_TOL * scale) {
            return Err(Error::InvalidNoise(format!(
                "negative eigenvalue {}",
                eigen.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(NoiseSpec { covariance })
    }

    pub fn zero(dimension: usize) -> Self {
        NoiseSpec {
            covariance: DMatrix::zeros(dimension, dimension),
        }
    }

    pub fn from_diagonal(diagonal: &DVector<f64>) -> Result<Self> {
        if diagonal.iter().any(|&v| v < -NOISE_EIGEN_TOL) {
            return Err(Error::InvalidNoise("negative diagonal entry".into()));
        }
        Ok(NoiseSpec {
            covariance: DMatrix::from_diagonal(diagonal),
        })
    }

    /// Assemble a block-diagonal noise from 3x3 per-marker blocks.
    pub fn from_psd_blocks(blocks: &[nalgebra::Matrix3<f64>]) -> Result<Self> {
        let dim = 3 * blocks.len();
        let mut covariance = DMatrix::zeros(dim, dim);
        for (b, block) in blocks.iter().enumerate() {
            let eigen = block.symmetric_eigenvalues();
            let scale = eigen.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            if eigen.iter().any(|&v| v < -NOISE_EIGEN_TOL * scale) {
                return Err(Error::InvalidNoise(format!(
                    "block {b} has a negative eigenvalue"
                )));
            }
            covariance
                .view_mut((3 * b, 3 * b), (3, 3))
                .copy_from(block);
        }
        Ok(NoiseSpec { covariance })
    }

    pub fn dimension(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Weighted point set with zero mean and identity covariance.
///
/// Points are the columns of an `N x S` matrix. Any Gaussian is reached by
/// the affine map `x = mean + L p` with `L` a square root of the covariance.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: DMatrix<f64>,
    weights: DVector<f64>,
}

impl SampleSet {
    /// Validate the standard-normal moment invariants.
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != points.ncols() {
            return Err(Error::DimensionMismatch {
                expected: points.ncols(),
                actual: weights.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidNoise(format!(
                "sample weights sum to {sum}, not 1"
            )));
        }
        let mean = &points * &weights;
        if mean.amax() > SAMPLE_MEAN_TOL {
            return Err(Error::InvalidNoise(format!(
                "sample mean deviates from zero by {}",
                mean.amax()
            )));
        }
        let weighted = scale_columns(&points, &weights);
        let cov = &weighted * points.transpose();
        let eye = DMatrix::identity(points.nrows(), points.nrows());
        if (cov - eye).norm() > SAMPLE_COV_TOL {
            return Err(Error::InvalidNoise(
                "sample covariance deviates from identity".into(),
            ));
        }
        Ok(SampleSet { points, weights })
    }

    pub fn dimension(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

fn scale_columns(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (c, &weight) in w.iter().enumerate() {
        out.column_mut(c).scale_mut(weight);
    }
    out
}

/// Default sigma-point spread `kappa = 3 - N`, floored so `N + kappa` stays
/// at least 0.5.
pub fn default_kappa(dimension: usize) -> f64 {
    (3.0 - dimension as f64).max(0.5 - dimension as f64)
}

/// Symmetric 2N+1 sigma-point set for the standard normal.
pub fn unscented_samples(dimension: usize, kappa: f64) -> Result<SampleSet> {
    if dimension == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    let n = dimension as f64;
    if !(n + kappa).is_finite() || n + kappa <= 0.0 {
        return Err(Error::InvalidKappa { dimension, kappa });
    }
    let count = 2 * dimension + 1;
    let spread = (n + kappa).sqrt();
    let mut points = DMatrix::zeros(dimension, count);
    let mut weights = DVector::zeros(count);
    weights[0] = kappa / (n + kappa);
    let w = 1.0 / (2.0 * (n + kappa));
    for i in 0..dimension {
        points[(i, 1 + i)] = spread;
        points[(i, 1 + dimension + i)] = -spread;
        weights[1 + i] = w;
        weights[1 + dimension + i] = w;
    }
    SampleSet::new(points, weights)
}

/// Equally weighted point set of arbitrary size `count >= dimension + 1`.
///
/// Points are seeded Gaussian draws, antithetic when `count >= 2 * dimension`
/// (pairing keeps all odd moments exactly zero), then whitened so the first
/// two moments are exact. Deterministic for a fixed seed.
pub fn smart_samples(dimension: usize, count: usize, seed: u64) -> Result<SampleSet> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    if dimension == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if count < dimension + 1 {
        return Err(Error::TooFewSamples { count, dimension });
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut points = DMatrix::zeros(dimension, count);

    if count >= 2 * dimension {
        // Antithetic pairs, plus a zero point when the count is odd.
        let pairs = count / 2;
        for p in 0..pairs {
            for r in 0..dimension {
                let v: f64 = normal.sample(&mut rng);
                points[(r, 2 * p)] = v;
                points[(r, 2 * p + 1)] = -v;
            }
        }
    } else {
        for c in 0..count {
            for r in 0..dimension {
                points[(r, c)] = normal.sample(&mut rng);
            }
        }
        // Center so the raw set has (near-)zero mean before whitening.
        let mean = points.column_sum() / count as f64;
        for mut col in points.column_iter_mut() {
            col -= &mean;
        }
    }

    let weights = DVector::from_element(count, 1.0 / count as f64);
    let weighted = scale_columns(&points, &weights);
    let cov = &weighted * points.transpose();
    let chol = Cholesky::new(cov).ok_or_else(|| {
        Error::NotPositiveDefinite("raw sample covariance is rank deficient".into())
    })?;
    let whitened = chol
        .l()
        .solve_lower_triangular(&points)
        .ok_or_else(|| Error::NotPositiveDefinite("whitening solve failed".into()))?;

    SampleSet::new(whitened, weights)
}

/// Affinely map a standard-normal sample set onto a Gaussian estimate.
///
/// Returns the mapped points as columns of an `N x S` matrix.
pub fn map_to_gaussian(samples: &SampleSet, estimate: &GaussianEstimate) -> Result<DMatrix<f64>> {
    if samples.dimension() != estimate.dimension() {
        return Err(Error::DimensionMismatch {
            expected: estimate.dimension(),
            actual: samples.dimension(),
        });
    }
    let chol = estimate.cholesky()?;
    let mut mapped = chol.l() * samples.points();
    for mut col in mapped.column_iter_mut() {
        col += estimate.mean();
    }
    Ok(mapped)
}

/// Moments of a propagated measurement model: predicted measurement mean,
/// innovation covariance (model spread plus noise), and state-measurement
/// cross covariance.
#[derive(Debug, Clone)]
pub struct MeasurementMoments {
    pub predicted: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub cross_covariance: DMatrix<f64>,
}

/// Propagate samples through `f` around `estimate`.
///
/// Returns the exact state deviations `x_i - mean` (columns), the outputs
/// `f(x_i)` (columns), and the weighted output mean.
fn propagate<F>(
    samples: &SampleSet,
    estimate: &GaussianEstimate,
    f: F,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if samples.dimension() != estimate.dimension() {
        return Err(Error::DimensionMismatch {
            expected: estimate.dimension(),
            actual: samples.dimension(),
        });
    }
    let chol = estimate.cholesky()?;
    let deviations = chol.l() * samples.points();

    let count = samples.len();
    let mut outputs: Option<DMatrix<f64>> = None;
    let mut x = DVector::zeros(estimate.dimension());
    for i in 0..count {
        x.copy_from(&deviations.column(i));
        x += estimate.mean();
        let y = f(&x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput { sample: i });
        }
        let store = outputs.get_or_insert_with(|| DMatrix::zeros(y.len(), count));
        if y.len() != store.nrows() {
            return Err(Error::DimensionMismatch {
                expected: store.nrows(),
                actual: y.len(),
            });
        }
        store.set_column(i, &y);
    }
    let outputs = outputs.expect("sample sets are never empty");
    let mean = &outputs * samples.weights();
    Ok((deviations, outputs, mean))
}

/// Gaussian-weighted moments of a measurement model (Kalman update inputs).
///
/// With mapped points `x_i` and outputs `y_i = f(x_i)`:
/// - predicted mean `sum w_i y_i`;
/// - covariance `sum w_i (y_i - mean)(y_i - mean)^T + R`;
/// - cross covariance `sum w_i (x_i - prior_mean)(y_i - mean)^T`.
pub fn statistical_moments<F>(
    samples: &SampleSet,
    estimate: &GaussianEstimate,
    f: F,
    noise: &NoiseSpec,
) -> Result<MeasurementMoments>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let (deviations, outputs, predicted) = propagate(samples, estimate, f)?;
    if noise.dimension() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            actual: noise.dimension(),
        });
    }
    let mut centered = outputs;
    for mut col in centered.column_iter_mut() {
        col -= &predicted;
    }
    let centered_weighted = scale_columns(&centered, samples.weights());
    let covariance = &centered_weighted * centered.transpose() + noise.matrix();
    let deviations_weighted = scale_columns(&deviations, samples.weights());
    let cross_covariance = deviations_weighted * centered.transpose();
    Ok(MeasurementMoments {
        predicted,
        covariance,
        cross_covariance,
    })
}

/// Kalman measurement update.
///
/// Posterior mean `m + K (y - predicted)` and covariance `C - K S K^T`
/// with gain `K = cross S^{-1}` obtained through a symmetric factorization
/// of the innovation covariance (no explicit inverse). The posterior
/// covariance is re-symmetrized and then re-validated; a failed validation
/// is reported as numerical breakdown rather than silently repaired.
pub fn kalman_update(
    prior: &GaussianEstimate,
    moments: &MeasurementMoments,
    measurement: &DVector<f64>,
) -> Result<GaussianEstimate> {
    if measurement.len() != moments.predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: moments.predicted.len(),
            actual: measurement.len(),
        });
    }
    if moments.cross_covariance.nrows() != prior.dimension() {
        return Err(Error::DimensionMismatch {
            expected: prior.dimension(),
            actual: moments.cross_covariance.nrows(),
        });
    }
    let chol = Cholesky::new(moments.covariance.clone()).ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&moments.cross_covariance.transpose()).transpose();

    let innovation = measurement - &moments.predicted;
    let mean = prior.mean() + &gain * innovation;
    let covariance = prior.covariance() - &gain * moments.cross_covariance.transpose();
    let covariance = 0.5 * (&covariance + covariance.transpose());
    GaussianEstimate::new(mean, covariance)
}

/// Closed-form random-walk prediction: mean carried over, covariance grown
/// by the process noise. No sampling involved.
pub fn predict_random_walk(prior: &GaussianEstimate, process: &NoiseSpec) -> Result<GaussianEstimate> {
    if process.dimension() != prior.dimension() {
        return Err(Error::DimensionMismatch {
            expected: prior.dimension(),
            actual: process.dimension(),
        });
    }
    GaussianEstimate::new(
        prior.mean().clone(),
        prior.covariance() + process.matrix(),
    )
}

/// Sample-based prediction through a nonlinear system function.
pub fn predict_sampled<F>(
    prior: &GaussianEstimate,
    system: F,
    process: &NoiseSpec,
    samples: &SampleSet,
) -> Result<GaussianEstimate>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let (_, outputs, mean) = propagate(samples, prior, system)?;
    if process.dimension() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            actual: process.dimension(),
        });
    }
    let mut centered = outputs;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let centered_weighted = scale_columns(&centered, samples.weights());
    let covariance = &centered_weighted * centered.transpose() + process.matrix();
    let covariance = 0.5 * (&covariance + covariance.transpose());
    GaussianEstimate::new(mean, covariance)
}
