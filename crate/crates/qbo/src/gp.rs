//! Weighted Gaussian-process posterior in feature space.
//!
//! The state keeps the precision `V = ΦᵀWΦ + λI` together with an
//! explicitly maintained inverse updated rank-one per observation, so
//! prediction and update cost O(R²) regardless of how many observations
//! have been absorbed. A dense kernel-space solve of the same weighted
//! posterior is provided as a cross-check oracle.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{QboError, Result};

/// Full inverse re-solve cadence; guards against rank-one update drift.
const REFRESH_INTERVAL: usize = 256;
const DRIFT_TOLERANCE: f64 = 1e-8;

/// Feature-space sufficient statistics of the weighted posterior.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    precision: DMatrix<f64>,
    precision_inv: DMatrix<f64>,
    weighted_response: DVector<f64>,
    /// Cached V⁻¹·(ΦᵀWy); refreshed on every update.
    mean_weights: DVector<f64>,
    /// log det(V) - log det(λI), tracked incrementally for the optional
    /// theory beta schedule.
    log_det_gain: f64,
    lambda: f64,
    n_updates: usize,
    updates_since_refresh: usize,
    last_refresh_drift: f64,
}

impl PosteriorState {
    /// Prior state: `V = λI`, zero response.
    pub fn new(n_features: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(QboError::Config(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self {
            precision: DMatrix::identity(n_features, n_features) * lambda,
            precision_inv: DMatrix::identity(n_features, n_features) / lambda,
            weighted_response: DVector::zeros(n_features),
            mean_weights: DVector::zeros(n_features),
            log_det_gain: 0.0,
            lambda,
            n_updates: 0,
            updates_since_refresh: 0,
            last_refresh_drift: 0.0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_updates(&self) -> usize {
        self.n_updates
    }

    pub fn n_features(&self) -> usize {
        self.precision.nrows()
    }

    /// log det(V/λ); a proxy for accumulated information.
    pub fn log_det_gain(&self) -> f64 {
        self.log_det_gain
    }

    pub fn last_refresh_drift(&self) -> f64 {
        self.last_refresh_drift
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Absorbs one weighted observation: `V += φφᵀ/σ²`,
    /// `b += yφ/σ²`.
    pub fn update(&mut self, phi: &DVector<f64>, value: f64, obs_sigma: f64) -> Result<()> {
        if !(obs_sigma > 0.0) {
            return Err(QboError::Domain(format!(
                "obs_sigma must be > 0, got {obs_sigma}"
            )));
        }
        if phi.len() != self.n_features() {
            return Err(QboError::Domain(format!(
                "feature vector has length {}, state expects {}",
                phi.len(),
                self.n_features()
            )));
        }
        let w = 1.0 / (obs_sigma * obs_sigma);
        self.precision.ger(w, phi, phi, 1.0);
        self.weighted_response.axpy(w * value, phi, 1.0);

        // Sherman-Morrison on the inverse; determinant lemma on log det.
        let vinv_phi = &self.precision_inv * phi;
        let denom = 1.0 + w * phi.dot(&vinv_phi);
        self.log_det_gain += denom.ln();
        self.precision_inv.ger(-w / denom, &vinv_phi, &vinv_phi, 1.0);

        self.n_updates += 1;
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        self.mean_weights = symmetric_gemv(&self.precision_inv, &self.weighted_response);
        Ok(())
    }

    /// Re-solves the inverse from the precision matrix and records the
    /// drift of the rank-one-maintained inverse against it.
    fn refresh(&mut self) -> Result<()> {
        let chol = Cholesky::new(self.precision.clone()).ok_or_else(|| {
            QboError::Numerical("precision matrix lost positive definiteness".into())
        })?;
        let exact = chol.inverse();
        let drift = (&exact - &self.precision_inv).abs().max();
        self.last_refresh_drift = drift;
        debug_assert!(drift <= DRIFT_TOLERANCE, "inverse drift {drift} too large");
        self.precision_inv = exact;
        self.updates_since_refresh = 0;
        Ok(())
    }

    /// Weighted posterior at a feature vector: `mean = φᵀV⁻¹(ΦᵀWy)`,
    /// `std = sqrt(λ·φᵀV⁻¹φ)`. With zero updates this is the prior:
    /// mean 0 and std ‖φ‖.
    pub fn predict(&self, phi: &DVector<f64>) -> Result<(f64, f64)> {
        if phi.len() != self.n_features() {
            return Err(QboError::Domain(format!(
                "feature vector has length {}, state expects {}",
                phi.len(),
                self.n_features()
            )));
        }
        let mean = phi.dot(&self.mean_weights);
        let quad = phi.dot(&symmetric_gemv(&self.precision_inv, phi));
        if !quad.is_finite() || quad < 0.0 {
            return Err(QboError::Numerical(format!(
                "posterior variance quadratic form {quad} invalid; n_updates = {}",
                self.n_updates
            )));
        }
        Ok((mean, (self.lambda * quad).sqrt()))
    }

    /// `mean + beta·std`.
    pub fn ucb_score(&self, phi: &DVector<f64>, beta: f64) -> Result<f64> {
        let (mean, std) = self.predict(phi)?;
        Ok(mean + beta * std)
    }
}

/// `M·x` for a symmetric matrix stored fully.
fn symmetric_gemv(m: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    m * x
}

/// Dense kernel-space weighted posterior, used as the test oracle for the
/// feature-space implementation.
///
/// With `K̃ = W^{1/2} K W^{1/2}` and `k̃(x*) = W^{1/2} k(X, x*)`:
/// `mean = k̃ᵀ (K̃ + λI)⁻¹ W^{1/2}y`,
/// `var = K(x*,x*) - k̃ᵀ (K̃ + λI)⁻¹ k̃`.
pub fn kernel_posterior_exact<K>(
    inputs: &[DVector<f64>],
    values: &[f64],
    sigmas: &[f64],
    lambda: f64,
    kernel: K,
    query: &DVector<f64>,
) -> Result<(f64, f64)>
where
    K: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    let t = inputs.len();
    if values.len() != t || sigmas.len() != t {
        return Err(QboError::Domain(
            "inputs, values, and sigmas must have equal lengths".into(),
        ));
    }
    let prior_var = kernel(query, query);
    if t == 0 {
        return Ok((0.0, prior_var.sqrt()));
    }
    let w_sqrt: Vec<f64> = sigmas.iter().map(|s| 1.0 / s).collect();
    let mut gram = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..t {
            gram[(i, j)] = w_sqrt[i] * kernel(&inputs[i], &inputs[j]) * w_sqrt[j];
        }
        gram[(i, i)] += lambda;
    }
    let k_star = DVector::from_fn(t, |i, _| w_sqrt[i] * kernel(&inputs[i], query));
    let y_tilde = DVector::from_fn(t, |i, _| w_sqrt[i] * values[i]);
    let chol = Cholesky::new(gram.clone()).ok_or_else(|| {
        let cond = condition_estimate(&gram);
        QboError::Numerical(format!(
            "weighted Gram system not positive definite (condition estimate {cond:.3e})"
        ))
    })?;
    let alpha = chol.solve(&y_tilde);
    let v = chol.solve(&k_star);
    let mean = k_star.dot(&alpha);
    let var = prior_var - k_star.dot(&v);
    if var < -1e-10 {
        return Err(QboError::Numerical(format!(
            "kernel posterior variance {var} negative beyond tolerance"
        )));
    }
    Ok((mean, var.max(0.0).sqrt()))
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min.abs() < f64::MIN_POSITIVE {
        f64::INFINITY
    } else {
        (max / min).abs()
    }
}
