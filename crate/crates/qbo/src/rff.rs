//! RBF kernel and its random Fourier feature approximation.
//!
//! The feature map uses the single-cosine-with-random-phase construction:
//! `φ_i(x) = sqrt(2/R)·cos(ω_i·x + b_i)` with `ω_i ~ N(0, I/l²)` and
//! `b_i ~ U[0, 2π)`, so `φ(x)·φ(y)` is an unbiased estimator of the RBF
//! kernel. Maps are frozen after construction and shared for a whole run;
//! inputs are expected in normalized [-1, 1]^d coordinates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QboError, Result};

/// RBF kernel hyperparameters: `K(x, y) = exp(-‖x-y‖² / (2l²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn new(lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0) {
            return Err(QboError::Config(format!(
                "lengthscale must be > 0, got {lengthscale}"
            )));
        }
        Ok(Self { lengthscale })
    }
}

/// `exp(-‖x-y‖²/(2l²))`, always in (0, 1].
pub fn rbf(x: &DVector<f64>, y: &DVector<f64>, spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(QboError::Domain(format!(
            "kernel input dimensions differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let d2 = (x - y).norm_squared();
    Ok((-d2 / (2.0 * spec.lengthscale * spec.lengthscale)).exp())
}

/// Frozen random Fourier feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// R x d frequency matrix ω.
    pub frequencies: DMatrix<f64>,
    /// Length-R phases in [0, 2π).
    pub phases: DVector<f64>,
    pub lengthscale: f64,
    pub seed: u64,
}

impl FeatureMap {
    /// Samples a map with `n_features` rows in `input_dim` dimensions,
    /// deterministic in `seed`.
    pub fn sample(input_dim: usize, n_features: usize, spec: &KernelSpec, seed: u64) -> Result<Self> {
        if input_dim < 1 || n_features < 1 {
            return Err(QboError::Config(format!(
                "feature map needs d >= 1 and R >= 1, got d = {input_dim}, R = {n_features}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let inv_l = 1.0 / spec.lengthscale;
        let frequencies = DMatrix::from_fn(n_features, input_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * inv_l
        });
        let phases = DVector::from_fn(n_features, |_, _| rng.gen_range(0.0..std::f64::consts::TAU));
        Ok(Self {
            frequencies,
            phases,
            lengthscale: spec.lengthscale,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    /// `φ(x)`: component i is `sqrt(2/R)·cos(ω_i·x + b_i)`, so ‖φ(x)‖² ≤ 2.
    pub fn features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(QboError::Domain(format!(
                "feature input has dimension {}, map expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let scale = (2.0 / self.n_features() as f64).sqrt();
        let mut out = &self.frequencies * x + &self.phases;
        for v in out.iter_mut() {
            *v = scale * v.cos();
        }
        Ok(out)
    }
}
