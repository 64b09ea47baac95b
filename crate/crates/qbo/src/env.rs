//! Simulated fuselage shape-control environment.
//!
//! Actuator forces map to per-node shape deviations through a linear
//! sensitivity matrix. The objective is the scaled loss
//! `L = -mae(final) / mae(initial)`, which equals -1 at zero force and 0
//! at a perfect correction. Measurement noise is Gaussian per node and is
//! added only at observation time; the linear map itself is noise-free.
//!
//! Nodes carry a single signed radial deviation (inches) rather than an
//! (x, y, z) triple; the loss only consumes deviation magnitudes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QboError, Result};

pub const DEFAULT_FORCE_MIN: f64 = -500.0;
pub const DEFAULT_FORCE_MAX: f64 = 500.0;

/// Measurement nodes on the cross-section circle.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    /// Angular position of each node in radians, strictly increasing in [0, 2π).
    pub angles: Vec<f64>,
}

impl MeasurementGrid {
    /// Equispaced nodes on the circle.
    pub fn equispaced(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(QboError::Config(format!(
                "n_points must be >= 2, got {n_points}"
            )));
        }
        let step = std::f64::consts::TAU / n_points as f64;
        Ok(Self {
            angles: (0..n_points).map(|i| i as f64 * step).collect(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.angles.len()
    }
}

/// Linear map from actuator forces (lb) to node displacements (in).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    /// n_points x m_actuators, inches per pound.
    pub entries: DMatrix<f64>,
}

impl SensitivityMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(QboError::Config("sensitivity entries must be finite".into()));
        }
        for j in 0..entries.ncols() {
            if entries.column(j).iter().all(|v| *v == 0.0) {
                return Err(QboError::Config(format!(
                    "sensitivity column {j} is all zero: actuator moves no node"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn n_points(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m_actuators(&self) -> usize {
        self.entries.ncols()
    }
}

/// Signed actuator forces in pounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceVector {
    pub forces: DVector<f64>,
}

impl ForceVector {
    pub fn new(forces: DVector<f64>) -> Self {
        Self { forces }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            forces: DVector::zeros(m),
        }
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.len() == 0
    }

    fn check_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        for (i, f) in self.forces.iter().enumerate() {
            if !(*f >= lo && *f <= hi) {
                return Err(QboError::Domain(format!(
                    "force[{i}] = {f} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Signed radial deviation from target at each node, inches.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationField {
    pub values: DVector<f64>,
}

/// Per-node Gaussian measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation in inches; zero means noiseless observation.
    pub sigma: f64,
    pub seed: u64,
}

/// Seeded Gaussian noise stream. One stream must not be shared across
/// concurrent callers; clone-free handoff is the caller's job.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform draw on [lo, hi); part of the seeded stream contract.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub grid: MeasurementGrid,
    pub sensitivity: SensitivityMatrix,
    pub initial_deviation: DeviationField,
    pub noise: NoiseModel,
    pub force_min: f64,
    pub force_max: f64,
}

/// Mean absolute value of a deviation field.
pub fn mae(d: &DeviationField) -> f64 {
    let n = d.values.len();
    d.values.iter().map(|v| v.abs()).sum::<f64>() / n as f64
}

impl Environment {
    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn m_actuators(&self) -> usize {
        self.sensitivity.m_actuators()
    }

    /// MAE of the initial shape, `e_MAE^0`. Strictly positive by construction.
    pub fn initial_mae(&self) -> f64 {
        mae(&self.initial_deviation)
    }

    /// Noise-free final deviation `Δ_f = Δ_0 - U·F`.
    pub fn final_deviation(&self, force: &ForceVector) -> Result<DeviationField> {
        force.check_bounds(self.force_min, self.force_max)?;
        if force.len() != self.m_actuators() {
            return Err(QboError::Domain(format!(
                "force has {} entries, environment has {} actuators",
                force.len(),
                self.m_actuators()
            )));
        }
        Ok(DeviationField {
            values: &self.initial_deviation.values - &self.sensitivity.entries * &force.forces,
        })
    }

    /// Noise-free scaled loss `-mae(Δ_f) / mae(Δ_0)`; equals -1 at F = 0.
    pub fn true_loss(&self, force: &ForceVector) -> Result<f64> {
        let fin = self.final_deviation(force)?;
        Ok(-mae(&fin) / self.initial_mae())
    }

    /// One noisy sample of the scaled loss. Each node of the final
    /// deviation is perturbed by i.i.d. N(0, σ²) drawn from `stream`, then
    /// the scaled loss is computed. With σ = 0 this equals `true_loss`
    /// bit-for-bit and consumes nothing from the stream.
    pub fn observe(&self, force: &ForceVector, stream: &mut NoiseStream) -> Result<f64> {
        let mut fin = self.final_deviation(force)?;
        if self.noise.sigma > 0.0 {
            for v in fin.values.iter_mut() {
                *v += self.noise.sigma * stream.standard_normal();
            }
        }
        Ok(-mae(&fin) / self.initial_mae())
    }

    /// All `levels²` force vectors with two active actuators on a uniform
    /// grid over the force range (endpoints included) and every other
    /// actuator fixed at zero. Ordering is lexicographic in (level_a, level_b).
    pub fn discrete_grid(
        &self,
        active: (usize, usize),
        levels: usize,
    ) -> Result<Vec<ForceVector>> {
        let (a, b) = active;
        let m = self.m_actuators();
        if a == b || a >= m || b >= m {
            return Err(QboError::Domain(format!(
                "active actuator indices ({a}, {b}) invalid for {m} actuators"
            )));
        }
        if levels < 2 {
            return Err(QboError::Domain(format!("levels must be >= 2, got {levels}")));
        }
        let step = (self.force_max - self.force_min) / (levels - 1) as f64;
        let value = |k: usize| self.force_min + k as f64 * step;
        let mut out = Vec::with_capacity(levels * levels);
        for ka in 0..levels {
            for kb in 0..levels {
                let mut f = DVector::zeros(m);
                f[a] = value(ka);
                f[b] = value(kb);
                out.push(ForceVector::new(f));
            }
        }
        Ok(out)
    }
}

/// Builds a seeded synthetic environment.
///
/// The sensitivity entry (i, j) is `A_j · exp(-dθ²/(2w²))` where dθ is the
/// circular angular distance between node i and actuator j, actuators sit
/// equispaced in angle, and the per-actuator amplitude A_j is drawn so a
/// max-magnitude single-actuator force yields a peak displacement in
/// [0.1, 0.5] in. The initial deviation is a low-order Fourier series in
/// angle rescaled to a seeded target MAE in [0.25, 0.35] in.
pub fn make_env(
    n_points: usize,
    m_actuators: usize,
    condition_seed: u64,
    sigma: f64,
) -> Result<Environment> {
    if n_points < 2 {
        return Err(QboError::Config(format!(
            "n_points must be >= 2, got {n_points}"
        )));
    }
    if m_actuators < 1 {
        return Err(QboError::Config("m_actuators must be >= 1".into()));
    }
    if sigma < 0.0 {
        return Err(QboError::Config(format!("sigma must be >= 0, got {sigma}")));
    }

    let grid = MeasurementGrid::equispaced(n_points)?;
    let mut rng = ChaCha12Rng::seed_from_u64(condition_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));

    // Actuator influence kernel width in radians.
    let width: f64 = 0.5;
    let actuator_step = std::f64::consts::TAU / m_actuators as f64;
    let mut entries = DMatrix::zeros(n_points, m_actuators);
    for j in 0..m_actuators {
        // Peak displacement at F = 500 lb lands in [0.2, 0.45] in.
        let amp = rng.gen_range(0.0004..0.0009);
        let theta_j = j as f64 * actuator_step;
        for (i, theta_i) in grid.angles.iter().enumerate() {
            let mut d = (theta_i - theta_j).abs() % std::f64::consts::TAU;
            if d > std::f64::consts::PI {
                d = std::f64::consts::TAU - d;
            }
            entries[(i, j)] = amp * (-d * d / (2.0 * width * width)).exp();
        }
    }
    let sensitivity = SensitivityMatrix::new(entries)?;

    // Low-order Fourier shape, rescaled to the target initial MAE.
    let n_harmonics = 4;
    let coeffs: Vec<(f64, f64)> = (0..n_harmonics)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (a, b)
        })
        .collect();
    let mut values = DVector::zeros(n_points);
    for (i, theta) in grid.angles.iter().enumerate() {
        let mut v = 0.0;
        for (k, (a, b)) in coeffs.iter().enumerate() {
            let kk = (k + 1) as f64;
            v += a * (kk * theta).cos() + b * (kk * theta).sin();
        }
        values[i] = v;
    }
    let target_mae = rng.gen_range(0.25..0.35);
    let raw = DeviationField { values };
    let raw_mae = mae(&raw);
    if raw_mae <= 0.0 {
        return Err(QboError::Numerical(
            "degenerate initial shape: zero MAE before rescaling".into(),
        ));
    }
    let initial_deviation = DeviationField {
        values: raw.values * (target_mae / raw_mae),
    };

    Ok(Environment {
        grid,
        sensitivity,
        initial_deviation,
        noise: NoiseModel {
            sigma,
            seed: condition_seed,
        },
        force_min: DEFAULT_FORCE_MIN,
        force_max: DEFAULT_FORCE_MAX,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn make_env_initial_mae_in_range() {
        let env = make_env(177, 8, 1, 0.1).unwrap();
        let e0 = env.initial_mae();
        assert!((0.2..=0.4).contains(&e0), "e_MAE^0 = {e0}");
    }

    #[test]
    fn make_env_minimal_noiseless() {
        let env = make_env(2, 1, 0, 0.0).unwrap();
        assert_eq!(env.n_points(), 2);
        assert_eq!(env.m_actuators(), 1);
        assert_eq!(env.noise.sigma, 0.0);
    }

    #[test]
    fn make_env_deterministic() {
        let a = make_env(177, 8, 1, 0.1).unwrap();
        let b = make_env(177, 8, 1, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn make_env_rejects_bad_dims() {
        assert!(make_env(1, 8, 0, 0.1).is_err());
        assert!(make_env(177, 0, 0, 0.1).is_err());
        assert!(make_env(177, 8, 0, -0.1).is_err());
    }

    #[test]
    fn single_actuator_peak_displacement_in_range() {
        let env = make_env(177, 8, 3, 0.0).unwrap();
        for j in 0..8 {
            let peak = env
                .sensitivity
                .entries
                .column(j)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                * 500.0;
            assert!((0.1..=0.5).contains(&peak), "actuator {j} peak = {peak}");
        }
    }

    #[test]
    fn zero_force_final_equals_initial() {
        let env = make_env(177, 8, 2, 0.1).unwrap();
        let fin = env.final_deviation(&ForceVector::zeros(8)).unwrap();
        assert_eq!(fin.values, env.initial_deviation.values);
    }

    #[test]
    fn exact_cancellation_1d() {
        // 1 point, 1 actuator, Δ_0 = 0.3, U = 0.001, F = 300 → Δ_f = 0.
        let env = Environment {
            grid: MeasurementGrid { angles: vec![0.0, 1.0] },
            sensitivity: SensitivityMatrix::new(DMatrix::from_row_slice(2, 1, &[0.001, 0.001]))
                .unwrap(),
            initial_deviation: DeviationField {
                values: DVector::from_vec(vec![0.3, 0.3]),
            },
            noise: NoiseModel { sigma: 0.0, seed: 0 },
            force_min: -500.0,
            force_max: 500.0,
        };
        let f = ForceVector::new(DVector::from_vec(vec![300.0]));
        let fin = env.final_deviation(&f).unwrap();
        assert_abs_diff_eq!(fin.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fin.values[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(env.true_loss(&f).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn final_deviation_matches_naive_product() {
        let env = make_env(31, 5, 7, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let f = ForceVector::new(DVector::from_fn(5, |_, _| rng.gen_range(-500.0..500.0)));
        let fin = env.final_deviation(&f).unwrap();
        // Independent dense loop oracle.
        for i in 0..31 {
            let mut acc = env.initial_deviation.values[i];
            for j in 0..5 {
                acc -= env.sensitivity.entries[(i, j)] * f.forces[j];
            }
            assert_abs_diff_eq!(fin.values[i], acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_force_is_error() {
        let env = make_env(10, 2, 0, 0.0).unwrap();
        let f = ForceVector::new(DVector::from_vec(vec![501.0, 0.0]));
        assert!(env.final_deviation(&f).is_err());
        assert!(env.true_loss(&f).is_err());
    }

    #[test]
    fn mae_hand_cases() {
        assert_eq!(mae(&DeviationField { values: DVector::zeros(5) }), 0.0);
        let d = DeviationField {
            values: DVector::from_vec(vec![0.3, -0.3]),
        };
        assert_abs_diff_eq!(mae(&d), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn mae_matches_naive_loop() {
        let env = make_env(177, 8, 4, 0.0).unwrap();
        let d = &env.initial_deviation;
        let mut acc = 0.0;
        for v in d.values.iter() {
            acc += v.abs();
        }
        assert_abs_diff_eq!(mae(d), acc / 177.0, epsilon = 1e-15);
    }

    #[test]
    fn true_loss_at_zero_force_is_minus_one() {
        for seed in 0..5 {
            let env = make_env(53, 4, seed, 0.2).unwrap();
            assert_abs_diff_eq!(
                env.true_loss(&ForceVector::zeros(4)).unwrap(),
                -1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn true_loss_composes_oracles() {
        let env = make_env(60, 6, 11, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let f = ForceVector::new(DVector::from_fn(6, |_, _| rng.gen_range(-400.0..400.0)));
        let expected = -mae(&env.final_deviation(&f).unwrap()) / mae(&env.initial_deviation);
        assert_abs_diff_eq!(env.true_loss(&f).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn observe_noiseless_equals_true_loss_bitwise() {
        let env = make_env(40, 3, 6, 0.0).unwrap();
        let mut stream = NoiseStream::new(1);
        let f = ForceVector::new(DVector::from_vec(vec![100.0, -50.0, 0.0]));
        assert_eq!(
            env.observe(&f, &mut stream).unwrap().to_bits(),
            env.true_loss(&f).unwrap().to_bits()
        );
    }

    #[test]
    fn observe_reproducible_under_seed() {
        let env = make_env(40, 3, 6, 0.15).unwrap();
        let f = ForceVector::zeros(3);
        let run = |seed| {
            let mut s = NoiseStream::new(seed);
            (0..5)
                .map(|_| env.observe(&f, &mut s).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn observe_mean_matches_folded_gaussian() {
        // At F = 0 each observed node is N(v_i, σ²); the analytic mean of
        // the observed loss is -(1/N)Σ E|v_i + ξ| / e0 with the folded
        // normal mean E|X| = σ√(2/π)·exp(-v²/2σ²) + v·(1 - 2Φ(-v/σ)).
        use statrs::distribution::{ContinuousCDF, Normal};
        let env = make_env(177, 8, 1, 0.1).unwrap();
        let sigma = 0.1;
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let e0 = env.initial_mae();
        let analytic_mae = env
            .initial_deviation
            .values
            .iter()
            .map(|v| {
                sigma * (2.0 / std::f64::consts::PI).sqrt()
                    * (-v * v / (2.0 * sigma * sigma)).exp()
                    + v * (1.0 - 2.0 * std_normal.cdf(-v / sigma))
            })
            .sum::<f64>()
            / 177.0;
        let analytic_mean = -analytic_mae / e0;

        let mut stream = NoiseStream::new(123);
        let f = ForceVector::zeros(8);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| env.observe(&f, &mut stream).unwrap())
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var =
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - analytic_mean).abs() <= 3.0 * se,
            "mean {mean} vs analytic {analytic_mean}, 3se = {}",
            3.0 * se
        );
    }

    #[test]
    fn discrete_grid_counts_and_corners() {
        let env = make_env(20, 8, 0, 0.0).unwrap();
        let g21 = env.discrete_grid((0, 1), 21).unwrap();
        assert_eq!(g21.len(), 441);
        let g2 = env.discrete_grid((2, 5), 2).unwrap();
        assert_eq!(g2.len(), 4);
        for fv in &g2 {
            assert!(fv.forces[2].abs() == 500.0 && fv.forces[5].abs() == 500.0);
            for j in 0..8 {
                if j != 2 && j != 5 {
                    assert_eq!(fv.forces[j], 0.0);
                }
            }
        }
        assert!(env.discrete_grid((3, 3), 21).is_err());
        assert!(env.discrete_grid((0, 9), 21).is_err());
        assert!(env.discrete_grid((0, 1), 1).is_err());
    }

    #[test]
    fn discrete_grid_min_mae_exists_and_is_unique_minimum() {
        let env = make_env(177, 8, 1, 0.0).unwrap();
        let grid = env.discrete_grid((0, 1), 21).unwrap();
        let best = grid
            .iter()
            .map(|f| mae(&env.final_deviation(f).unwrap()))
            .fold(f64::INFINITY, f64::min);
        assert!(best.is_finite() && best > 0.0 && best < env.initial_mae());
    }

    proptest! {
        #[test]
        fn linearity_of_displacement(seed in 0u64..50, a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let env = make_env(25, 4, seed, 0.0).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xABCD);
            let f1 = DVector::from_fn(4, |_, _| rng.gen_range(-400.0..400.0));
            let f2 = DVector::from_fn(4, |_, _| rng.gen_range(-400.0..400.0));
            let combo = ForceVector::new(&f1 * a + &f2 * b);
            prop_assume!(combo.forces.iter().all(|f| f.abs() <= 500.0));
            let lhs = &env.final_deviation(&combo).unwrap().values - &env.initial_deviation.values;
            let ua = &env.sensitivity.entries * &f1;
            let ub = &env.sensitivity.entries * &f2;
            let rhs = -(ua * a + ub * b);
            for i in 0..25 {
                prop_assert!((lhs[i] - rhs[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn mae_sign_and_permutation_invariant(vals in proptest::collection::vec(-1.0f64..1.0, 2..40)) {
            let base = mae(&DeviationField { values: DVector::from_vec(vals.clone()) });
            let flipped: Vec<f64> = vals.iter().map(|v| -v).collect();
            let mut reversed = vals.clone();
            reversed.reverse();
            let m_flip = mae(&DeviationField { values: DVector::from_vec(flipped) });
            let m_rev = mae(&DeviationField { values: DVector::from_vec(reversed) });
            prop_assert!((base - m_flip).abs() < 1e-12);
            prop_assert!((base - m_rev).abs() < 1e-12);
        }
    }
}
