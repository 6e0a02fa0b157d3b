//! One-Class SVM with an RBF kernel.
//!
//! The dual problem
//!
//! ```text
//! minimize    ½ Σ_i Σ_j α_i α_j k(x_i, x_j)
//! subject to  0 ≤ α_i ≤ 1 / (ν l),   Σ_i α_i = 1
//! ```
//!
//! is solved by pairwise coordinate descent (SMO). Each step moves weight
//! from the coordinate with the largest gradient that can still decrease to
//! the one with the smallest gradient that can still increase, ties going to
//! the lowest index. The decision function is `f(x) = Σ α_i k(x_i, x) - ρ`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMeta, FeatureVector};

pub const MODEL_FORMAT: &str = "wingbeat-ocsvm";
pub const MODEL_VERSION: u32 = 1;

/// RBF kernel `exp(-γ‖x - y‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub gamma: f64,
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-self.gamma * d2).exp()
    }
}

pub fn kernel(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(cfg.eval(x, y))
}

pub fn gram_matrix(rows: &[&[f64]], cfg: &KernelConfig) -> Vec<Vec<f64>> {
    rows.par_iter()
        .map(|x| rows.iter().map(|y| cfg.eval(x, y)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcsvmParams {
    pub nu: f64,
    /// `None` selects `1 / D`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self {
            nu: 0.01,
            gamma: None,
            tolerance: 1e-6,
            max_iterations: 100_000,
        }
    }
}

/// Result of the dual solve on a precomputed Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `(Qα)_i` at the solution.
    pub gradient: Vec<f64>,
    pub rho: f64,
    /// No coordinate strictly inside the box: ρ is the midpoint of the
    /// bounds implied by the box coordinates.
    pub rho_from_bounds: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Solves the ν-dual on Gram matrix `q` with box bound `1 / (ν l)`.
///
/// When `trace` is given, the objective after every step is appended.
pub fn solve_dual(
    q: &[Vec<f64>],
    nu: f64,
    tolerance: f64,
    max_iterations: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<DualSolution> {
    let l = q.len();
    if l == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    let nu_l = nu * l as f64;
    if nu_l < 1.0 {
        return Err(Error::InfeasibleNu { nu_l });
    }
    let upper = 1.0 / nu_l;

    // feasible start: fill coordinates to the bound in index order
    let mut alpha = vec![0.0; l];
    let mut remaining: f64 = 1.0;
    for a in alpha.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = remaining.min(upper);
        remaining -= *a;
    }

    let mut gradient: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|j| q[i][j] * alpha[j]).sum())
        .collect();
    let objective = |alpha: &[f64], gradient: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(gradient).map(|(a, g)| a * g).sum::<f64>()
    };
    let mut current = objective(&alpha, &gradient);

    let mut iterations = 0;
    loop {
        // i: can still grow, smallest gradient; j: can still shrink, largest gradient
        let mut up: Option<usize> = None;
        let mut down: Option<usize> = None;
        for k in 0..l {
            if alpha[k] < upper && up.is_none_or(|i| gradient[k] < gradient[i]) {
                up = Some(k);
            }
            if alpha[k] > 0.0 && down.is_none_or(|j| gradient[k] > gradient[j]) {
                down = Some(k);
            }
        }
        let (i, j) = match (up, down) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        let violation = gradient[j] - gradient[i];
        if violation <= tolerance {
            break;
        }
        if iterations >= max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                violation,
            });
        }
        iterations += 1;

        let curvature = (q[i][i] + q[j][j] - 2.0 * q[i][j]).max(1e-12);
        let room_i = upper - alpha[i];
        let room_j = alpha[j];
        let step = (violation / curvature).min(room_i).min(room_j);
        if step == room_i {
            alpha[i] = upper;
        } else {
            alpha[i] += step;
        }
        if step == room_j {
            alpha[j] = 0.0;
        } else {
            alpha[j] -= step;
        }
        for (k, g) in gradient.iter_mut().enumerate() {
            *g += step * (q[k][i] - q[k][j]);
        }

        let next = current - step * violation + 0.5 * step * step * curvature;
        debug_assert!(
            next <= current + 1e-12 * current.abs().max(1.0),
            "dual objective increased: {current} -> {next}"
        );
        current = next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(&alpha, &gradient));
        }
    }

    let free: Vec<usize> = (0..l)
        .filter(|&k| alpha[k] > 0.0 && alpha[k] < upper)
        .collect();
    let (rho, rho_from_bounds) = if free.is_empty() {
        // α = 0 ⇒ G ≥ ρ ; α = bound ⇒ G ≤ ρ
        let ub = (0..l)
            .filter(|&k| alpha[k] == 0.0)
            .map(|k| gradient[k])
            .fold(f64::INFINITY, f64::min);
        let lb = (0..l)
            .filter(|&k| alpha[k] >= upper)
            .map(|k| gradient[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let rho = match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => unreachable!("every coordinate is at a bound"),
        };
        (rho, true)
    } else {
        (
            free.iter().map(|&k| gradient[k]).sum::<f64>() / free.len() as f64,
            false,
        )
    };

    Ok(DualSolution {
        objective: objective(&alpha, &gradient),
        alpha,
        gradient,
        rho,
        rho_from_bounds,
        iterations,
    })
}

/// Counts that describe a fit; fractions are relative to the training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub rows: usize,
    pub support_vectors: usize,
    pub margin_support_vectors: usize,
    /// Training points with decision below `-tolerance`.
    pub outliers: usize,
    pub iterations: usize,
    pub objective: f64,
}

impl TrainingStats {
    pub fn outlier_fraction(&self) -> f64 {
        self.outliers as f64 / self.rows as f64
    }

    pub fn support_vector_fraction(&self) -> f64 {
        self.support_vectors as f64 / self.rows as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    support_vectors: FeatureMatrix,
    alpha: Vec<f64>,
    rho: f64,
    nu: f64,
    kernel: KernelConfig,
    tolerance: f64,
    /// `(min, max)` of the decision value over the training set.
    train_score_range: (f64, f64),
    rho_from_bounds: bool,
    degenerate_range: bool,
    stats: TrainingStats,
}

impl OcsvmModel {
    pub fn fit(train: &FeatureMatrix, params: &OcsvmParams) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if train.dim() == 0 {
            return Err(Error::InvalidInput("feature dimension is 0".into()));
        }
        if params.tolerance.is_nan() || params.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        let kernel = KernelConfig::rbf(params.gamma.unwrap_or(1.0 / train.dim() as f64))?;
        let rows = train.canonical_rows();
        let data: Vec<&[f64]> = rows.iter().map(|r| r.values.as_slice()).collect();
        let q = gram_matrix(&data, &kernel);
        let sol = solve_dual(&q, params.nu, params.tolerance, params.max_iterations, None)?;

        let upper = 1.0 / (params.nu * data.len() as f64);
        let mut support_vectors = FeatureMatrix::new(train.meta.clone());
        let mut alpha = Vec::new();
        for (row, &a) in rows.iter().zip(&sol.alpha) {
            if a > 0.0 {
                support_vectors.push((*row).clone())?;
                alpha.push(a);
            }
        }
        let margin_support_vectors = sol.alpha.iter().filter(|&&a| a > 0.0 && a < upper).count();

        let mut model = Self {
            support_vectors,
            alpha,
            rho: sol.rho,
            nu: params.nu,
            kernel,
            tolerance: params.tolerance,
            train_score_range: (0.0, 0.0),
            rho_from_bounds: sol.rho_from_bounds,
            degenerate_range: false,
            stats: TrainingStats {
                rows: data.len(),
                support_vectors: sol.alpha.iter().filter(|&&a| a > 0.0).count(),
                margin_support_vectors,
                outliers: 0,
                iterations: sol.iterations,
                objective: sol.objective,
            },
        };

        let decisions: Vec<f64> = data.iter().map(|x| model.decision_unchecked(x)).collect();
        let lo = decisions.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = decisions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        model.train_score_range = (lo, hi);
        model.degenerate_range = hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater);
        if model.degenerate_range {
            log::warn!(
                "one-class SVM training decisions span no range; anomaly scores fall back to 0.5"
            );
        }
        model.stats.outliers = decisions.iter().filter(|&&d| d < -params.tolerance).count();
        Ok(model)
    }

    pub fn support_vectors(&self) -> &FeatureMatrix {
        &self.support_vectors
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kernel(&self) -> KernelConfig {
        self.kernel
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn train_score_range(&self) -> (f64, f64) {
        self.train_score_range
    }

    pub fn rho_from_bounds(&self) -> bool {
        self.rho_from_bounds
    }

    /// Set when all training decisions coincide; scores are then 0.5.
    pub fn degenerate_range(&self) -> bool {
        self.degenerate_range
    }

    pub fn stats(&self) -> &TrainingStats {
        &self.stats
    }

    pub fn feature_meta(&self) -> &FeatureMeta {
        &self.support_vectors.meta
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .support_vectors
            .rows()
            .iter()
            .zip(&self.alpha)
            .map(|(sv, a)| a * self.kernel.eval(&sv.values, x))
            .sum();
        s - self.rho
    }

    /// Positive inside the learned region, negative outside.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let dim = self.support_vectors.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    /// `-decision` min-max normalized against the training range and clamped
    /// to [0, 1]: the most interior training point maps to 0, anything at or
    /// beyond the least interior one maps to 1.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        let d = self.decision(x)?;
        Ok(self.normalize(d))
    }

    pub fn normalize(&self, decision: f64) -> f64 {
        if self.degenerate_range {
            return 0.5;
        }
        let (lo, hi) = self.train_score_range;
        ((hi - decision) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn score_vector(&self, x: &FeatureVector) -> Result<f64> {
        self.anomaly_score(&x.values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::persist::save_model(path.as_ref(), MODEL_FORMAT, MODEL_VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::persist::load_model(path.as_ref(), MODEL_FORMAT, MODEL_VERSION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn kernel_identities() {
        let cfg = KernelConfig::rbf(1.0).unwrap();
        assert_eq!(kernel(&[0.3, -2.0], &[0.3, -2.0], &cfg).unwrap(), 1.0);
        let d = 2f64.ln().sqrt();
        assert!((kernel(&[0.0], &[d], &cfg).unwrap() - 0.5).abs() < 1e-15);
        assert!(kernel(&[0.0], &[1.0, 2.0], &cfg).is_err());
        assert!(KernelConfig::rbf(0.0).is_err());
        assert!(KernelConfig::rbf(-1.0).is_err());
    }

    #[test]
    fn gram_matrix_is_symmetric_psd() {
        let rows = gaussian(40, 6, 4);
        let data: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let q = gram_matrix(&data, &KernelConfig::rbf(1.0 / 6.0).unwrap());
        let m = nalgebra::DMatrix::from_fn(40, 40, |i, j| q[i][j]);
        assert_eq!(m, m.transpose());
        assert!((0..40).all(|i| q[i][i] == 1.0));
        let min_eig = m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig > -1e-10, "{min_eig}");
    }

    #[test]
    fn single_point_fit() {
        let m = FeatureMatrix::from_values(vec![vec![0.2, 0.4]]).unwrap();
        let model = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.alpha(), &[1.0]);
        assert_eq!(model.rho(), 1.0);
        assert_eq!(model.decision(&[0.2, 0.4]).unwrap(), 0.0);
        // x far away: kernel vanishes
        assert_eq!(model.decision(&[1e6, 1e6]).unwrap(), -1.0);
    }

    #[test]
    fn identical_pair_splits_weight_evenly() {
        let m = FeatureMatrix::from_values(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let model = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.alpha(), &[0.5, 0.5]);
        assert_eq!(model.rho(), 1.0);
        assert_eq!(model.decision(&[1.0, 1.0]).unwrap(), 0.0);

        // grid search over the feasible segment α = (t, 1 - t), 0 ≤ t ≤ 1/(νl)
        let upper = 0.5;
        let best = (0..=1000)
            .map(|k| upper * k as f64 / 1000.0)
            .filter(|t| 1.0 - t <= upper + 1e-12)
            .map(|t| (t, 0.5 * (t + (1.0 - t)).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_nu_rejected() {
        let m = FeatureMatrix::from_values(gaussian(50, 2, 1)).unwrap();
        let err = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 0.01,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleNu { .. }));
        assert!(OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 1.5,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = FeatureMatrix::from_values(gaussian(30, 2, 2)).unwrap();
        let p = OcsvmParams {
            nu: 0.2,
            gamma: Some(0.5),
            max_iterations: 1,
            ..Default::default()
        };
        assert!(matches!(
            OcsvmModel::fit(&m, &p),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn nu_property_on_gaussian_cloud() {
        let m = FeatureMatrix::from_values(gaussian(50, 2, 7)).unwrap();
        let p = OcsvmParams {
            nu: 0.1,
            gamma: Some(0.5),
            ..Default::default()
        };
        let model = OcsvmModel::fit(&m, &p).unwrap();
        let s = model.stats();
        assert!(s.outlier_fraction() <= 0.1 + 1.0 / 50.0, "{s:?}");
        assert!(s.support_vector_fraction() >= 0.1 - 1.0 / 50.0, "{s:?}");
        let sum: f64 = model.alpha().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(model
            .alpha()
            .iter()
            .all(|&a| a > 0.0 && a <= 1.0 / 5.0 + 1e-12));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn nu_brackets_outliers_and_support_vectors(
            l in 5usize..40,
            dim in 1usize..4,
            nu_scale in 0.0f64..1.0,
            gamma in 0.1f64..2.0,
            seed in 0u64..1000,
        ) {
            let nu = 1.0 / l as f64 + nu_scale * (1.0 - 1.0 / l as f64);
            let m = FeatureMatrix::from_values(gaussian(l, dim, seed)).unwrap();
            let model = OcsvmModel::fit(&m, &OcsvmParams { nu, gamma: Some(gamma), ..Default::default() }).unwrap();
            let s = model.stats();
            let slack = 1.0 / l as f64;
            proptest::prop_assert!(s.outlier_fraction() <= nu + slack, "{s:?}");
            proptest::prop_assert!(s.support_vector_fraction() >= nu - slack, "{s:?}");
            let sum: f64 = model.alpha().iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-9);
            let upper = 1.0 / (nu * l as f64);
            proptest::prop_assert!(model.alpha().iter().all(|&a| (0.0..=upper + 1e-12).contains(&a)));
        }
    }

    #[test]
    fn kkt_conditions_hold_after_fit() {
        let rows = gaussian(40, 3, 8);
        let data: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let cfg = KernelConfig::rbf(0.3).unwrap();
        let q = gram_matrix(&data, &cfg);
        let tol = 1e-6;
        let sol = solve_dual(&q, 0.2, tol, 100_000, None).unwrap();
        let upper = 1.0 / (0.2 * 40.0);
        for (k, (&a, &g)) in sol.alpha.iter().zip(&sol.gradient).enumerate() {
            let f = g - sol.rho;
            if a <= 0.0 {
                assert!(f >= -tol, "{k}: α=0 but f={f}");
            } else if a >= upper {
                assert!(f <= tol, "{k}: α=C but f={f}");
            } else {
                assert!(f.abs() <= tol, "{k}: free but f={f}");
            }
        }
    }

    #[test]
    fn margin_support_vectors_sit_on_the_boundary() {
        let m = FeatureMatrix::from_values(gaussian(60, 2, 9)).unwrap();
        let p = OcsvmParams {
            nu: 0.15,
            gamma: Some(1.0),
            ..Default::default()
        };
        let model = OcsvmModel::fit(&m, &p).unwrap();
        let upper = 1.0 / (0.15 * 60.0);
        let mut checked = 0;
        for (sv, &a) in model.support_vectors().rows().iter().zip(model.alpha()) {
            if a < upper {
                assert!(model.decision(&sv.values).unwrap().abs() <= 10.0 * p.tolerance);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn objective_never_increases() {
        let rows = gaussian(30, 2, 10);
        let data: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let q = gram_matrix(&data, &KernelConfig::rbf(0.8).unwrap());
        let mut trace = Vec::new();
        solve_dual(&q, 0.1, 1e-9, 100_000, Some(&mut trace)).unwrap();
        assert!(trace.len() > 5);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn score_normalization_endpoints_and_monotonicity() {
        let rows = gaussian(50, 2, 11);
        let m = FeatureMatrix::from_values(rows.clone()).unwrap();
        let model = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 0.1,
                gamma: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap();
        let (lo, hi) = model.train_score_range();
        assert_eq!(model.normalize(hi), 0.0);
        assert_eq!(model.normalize(lo), 1.0);
        assert_eq!(model.normalize(lo - 5.0), 1.0);
        let best = rows
            .iter()
            .max_by(|a, b| {
                model
                    .decision(a)
                    .unwrap()
                    .total_cmp(&model.decision(b).unwrap())
            })
            .unwrap();
        assert_eq!(model.anomaly_score(best).unwrap(), 0.0);
        for k in 0..50 {
            let s = model.anomaly_score(&[0.2 * k as f64, 0.0]).unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
        let mut ds: Vec<f64> = (0..200)
            .map(|k| lo - 1.0 + (hi - lo + 2.0) * k as f64 / 199.0)
            .collect();
        ds.sort_by(f64::total_cmp);
        for w in ds.windows(2) {
            assert!(model.normalize(w[1]) <= model.normalize(w[0]));
        }
    }

    #[test]
    fn degenerate_range_scores_half() {
        let m = FeatureMatrix::from_values(vec![vec![0.0, 0.0]; 4]).unwrap();
        let model = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(model.degenerate_range());
        assert_eq!(model.anomaly_score(&[3.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn persistence_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svm.json");
        let m = FeatureMatrix::from_values(gaussian(40, 5, 12)).unwrap();
        let model = OcsvmModel::fit(
            &m,
            &OcsvmParams {
                nu: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        model.save(&path).unwrap();
        let back = OcsvmModel::load(&path).unwrap();
        assert_eq!(model, back);
        for q in gaussian(10, 5, 13) {
            assert_eq!(
                model.anomaly_score(&q).unwrap().to_bits(),
                back.anomaly_score(&q).unwrap().to_bits()
            );
        }
    }
}
