//! Sandwich covariance of the minimum-contrast estimator and selection of
//! the contrast control parameters by generalized variance.
//!
//! The asymptotic covariance is `Sigma = B^{-1} S B^{-1}` where `B` comes
//! from model-curve gradients (analytic, Riemann-summed on the contrast
//! grid) and `S` is the sample covariance of the score-like statistic `V`
//! over Monte-Carlo replicates simulated from the fitted model. Standard
//! errors scale as `sqrt(diag Sigma / |D|)`.
//!
//! Control-parameter selection sweeps a `(c, R)` grid, reusing one shared
//! set of simulated replicates for every cell, and picks the cell with the
//! smallest `det Sigma`.

use num_traits::Float;
use rayon::prelude::*;

use crate::contrast::{ContrastConfig, Family, PowerMatrix};
use crate::curves::{KCurveMatrix, ModelCurves};
use crate::error::{Error, Result};
use crate::fit::{fit_to_curves, initial_theta, FitOptions};
use crate::geometry::PointPattern;
use crate::kfunc::{k_matrix, q_hat};
use crate::lgcp::{tabulate_model_curves, LgcpParams, NUM_PARAMS};
use crate::matrix::{sample_covariance, SquareMatrix};
use crate::scalar::Real;
use crate::sim::{LgcpSampler, SimSettings};

/// Condition-number ceiling beyond which `B` is treated as singular.
const COND_LIMIT: f64 = 1e12;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959963984540054;

/// `B(theta) = sum_ij c_ij^2 int_0^R K_ij^{2 c_ij - 2} (grad K_ij)(grad K_ij)^T dh`
/// discretized as a right-endpoint Riemann sum on the curve grid (unit
/// weight). The same expression serves the Q family when `curves` carries
/// intensity-scaled values.
pub fn b_matrix<T: Real>(
    curves: &ModelCurves<T>,
    power: &PowerMatrix<T>,
) -> Result<SquareMatrix<T>> {
    let m = curves.num_types();
    if power.dim() != m {
        return Err(Error::Validation(format!(
            "power matrix dimension {} does not match curve types {m}",
            power.dim()
        )));
    }
    let p = curves.num_params();
    let grid = curves.grid();
    let dh = grid.step();
    let two = T::of(2.0);
    let mut b = SquareMatrix::zeros(p);
    for i in 0..m {
        for j in 0..m {
            let c = power.at(i, j);
            let c2 = c * c;
            let expo = two * c - two;
            let values = curves.entry(i, j);
            for k in 1..=grid.n0() {
                let kv = values[k - 1];
                let weight = c2 * kv.powf(expo) * dh;
                if !weight.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite B weight at entry ({i},{j}), node {k}: K = {kv}"
                    )));
                }
                b.add_outer(curves.grad(i, j, k), weight);
            }
        }
    }
    Ok(b)
}

/// Score-like statistic
/// `V = sqrt(|D|) sum_ij c_ij^2 int_0^R (Khat_ij - K_ij) K_ij^{2 c_ij - 2} grad K_ij dh`.
pub fn v_statistic<T: Real>(
    empirical: &KCurveMatrix<T>,
    curves: &ModelCurves<T>,
    power: &PowerMatrix<T>,
    window_area: T,
) -> Result<Vec<T>> {
    let m = curves.num_types();
    if empirical.num_types() != m || power.dim() != m {
        return Err(Error::Validation("dimension mismatch in v_statistic".into()));
    }
    if !curves.grid().matches(empirical.grid()) {
        return Err(Error::GridMismatch {
            n0_a: curves.grid().n0(),
            n0_b: empirical.grid().n0(),
            r_a: curves.grid().r().as_f64(),
            r_b: empirical.grid().r().as_f64(),
        });
    }
    let p = curves.num_params();
    let grid = curves.grid();
    let dh = grid.step();
    let two = T::of(2.0);
    let sqrt_area = window_area.sqrt();
    let mut v = vec![T::zero(); p];
    for i in 0..m {
        for j in 0..m {
            let c = power.at(i, j);
            let c2 = c * c;
            let expo = two * c - two;
            let model_vals = curves.entry(i, j);
            let emp_vals = empirical.entry(i, j);
            for k in 1..=grid.n0() {
                let kv = model_vals[k - 1];
                let diff = emp_vals[k - 1] - kv;
                let weight = c2 * diff * kv.powf(expo) * dh;
                let grad = curves.grad(i, j, k);
                for (acc, &g) in v.iter_mut().zip(grad) {
                    *acc += weight * g;
                }
            }
        }
    }
    for acc in &mut v {
        *acc = *acc * sqrt_area;
    }
    Ok(v)
}

/// `Sigma = B^{-1} S B^{-1}`, rejecting ill-conditioned `B`.
pub fn sigma_hat<T: Real>(
    b: &SquareMatrix<T>,
    s: &SquareMatrix<T>,
) -> Result<SquareMatrix<T>> {
    let cond = b.sym_condition();
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::SingularB { cond });
    }
    let binv = b.inverse()?;
    Ok(binv.mul(s).mul(&binv).symmetrized())
}

/// Empirical curve matrix for the configured family/correction.
fn empirical_curves<T: Real>(
    pattern: &PointPattern<T>,
    config: &ContrastConfig<T>,
) -> Result<KCurveMatrix<T>> {
    let grid = config.grid()?;
    let curves = match config.family {
        Family::OriginalK => k_matrix(pattern, &grid, config.correction)?,
        Family::AdjustedQ => q_hat(pattern, &grid, config.correction, false)?,
    };
    Ok(if config.symmetrize {
        curves.symmetrized()
    } else {
        curves
    })
}

/// Options for [`estimate_covariance`].
#[derive(Debug, Clone)]
pub struct SandwichOptions<T> {
    /// Monte-Carlo replicates (600 is a robust default).
    pub nsim: usize,
    pub seed: u64,
    /// Refit each replicate to produce simulation-based intervals and the
    /// replicate spread of `rho`.
    pub refit: bool,
    /// Also report the delta-method standard error of `rho`.
    pub delta_method_rho: bool,
    pub fit_options: FitOptions<T>,
    /// Abort when more than this fraction of replicates fails.
    pub max_failure_frac: f64,
}

impl<T: Real> Default for SandwichOptions<T> {
    fn default() -> Self {
        Self {
            nsim: 600,
            seed: 0,
            refit: true,
            delta_method_rho: false,
            fit_options: FitOptions::default(),
            max_failure_frac: 0.05,
        }
    }
}

/// Asymptotic covariance report for a fitted model.
#[derive(Debug, Clone)]
pub struct CovarianceReport<T> {
    pub theta_hat: [T; NUM_PARAMS],
    pub b: SquareMatrix<T>,
    pub s: SquareMatrix<T>,
    pub sigma: SquareMatrix<T>,
    /// Standard errors `sqrt(diag Sigma / |D|)`.
    pub se: [T; NUM_PARAMS],
    /// 95% normal intervals `theta_hat +- 1.96 se`.
    pub ci_asym: [(T, T); NUM_PARAMS],
    /// Empirical 2.5%/97.5% quantiles of the replicate refits.
    pub ci_sim: Option<[(T, T); NUM_PARAMS]>,
    pub rho_hat: T,
    /// Sample standard deviation of `rho` over replicate refits.
    pub rho_se: Option<T>,
    pub rho_se_delta: Option<T>,
    pub rho_ci_asym: Option<(T, T)>,
    pub rho_ci_sim: Option<(T, T)>,
    pub det_sigma: T,
    pub log_det_sigma: T,
    pub nsim_requested: usize,
    pub nsim_used: usize,
    pub failures: usize,
    /// Replicate estimates farther than 3 standard errors from `theta_hat`
    /// in any coordinate (reporting only; never removed from S).
    pub outliers: usize,
}

/// Type-7 empirical quantile with linear interpolation.
fn quantile<T: Real>(sorted: &[T], q: f64) -> T {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = T::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sorted<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Gradient of `rho` with respect to theta (for the delta method).
fn rho_gradient<T: Real>(params: &LgcpParams<T>) -> [T; NUM_PARAMS] {
    let rho = params.rho();
    let a = params.sigma1 * params.sigma1 + params.sigma3 * params.sigma3;
    let b = params.sigma2 * params.sigma2 + params.sigma3 * params.sigma3;
    let two = T::of(2.0);
    let mut g = [T::zero(); NUM_PARAMS];
    g[0] = -rho * params.sigma1 / a;
    g[2] = -rho * params.sigma2 / b;
    g[4] = rho * (two / params.sigma3 - params.sigma3 * (T::one() / a + T::one() / b));
    g
}

/// Full sandwich covariance estimation at a fitted parameter vector.
pub fn estimate_covariance<T: Real>(
    fitted: &LgcpParams<T>,
    config: &ContrastConfig<T>,
    sim: &SimSettings<T>,
    options: &SandwichOptions<T>,
) -> Result<CovarianceReport<T>> {
    if options.nsim < 2 {
        return Err(Error::Validation("nsim must be >= 2".into()));
    }
    let grid = config.grid()?;
    let curves = tabulate_model_curves(fitted, &grid, config.family, true);
    let b = b_matrix(&curves, &config.power)?;
    let area = sim.window.area();

    let sampler = LgcpSampler::new(fitted, sim)?;
    let per_replicate: Vec<Result<(Vec<T>, Option<[T; NUM_PARAMS]>)>> = (0..options.nsim)
        .into_par_iter()
        .map(|r| {
            let pattern = sampler.sample(options.seed, r as u64)?;
            let empirical = empirical_curves(&pattern, config)?;
            let v = v_statistic(&empirical, &curves, &config.power, area)?;
            let refit = if options.refit {
                let init = initial_theta(&pattern, fitted.b)?;
                let out = fit_to_curves(&empirical, config, init, &options.fit_options)?;
                Some(out.params.theta())
            } else {
                None
            };
            Ok((v, refit))
        })
        .collect();

    let mut vs = Vec::with_capacity(options.nsim);
    let mut refits = Vec::new();
    let mut failures = 0usize;
    for item in per_replicate {
        match item {
            Ok((v, refit)) => {
                vs.push(v);
                if let Some(t) = refit {
                    refits.push(t);
                }
            }
            Err(_) => failures += 1,
        }
    }
    let limit = options.max_failure_frac;
    if (failures as f64) > limit * options.nsim as f64 || vs.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: options.nsim,
            limit_percent: limit * 100.0,
        });
    }

    let s = sample_covariance(&vs).symmetrized();
    let sigma = sigma_hat(&b, &s)?;

    let theta_hat = fitted.theta();
    let mut se = [T::zero(); NUM_PARAMS];
    let mut ci_asym = [(T::zero(), T::zero()); NUM_PARAMS];
    let z = T::of(Z_95);
    for c in 0..NUM_PARAMS {
        se[c] = (sigma[(c, c)].max(T::zero()) / area).sqrt();
        ci_asym[c] = (theta_hat[c] - z * se[c], theta_hat[c] + z * se[c]);
    }

    let rho_hat = fitted.rho();
    let (mut ci_sim, mut rho_se, mut rho_ci_sim, mut outliers) = (None, None, None, 0);
    if options.refit && !refits.is_empty() {
        let mut per_coord = [(T::zero(), T::zero()); NUM_PARAMS];
        for (c, ci) in per_coord.iter_mut().enumerate() {
            let vals = sorted(refits.iter().map(|t| t[c]).collect());
            *ci = (quantile(&vals, 0.025), quantile(&vals, 0.975));
        }
        ci_sim = Some(per_coord);
        for t in &refits {
            let afar = (0..NUM_PARAMS).any(|c| {
                se[c] > T::zero() && Float::abs(t[c] - theta_hat[c]) > T::of(3.0) * se[c]
            });
            if afar {
                outliers += 1;
            }
        }
        let rhos: Vec<T> = refits
            .iter()
            .map(|t| fitted.with_theta(*t).rho())
            .collect();
        let n = T::from_usize(rhos.len()).unwrap();
        let mean: T = rhos.iter().copied().sum::<T>() / n;
        let var: T = rhos
            .iter()
            .map(|&r| (r - mean) * (r - mean))
            .sum::<T>()
            / (n - T::one());
        rho_se = Some(var.sqrt());
        let rs = sorted(rhos);
        rho_ci_sim = Some((quantile(&rs, 0.025), quantile(&rs, 0.975)));
    }
    let rho_se_delta = options.delta_method_rho.then(|| {
        let g = rho_gradient(fitted);
        let mut quad = T::zero();
        for i in 0..NUM_PARAMS {
            for j in 0..NUM_PARAMS {
                quad += g[i] * sigma[(i, j)] * g[j];
            }
        }
        (quad.max(T::zero()) / area).sqrt()
    });
    let rho_ci_asym = rho_se
        .or(rho_se_delta)
        .map(|s| (rho_hat - z * s, rho_hat + z * s));

    let det_sigma = sigma.det();
    Ok(CovarianceReport {
        theta_hat,
        b,
        s,
        sigma,
        se,
        ci_asym,
        ci_sim,
        rho_hat,
        rho_se,
        rho_se_delta,
        rho_ci_asym,
        rho_ci_sim,
        det_sigma,
        log_det_sigma: det_sigma.ln(),
        nsim_requested: options.nsim,
        nsim_used: vs.len(),
        failures,
        outliers,
    })
}

/// One `(c, R)` cell of a selection sweep.
#[derive(Debug, Clone)]
pub struct SelectionCell<T> {
    pub c: T,
    pub r: T,
    pub det: Option<T>,
    pub log_det: Option<T>,
    pub error: Option<String>,
}

/// Result of a control-parameter sweep.
#[derive(Debug, Clone)]
pub struct SelectionResult<T> {
    /// Cells in row-major order: `c` outer, `R` inner.
    pub cells: Vec<SelectionCell<T>>,
    pub best_c: T,
    pub best_r: T,
    pub best_det: T,
    pub best_log_det: T,
    pub nsim: usize,
    pub seed: u64,
    pub replicate_failures: usize,
    pub elapsed_secs: f64,
}

/// Options for [`select_cr`].
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    pub nsim: usize,
    pub seed: u64,
    pub max_failure_frac: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            nsim: 600,
            seed: 0,
            max_failure_frac: 0.05,
        }
    }
}

/// Sweep the `(c, R)` grids and pick the cell minimizing `det Sigma`.
///
/// All cells share one set of `nsim` simulated replicates; each cell
/// re-derives its empirical curves from those patterns on its own grid, so
/// evaluating a single cell alone gives exactly the value it has inside a
/// full sweep. Ties break toward smaller `c`, then smaller `R`.
pub fn select_cr<T: Real>(
    params: &LgcpParams<T>,
    base: &ContrastConfig<T>,
    c_grid: &[T],
    r_grid: &[T],
    sim: &SimSettings<T>,
    options: &SelectionOptions,
) -> Result<SelectionResult<T>> {
    if c_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::Validation("selection grids must be nonempty".into()));
    }
    let start = std::time::Instant::now();
    let sampler = LgcpSampler::new(params, sim)?;
    let raw: Vec<Result<PointPattern<T>>> = (0..options.nsim)
        .into_par_iter()
        .map(|r| {
            let pattern = sampler.sample(options.seed, r as u64)?;
            let counts = pattern.counts();
            if counts.iter().any(|&n| n == 0) {
                return Err(Error::ZeroIntensity {
                    type_index: counts.iter().position(|&n| n == 0).unwrap(),
                });
            }
            Ok(pattern)
        })
        .collect();
    let mut patterns = Vec::with_capacity(options.nsim);
    let mut replicate_failures = 0usize;
    for p in raw {
        match p {
            Ok(p) => patterns.push(p),
            Err(_) => replicate_failures += 1,
        }
    }
    if (replicate_failures as f64) > options.max_failure_frac * options.nsim as f64
        || patterns.len() < 2
    {
        return Err(Error::TooManyFailures {
            failed: replicate_failures,
            total: options.nsim,
            limit_percent: options.max_failure_frac * 100.0,
        });
    }

    let area = sim.window.area();
    // cell results keyed by (c index, r index)
    let mut by_cell: Vec<SelectionCell<T>> = Vec::with_capacity(c_grid.len() * r_grid.len());
    for &c in c_grid {
        for &r in r_grid {
            by_cell.push(SelectionCell {
                c,
                r,
                det: None,
                log_det: None,
                error: None,
            });
        }
    }

    for (ri, &r) in r_grid.iter().enumerate() {
        let mut config = base.clone();
        config.r = r;
        let cell_err = |msg: String, by_cell: &mut Vec<SelectionCell<T>>| {
            for ci in 0..c_grid.len() {
                let cell = &mut by_cell[ci * r_grid.len() + ri];
                cell.error = Some(msg.clone());
            }
        };
        let grid = match config.grid() {
            Ok(g) => g,
            Err(e) => {
                cell_err(e.to_string(), &mut by_cell);
                continue;
            }
        };
        let curves = tabulate_model_curves(params, &grid, config.family, true);
        let empiricals: Vec<Result<KCurveMatrix<T>>> = patterns
            .par_iter()
            .map(|p| empirical_curves(p, &config))
            .collect();
        if let Some(Err(e)) = empiricals.iter().find(|e| e.is_err()).map(|e| e.as_ref()) {
            cell_err(e.to_string(), &mut by_cell);
            continue;
        }
        let empiricals: Vec<KCurveMatrix<T>> =
            empiricals.into_iter().map(|e| e.unwrap()).collect();

        for (ci, &c) in c_grid.iter().enumerate() {
            let cell = &mut by_cell[ci * r_grid.len() + ri];
            let power = match PowerMatrix::uniform(2, c) {
                Ok(p) => p,
                Err(e) => {
                    cell.error = Some(e.to_string());
                    continue;
                }
            };
            let outcome = (|| -> Result<T> {
                let b = b_matrix(&curves, &power)?;
                let vs: Vec<Vec<T>> = empiricals
                    .par_iter()
                    .map(|e| v_statistic(e, &curves, &power, area))
                    .collect::<Result<_>>()?;
                let s = sample_covariance(&vs).symmetrized();
                let sigma = sigma_hat(&b, &s)?;
                Ok(sigma.det())
            })();
            match outcome {
                Ok(det) => {
                    cell.det = Some(det);
                    cell.log_det = Some(det.ln());
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
        }
    }

    // argmin with deterministic tie-breaking: smallest det, then smallest c,
    // then smallest R (cells are already in that iteration order)
    let mut best: Option<(T, usize)> = None;
    for (idx, cell) in by_cell.iter().enumerate() {
        if let Some(det) = cell.det {
            if det.is_finite() {
                let better = match best {
                    None => true,
                    Some((bd, _)) => det < bd,
                };
                if better {
                    best = Some((det, idx));
                }
            }
        }
    }
    let (best_det, best_idx) = best.ok_or_else(|| {
        Error::Validation("every selection cell failed; no optimum available".into())
    })?;
    let best_cell = &by_cell[best_idx];

    Ok(SelectionResult {
        best_c: best_cell.c,
        best_r: best_cell.r,
        best_det,
        best_log_det: best_det.ln(),
        cells: by_cell,
        nsim: options.nsim,
        seed: options.seed,
        replicate_failures,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fitted marginal and cross correlations at chosen distances.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrRow<T> {
    pub r: T,
    pub corr11: T,
    pub corr22: T,
    pub corr12: T,
}

/// Correlation table of the fitted log-intensity fields.
pub fn correlation_table<T: Real>(params: &LgcpParams<T>, distances: &[T]) -> Vec<CorrRow<T>> {
    distances
        .iter()
        .map(|&r| CorrRow {
            r,
            corr11: params.corr_at(0, 0, r),
            corr22: params.corr_at(1, 1, r),
            corr12: params.corr_at(0, 1, r),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{Correction, DistanceGrid};
    use approx::assert_relative_eq;

    /// Scalar toy model: m = 1, one parameter, K(h; theta) = theta h.
    fn toy_curves(n0: usize) -> ModelCurves<f64> {
        let grid = DistanceGrid::new(1.0, n0).unwrap();
        let mut mc = ModelCurves::zeros(grid, 1, 1);
        let nodes: Vec<f64> = grid.nodes().collect();
        for (k, h) in nodes.iter().enumerate() {
            mc.entry_mut(0, 0)[k] = *h; // theta = 1
            mc.grad_mut(0, 0, k + 1)[0] = *h; // dK/dtheta = h
        }
        mc
    }

    #[test]
    fn scalar_toy_b_converges_to_one_third() {
        let p = PowerMatrix::uniform(1, 1.0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for n0 in [64usize, 256, 1024, 4096] {
            let b = b_matrix(&toy_curves(n0), &p).unwrap();
            let gap = (b[(0, 0)] - 1.0 / 3.0).abs();
            assert!(gap < prev_gap, "gap should shrink with n0");
            prev_gap = gap;
        }
        let b = b_matrix(&toy_curves(4096), &p).unwrap();
        assert!((b[(0, 0)] - 1.0 / 3.0).abs() < 1e-3);
    }

    fn m1_params() -> LgcpParams<f64> {
        LgcpParams::new(1.0, 0.5, 0.8, 1.0, 0.4, 1.5, -1, 2.0, 2.0).unwrap()
    }

    #[test]
    fn b_is_symmetric_and_psd() {
        let params = m1_params();
        let grid = DistanceGrid::new(2.5, 128).unwrap();
        let curves = tabulate_model_curves(&params, &grid, Family::OriginalK, true);
        let power = PowerMatrix::uniform(2, 0.2).unwrap();
        let b = b_matrix(&curves, &power).unwrap();
        for i in 0..NUM_PARAMS {
            for j in 0..NUM_PARAMS {
                assert_eq!(b[(i, j)], b[(j, i)]);
            }
        }
        let eig = b.sym_eigenvalues();
        let scale = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
        assert!(eig.iter().all(|&e| e >= -1e-10 * scale), "eig = {eig:?}");
    }

    #[test]
    fn b_riemann_sum_converges_under_grid_doubling() {
        let params = m1_params();
        let power = PowerMatrix::uniform(2, 0.3).unwrap();
        let value = |n0: usize| {
            let grid = DistanceGrid::new(1.5, n0).unwrap();
            let curves = tabulate_model_curves(&params, &grid, Family::OriginalK, true);
            b_matrix(&curves, &power).unwrap()
        };
        let coarse = value(2048);
        let fine = value(4096);
        for i in 0..NUM_PARAMS {
            for j in 0..NUM_PARAMS {
                let scale = fine[(i, j)].abs().max(1e-12);
                assert!(
                    ((coarse[(i, j)] - fine[(i, j)]) / scale).abs() < 1e-2,
                    "entry ({i},{j}): {} vs {}",
                    coarse[(i, j)],
                    fine[(i, j)]
                );
            }
        }
    }

    #[test]
    fn v_vanishes_when_empirical_equals_model() {
        let params = m1_params();
        let grid = DistanceGrid::new(1.0, 32).unwrap();
        let curves = tabulate_model_curves(&params, &grid, Family::OriginalK, true);
        let empirical = curves.to_kcurves(Correction::Isotropic, false);
        let v = v_statistic(&empirical, &curves, &PowerMatrix::uniform(2, 0.5).unwrap(), 100.0)
            .unwrap();
        assert!(v.iter().all(|&x| x == 0.0), "v = {v:?}");
    }

    #[test]
    fn v_constant_discrepancy_matches_direct_loop() {
        let params = m1_params();
        let grid = DistanceGrid::new(1.0, 16).unwrap();
        let curves = tabulate_model_curves(&params, &grid, Family::OriginalK, true);
        let delta = 0.05;
        let mut empirical = curves.to_kcurves(Correction::Isotropic, false);
        for v in empirical.entry_mut(0, 1) {
            *v += delta;
        }
        let c = 0.3;
        let power = PowerMatrix::uniform(2, c).unwrap();
        let area = 100.0;
        let v = v_statistic(&empirical, &curves, &power, area).unwrap();
        // direct: delta * sqrt(area) * c^2 * sum_k K^{2c-2} gradK * dh over (0,1) only
        let dh = grid.step();
        let mut direct = [0.0; NUM_PARAMS];
        for k in 1..=grid.n0() {
            let kv = curves.entry(0, 1)[k - 1];
            let w = delta * c * c * kv.powf(2.0 * c - 2.0) * dh;
            for (d, g) in direct.iter_mut().zip(curves.grad(0, 1, k)) {
                *d += w * g;
            }
        }
        for d in &mut direct {
            *d *= area.sqrt();
        }
        for (a, b) in v.iter().zip(direct) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn sigma_hat_identity_b_returns_s() {
        let b = SquareMatrix::identity(3);
        let s = SquareMatrix::from_rows(&[
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.2],
            vec![0.0, 0.2, 3.0],
        ]);
        let sigma = sigma_hat(&b, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(sigma[(i, j)], s[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sigma_hat_scalar_case() {
        let b = SquareMatrix::from_rows(&[vec![4.0]]);
        let s = SquareMatrix::from_rows(&[vec![8.0]]);
        let sigma = sigma_hat(&b, &s).unwrap();
        assert_relative_eq!(sigma[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn sigma_hat_rejects_singular_b() {
        let b = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let s = SquareMatrix::identity(2);
        assert!(matches!(sigma_hat(&b, &s), Err(Error::SingularB { .. })));
    }

    #[test]
    fn correlation_table_diagonal_is_one_at_zero() {
        let rows = correlation_table(&m1_params(), &[0.0, 1.0]);
        assert_relative_eq!(rows[0].corr11, 1.0, epsilon = 1e-14);
        assert_relative_eq!(rows[0].corr22, 1.0, epsilon = 1e-14);
        assert!(rows[1].corr12 < 0.0); // b = -1
    }

    #[test]
    fn rho_gradient_matches_finite_differences() {
        let p = m1_params();
        let g = rho_gradient(&p);
        let theta = p.theta();
        for c in 0..NUM_PARAMS {
            let step = 1e-6;
            let mut up = theta;
            up[c] += step;
            let mut dn = theta;
            dn[c] -= step;
            let fd = (p.with_theta(up).rho() - p.with_theta(dn).rho()) / (2.0 * step);
            assert!(
                (g[c] - fd).abs() < 1e-6,
                "coord {c}: {} vs {fd}",
                g[c]
            );
        }
    }
}
