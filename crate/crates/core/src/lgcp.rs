//! Parametric bivariate log-Gaussian Cox process under a linear model of
//! coregionalization.
//!
//! Three independent zero-mean Gaussian fields with isotropic exponential
//! covariance drive the two log-intensity fields:
//!
//! ```text
//! Y_1 = mu_{Y1} + Z_1 + Z_3,      Y_2 = mu_{Y2} + Z_2 + b Z_3,  b in {-1, +1}
//! ```
//!
//! which yields closed-form marginal and cross covariances of the log
//! intensities and, through them, K-function curves as one-dimensional
//! integrals evaluated here by composite Simpson quadrature. The model
//! parameter vector is `theta = (sigma1, phi1, sigma2, phi2, sigma3, phi3)`;
//! the intensity constants `mu1`, `mu2` and the sign `b` are fixed inputs,
//! not estimated.

use serde::{Deserialize, Serialize};

use crate::contrast::Family;
use crate::curves::{DistanceGrid, ModelCurves};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of scale/range parameters in `theta`.
pub const NUM_PARAMS: usize = 6;

/// Simpson subpanels per grid step used when tabulating curves.
pub const PANELS_PER_STEP: usize = 8;

/// Parameters of the bivariate LGCP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgcpParams<T> {
    pub sigma1: T,
    pub phi1: T,
    pub sigma2: T,
    pub phi2: T,
    pub sigma3: T,
    pub phi3: T,
    /// Sign of the shared component in the second field: -1 or +1.
    pub b: i8,
    pub mu1: T,
    pub mu2: T,
}

impl<T: Real> LgcpParams<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma1: T,
        phi1: T,
        sigma2: T,
        phi2: T,
        sigma3: T,
        phi3: T,
        b: i8,
        mu1: T,
        mu2: T,
    ) -> Result<Self> {
        let p = Self {
            sigma1,
            phi1,
            sigma2,
            phi2,
            sigma3,
            phi3,
            b,
            mu1,
            mu2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma1", self.sigma1),
            ("phi1", self.phi1),
            ("sigma2", self.sigma2),
            ("phi2", self.phi2),
            ("sigma3", self.sigma3),
            ("phi3", self.phi3),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if self.b != 1 && self.b != -1 {
            return Err(Error::Validation(format!(
                "b must be -1 or +1, got {}",
                self.b
            )));
        }
        Ok(())
    }

    /// Scale/range parameters as a vector, in estimation order.
    pub fn theta(&self) -> [T; NUM_PARAMS] {
        [
            self.sigma1,
            self.phi1,
            self.sigma2,
            self.phi2,
            self.sigma3,
            self.phi3,
        ]
    }

    /// Copy with the scale/range parameters replaced.
    pub fn with_theta(&self, theta: [T; NUM_PARAMS]) -> Self {
        Self {
            sigma1: theta[0],
            phi1: theta[1],
            sigma2: theta[2],
            phi2: theta[3],
            sigma3: theta[4],
            phi3: theta[5],
            b: self.b,
            mu1: self.mu1,
            mu2: self.mu2,
        }
    }

    fn b_scalar(&self) -> T {
        if self.b >= 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// First-order intensity of type `i`: `exp(mu_i)`.
    pub fn intensity(&self, i: usize) -> T {
        match i {
            0 => self.mu1.exp(),
            1 => self.mu2.exp(),
            _ => panic!("type index out of range"),
        }
    }

    /// Marginal (i = j) or cross (i != j) covariance of the log intensities.
    pub fn cov(&self, i: usize, j: usize, r: T) -> T {
        let e1 = (-r / self.phi1).exp();
        let e2 = (-r / self.phi2).exp();
        let e3 = (-r / self.phi3).exp();
        let s3 = self.sigma3 * self.sigma3 * e3;
        match (i, j) {
            (0, 0) => self.sigma1 * self.sigma1 * e1 + s3,
            (1, 1) => self.sigma2 * self.sigma2 * e2 + s3,
            (0, 1) | (1, 0) => self.b_scalar() * s3,
            _ => panic!("type index out of range"),
        }
    }

    /// Gradient of `cov(i, j, r)` with respect to `theta`.
    pub fn cov_grad(&self, i: usize, j: usize, r: T) -> [T; NUM_PARAMS] {
        let two = T::of(2.0);
        let e1 = (-r / self.phi1).exp();
        let e2 = (-r / self.phi2).exp();
        let e3 = (-r / self.phi3).exp();
        let mut g = [T::zero(); NUM_PARAMS];
        let d_sigma3 = two * self.sigma3 * e3;
        let d_phi3 = self.sigma3 * self.sigma3 * r / (self.phi3 * self.phi3) * e3;
        match (i, j) {
            (0, 0) => {
                g[0] = two * self.sigma1 * e1;
                g[1] = self.sigma1 * self.sigma1 * r / (self.phi1 * self.phi1) * e1;
                g[4] = d_sigma3;
                g[5] = d_phi3;
            }
            (1, 1) => {
                g[2] = two * self.sigma2 * e2;
                g[3] = self.sigma2 * self.sigma2 * r / (self.phi2 * self.phi2) * e2;
                g[4] = d_sigma3;
                g[5] = d_phi3;
            }
            (0, 1) | (1, 0) => {
                let b = self.b_scalar();
                g[4] = b * d_sigma3;
                g[5] = b * d_phi3;
            }
            _ => panic!("type index out of range"),
        }
        g
    }

    /// Cross correlation coefficient of the two log-intensity fields.
    pub fn rho(&self) -> T {
        let s1 = self.sigma1 * self.sigma1;
        let s2 = self.sigma2 * self.sigma2;
        let s3 = self.sigma3 * self.sigma3;
        self.b_scalar() * s3 / ((s1 + s3) * (s2 + s3)).sqrt()
    }

    /// Correlation of the log intensities at lag `r`:
    /// `C_ij(r) / sqrt(C_ii(0) C_jj(0))`.
    pub fn corr_at(&self, i: usize, j: usize, r: T) -> T {
        let denom = (self.cov(i, i, T::zero()) * self.cov(j, j, T::zero())).sqrt();
        self.cov(i, j, r) / denom
    }
}

/// Composite Simpson over `[0, r]` of `2 pi h exp(C_ij(h))` and optionally
/// the six gradient integrands, sharing the covariance evaluations.
fn simpson_k_and_grad<T: Real>(
    params: &LgcpParams<T>,
    i: usize,
    j: usize,
    r: T,
    panels: usize,
    with_grad: bool,
) -> (T, [T; NUM_PARAMS]) {
    debug_assert!(panels >= 2 && panels % 2 == 0);
    let mut grad = [T::zero(); NUM_PARAMS];
    if r <= T::zero() {
        return (T::zero(), grad);
    }
    let two_pi = T::of(std::f64::consts::TAU);
    let n = T::from_usize(panels).unwrap();
    let dh = r / n;
    let mut k_sum = T::zero();
    for l in 0..=panels {
        let h = r * T::from_usize(l).unwrap() / n;
        let coeff = if l == 0 || l == panels {
            T::one()
        } else if l % 2 == 1 {
            T::of(4.0)
        } else {
            T::of(2.0)
        };
        let base = coeff * h * params.cov(i, j, h).exp();
        k_sum += base;
        if with_grad {
            let cg = params.cov_grad(i, j, h);
            for (g, c) in grad.iter_mut().zip(cg) {
                *g += base * c;
            }
        }
    }
    let scale = two_pi * dh / T::of(3.0);
    for g in &mut grad {
        *g = *g * scale;
    }
    (k_sum * scale, grad)
}

/// Default panel count for standalone (non-tabulated) curve evaluations.
const STANDALONE_PANELS: usize = 4096;

/// Model K-function value `K_ij(r; theta) = 2 pi int_0^r h exp(C_ij(h)) dh`.
pub fn model_k<T: Real>(params: &LgcpParams<T>, i: usize, j: usize, r: T) -> T {
    model_k_with_panels(params, i, j, r, STANDALONE_PANELS)
}

/// As [`model_k`] with an explicit Simpson panel count (used by refinement
/// checks).
pub fn model_k_with_panels<T: Real>(
    params: &LgcpParams<T>,
    i: usize,
    j: usize,
    r: T,
    panels: usize,
) -> T {
    simpson_k_and_grad(params, i, j, r, panels.max(2), false).0
}

/// Gradient of `K_ij(r; theta)` with respect to `theta`.
pub fn model_k_grad<T: Real>(
    params: &LgcpParams<T>,
    i: usize,
    j: usize,
    r: T,
) -> [T; NUM_PARAMS] {
    simpson_k_and_grad(params, i, j, r, STANDALONE_PANELS, true).1
}

/// Intensity-scaled model curve `Q_ij(r) = exp(mu_i + mu_j) K_ij(r)`.
pub fn adjusted_q<T: Real>(params: &LgcpParams<T>, i: usize, j: usize, r: T) -> T {
    params.intensity(i) * params.intensity(j) * model_k(params, i, j, r)
}

/// Tabulate model curves (and gradients when requested) on a grid,
/// accumulating the quadrature cumulatively so all nodes cost one pass.
///
/// For [`Family::AdjustedQ`] both values and gradients carry the
/// `exp(mu_i + mu_j)` intensity scaling.
pub fn tabulate_model_curves<T: Real>(
    params: &LgcpParams<T>,
    grid: &DistanceGrid<T>,
    family: Family,
    with_grads: bool,
) -> ModelCurves<T> {
    let mut out = ModelCurves::zeros(*grid, 2, NUM_PARAMS);
    let n0 = grid.n0();
    // (i, j) pairs to integrate; (1, 0) mirrors (0, 1)
    for (i, j) in [(0usize, 0usize), (1, 1), (0, 1)] {
        let scale = match family {
            Family::OriginalK => T::one(),
            Family::AdjustedQ => params.intensity(i) * params.intensity(j),
        };
        let mut k_acc = T::zero();
        let mut g_acc = [T::zero(); NUM_PARAMS];
        for k in 1..=n0 {
            let lo = grid.node(k) - grid.step();
            let hi = grid.node(k);
            let (dk, dg) = segment_increment(params, i, j, lo, hi, with_grads);
            k_acc += dk;
            out.entry_mut(i, j)[k - 1] = k_acc * scale;
            if with_grads {
                for (a, d) in g_acc.iter_mut().zip(dg) {
                    *a += d;
                }
                let gm = out.grad_mut(i, j, k);
                for (g, a) in gm.iter_mut().zip(g_acc) {
                    *g = a * scale;
                }
            }
        }
        if i != j {
            for k in 1..=n0 {
                let v = out.entry(i, j)[k - 1];
                out.entry_mut(j, i)[k - 1] = v;
                if with_grads {
                    let g: Vec<T> = out.grad(i, j, k).to_vec();
                    out.grad_mut(j, i, k).copy_from_slice(&g);
                }
            }
        }
    }
    out
}

/// Simpson increment of the K integral (and gradient integrals) over one
/// grid segment `[lo, hi]`.
fn segment_increment<T: Real>(
    params: &LgcpParams<T>,
    i: usize,
    j: usize,
    lo: T,
    hi: T,
    with_grad: bool,
) -> (T, [T; NUM_PARAMS]) {
    let two_pi = T::of(std::f64::consts::TAU);
    let n = T::from_usize(PANELS_PER_STEP).unwrap();
    let dh = (hi - lo) / n;
    let mut k_sum = T::zero();
    let mut grad = [T::zero(); NUM_PARAMS];
    for l in 0..=PANELS_PER_STEP {
        let h = lo + dh * T::from_usize(l).unwrap();
        let coeff = if l == 0 || l == PANELS_PER_STEP {
            T::one()
        } else if l % 2 == 1 {
            T::of(4.0)
        } else {
            T::of(2.0)
        };
        let base = coeff * h * params.cov(i, j, h).exp();
        k_sum += base;
        if with_grad {
            let cg = params.cov_grad(i, j, h);
            for (g, c) in grad.iter_mut().zip(cg) {
                *g += base * c;
            }
        }
    }
    let scale = two_pi * dh / T::of(3.0);
    for g in &mut grad {
        *g = *g * scale;
    }
    (k_sum * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_model(idx: usize, b: i8) -> LgcpParams<f64> {
        // The four simulation parameter sets (sigma1, phi1, sigma2, phi2,
        // sigma3, phi3) with common mu = 2.
        let v = match idx {
            1 => [1.0, 0.5, 0.8, 1.0, 0.4, 1.5],
            2 => [0.8, 0.5, 0.6, 1.0, 0.5, 1.5],
            3 => [0.7, 0.5, 0.4, 1.3, 0.6, 1.0],
            4 => [0.5, 0.5, 0.4, 1.3, 0.8, 1.0],
            _ => unreachable!(),
        };
        LgcpParams::new(v[0], v[1], v[2], v[3], v[4], v[5], b, 2.0, 2.0).unwrap()
    }

    fn fitted_params() -> LgcpParams<f64> {
        LgcpParams::new(1.27, 66.38, 1.93, 12.91, 1.33, 360.42, -1, 0.0, 0.0).unwrap()
    }

    #[test]
    fn cov_at_zero_sums_variances() {
        let p = table_model(1, 1);
        assert_relative_eq!(p.cov(0, 0, 0.0), 1.16, epsilon = 1e-12);
    }

    #[test]
    fn zero_shared_scale_gives_independent_components() {
        let mut p = table_model(1, 1);
        p.sigma3 = 0.0; // limit case, bypassing validation on purpose
        assert_eq!(p.cov(0, 1, 0.7), 0.0);
        assert_eq!(p.rho(), 0.0);
    }

    #[test]
    fn cov_of_fitted_model_at_50() {
        let c = fitted_params().cov(0, 0, 50.0);
        assert_relative_eq!(c, 2.299, epsilon = 1e-3);
    }

    #[test]
    fn rho_reproduces_reference_values() {
        for (idx, expect) in [(1, 0.166), (2, 0.339), (3, 0.541), (4, 0.758)] {
            for b in [1i8, -1] {
                let r = table_model(idx, b).rho();
                let signed = f64::from(b) * expect;
                assert!(
                    (r - signed).abs() < 1e-3,
                    "model {idx}, b {b}: rho {r} vs {signed}"
                );
            }
        }
    }

    #[test]
    fn rho_of_fitted_model() {
        assert!((fitted_params().rho() + 0.41).abs() < 5e-3);
    }

    #[test]
    fn corr_at_reference_distances() {
        let p = fitted_params();
        let expect = [
            (0, 0, 50.0, 0.68),
            (0, 0, 100.0, 0.50),
            (1, 1, 50.0, 0.29),
            (0, 1, 50.0, -0.36),
            (1, 1, 420.0, 0.10),
        ];
        for (i, j, r, want) in expect {
            assert!(
                (p.corr_at(i, j, r) - want).abs() < 0.01,
                "corr[{i}{j}]({r}) = {} vs {want}",
                p.corr_at(i, j, r)
            );
        }
    }

    #[test]
    fn corr_at_zero_lag_is_one() {
        let p = table_model(3, -1);
        assert_relative_eq!(p.corr_at(0, 0, 0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.corr_at(1, 1, 0.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rho_invariant_under_component_swap() {
        let p = LgcpParams::new(0.9, 0.5, 0.9, 1.7, 0.4, 1.1, 1, 0.0, 0.0).unwrap();
        let q = LgcpParams::new(0.9, 1.7, 0.9, 0.5, 0.4, 1.1, 1, 0.0, 0.0).unwrap();
        assert_relative_eq!(p.rho(), q.rho(), epsilon = 1e-15);
    }

    #[test]
    fn rho_magnitude_increases_in_sigma3() {
        let base = table_model(1, -1);
        let mut bigger = base;
        bigger.sigma3 = base.sigma3 * 1.5;
        assert!(bigger.rho().abs() > base.rho().abs());
    }

    #[test]
    fn poisson_limit_recovers_pi_r_squared() {
        let mut p = table_model(1, 1);
        p.sigma1 = 0.0;
        p.sigma2 = 0.0;
        p.sigma3 = 0.0;
        for r in [0.3, 1.0, 2.5] {
            assert_relative_eq!(
                model_k(&p, 0, 0, r),
                std::f64::consts::PI * r * r,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn negative_coupling_pushes_cross_k_below_poisson() {
        let p = table_model(1, -1);
        for r in [0.2, 0.8, 2.0] {
            assert!(model_k(&p, 0, 1, r) < std::f64::consts::PI * r * r);
        }
    }

    #[test]
    fn model_k_matches_fine_trapezoid_oracle() {
        let p = table_model(1, -1);
        let r = 1.0;
        // independent oracle: 1e6-panel trapezoid rule
        let n = 1_000_000usize;
        let dh = r / n as f64;
        let f = |h: f64| h * p.cov(0, 0, h).exp();
        let mut sum = 0.5 * (f(0.0) + f(r));
        for l in 1..n {
            sum += f(dh * l as f64);
        }
        let oracle = std::f64::consts::TAU * dh * sum;
        assert_relative_eq!(model_k(&p, 0, 0, r), oracle, max_relative = 1e-8);
    }

    #[test]
    fn quadrature_converges_under_panel_doubling() {
        let p = table_model(2, -1);
        let coarse = model_k_with_panels(&p, 0, 0, 2.0, 4096);
        let fine = model_k_with_panels(&p, 0, 0, 2.0, 8192);
        assert_relative_eq!(coarse, fine, max_relative = 1e-10);
    }

    #[test]
    fn gradient_entries_for_absent_parameters_are_zero() {
        let p = table_model(1, -1);
        let g = model_k_grad(&p, 0, 1, 1.7);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
        assert_eq!(g[3], 0.0);
        assert!(g[4] != 0.0 && g[5] != 0.0);
    }

    #[test]
    fn gradient_at_zero_distance_is_zero() {
        let p = table_model(1, 1);
        assert_eq!(model_k_grad(&p, 0, 0, 0.0), [0.0; 6]);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        for idx in 1..=4 {
            let p = table_model(idx, -1);
            for r in [0.5, 1.0, 2.5] {
                let g = model_k_grad(&p, 0, 0, r);
                let theta = p.theta();
                for c in 0..NUM_PARAMS {
                    let step = 1e-5 * theta[c].max(1.0);
                    let mut up = theta;
                    up[c] += step;
                    let mut dn = theta;
                    dn[c] -= step;
                    let fd = (model_k(&p.with_theta(up), 0, 0, r)
                        - model_k(&p.with_theta(dn), 0, 0, r))
                        / (2.0 * step);
                    let scale = fd.abs().max(1e-8);
                    assert!(
                        (g[c] - fd).abs() / scale < 1e-5,
                        "model {idx}, r {r}, coord {c}: analytic {} vs fd {fd}",
                        g[c]
                    );
                }
            }
        }
    }

    #[test]
    fn adjusted_q_reduces_to_k_at_zero_mu() {
        let mut p = table_model(1, 1);
        p.mu1 = 0.0;
        p.mu2 = 0.0;
        assert_relative_eq!(
            adjusted_q(&p, 0, 1, 1.2),
            model_k(&p, 0, 1, 1.2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn adjusted_q_scales_by_exp_four_at_mu_two() {
        let p = table_model(1, 1);
        assert_relative_eq!(
            adjusted_q(&p, 0, 0, 0.9),
            (4.0f64).exp() * model_k(&p, 0, 0, 0.9),
            max_relative = 1e-14
        );
    }

    #[test]
    fn tabulated_curves_match_standalone_values() {
        let p = table_model(3, -1);
        let grid = DistanceGrid::new(2.0, 16).unwrap();
        let curves = tabulate_model_curves(&p, &grid, Family::OriginalK, true);
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            for k in [1usize, 8, 16] {
                let h = grid.node(k);
                assert_relative_eq!(
                    curves.entry(i, j)[k - 1],
                    model_k(&p, i, j, h),
                    max_relative = 1e-9
                );
                let g_tab = curves.grad(i, j, k);
                let g_ref = model_k_grad(&p, i, j, h);
                for c in 0..NUM_PARAMS {
                    let scale = g_ref[c].abs().max(1e-10);
                    assert!((g_tab[c] - g_ref[c]).abs() / scale < 1e-7);
                }
            }
        }
    }

    #[test]
    fn curves_are_strictly_increasing_and_symmetric() {
        let p = table_model(4, 1);
        let grid = DistanceGrid::new(3.0, 64).unwrap();
        let curves = tabulate_model_curves(&p, &grid, Family::OriginalK, false);
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            let e = curves.entry(i, j);
            assert!(e[0] > 0.0);
            for w in e.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
        assert_eq!(curves.entry(0, 1), curves.entry(1, 0));
    }
}
