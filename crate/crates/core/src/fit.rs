//! Minimum-contrast fitting of the LGCP scale/range parameters.
//!
//! The optimizer is derivative-free Nelder-Mead run in log-parameter space,
//! which keeps every evaluated parameter vector strictly positive. A box
//! guard caps coordinates at 1e6 (range estimates are known to escape to
//! that scale on flat objectives) and at 1e-8 from below; evaluations
//! outside the box return infinity, so the simplex never leaves it.

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contrast::{contrast, ContrastConfig, Family};
use crate::curves::KCurveMatrix;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::kfunc::{k_matrix, q_hat};
use crate::lgcp::{tabulate_model_curves, LgcpParams, NUM_PARAMS};
use crate::scalar::Real;

/// Options controlling the simplex search.
#[derive(Debug, Clone)]
pub struct FitOptions<T> {
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Relative tolerance on the objective spread across the simplex.
    pub f_tol: T,
    /// Tolerance on the coordinate spread in log space (relative in the
    /// original parameters).
    pub x_tol: T,
    /// Number of additional jittered restarts (0 disables multistart).
    pub multistart: usize,
    /// Seed for the restart jitter stream.
    pub seed: u64,
    /// Record every evaluated point in [`FitResult::trace`].
    pub record_trace: bool,
    /// Optional explicit initial theta, overriding the data-driven rule.
    pub init: Option<[T; NUM_PARAMS]>,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            max_evals: 5000,
            f_tol: T::of(1e-8),
            x_tol: T::of(1e-6),
            multistart: 0,
            seed: 0,
            record_trace: false,
            init: None,
        }
    }
}

/// Outcome of a minimum-contrast fit.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub params: LgcpParams<T>,
    pub u_min: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Option<Vec<([T; NUM_PARAMS], T)>>,
}

/// Data-driven initial values: `sigma = sqrt(log N / 10)` and
/// `phi = L / 10`, with `N` the total count over all types and `L` the
/// window side length (geometric mean side for non-square windows).
/// The intensity constants are plug-in estimates `mu_i = log lambda_i`.
pub fn initial_theta<T: Real>(pattern: &PointPattern<T>, b: i8) -> Result<LgcpParams<T>> {
    if pattern.num_types() != 2 {
        return Err(Error::DegenerateInput(format!(
            "bivariate model requires m = 2 types, pattern has {}",
            pattern.num_types()
        )));
    }
    let n = pattern.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 points to initialize, got {n}"
        )));
    }
    let log_n = T::from_usize(n).unwrap().ln();
    if log_n <= T::zero() {
        return Err(Error::DegenerateInput("log N must be positive".into()));
    }
    let lambda = pattern.intensity_estimates();
    for (t, &l) in lambda.iter().enumerate() {
        if !(l > T::zero()) {
            return Err(Error::DegenerateInput(format!(
                "type {t} has zero points; intensity constant undefined"
            )));
        }
    }
    let sigma = (log_n / T::of(10.0)).sqrt();
    let side = pattern.window().area().sqrt();
    let phi = side / T::of(10.0);
    LgcpParams::new(
        sigma,
        phi,
        sigma,
        phi,
        sigma,
        phi,
        b,
        lambda[0].ln(),
        lambda[1].ln(),
    )
}

/// Fit the model to an observed pattern.
pub fn fit<T: Real>(
    pattern: &PointPattern<T>,
    config: &ContrastConfig<T>,
    b: i8,
    options: &FitOptions<T>,
) -> Result<FitResult<T>> {
    if pattern.num_types() != 2 {
        return Err(Error::DegenerateInput(format!(
            "m = 2 required, pattern has {} types",
            pattern.num_types()
        )));
    }
    let grid = config.grid()?;
    let empirical = match config.family {
        Family::OriginalK => k_matrix(pattern, &grid, config.correction)?,
        Family::AdjustedQ => q_hat(pattern, &grid, config.correction, false)?,
    };
    let empirical = if config.symmetrize {
        empirical.symmetrized()
    } else {
        empirical
    };
    let init = initial_theta(pattern, b)?;
    fit_to_curves(&empirical, config, init, options)
}

/// Fit against an already tabulated empirical curve matrix.
///
/// `init` supplies the starting parameters together with the fixed `b` and
/// intensity constants; for the Q family the model side is scaled with the
/// `mu` values carried by `init`.
pub fn fit_to_curves<T: Real>(
    empirical: &KCurveMatrix<T>,
    config: &ContrastConfig<T>,
    init: LgcpParams<T>,
    options: &FitOptions<T>,
) -> Result<FitResult<T>> {
    let grid = config.grid()?;
    if !grid.matches(empirical.grid()) {
        return Err(Error::GridMismatch {
            n0_a: grid.n0(),
            n0_b: empirical.grid().n0(),
            r_a: grid.r().as_f64(),
            r_b: empirical.grid().r().as_f64(),
        });
    }
    let start = options.init.unwrap_or_else(|| init.theta());
    let mut trace = options.record_trace.then(Vec::new);

    let objective = |theta: &[T; NUM_PARAMS]| -> T {
        let params = init.with_theta(*theta);
        let model = tabulate_model_curves(&params, &grid, config.family, false);
        match contrast(&model, empirical, &config.power) {
            Ok(u) if u.is_finite() => u,
            _ => T::infinity(),
        }
    };

    let mut log_start = [T::zero(); NUM_PARAMS];
    for (l, s) in log_start.iter_mut().zip(start) {
        if !(s > T::zero()) {
            return Err(Error::Validation(format!(
                "initial theta must be strictly positive, got {s}"
            )));
        }
        *l = s.ln();
    }

    let mut best = nelder_mead(&objective, log_start, options, &mut trace);
    if options.multistart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..options.multistart {
            let mut jittered = log_start;
            for c in jittered.iter_mut() {
                *c += T::of(rng.gen_range(-0.5..0.5));
            }
            let candidate = nelder_mead(&objective, jittered, options, &mut trace);
            // tie-break: first reached wins, so strictly-better only
            if candidate.f_min < best.f_min {
                best = candidate;
            }
        }
    }

    let theta = exp_point(&best.x_min);
    Ok(FitResult {
        params: init.with_theta(theta),
        u_min: best.f_min,
        iterations: best.iterations,
        evaluations: best.evaluations,
        converged: best.converged,
        trace,
    })
}

const LOG_LOWER: f64 = -18.420680743952367; // ln(1e-8)
const LOG_UPPER: f64 = 13.815510557964274; // ln(1e6)

fn exp_point<T: Real>(x: &[T; NUM_PARAMS]) -> [T; NUM_PARAMS] {
    let mut out = [T::zero(); NUM_PARAMS];
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v.exp();
    }
    out
}

struct SimplexOutcome<T> {
    x_min: [T; NUM_PARAMS],
    f_min: T,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

/// Standard Nelder-Mead on the log-parameter box. Deterministic: ties keep
/// the earlier vertex, so identical inputs give identical results.
fn nelder_mead<T: Real, F: Fn(&[T; NUM_PARAMS]) -> T>(
    f: &F,
    start: [T; NUM_PARAMS],
    options: &FitOptions<T>,
    trace: &mut Option<Vec<([T; NUM_PARAMS], T)>>,
) -> SimplexOutcome<T> {
    let lower = T::of(LOG_LOWER);
    let upper = T::of(LOG_UPPER);
    let mut evaluations = 0usize;
    let mut eval = |x: &[T; NUM_PARAMS],
                    evals: &mut usize,
                    trace: &mut Option<Vec<([T; NUM_PARAMS], T)>>|
     -> T {
        *evals += 1;
        if x.iter().any(|&c| c < lower || c > upper) {
            return T::infinity();
        }
        let v = f(x);
        if let Some(t) = trace {
            t.push((exp_point(x), v));
        }
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let n = NUM_PARAMS;
    let step = T::of(0.25);
    let mut simplex: Vec<([T; NUM_PARAMS], T)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evaluations, trace);
    simplex.push((start, f0));
    for c in 0..n {
        let mut x = start;
        x[c] = (x[c] + step).min(upper);
        let fx = eval(&x, &mut evaluations, trace);
        simplex.push((x, fx));
    }

    let (alpha, gamma, beta, delta) = (T::one(), T::of(2.0), T::of(0.5), T::of(0.5));
    let mut iterations = 0usize;
    let mut converged = false;

    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;

        let f_spread = f_worst - f_best;
        let f_ok = f_spread.is_finite()
            && f_spread <= options.f_tol * Float::abs(f_best).max(T::of(1e-300));
        let mut x_spread = T::zero();
        for v in &simplex[1..] {
            for c in 0..n {
                x_spread = x_spread.max(Float::abs(v.0[c] - simplex[0].0[c]));
            }
        }
        let x_ok = x_spread <= options.x_tol;
        if f_ok || x_ok {
            converged = true;
            break;
        }
        if evaluations >= options.max_evals {
            break;
        }
        iterations += 1;

        // centroid of all but the worst vertex
        let mut centroid = [T::zero(); NUM_PARAMS];
        for v in &simplex[..n] {
            for c in 0..n {
                centroid[c] += v.0[c];
            }
        }
        let nn = T::from_usize(n).unwrap();
        for c in centroid.iter_mut() {
            *c /= nn;
        }

        let worst = simplex[n].0;
        let mut reflected = [T::zero(); NUM_PARAMS];
        for c in 0..n {
            reflected[c] = centroid[c] + alpha * (centroid[c] - worst[c]);
        }
        let f_reflected = eval(&reflected, &mut evaluations, trace);

        if f_reflected < simplex[0].1 {
            // try to expand
            let mut expanded = [T::zero(); NUM_PARAMS];
            for c in 0..n {
                expanded[c] = centroid[c] + gamma * (reflected[c] - centroid[c]);
            }
            let f_expanded = eval(&expanded, &mut evaluations, trace);
            simplex[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[n - 1].1 {
            simplex[n] = (reflected, f_reflected);
        } else {
            // contraction, outside or inside of the reflection
            let (towards, f_towards) = if f_reflected < simplex[n].1 {
                (reflected, f_reflected)
            } else {
                (worst, simplex[n].1)
            };
            let mut contracted = [T::zero(); NUM_PARAMS];
            for c in 0..n {
                contracted[c] = centroid[c] + beta * (towards[c] - centroid[c]);
            }
            let f_contracted = eval(&contracted, &mut evaluations, trace);
            if f_contracted < f_towards {
                simplex[n] = (contracted, f_contracted);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    for c in 0..n {
                        v.0[c] = best[c] + delta * (v.0[c] - best[c]);
                    }
                    v.1 = eval(&v.0, &mut evaluations, trace);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    SimplexOutcome {
        x_min: simplex[0].0,
        f_min: simplex[0].1,
        iterations,
        evaluations,
        converged,
    }
}
