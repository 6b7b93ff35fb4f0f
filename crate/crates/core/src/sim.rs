//! Simulation of the bivariate LGCP and homogeneous Poisson baselines.
//!
//! Gaussian random fields with exponential covariance are sampled on a
//! regular grid of cell centers, either exactly by circulant embedding
//! (FFT over a padded torus) or by dense Cholesky factorization for small
//! grids. The latent fields are combined through the coregionalization
//! matrix, exponentiated into intensity surfaces, and points are drawn
//! cell by cell as Poisson counts with uniform placement.
//!
//! Randomness is organized in independent ChaCha streams keyed by
//! `(seed, replicate, role)`, so adding replicates never perturbs earlier
//! ones and replicates can be generated in parallel. Distribution sampling
//! runs in `f64` internally; values convert to the caller's scalar type at
//! the boundary.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, RectWindow};
use crate::lgcp::LgcpParams;
use crate::scalar::Real;

/// Relative tolerance for negative circulant eigenvalues: anything not
/// below `-tol * max_eigenvalue` is clamped to zero.
const EIGEN_TOL: f64 = 1e-9;

/// Largest grid side for which the dense Cholesky path is allowed.
const CHOLESKY_MAX_SIDE: usize = 64;

/// Field sampling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrfMethod {
    Circulant,
    Cholesky,
    /// Circulant first, dense Cholesky fallback on embedding failure.
    #[default]
    Auto,
}

/// A scalar field tabulated at cell centers of a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub window: RectWindow<T>,
    pub nx: usize,
    pub ny: usize,
    values: Vec<T>,
}

impl<T: Real> GridField<T> {
    fn from_values(window: RectWindow<T>, nx: usize, ny: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), nx * ny);
        Self {
            window,
            nx,
            ny,
            values,
        }
    }

    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[ix * self.ny + iy]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn cell_width(&self) -> T {
        self.window.width() / T::from_usize(self.nx).unwrap()
    }

    pub fn cell_height(&self) -> T {
        self.window.height() / T::from_usize(self.ny).unwrap()
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point<T> {
        let half = T::of(0.5);
        Point::new(
            self.window.xmin + self.cell_width() * (T::from_usize(ix).unwrap() + half),
            self.window.ymin + self.cell_height() * (T::from_usize(iy).unwrap() + half),
        )
    }
}

/// Simulation settings shared by every replicate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimSettings<T> {
    pub window: RectWindow<T>,
    pub nx: usize,
    pub ny: usize,
    pub method: GrfMethod,
}

impl<T: Real> SimSettings<T> {
    pub fn new(window: RectWindow<T>, resolution: usize, method: GrfMethod) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Validation(format!(
                "grid resolution must be >= 2, got {resolution}"
            )));
        }
        Ok(Self {
            window,
            nx: resolution,
            ny: resolution,
            method,
        })
    }
}

/// ChaCha stream for one `(seed, replicate, role)` triple.
pub fn stream_rng(seed: u64, replicate: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(8).wrapping_add(role));
    rng
}

/// Prepared sampler for one exponential-covariance field on a fixed grid.
///
/// Planning (eigenvalues or the Cholesky factor) happens once; sampling is
/// cheap and thread-safe.
pub struct GrfSampler {
    nx: usize,
    ny: usize,
    plan: FieldPlan,
}

enum FieldPlan {
    Circulant {
        mx: usize,
        my: usize,
        sqrt_eigen: Vec<f64>,
        fft_cols: Arc<dyn Fft<f64>>,
        fft_rows: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        factor: Vec<f64>, // lower triangular, row-major n x n
        n: usize,
    },
}

impl GrfSampler {
    /// Plan a sampler for covariance `sigma^2 exp(-r / phi)` at the cell
    /// centers of an `nx` x `ny` grid over `window`.
    pub fn plan<T: Real>(
        sigma: T,
        phi: T,
        window: &RectWindow<T>,
        nx: usize,
        ny: usize,
        method: GrfMethod,
    ) -> Result<Self> {
        if !(sigma > T::zero()) || !(phi > T::zero()) {
            return Err(Error::Validation(format!(
                "sigma and phi must be positive, got sigma={sigma}, phi={phi}"
            )));
        }
        let sigma = sigma.as_f64();
        let phi = phi.as_f64();
        let dx = window.width().as_f64() / nx as f64;
        let dy = window.height().as_f64() / ny as f64;
        let cov = move |r: f64| sigma * sigma * (-r / phi).exp();

        match method {
            GrfMethod::Cholesky => Ok(Self {
                nx,
                ny,
                plan: plan_cholesky(&cov, nx, ny, dx, dy)?,
            }),
            GrfMethod::Circulant => Ok(Self {
                nx,
                ny,
                plan: plan_circulant(&cov, nx, ny, dx, dy)?,
            }),
            GrfMethod::Auto => match plan_circulant(&cov, nx, ny, dx, dy) {
                Ok(plan) => Ok(Self { nx, ny, plan }),
                Err(Error::EmbeddingFailure { .. })
                    if nx <= CHOLESKY_MAX_SIDE && ny <= CHOLESKY_MAX_SIDE =>
                {
                    log::warn!("circulant embedding failed; falling back to cholesky");
                    Ok(Self {
                        nx,
                        ny,
                        plan: plan_cholesky(&cov, nx, ny, dx, dy)?,
                    })
                }
                Err(e) => Err(e),
            },
        }
    }

    /// Draw one zero-mean field; values indexed as `ix * ny + iy`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.plan {
            FieldPlan::Circulant {
                mx,
                my,
                sqrt_eigen,
                fft_cols,
                fft_rows,
            } => {
                let (mx, my) = (*mx, *my);
                let m = mx * my;
                let mut buf: Vec<Complex64> = Vec::with_capacity(m);
                for s in sqrt_eigen {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    buf.push(Complex64::new(re * s, im * s));
                }
                // unnormalized inverse transform of sqrt(lambda) * noise,
                // scaled by 1/sqrt(mx*my): the real part has the target
                // covariance restricted to the original grid
                fft2_inplace(&mut buf, mx, my, fft_cols, fft_rows);
                let scale = 1.0 / (m as f64).sqrt();
                let mut out = vec![0.0; self.nx * self.ny];
                for ix in 0..self.nx {
                    for iy in 0..self.ny {
                        out[ix * self.ny + iy] = buf[ix * my + iy].re * scale;
                    }
                }
                out
            }
            FieldPlan::Cholesky { factor, n } => {
                let mut z = vec![0.0; *n];
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let mut out = vec![0.0; *n];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        s += factor[i * n + j] * zj;
                    }
                    *o = s;
                }
                out
            }
        }
    }
}

/// Torus lag distance for index `p` on an extended axis of size `m`.
fn torus_lag(p: usize, m: usize, d: f64) -> f64 {
    let w = p.min(m - p);
    w as f64 * d
}

fn plan_circulant(
    cov: &impl Fn(f64) -> f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
) -> Result<FieldPlan> {
    // padding factor 2 embeds the nx x ny covariance in a 2nx x 2ny torus
    let mx = 2 * nx;
    let my = 2 * ny;
    let mut base: Vec<Complex64> = Vec::with_capacity(mx * my);
    for p in 0..mx {
        let lx = torus_lag(p, mx, dx);
        for q in 0..my {
            let ly = torus_lag(q, my, dy);
            base.push(Complex64::new(cov((lx * lx + ly * ly).sqrt()), 0.0));
        }
    }
    let mut planner = FftPlanner::new();
    let fwd_rows = planner.plan_fft_forward(my);
    let fwd_cols = planner.plan_fft_forward(mx);
    fft2_inplace(&mut base, mx, my, &fwd_cols, &fwd_rows);

    let max_eig = base.iter().fold(0.0f64, |a, c| a.max(c.re));
    let min_eig = base.iter().fold(f64::INFINITY, |a, c| a.min(c.re));
    if min_eig < -EIGEN_TOL * max_eig {
        return Err(Error::EmbeddingFailure {
            min_eigenvalue: min_eig,
            tolerance: EIGEN_TOL * max_eig,
        });
    }
    let sqrt_eigen: Vec<f64> = base.iter().map(|c| c.re.max(0.0).sqrt()).collect();
    let inv_rows = planner.plan_fft_inverse(my);
    let inv_cols = planner.plan_fft_inverse(mx);
    Ok(FieldPlan::Circulant {
        mx,
        my,
        sqrt_eigen,
        fft_cols: inv_cols,
        fft_rows: inv_rows,
    })
}

fn plan_cholesky(
    cov: &impl Fn(f64) -> f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
) -> Result<FieldPlan> {
    if nx > CHOLESKY_MAX_SIDE || ny > CHOLESKY_MAX_SIDE {
        return Err(Error::Validation(format!(
            "cholesky path limited to {CHOLESKY_MAX_SIDE}x{CHOLESKY_MAX_SIDE} grids, got {nx}x{ny}"
        )));
    }
    let n = nx * ny;
    let center = |idx: usize| -> (f64, f64) {
        let ix = idx / ny;
        let iy = idx % ny;
        ((ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dy)
    };
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        let (xi, yi) = center(i);
        for j in 0..=i {
            let (xj, yj) = center(j);
            let r = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            let v = cov(r);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    // in-place lower Cholesky with a tiny ridge for numerical safety
    let ridge = 1e-12 * cov(0.0);
    for i in 0..n {
        a[i * n + i] += ridge;
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(Error::Validation(
                "covariance matrix not positive definite".into(),
            ));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(FieldPlan::Cholesky { factor: a, n })
}

/// Row-column 2D FFT, in place, row-major `mx` x `my`.
fn fft2_inplace(
    data: &mut [Complex64],
    mx: usize,
    my: usize,
    fft_cols: &Arc<dyn Fft<f64>>,
    fft_rows: &Arc<dyn Fft<f64>>,
) {
    for row in data.chunks_exact_mut(my) {
        fft_rows.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); mx];
    for q in 0..my {
        for p in 0..mx {
            col[p] = data[p * my + q];
        }
        fft_cols.process(&mut col);
        for p in 0..mx {
            data[p * my + q] = col[p];
        }
    }
}

/// One-shot sample of a zero-mean Gaussian field with exponential
/// covariance on the cell centers of a regular grid.
pub fn sample_grf<T: Real>(
    sigma: T,
    phi: T,
    window: &RectWindow<T>,
    nx: usize,
    ny: usize,
    method: GrfMethod,
    rng: &mut ChaCha8Rng,
) -> Result<GridField<T>> {
    let sampler = GrfSampler::plan(sigma, phi, window, nx, ny, method)?;
    let values = sampler.sample(rng);
    Ok(GridField::from_values(
        *window,
        nx,
        ny,
        values.into_iter().map(T::of).collect(),
    ))
}

/// Prepared LGCP sampler: three field plans plus the coregionalization
/// combination, reusable across replicates.
pub struct LgcpSampler<T> {
    params: LgcpParams<T>,
    settings: SimSettings<T>,
    z1: GrfSampler,
    z2: GrfSampler,
    z3: GrfSampler,
}

impl<T: Real> LgcpSampler<T> {
    pub fn new(params: &LgcpParams<T>, settings: &SimSettings<T>) -> Result<Self> {
        params.validate()?;
        let w = &settings.window;
        let (nx, ny, m) = (settings.nx, settings.ny, settings.method);
        Ok(Self {
            params: *params,
            settings: *settings,
            z1: GrfSampler::plan(params.sigma1, params.phi1, w, nx, ny, m)?,
            z2: GrfSampler::plan(params.sigma2, params.phi2, w, nx, ny, m)?,
            z3: GrfSampler::plan(params.sigma3, params.phi3, w, nx, ny, m)?,
        })
    }

    /// Log-intensity offsets that normalize `E[exp(Y_i)] = 1`.
    fn mean_offsets(&self) -> (f64, f64) {
        let p = &self.params;
        let s1 = p.sigma1.as_f64().powi(2);
        let s2 = p.sigma2.as_f64().powi(2);
        let s3 = p.sigma3.as_f64().powi(2);
        (-(s1 + s3) / 2.0, -(s2 + s3) / 2.0)
    }

    /// The two latent fields `Y_1`, `Y_2` for one replicate.
    pub fn sample_fields(
        &self,
        seed: u64,
        replicate: u64,
    ) -> (GridField<T>, GridField<T>) {
        let z1 = self.z1.sample(&mut stream_rng(seed, replicate, 0));
        let z2 = self.z2.sample(&mut stream_rng(seed, replicate, 1));
        let z3 = self.z3.sample(&mut stream_rng(seed, replicate, 2));
        let (off1, off2) = self.mean_offsets();
        let b = f64::from(self.params.b);
        let n = z1.len();
        let mut y1 = Vec::with_capacity(n);
        let mut y2 = Vec::with_capacity(n);
        for i in 0..n {
            y1.push(T::of(off1 + z1[i] + z3[i]));
            y2.push(T::of(off2 + z2[i] + b * z3[i]));
        }
        let w = self.settings.window;
        (
            GridField::from_values(w, self.settings.nx, self.settings.ny, y1),
            GridField::from_values(w, self.settings.nx, self.settings.ny, y2),
        )
    }

    /// One bivariate point pattern: cellwise Poisson counts with uniform
    /// placement, intensity `exp(mu_i + Y_i)` held constant per cell.
    pub fn sample(&self, seed: u64, replicate: u64) -> Result<PointPattern<T>> {
        let (y1, y2) = self.sample_fields(seed, replicate);
        let mut points = Vec::new();
        let mut marks = Vec::new();
        for (type_index, (field, mu)) in [
            (&y1, self.params.mu1.as_f64()),
            (&y2, self.params.mu2.as_f64()),
        ]
        .into_iter()
        .enumerate()
        {
            let mut rng = stream_rng(seed, replicate, 3 + type_index as u64);
            let cell_area = field.cell_width().as_f64() * field.cell_height().as_f64();
            for ix in 0..field.nx {
                for iy in 0..field.ny {
                    let mean = (mu + field.at(ix, iy).as_f64()).exp() * cell_area;
                    let count = poisson_draw(mean, &mut rng);
                    if count == 0 {
                        continue;
                    }
                    let c = field.cell_center(ix, iy);
                    let (cw, ch) = (field.cell_width(), field.cell_height());
                    let half = T::of(0.5);
                    for _ in 0..count {
                        let ux = T::of(rng.gen::<f64>());
                        let uy = T::of(rng.gen::<f64>());
                        points.push(Point::new(
                            c.x + cw * (ux - half),
                            c.y + ch * (uy - half),
                        ));
                        marks.push(type_index);
                    }
                }
            }
        }
        PointPattern::new(points, marks, 2, self.settings.window)
    }
}

fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite Poisson mean");
    dist.sample(rng) as u64
}

/// One LGCP pattern from scratch (plans the field samplers internally; use
/// [`LgcpSampler`] when drawing many replicates).
pub fn sample_lgcp<T: Real>(
    params: &LgcpParams<T>,
    settings: &SimSettings<T>,
    seed: u64,
    replicate: u64,
) -> Result<PointPattern<T>> {
    LgcpSampler::new(params, settings)?.sample(seed, replicate)
}

/// Homogeneous Poisson pattern: `N ~ Poisson(lambda |D|)` points placed
/// independently and uniformly.
pub fn sample_poisson<T: Real>(
    lambda: T,
    window: &RectWindow<T>,
    rng: &mut ChaCha8Rng,
) -> Result<PointPattern<T>> {
    let lambda = lambda.as_f64();
    if lambda < 0.0 {
        return Err(Error::Validation(format!(
            "intensity must be nonnegative, got {lambda}"
        )));
    }
    let n = poisson_draw(lambda * window.area().as_f64(), rng);
    let mut points = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let ux = T::of(rng.gen::<f64>());
        let uy = T::of(rng.gen::<f64>());
        points.push(Point::new(
            window.xmin + window.width() * ux,
            window.ymin + window.height() * uy,
        ));
    }
    PointPattern::single_type(points, *window)
}
