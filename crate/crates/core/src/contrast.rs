//! The minimum-contrast objective: sum over grid nodes and type pairs of
//! squared differences between Hadamard-powered model and empirical curves.
//!
//! The objective is the plain sum over nodes `h_k = R k / n0` with constant
//! unit weight; no node-width factor is applied, so reported values differ
//! from the corresponding integral by the constant `R / n0`, which leaves
//! the minimizer unchanged.

use serde::{Deserialize, Serialize};

use crate::curves::{Correction, DistanceGrid, KCurveMatrix, ModelCurves};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which curve family the contrast compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Plain K-function curves (default; invariant to intensity levels).
    #[default]
    OriginalK,
    /// Intensity-scaled Q curves.
    AdjustedQ,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::OriginalK => write!(f, "original-k"),
            Family::AdjustedQ => write!(f, "adjusted-q"),
        }
    }
}

/// Symmetric matrix of positive Hadamard powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix<T> {
    m: usize,
    c: Vec<T>,
}

impl<T: Real> PowerMatrix<T> {
    /// Constant power matrix `c * ones(m, m)`.
    pub fn uniform(m: usize, c: T) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::Validation(format!(
                "power entries must be positive, got {c}"
            )));
        }
        Ok(Self {
            m,
            c: vec![c; m * m],
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.len();
        let mut c = Vec::with_capacity(m * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::Validation("power matrix must be square".into()));
            }
            c.extend_from_slice(row);
        }
        for i in 0..m {
            for j in 0..m {
                if !(c[i * m + j] > T::zero()) {
                    return Err(Error::Validation(
                        "power entries must be positive".into(),
                    ));
                }
                if c[i * m + j] != c[j * m + i] {
                    return Err(Error::Validation(
                        "power matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { m, c })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.c[i * self.m + j]
    }

    /// True when every entry equals the same scalar.
    pub fn as_uniform(&self) -> Option<T> {
        let first = self.c[0];
        self.c.iter().all(|&v| v == first).then_some(first)
    }
}

/// Control parameters of the contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastConfig<T> {
    pub power: PowerMatrix<T>,
    pub r: T,
    pub n0: usize,
    pub family: Family,
    pub correction: Correction,
    pub symmetrize: bool,
}

impl<T: Real> ContrastConfig<T> {
    /// Configuration with the conventional defaults: `n0 = 512`, isotropic
    /// correction, original-K family, no symmetrization, uniform power.
    pub fn new(c: T, r: T) -> Result<Self> {
        if !(r > T::zero()) {
            return Err(Error::Validation(format!("range R must be positive, got {r}")));
        }
        Ok(Self {
            power: PowerMatrix::uniform(2, c)?,
            r,
            n0: 512,
            family: Family::OriginalK,
            correction: Correction::Isotropic,
            symmetrize: false,
        })
    }

    pub fn grid(&self) -> Result<DistanceGrid<T>> {
        DistanceGrid::new(self.r, self.n0)
    }
}

/// Raise a curve value to a power, clamping floating-point dust below zero
/// and rejecting genuinely negative bases.
fn powered<T: Real>(v: T, c: T, i: usize, j: usize) -> Result<T> {
    if v < T::zero() {
        if v > T::of(-1e-9) {
            return Ok(T::zero());
        }
        return Err(Error::NegativeBase {
            value: v.as_f64(),
            i,
            j,
        });
    }
    Ok(v.powf(c))
}

fn check_grids<T: Real>(a: &DistanceGrid<T>, b: &DistanceGrid<T>) -> Result<()> {
    if !a.matches(b) {
        return Err(Error::GridMismatch {
            n0_a: a.n0(),
            n0_b: b.n0(),
            r_a: a.r().as_f64(),
            r_b: b.r().as_f64(),
        });
    }
    Ok(())
}

/// Contrast between tabulated model curves and an empirical curve matrix:
/// `sum_{i,j} sum_k (M_ij(h_k)^c_ij - E_ij(h_k)^c_ij)^2`.
pub fn contrast<T: Real>(
    model: &ModelCurves<T>,
    empirical: &KCurveMatrix<T>,
    power: &PowerMatrix<T>,
) -> Result<T> {
    check_grids(model.grid(), empirical.grid())?;
    let m = model.num_types();
    if empirical.num_types() != m || power.dim() != m {
        return Err(Error::Validation(format!(
            "dimension mismatch: model m={m}, empirical m={}, power m={}",
            empirical.num_types(),
            power.dim()
        )));
    }
    let mut total = T::zero();
    for i in 0..m {
        for j in 0..m {
            let c = power.at(i, j);
            let me = model.entry(i, j);
            let ee = empirical.entry(i, j);
            for (&mv, &ev) in me.iter().zip(ee) {
                let d = powered(mv, c, i, j)? - powered(ev, c, i, j)?;
                total += d * d;
            }
        }
    }
    Ok(total)
}

/// Trace form of the discrepancy for a single pair of m x m matrices:
/// `Tr((A^{oC} - B^{oC})(A^{oC} - B^{oC})^T)`, evaluated literally through
/// the matrix product. Serves as an algebraic cross-check of [`contrast`].
pub fn trace_form_check<T: Real>(
    a: &[Vec<T>],
    b: &[Vec<T>],
    power: &PowerMatrix<T>,
) -> Result<T> {
    let m = a.len();
    if b.len() != m || power.dim() != m || a.iter().chain(b).any(|row| row.len() != m) {
        return Err(Error::Validation("matrices must be m x m".into()));
    }
    let mut diff = vec![vec![T::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            let c = power.at(i, j);
            diff[i][j] = powered(a[i][j], c, i, j)? - powered(b[i][j], c, i, j)?;
        }
    }
    // Tr(D D^T) via explicit product
    let mut trace = T::zero();
    for i in 0..m {
        for k in 0..m {
            trace += diff[i][k] * diff[i][k];
        }
    }
    Ok(trace)
}
