//! Distance grids and tabulated curve matrices shared by the estimators,
//! the parametric model, and the contrast.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Evaluation nodes `h_k = R k / n0` for `k = 1..n0`; node 0 is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid<T> {
    r: T,
    n0: usize,
}

impl<T: Real> DistanceGrid<T> {
    pub fn new(r: T, n0: usize) -> Result<Self> {
        if !(r > T::zero()) {
            return Err(Error::Validation(format!("grid range must be positive, got {r}")));
        }
        if n0 == 0 {
            return Err(Error::Validation("grid size n0 must be >= 1".into()));
        }
        Ok(Self { r, n0 })
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Node spacing `R / n0`, also the Riemann-sum width.
    pub fn step(&self) -> T {
        self.r / T::from_usize(self.n0).unwrap()
    }

    /// `h_k` for 1-based `k`.
    pub fn node(&self, k: usize) -> T {
        debug_assert!(k >= 1 && k <= self.n0);
        self.r * T::from_usize(k).unwrap() / T::from_usize(self.n0).unwrap()
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (1..=self.n0).map(move |k| self.node(k))
    }

    /// Smallest node index whose node is >= `d`, clamped to `1..=n0`.
    /// Pairs at distance `d` contribute to all nodes `h_k >= d`.
    pub fn bucket_of(&self, d: T) -> usize {
        let k = (d / self.step()).ceil().as_f64() as usize;
        k.clamp(1, self.n0)
    }

    pub fn matches(&self, other: &Self) -> bool {
        self.n0 == other.n0 && self.r == other.r
    }
}

/// Edge-correction mode of an empirical curve matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    /// No correction (negatively biased near the boundary).
    None,
    /// Minus sampling: sources restricted to the inner window of depth R.
    Border,
    /// Ripley's circumference-fraction reweighting.
    #[default]
    Isotropic,
}

impl std::fmt::Display for Correction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correction::None => write!(f, "none"),
            Correction::Border => write!(f, "border"),
            Correction::Isotropic => write!(f, "isotropic"),
        }
    }
}

/// An m x m matrix of estimated curves tabulated on a distance grid.
///
/// `scaled` marks intensity-scaled Q-curves as opposed to plain K-curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCurveMatrix<T> {
    grid: DistanceGrid<T>,
    m: usize,
    values: Vec<T>,
    pub correction: Correction,
    pub scaled: bool,
}

impl<T: Real> KCurveMatrix<T> {
    pub fn zeros(grid: DistanceGrid<T>, m: usize, correction: Correction, scaled: bool) -> Self {
        Self {
            grid,
            m,
            values: vec![T::zero(); m * m * grid.n0()],
            correction,
            scaled,
        }
    }

    pub fn grid(&self) -> &DistanceGrid<T> {
        &self.grid
    }

    pub fn num_types(&self) -> usize {
        self.m
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.m && j < self.m);
        (i * self.m + j) * self.grid.n0()
    }

    /// Curve for the ordered type pair `(i, j)`, one value per grid node.
    pub fn entry(&self, i: usize, j: usize) -> &[T] {
        let o = self.offset(i, j);
        &self.values[o..o + self.grid.n0()]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = self.offset(i, j);
        let n0 = self.grid.n0();
        &mut self.values[o..o + n0]
    }

    /// Value at node `k` (1-based).
    pub fn at(&self, i: usize, j: usize, k: usize) -> T {
        self.values[self.offset(i, j) + (k - 1)]
    }

    /// Entrywise scaling of the whole matrix: `out_ij = factors[i] * factors[j] * in_ij`.
    pub fn scale_by_intensities(&self, factors: &[T]) -> Self {
        assert_eq!(factors.len(), self.m);
        let mut out = self.clone();
        for i in 0..self.m {
            for j in 0..self.m {
                let f = factors[i] * factors[j];
                for v in out.entry_mut(i, j) {
                    *v = *v * f;
                }
            }
        }
        out.scaled = true;
        out
    }

    /// Symmetrization `(M + M^T) / 2`, applied nodewise.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        let half = T::of(0.5);
        for i in 0..self.m {
            for j in (i + 1)..self.m {
                for k in 0..self.grid.n0() {
                    let a = self.values[self.offset(i, j) + k];
                    let b = self.values[self.offset(j, i) + k];
                    let v = (a + b) * half;
                    let oij = out.offset(i, j);
                    let oji = out.offset(j, i);
                    out.values[oij + k] = v;
                    out.values[oji + k] = v;
                }
            }
        }
        out
    }
}

/// Parametric curve matrix with per-parameter gradients, tabulated on a grid.
///
/// `p` is the parameter count; gradients are stored per (i, j, node).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurves<T> {
    grid: DistanceGrid<T>,
    m: usize,
    p: usize,
    values: Vec<T>,
    grads: Vec<T>,
}

impl<T: Real> ModelCurves<T> {
    pub fn zeros(grid: DistanceGrid<T>, m: usize, p: usize) -> Self {
        Self {
            grid,
            m,
            p,
            values: vec![T::zero(); m * m * grid.n0()],
            grads: vec![T::zero(); m * m * grid.n0() * p],
        }
    }

    pub fn grid(&self) -> &DistanceGrid<T> {
        &self.grid
    }

    pub fn num_types(&self) -> usize {
        self.m
    }

    pub fn num_params(&self) -> usize {
        self.p
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.m + j) * self.grid.n0()
    }

    pub fn entry(&self, i: usize, j: usize) -> &[T] {
        let o = self.offset(i, j);
        &self.values[o..o + self.grid.n0()]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = self.offset(i, j);
        let n0 = self.grid.n0();
        &mut self.values[o..o + n0]
    }

    /// Gradient of entry `(i, j)` at node `k` (1-based): a slice of length `p`.
    pub fn grad(&self, i: usize, j: usize, k: usize) -> &[T] {
        let o = (self.offset(i, j) + (k - 1)) * self.p;
        &self.grads[o..o + self.p]
    }

    pub fn grad_mut(&mut self, i: usize, j: usize, k: usize) -> &mut [T] {
        let o = (self.offset(i, j) + (k - 1)) * self.p;
        let p = self.p;
        &mut self.grads[o..o + p]
    }

    /// Repackage the values as an empirical-style curve matrix (used by
    /// synthetic self-consistency checks that feed model curves back in as
    /// data).
    pub fn to_kcurves(&self, correction: Correction, scaled: bool) -> KCurveMatrix<T> {
        let mut out = KCurveMatrix::zeros(self.grid, self.m, correction, scaled);
        for i in 0..self.m {
            for j in 0..self.m {
                out.entry_mut(i, j).copy_from_slice(self.entry(i, j));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_exclude_zero_and_end_at_r() {
        let g = DistanceGrid::new(2.0, 4).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.step(), 0.5);
    }

    #[test]
    fn bucket_assigns_pairs_to_first_covering_node() {
        let g = DistanceGrid::new(2.0, 4).unwrap();
        assert_eq!(g.bucket_of(0.2), 1);
        assert_eq!(g.bucket_of(0.5), 1);
        assert_eq!(g.bucket_of(0.50001), 2);
        assert_eq!(g.bucket_of(2.0), 4);
    }

    #[test]
    fn symmetrize_is_identity_on_symmetric_input() {
        let g = DistanceGrid::new(1.0, 3).unwrap();
        let mut m = KCurveMatrix::zeros(g, 2, Correction::None, false);
        m.entry_mut(0, 1).copy_from_slice(&[1.0, 2.0, 3.0]);
        m.entry_mut(1, 0).copy_from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(m.symmetrized(), m);
    }

    #[test]
    fn symmetrize_output_is_exactly_symmetric() {
        let g = DistanceGrid::new(1.0, 2).unwrap();
        let mut m = KCurveMatrix::zeros(g, 2, Correction::None, false);
        m.entry_mut(0, 1).copy_from_slice(&[1.0, 4.0]);
        m.entry_mut(1, 0).copy_from_slice(&[3.0, 8.0]);
        let s = m.symmetrized();
        assert_eq!(s.entry(0, 1), s.entry(1, 0));
        assert_eq!(s.entry(0, 1), &[2.0, 6.0]);
    }
}
