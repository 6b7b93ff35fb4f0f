//! Rectangular observation windows, multitype point patterns, and the
//! shared pair-search kernel used by every K-function estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned rectangular observation window (planar, d = 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectWindow<T> {
    pub xmin: T,
    pub xmax: T,
    pub ymin: T,
    pub ymax: T,
}

impl<T: Real> RectWindow<T> {
    pub fn new(xmin: T, xmax: T, ymin: T, ymax: T) -> Result<Self> {
        if !(xmax > xmin && ymax > ymin) {
            return Err(Error::Validation(format!(
                "window must have xmax > xmin and ymax > ymin, got [{xmin},{xmax}]x[{ymin},{ymax}]"
            )));
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    /// Square window `[lo,hi]^2`.
    pub fn square(lo: T, hi: T) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Closed containment test.
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    /// Minimum distance from an interior point to the window boundary.
    pub fn boundary_depth(&self, x: T, y: T) -> T {
        (x - self.xmin)
            .min(self.xmax - x)
            .min(y - self.ymin)
            .min(self.ymax - y)
    }

    /// Inner window obtained by moving every side inward by `depth`.
    pub fn erode(&self, depth: T) -> Result<Self> {
        if depth < T::zero() {
            return Err(Error::Validation(format!(
                "erosion depth must be nonnegative, got {depth}"
            )));
        }
        let two = T::of(2.0);
        if two * depth >= self.width() || two * depth >= self.height() {
            return Err(Error::EmptyErosion {
                depth: depth.as_f64(),
                width: self.width().as_f64(),
                height: self.height().as_f64(),
            });
        }
        Ok(Self {
            xmin: self.xmin + depth,
            xmax: self.xmax - depth,
            ymin: self.ymin + depth,
            ymax: self.ymax - depth,
        })
    }
}

/// A planar location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Estimated first-order intensities, one entry per type: `N_i / |D|`.
pub type IntensityVector<T> = Vec<T>;

/// Multitype point pattern observed in a rectangular window.
///
/// Marks are stored 0-based internally; file formats expose 1-based marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern<T> {
    points: Vec<Point<T>>,
    marks: Vec<usize>,
    num_types: usize,
    window: RectWindow<T>,
}

impl<T: Real> PointPattern<T> {
    /// Build a validated pattern. Every point must lie inside the closed
    /// window and every mark must be `< num_types`.
    pub fn new(
        points: Vec<Point<T>>,
        marks: Vec<usize>,
        num_types: usize,
        window: RectWindow<T>,
    ) -> Result<Self> {
        if points.len() != marks.len() {
            return Err(Error::Validation(format!(
                "points ({}) and marks ({}) differ in length",
                points.len(),
                marks.len()
            )));
        }
        if num_types == 0 {
            return Err(Error::Validation("num_types must be >= 1".into()));
        }
        for (idx, p) in points.iter().enumerate() {
            if !window.contains(p.x, p.y) {
                return Err(Error::Validation(format!(
                    "point {idx} at ({}, {}) lies outside the window",
                    p.x, p.y
                )));
            }
        }
        if let Some(&bad) = marks.iter().find(|&&m| m >= num_types) {
            return Err(Error::Validation(format!(
                "mark index {bad} out of range for {num_types} types"
            )));
        }
        Ok(Self {
            points,
            marks,
            num_types,
            window,
        })
    }

    /// Single-type pattern from bare locations.
    pub fn single_type(points: Vec<Point<T>>, window: RectWindow<T>) -> Result<Self> {
        let marks = vec![0; points.len()];
        Self::new(points, marks, 1, window)
    }

    pub fn window(&self) -> &RectWindow<T> {
        &self.window
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    /// Number of points per type.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.num_types];
        for &m in &self.marks {
            c[m] += 1;
        }
        c
    }

    /// Locations of one type, in pattern order.
    pub fn points_of(&self, type_index: usize) -> Vec<Point<T>> {
        self.points
            .iter()
            .zip(&self.marks)
            .filter(|(_, &m)| m == type_index)
            .map(|(p, _)| *p)
            .collect()
    }

    /// First-order intensity estimates `N_i / |D|`.
    pub fn intensity_estimates(&self) -> IntensityVector<T> {
        let area = self.window.area();
        self.counts()
            .into_iter()
            .map(|n| T::from_usize(n).unwrap() / area)
            .collect()
    }
}

/// One ordered pair found by [`pairwise_within`]: the source point and the
/// pair distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord<T> {
    pub source: Point<T>,
    pub dist: T,
}

/// All ordered pairs `(x in X_i, y in X_j)` with `0 < |x - y| <= rmax`.
///
/// Self-pairs and coincident duplicates are excluded by the `0 <` predicate.
/// A uniform bucket grid with cell size `rmax` accelerates the search; the
/// result is identical to the O(n^2) double loop.
pub fn pairwise_within<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
    rmax: T,
) -> Vec<PairRecord<T>> {
    assert!(rmax > T::zero(), "rmax must be positive");
    let sources = pattern.points_of(i);
    let targets = pattern.points_of(j);
    if sources.is_empty() || targets.is_empty() {
        return Vec::new();
    }

    let w = pattern.window();
    let nx = ((w.width() / rmax).ceil().as_f64() as usize).max(1);
    let ny = ((w.height() / rmax).ceil().as_f64() as usize).max(1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    let cell_of = |p: &Point<T>| -> (usize, usize) {
        let cx = ((p.x - w.xmin) / rmax).floor().as_f64() as usize;
        let cy = ((p.y - w.ymin) / rmax).floor().as_f64() as usize;
        (cx.min(nx - 1), cy.min(ny - 1))
    };
    for (idx, p) in targets.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * nx + cx].push(idx);
    }

    let mut out = Vec::new();
    for src in &sources {
        let (cx, cy) = cell_of(src);
        let x0 = cx.saturating_sub(1);
        let y0 = cy.saturating_sub(1);
        for by in y0..=(cy + 1).min(ny - 1) {
            for bx in x0..=(cx + 1).min(nx - 1) {
                for &t in &buckets[by * nx + bx] {
                    let d = src.dist(&targets[t]);
                    if d > T::zero() && d <= rmax {
                        out.push(PairRecord {
                            source: *src,
                            dist: d,
                        });
                    }
                }
            }
        }
    }
    out
}
