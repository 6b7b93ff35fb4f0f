//! Nonparametric marginal and cross K-function estimators with three edge
//! corrections, plus the intensity-scaled Q-matrix estimator.
//!
//! All estimators share one counting kernel: pairs are found once, assigned
//! a per-pair weight and inclusion rule depending on the correction, bucketed
//! onto the distance grid, and turned into cumulative curves. The intensity
//! estimates always use the full window, including for the border correction.

use num_traits::Float;

use crate::curves::{Correction, DistanceGrid, KCurveMatrix};
use crate::error::{Error, Result};
use crate::geometry::{pairwise_within, Point, PointPattern, RectWindow};
use crate::scalar::Real;

/// Fraction of the circle of radius `t` centred at `p` that lies inside the
/// rectangle, computed by arc-angle subtraction over the four half-planes
/// with corner-overlap corrections.
pub fn circle_inside_fraction<T: Real>(window: &RectWindow<T>, p: &Point<T>, t: T) -> T {
    debug_assert!(window.contains(p.x, p.y));
    if t <= T::zero() {
        return T::one();
    }
    // distances to the four sides: left, right, bottom, top
    let d = [
        p.x - window.xmin,
        window.xmax - p.x,
        p.y - window.ymin,
        window.ymax - p.y,
    ];
    let half = |di: T| -> T {
        if di < t {
            Float::acos((di / t).min(T::one()))
        } else {
            T::zero()
        }
    };
    let a = [half(d[0]), half(d[1]), half(d[2]), half(d[3])];
    let mut outside = T::zero();
    for ai in a {
        outside += T::of(2.0) * ai;
    }
    // adjacent side pairs share a corner; subtract their double-counted arc
    let half_pi = T::of(std::f64::consts::FRAC_PI_2);
    for (s, v) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        if d[s] * d[s] + d[v] * d[v] < t * t {
            outside -= a[s] + a[v] - half_pi;
        }
    }
    let two_pi = T::of(std::f64::consts::TAU);
    (T::one() - outside / two_pi).max(T::zero())
}

fn intensities_checked<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
) -> Result<(T, T)> {
    let counts = pattern.counts();
    for t in [i, j] {
        if counts[t] == 0 {
            return Err(Error::ZeroIntensity { type_index: t });
        }
    }
    let lambda = pattern.intensity_estimates();
    Ok((lambda[i], lambda[j]))
}

/// Cumulative curve from per-pair (distance, weight) contributions.
fn accumulate<T: Real>(
    grid: &DistanceGrid<T>,
    contributions: impl Iterator<Item = (T, T)>,
    normalizer: T,
) -> Vec<T> {
    let mut hist = vec![T::zero(); grid.n0()];
    for (d, w) in contributions {
        hist[grid.bucket_of(d) - 1] += w;
    }
    let mut acc = T::zero();
    hist.iter()
        .map(|&h| {
            acc += h;
            acc * normalizer
        })
        .collect()
}

/// Uncorrected estimator: pair counts over the full window, normalized by
/// `|D| lambda_i lambda_j`.
pub fn k_naive<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
    grid: &DistanceGrid<T>,
) -> Result<Vec<T>> {
    let (li, lj) = intensities_checked(pattern, i, j)?;
    let norm = T::one() / (pattern.window().area() * li * lj);
    let pairs = pairwise_within(pattern, i, j, grid.r());
    Ok(accumulate(
        grid,
        pairs.iter().map(|p| (p.dist, T::one())),
        norm,
    ))
}

/// Minus-sampling estimator: sources restricted to the inner window of depth
/// `R` (one erosion depth for the whole grid), normalized by
/// `|D_0| lambda_i lambda_j` with intensities from the full window.
pub fn k_border<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
    grid: &DistanceGrid<T>,
) -> Result<Vec<T>> {
    let inner = pattern.window().erode(grid.r())?;
    let (li, lj) = intensities_checked(pattern, i, j)?;
    let norm = T::one() / (inner.area() * li * lj);
    let pairs = pairwise_within(pattern, i, j, grid.r());
    Ok(accumulate(
        grid,
        pairs
            .iter()
            .filter(|p| inner.contains(p.source.x, p.source.y))
            .map(|p| (p.dist, T::one())),
        norm,
    ))
}

/// Ripley's isotropic estimator: each pair weighted by the reciprocal of the
/// circle fraction inside the window.
pub fn k_isotropic<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
    grid: &DistanceGrid<T>,
) -> Result<Vec<T>> {
    let (li, lj) = intensities_checked(pattern, i, j)?;
    let window = pattern.window();
    let norm = T::one() / (window.area() * li * lj);
    let pairs = pairwise_within(pattern, i, j, grid.r());
    let mut weighted = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let frac = circle_inside_fraction(window, &p.source, p.dist);
        if frac <= T::zero() {
            return Err(Error::WeightOverflow {
                dist: p.dist.as_f64(),
            });
        }
        weighted.push((p.dist, T::one() / frac));
    }
    Ok(accumulate(grid, weighted.into_iter(), norm))
}

/// One estimator entry under the requested correction.
pub fn k_entry<T: Real>(
    pattern: &PointPattern<T>,
    i: usize,
    j: usize,
    grid: &DistanceGrid<T>,
    correction: Correction,
) -> Result<Vec<T>> {
    match correction {
        Correction::None => k_naive(pattern, i, j, grid),
        Correction::Border => k_border(pattern, i, j, grid),
        Correction::Isotropic => k_isotropic(pattern, i, j, grid),
    }
}

/// Full m x m curve matrix of K estimates.
pub fn k_matrix<T: Real>(
    pattern: &PointPattern<T>,
    grid: &DistanceGrid<T>,
    correction: Correction,
) -> Result<KCurveMatrix<T>> {
    let m = pattern.num_types();
    let mut out = KCurveMatrix::zeros(*grid, m, correction, false);
    for i in 0..m {
        for j in 0..m {
            let curve = k_entry(pattern, i, j, grid, correction)?;
            out.entry_mut(i, j).copy_from_slice(&curve);
        }
    }
    Ok(out)
}

/// Intensity-scaled estimator `Q_ij = lambda_i lambda_j K_ij`, optionally
/// symmetrized as `(Q + Q^T) / 2`.
pub fn q_hat<T: Real>(
    pattern: &PointPattern<T>,
    grid: &DistanceGrid<T>,
    correction: Correction,
    symmetrize: bool,
) -> Result<KCurveMatrix<T>> {
    let k = k_matrix(pattern, grid, correction)?;
    let q = k.scale_by_intensities(&pattern.intensity_estimates());
    Ok(if symmetrize { q.symmetrized() } else { q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit10() -> RectWindow<f64> {
        RectWindow::square(0.0, 10.0).unwrap()
    }

    /// Two type-0 points at distance 1 plus one type-1 point.
    fn toy_pattern() -> PointPattern<f64> {
        PointPattern::new(
            vec![
                Point::new(1.0, 1.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 2.0),
            ],
            vec![0, 0, 1],
            2,
            unit10(),
        )
        .unwrap()
    }

    #[test]
    fn naive_marginal_hand_count() {
        let grid = DistanceGrid::new(1.5, 1).unwrap();
        let k = k_naive(&toy_pattern(), 0, 0, &grid).unwrap();
        // 2 ordered pairs / (100 * 0.02^2) = 50
        assert_relative_eq!(k[0], 50.0, max_relative = 1e-12);
    }

    #[test]
    fn naive_cross_hand_count() {
        let grid = DistanceGrid::new(1.5, 1).unwrap();
        let k = k_naive(&toy_pattern(), 0, 1, &grid).unwrap();
        // pairs at distances 1 and sqrt(2): 2 / (100 * 0.02 * 0.01) = 100
        assert_relative_eq!(k[0], 100.0, max_relative = 1e-12);
    }

    #[test]
    fn curve_is_zero_below_minimal_distance() {
        let grid = DistanceGrid::new(2.0, 10).unwrap();
        let k = k_naive(&toy_pattern(), 0, 0, &grid).unwrap();
        for (k1, h) in k.iter().zip(grid.nodes()) {
            if h < 1.0 {
                assert_eq!(*k1, 0.0);
            }
        }
    }

    #[test]
    fn zero_intensity_is_rejected() {
        let pat = PointPattern::new(
            vec![Point::new(1.0, 1.0)],
            vec![0],
            2,
            unit10(),
        )
        .unwrap();
        let grid = DistanceGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            k_naive(&pat, 0, 1, &grid),
            Err(Error::ZeroIntensity { type_index: 1 })
        ));
    }

    #[test]
    fn border_toy_pattern_has_no_interior_source() {
        let grid = DistanceGrid::new(1.5, 1).unwrap();
        let k = k_border(&toy_pattern(), 0, 0, &grid).unwrap();
        assert_eq!(k[0], 0.0);
    }

    #[test]
    fn border_center_source_hand_value() {
        let pat = PointPattern::new(
            vec![Point::new(5.0, 5.0), Point::new(5.0, 6.0)],
            vec![0, 1],
            2,
            unit10(),
        )
        .unwrap();
        let grid = DistanceGrid::new(1.5, 1).unwrap();
        let k = k_border(&pat, 0, 1, &grid).unwrap();
        let lambda = 0.01;
        assert_relative_eq!(k[0], 1.0 / (49.0 * lambda * lambda), max_relative = 1e-12);
    }

    #[test]
    fn border_erosion_too_deep_fails() {
        let pat = toy_pattern();
        let grid = DistanceGrid::new(5.0, 1).unwrap();
        assert!(matches!(
            k_border(&pat, 0, 0, &grid),
            Err(Error::EmptyErosion { .. })
        ));
    }

    #[test]
    fn interior_pair_has_unit_weight() {
        let w = unit10();
        let frac = circle_inside_fraction(&w, &Point::new(5.0, 5.0), 2.0);
        assert_relative_eq!(frac, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn corner_point_has_quarter_circle() {
        let w = unit10();
        let frac = circle_inside_fraction(&w, &Point::new(0.0, 0.0), 0.5);
        assert_relative_eq!(frac, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn edge_point_has_half_circle() {
        let w = unit10();
        let frac = circle_inside_fraction(&w, &Point::new(5.0, 0.0), 0.5);
        assert_relative_eq!(frac, 0.5, epsilon = 1e-12);
    }

    /// Monte-Carlo oracle: sample points on the circle and count the inside
    /// fraction.
    fn sampled_fraction(w: &RectWindow<f64>, p: &Point<f64>, t: f64, n: usize) -> f64 {
        let mut inside = 0usize;
        for k in 0..n {
            let ang = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
            let (s, c) = ang.sin_cos();
            if w.contains(p.x + t * c, p.y + t * s) {
                inside += 1;
            }
        }
        inside as f64 / n as f64
    }

    #[test]
    fn analytic_fraction_matches_circle_sampling() {
        let w = RectWindow::new(0.0, 7.0, 0.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let p = Point::new(rng.gen::<f64>() * 7.0, rng.gen::<f64>() * 4.0);
            let t = rng.gen::<f64>() * 3.0 + 0.05;
            let exact = circle_inside_fraction(&w, &p, t);
            let sampled = sampled_fraction(&w, &p, t, 100_000);
            assert!(
                (exact - sampled).abs() < 1e-3,
                "p=({}, {}), t={t}: exact {exact} vs sampled {sampled}",
                p.x,
                p.y
            );
        }
    }

    #[test]
    fn isotropic_equals_naive_for_interior_pairs() {
        let pat = PointPattern::new(
            vec![Point::new(5.0, 5.0), Point::new(5.5, 5.0)],
            vec![0, 0],
            1,
            unit10(),
        )
        .unwrap();
        let grid = DistanceGrid::new(1.0, 4).unwrap();
        let naive = k_naive(&pat, 0, 0, &grid).unwrap();
        let iso = k_isotropic(&pat, 0, 0, &grid).unwrap();
        for (a, b) in naive.iter().zip(&iso) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn q_hat_scales_by_intensity_product() {
        let grid = DistanceGrid::new(1.5, 1).unwrap();
        let q = q_hat(&toy_pattern(), &grid, Correction::None, false).unwrap();
        // K_01 = 100, lambda_0 lambda_1 = 0.02 * 0.01
        assert_relative_eq!(q.at(0, 1, 1), 0.02, max_relative = 1e-12);
        assert!(q.scaled);
    }

    #[test]
    fn q_hat_symmetrized_is_symmetric() {
        let grid = DistanceGrid::new(2.0, 8).unwrap();
        let q = q_hat(&toy_pattern(), &grid, Correction::None, true).unwrap();
        assert_eq!(q.entry(0, 1), q.entry(1, 0));
    }

    #[test]
    fn border_vs_naive_identity_on_padded_pattern() {
        // All points deep inside the eroded window: border and naive count the
        // same pairs, so |D0| K_border = |D| K_naive.
        let pts = vec![
            Point::new(4.8, 5.1),
            Point::new(5.3, 5.0),
            Point::new(5.1, 4.6),
            Point::new(4.9, 5.4),
        ];
        let pat = PointPattern::single_type(pts, unit10()).unwrap();
        let grid = DistanceGrid::new(1.0, 8).unwrap();
        let naive = k_naive(&pat, 0, 0, &grid).unwrap();
        let border = k_border(&pat, 0, 0, &grid).unwrap();
        let d = unit10().area();
        let d0 = unit10().erode(1.0).unwrap().area();
        for (n, b) in naive.iter().zip(&border) {
            assert_relative_eq!(d0 * b, d * n, max_relative = 1e-12);
        }
    }

    fn brute_force_entry(
        pat: &PointPattern<f64>,
        i: usize,
        j: usize,
        grid: &DistanceGrid<f64>,
        correction: Correction,
    ) -> Result<Vec<f64>> {
        let counts = pat.counts();
        if counts[i] == 0 || counts[j] == 0 {
            return Err(Error::ZeroIntensity {
                type_index: if counts[i] == 0 { i } else { j },
            });
        }
        let lambda = pat.intensity_estimates();
        let window = pat.window();
        let (area, inner) = match correction {
            Correction::Border => {
                let inner = window.erode(grid.r())?;
                (inner.area(), Some(inner))
            }
            _ => (window.area(), None),
        };
        let norm = 1.0 / (area * lambda[i] * lambda[j]);
        let src = pat.points_of(i);
        let tgt = pat.points_of(j);
        let mut out = Vec::with_capacity(grid.n0());
        for h in grid.nodes() {
            let mut sum = 0.0;
            for s in &src {
                if let Some(inner) = &inner {
                    if !inner.contains(s.x, s.y) {
                        continue;
                    }
                }
                for t in &tgt {
                    let d = s.dist(t);
                    if d > 0.0 && d <= h {
                        sum += match correction {
                            Correction::Isotropic => {
                                1.0 / circle_inside_fraction(window, s, d)
                            }
                            _ => 1.0,
                        };
                    }
                }
            }
            out.push(sum * norm);
        }
        Ok(out)
    }

    proptest! {
        #[test]
        fn estimators_match_brute_force(
            pts in proptest::collection::vec((0.5f64..9.5, 0.5f64..9.5, 0usize..2), 2..50),
            r in 0.2f64..3.0,
        ) {
            let points: Vec<Point<f64>> = pts.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
            let marks: Vec<usize> = pts.iter().map(|&(_, _, m)| m).collect();
            let pat = PointPattern::new(points, marks, 2, unit10()).unwrap();
            let grid = DistanceGrid::new(r, 16).unwrap();
            for correction in [Correction::None, Correction::Border, Correction::Isotropic] {
                for i in 0..2 {
                    for j in 0..2 {
                        let fast = k_entry(&pat, i, j, &grid, correction);
                        let slow = brute_force_entry(&pat, i, j, &grid, correction);
                        match (fast, slow) {
                            (Ok(f), Ok(s)) => {
                                for (a, b) in f.iter().zip(&s) {
                                    let scale = b.abs().max(1.0);
                                    prop_assert!((a - b).abs() <= 1e-12 * scale,
                                        "corr {correction}: {a} vs {b}");
                                }
                            }
                            (Err(_), Err(_)) => {}
                            (f, s) => prop_assert!(false, "outcome mismatch: {f:?} vs {s:?}"),
                        }
                    }
                }
            }
        }

        #[test]
        fn curves_are_nondecreasing(
            pts in proptest::collection::vec((0.5f64..9.5, 0.5f64..9.5, 0usize..2), 2..40),
        ) {
            let points: Vec<Point<f64>> = pts.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
            let marks: Vec<usize> = pts.iter().map(|&(_, _, m)| m).collect();
            let pat = PointPattern::new(points, marks, 2, unit10()).unwrap();
            let grid = DistanceGrid::new(2.5, 32).unwrap();
            for correction in [Correction::None, Correction::Border, Correction::Isotropic] {
                if let Ok(m) = k_matrix(&pat, &grid, correction) {
                    for i in 0..2 {
                        for j in 0..2 {
                            let e = m.entry(i, j);
                            for w in e.windows(2) {
                                prop_assert!(w[1] >= w[0]);
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn naive_cross_counts_are_symmetric(
            pts in proptest::collection::vec((0.5f64..9.5, 0.5f64..9.5, 0usize..2), 2..40),
        ) {
            let points: Vec<Point<f64>> = pts.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
            let marks: Vec<usize> = pts.iter().map(|&(_, _, m)| m).collect();
            let pat = PointPattern::new(points, marks, 2, unit10()).unwrap();
            let grid = DistanceGrid::new(2.0, 16).unwrap();
            if let (Ok(kij), Ok(kji)) = (k_naive(&pat, 0, 1, &grid), k_naive(&pat, 1, 0, &grid)) {
                let lambda = pat.intensity_estimates();
                let area = pat.window().area();
                for (a, b) in kij.iter().zip(&kji) {
                    let ca = lambda[0] * lambda[1] * area * a;
                    let cb = lambda[1] * lambda[0] * area * b;
                    prop_assert!((ca - cb).abs() < 1e-9);
                }
            }
        }
    }
}
