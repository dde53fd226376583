//! Exact projections onto the dual feasible sets: the per-pair l1-ball
//! constraints with zero diagonals (`C1`) and the positive semidefinite cone
//! (`C2`).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::blockmat::{BlockRow, SymBlockMatrix};
use crate::error::{Error, Result};

/// Euclidean projection of `v` onto the l1-ball of the given radius.
/// Sort-based exact method; returns `v` unchanged when already inside.
pub fn project_l1(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "radius must be positive");
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cum += u;
        let candidate = (cum - radius) / (k + 1) as f64;
        if u > candidate {
            shift = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - shift).max(0.0))
        .collect()
}

/// Projection onto `C1`: zero diagonals on every lag block, and for each
/// pair `i < j` the constraint
/// `sum_k (|(Z_k)_{ij}| + |(Z_k)_{ji}|) <= bound`.
///
/// Since `Z0` is symmetric its `(i,j)` entry enters the constraint with
/// weight 2 and the pair metric with weight 2; duplicating that coordinate
/// turns the pair problem into a standard l1-ball projection.
pub fn project_c1(z: &BlockRow, bound: f64) -> BlockRow {
    assert!(bound > 0.0, "bound must be positive");
    let (m, p) = (z.m(), z.p());
    let mut blocks: Vec<DMatrix<f64>> = z.blocks().to_vec();
    for b in blocks.iter_mut() {
        for i in 0..m {
            b[(i, i)] = 0.0;
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut v = Vec::with_capacity(2 * p + 2);
            v.push(blocks[0][(i, j)]);
            v.push(blocks[0][(i, j)]);
            for b in blocks.iter().take(p + 1).skip(1) {
                v.push(b[(i, j)]);
                v.push(b[(j, i)]);
            }
            let w = project_l1(&v, bound);
            let z0 = 0.5 * (w[0] + w[1]);
            blocks[0][(i, j)] = z0;
            blocks[0][(j, i)] = z0;
            for (k, b) in blocks.iter_mut().enumerate().take(p + 1).skip(1) {
                b[(i, j)] = w[2 * k];
                b[(j, i)] = w[2 * k + 1];
            }
        }
    }
    BlockRow::new(blocks).expect("projection preserves shape")
}

/// Worst violation of the `C1` constraints: the largest pair-budget excess
/// or diagonal magnitude. Zero (up to roundoff) on feasible points.
pub fn c1_violation(z: &BlockRow, bound: f64) -> f64 {
    let (m, p) = (z.m(), z.p());
    let mut worst: f64 = 0.0;
    for b in z.blocks() {
        for i in 0..m {
            worst = worst.max(b[(i, i)].abs());
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut total = 0.0;
            for k in 0..=p {
                total += z.block(k)[(i, j)].abs() + z.block(k)[(j, i)].abs();
            }
            worst = worst.max(total - bound);
        }
    }
    worst
}

/// Projection onto the positive semidefinite cone: eigendecompose and keep
/// the non-negative part of the spectrum.
pub fn project_psd(a: &SymBlockMatrix) -> Result<SymBlockMatrix> {
    if !a.data().iter().all(|x| x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let eig = SymmetricEigen::try_new(a.data().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure)?;
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in clamped.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    let out = scaled * eig.eigenvectors.transpose();
    SymBlockMatrix::new(a.m(), a.p(), out)
}

/// Smallest eigenvalue of a symmetric block matrix.
pub fn min_eigenvalue(a: &SymBlockMatrix) -> Result<f64> {
    if a.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let eig = SymmetricEigen::try_new(a.data().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure)?;
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent l1 projection: bisection on the soft-threshold level.
    fn project_l1_bisect(v: &[f64], radius: f64) -> Vec<f64> {
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        if l1 <= radius {
            return v.to_vec();
        }
        let residual = |t: f64| -> f64 {
            v.iter().map(|x| (x.abs() - t).max(0.0)).sum::<f64>() - radius
        };
        let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        v.iter()
            .map(|&x| x.signum() * (x.abs() - t).max(0.0))
            .collect()
    }

    /// Independent weighted pair projection: minimize
    /// `2 (x0-v0)^2 + sum (xk-vk)^2` subject to `2|x0| + sum |xk| <= r`.
    /// All coordinates share one soft-threshold level; bisect on it.
    fn project_pair_bisect(v: &[f64], radius: f64) -> Vec<f64> {
        let budget = |x: &[f64]| 2.0 * x[0].abs() + x[1..].iter().map(|y| y.abs()).sum::<f64>();
        if budget(v) <= radius {
            return v.to_vec();
        }
        let soft = |x: f64, t: f64| x.signum() * (x.abs() - t).max(0.0);
        let residual = |t: f64| -> f64 {
            let x: Vec<f64> = v.iter().map(|&y| soft(y, t)).collect();
            budget(&x) - radius
        };
        let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        v.iter().map(|&y| soft(y, t)).collect()
    }

    #[test]
    fn l1_axis_point() {
        let out = project_l1(&[3.0, 0.0], 1.0);
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn l1_symmetric_point() {
        let out = project_l1(&[1.0, 1.0], 1.0);
        assert_relative_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn l1_inside_ball_unchanged() {
        let v = [0.2, -0.3, 0.1];
        let out = project_l1(&v, 1.0);
        assert_eq!(out, v.to_vec());
    }

    #[test]
    fn l1_matches_bisection_oracle() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..50 {
            let dim = rng.random_range(1..=6);
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ours = project_l1(&v, 1.0);
            let oracle = project_l1_bisect(&v, 1.0);
            for (a, b) in ours.iter().zip(&oracle) {
                assert_relative_eq!(a, b, epsilon = 1e-6);
            }
            // Projection characterization: <v - Pv, y - Pv> <= 0 for
            // feasible y.
            for _ in 0..50 {
                let mut y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let l1: f64 = y.iter().map(|x| x.abs()).sum();
                if l1 > 1.0 {
                    let s = rng.random_range(0.0..1.0) / l1;
                    y.iter_mut().for_each(|x| *x *= s);
                }
                let ip: f64 = v
                    .iter()
                    .zip(&ours)
                    .zip(&y)
                    .map(|((vi, pi), yi)| (vi - pi) * (yi - pi))
                    .sum();
                assert!(ip <= 1e-9, "variational inequality violated: {ip}");
            }
        }
    }

    #[test]
    fn psd_diagonal_example() {
        let a = SymBlockMatrix::new(2, 0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]))
            .unwrap();
        let out = project_psd(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!((out.data() - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_input_unchanged() {
        let mut rng = StdRng::seed_from_u64(13);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let spd = &raw * raw.transpose() + DMatrix::identity(3, 3) * 0.1;
        let a = SymBlockMatrix::new(3, 0, spd).unwrap();
        let out = project_psd(&a).unwrap();
        assert!(out.sub(&a).norm_fro() <= 1e-10 * (1.0 + a.norm_fro()));
    }

    /// Closed-form nearest-PSD for 2x2 symmetric matrices.
    fn psd_2x2_oracle(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        let half_gap = 0.5 * (a - c);
        let mean = 0.5 * (a + c);
        let r = (half_gap * half_gap + b * b).sqrt();
        let (l1, l2) = (mean + r, mean - r);
        let mut out = DMatrix::zeros(2, 2);
        for &l in &[l1, l2] {
            if l <= 0.0 {
                continue;
            }
            // Eigenvector for eigenvalue l.
            let (vx, vy) = if b.abs() > 1e-300 {
                (b, l - a)
            } else if a >= c {
                if l == l1 {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            } else if l == l1 {
                (0.0, 1.0)
            } else {
                (1.0, 0.0)
            };
            let norm = (vx * vx + vy * vy).sqrt();
            let (vx, vy) = (vx / norm, vy / norm);
            out[(0, 0)] += l * vx * vx;
            out[(0, 1)] += l * vx * vy;
            out[(1, 0)] += l * vy * vx;
            out[(1, 1)] += l * vy * vy;
        }
        out
    }

    #[test]
    fn psd_matches_2x2_closed_form() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..50 {
            let (a, b, c) = (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let mat = SymBlockMatrix::new(2, 0, DMatrix::from_row_slice(2, 2, &[a, b, b, c]))
                .unwrap();
            let ours = project_psd(&mat).unwrap();
            let oracle = psd_2x2_oracle(a, b, c);
            assert_relative_eq!((ours.data() - oracle).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn psd_idempotent_and_psd_output() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let a = SymBlockMatrix::new(3, 0, raw).unwrap();
            let once = project_psd(&a).unwrap();
            let twice = project_psd(&once).unwrap();
            assert!(twice.sub(&once).norm_fro() <= 1e-10 * (1.0 + once.norm_fro()));
            let min_eig = min_eigenvalue(&once).unwrap();
            let spectral_scale = a.data().norm();
            assert!(min_eig >= -1e-10 * spectral_scale.max(1.0));
        }
    }

    #[test]
    fn c1_feasible_point_only_diagonal_zeroed() {
        let mut z0 = DMatrix::zeros(3, 3);
        z0[(0, 1)] = 0.1;
        z0[(1, 0)] = 0.1;
        z0[(0, 0)] = 0.5; // diagonal entry to be zeroed
        let z1 = DMatrix::from_fn(3, 3, |i, j| if i != j { 0.05 } else { 0.7 });
        let z = BlockRow::new(vec![z0, z1]).unwrap();
        let out = project_c1(&z, 2.0);
        for k in 0..=1 {
            for i in 0..3 {
                assert_eq!(out.block(k)[(i, i)], 0.0);
            }
        }
        // Off-diagonals were feasible, so they survive unchanged.
        assert_relative_eq!(out.block(0)[(0, 1)], 0.1, epsilon = 1e-14);
        assert_relative_eq!(out.block(1)[(2, 0)], 0.05, epsilon = 1e-14);
    }

    #[test]
    fn c1_scalar_pair_case() {
        let z0 = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        let z = BlockRow::new(vec![z0]).unwrap();
        let out = project_c1(&z, 2.0);
        assert_relative_eq!(out.block(0)[(0, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.block(0)[(1, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn c1_random_feasibility_and_pair_oracle() {
        let mut rng = StdRng::seed_from_u64(37);
        let bound = 0.8;
        for _ in 0..30 {
            let (m, p) = (3, 1);
            let blocks: Vec<DMatrix<f64>> = (0..=p)
                .map(|_| DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.5..1.5)))
                .collect();
            let z = BlockRow::new(blocks).unwrap();
            let out = project_c1(&z, bound);
            assert!(c1_violation(&out, bound) <= 1e-12);
            // Per-pair oracle in the weighted geometry.
            for i in 0..m {
                for j in (i + 1)..m {
                    let v = [
                        z.block(0)[(i, j)],
                        z.block(1)[(i, j)],
                        z.block(1)[(j, i)],
                    ];
                    let oracle = project_pair_bisect(&v, bound);
                    assert_relative_eq!(out.block(0)[(i, j)], oracle[0], epsilon = 1e-6);
                    assert_relative_eq!(out.block(1)[(i, j)], oracle[1], epsilon = 1e-6);
                    assert_relative_eq!(out.block(1)[(j, i)], oracle[2], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn c1_idempotent() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..10 {
            let blocks: Vec<DMatrix<f64>> = (0..=2)
                .map(|_| DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let z = BlockRow::new(blocks).unwrap();
            let once = project_c1(&z, 0.5);
            let twice = project_c1(&once, 0.5);
            assert!(twice.sub(&once).norm() <= 1e-10 * (1.0 + once.norm()));
        }
    }

    proptest! {
        #[test]
        fn l1_shrinks_and_keeps_signs(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed);
            let dim = rng.random_range(1..=8);
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = project_l1(&v, 1.0);
            let l1: f64 = out.iter().map(|x| x.abs()).sum();
            prop_assert!(l1 <= 1.0 + 1e-12);
            for (a, b) in v.iter().zip(&out) {
                prop_assert!(b.abs() <= a.abs() + 1e-15);
                prop_assert!(*b == 0.0 || a.signum() == b.signum());
            }
        }

        #[test]
        fn l1_nonexpansive(seed in 0u64..200) {
            let mut rng = StdRng::seed_from_u64(seed);
            let dim = rng.random_range(1..=6);
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let pa = project_l1(&a, 1.0);
            let pb = project_l1(&b, 1.0);
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!(dp <= d + 1e-12);
        }

        #[test]
        fn psd_nonexpansive(seed in 0u64..100) {
            let mut rng = StdRng::seed_from_u64(seed);
            let raw_a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let raw_b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let a = SymBlockMatrix::new(3, 0, raw_a).unwrap();
            let b = SymBlockMatrix::new(3, 0, raw_b).unwrap();
            let pa = project_psd(&a).unwrap();
            let pb = project_psd(&b).unwrap();
            prop_assert!(pa.sub(&pb).norm_fro() <= a.sub(&b).norm_fro() + 1e-12);
        }

        #[test]
        fn c1_nonexpansive(seed in 0u64..100) {
            let mut rng = StdRng::seed_from_u64(seed);
            let mk = |rng: &mut StdRng| {
                let blocks: Vec<DMatrix<f64>> = (0..=1)
                    .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)))
                    .collect();
                BlockRow::new(blocks).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            // Compare after removing the diagonal subspace, on which the
            // projection is constant.
            let strip = |z: &BlockRow| {
                let mut blocks = z.blocks().to_vec();
                for bl in blocks.iter_mut() {
                    for i in 0..3 {
                        bl[(i, i)] = 0.0;
                    }
                }
                BlockRow::new(blocks).unwrap()
            };
            let pa = project_c1(&a, 0.7);
            let pb = project_c1(&b, 0.7);
            let d = strip(&a).sub(&strip(&b)).norm();
            prop_assert!(pa.sub(&pb).norm() <= d + 1e-12);
        }
    }
}
