// SPDX-License-Identifier: MIT OR Apache-2.0

//! One-sided Jacobi SVD and the rank-truncated pseudoinverse used for
//! causal edits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `W = U diag(s) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Hestenes one-sided Jacobi: rotates column pairs of a working copy until
/// all columns are mutually orthogonal, accumulating the rotations in `V`.
fn jacobi_tall(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let x = work[(i, p)];
                    let y = work[(i, q)];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let x = work[(i, p)];
                    let y = work[(i, q)];
                    work[(i, p)] = c * x - s * y;
                    work[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| work.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = DMatrix::zeros(m, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singular_values.push(sigma);
        if sigma > 0.0 {
            u.set_column(dst, &(work.column(src) / sigma));
        }
        v_sorted.set_column(dst, &v.column(src));
    }
    Svd {
        u,
        singular_values,
        v: v_sorted,
    }
}

/// Thin SVD of any matrix; `k = min(rows, cols)` triplets are returned.
pub fn svd(w: &DMatrix<f64>) -> Svd {
    let (m, n) = w.shape();
    if m >= n {
        jacobi_tall(w)
    } else {
        let t = jacobi_tall(&w.transpose());
        Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        }
    }
}

/// Pseudoinverse keeping the top `rank` singular triplets of `w`. Retained
/// singular values below [`SINGULAR_CUTOFF`]`·σ_max` are dropped.
pub fn low_rank_pinv(w: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let max = w.nrows().min(w.ncols());
    if rank == 0 || rank > max {
        return Err(Error::Rank { rank, max });
    }
    let d = svd(w);
    let sigma_max = d.singular_values.first().copied().unwrap_or(0.0);
    let mut pinv = DMatrix::zeros(w.ncols(), w.nrows());
    for i in 0..rank {
        let sigma = d.singular_values[i];
        if sigma <= SINGULAR_CUTOFF * sigma_max || sigma == 0.0 {
            continue;
        }
        pinv += d.v.column(i) * d.u.column(i).transpose() / sigma;
    }
    Ok(pinv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Independent route: eigendecomposition of WᵀW gives V and σ², then
    /// U = W V / σ.
    fn eigen_pinv(w: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
        let gram = w.transpose() * w;
        let eig = gram.symmetric_eigen();
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut pinv = DMatrix::zeros(w.ncols(), w.nrows());
        for &i in idx.iter().take(rank) {
            let sigma = eig.eigenvalues[i].sqrt();
            let v: DVector<f64> = eig.eigenvectors.column(i).into();
            let u = w * &v / sigma;
            pinv += &v * u.transpose() / sigma;
        }
        pinv
    }

    #[test]
    fn reconstructs_input() {
        for (m, n) in [(6, 4), (4, 6), (5, 5), (1, 3), (3, 1)] {
            let w = random(m, n, (m * 10 + n) as u64);
            let d = svd(&w);
            let back = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.singular_values.clone())) * d.v.transpose();
            assert!((back - &w).norm() < 1e-10, "{m}x{n}");
            assert!(d.singular_values.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn full_rank_inverse() {
        let w = random(5, 5, 1) + DMatrix::identity(5, 5) * 3.0;
        let inv = w.clone().try_inverse().unwrap();
        let pinv = low_rank_pinv(&w, 5).unwrap();
        assert!((pinv - inv).abs().max() < 1e-8);
    }

    #[test]
    fn rank_one_closed_form() {
        let u = DVector::from_vec(vec![3.0, 4.0, 0.0]) / 5.0;
        let v = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let sigma = 2.5;
        let w = &u * v.transpose() * sigma;
        let pinv = low_rank_pinv(&w, 1).unwrap();
        let expected = &v * u.transpose() / sigma;
        assert!((pinv - expected).abs().max() < 1e-12);
    }

    #[test]
    fn truncated_matches_eigen_oracle() {
        let w = random(6, 4, 42);
        for rank in 1..=4 {
            let ours = low_rank_pinv(&w, rank).unwrap();
            let oracle = eigen_pinv(&w, rank);
            assert!((ours - oracle).abs().max() < 1e-6, "rank {rank}");
        }
    }

    #[test]
    fn rank_out_of_range() {
        let w = random(3, 2, 0);
        assert!(matches!(low_rank_pinv(&w, 0), Err(Error::Rank { rank: 0, max: 2 })));
        assert!(matches!(low_rank_pinv(&w, 3), Err(Error::Rank { rank: 3, max: 2 })));
    }

    #[test]
    fn reconstruction_error_non_increasing_in_rank() {
        let w = random(6, 6, 9);
        let sv = svd(&w).singular_values;
        let mut prev = f64::INFINITY;
        for rank in 1..=6 {
            let pinv = low_rank_pinv(&w, rank).unwrap();
            let err = (&w * &pinv - DMatrix::<f64>::identity(6, 6)).norm();
            assert!(err <= prev + 1e-9);
            prev = err;
            let mut inv_sv = svd(&pinv).singular_values;
            inv_sv.truncate(rank);
            let mut expected: Vec<f64> = sv[..rank].iter().map(|s| 1.0 / s).collect();
            expected.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in inv_sv.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-8 * b.max(1.0));
            }
        }
    }
}
