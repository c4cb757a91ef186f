//! Small dense linear algebra: a cyclic Jacobi eigensolver for symmetric
//! matrices, Gram-Schmidt completion, and a few residual helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`symmetric_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, ascending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a[(p, q)] * a[(p, q)];
            }
        }
    }
    s.sqrt()
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for p in 0..a.nrows() {
        for q in (p + 1)..a.ncols() {
            worst = worst.max((a[(p, q)] - a[(q, p)]).abs());
        }
    }
    worst
}

/// Cyclic Jacobi rotations until the off-diagonal mass drops below
/// [`JACOBI_TOL`] (scaled by the matrix norm when that exceeds one).
pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let asym = max_asymmetry(matrix);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = rows;
    let mut a = (matrix + matrix.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let stop = JACOBI_TOL * a.norm().max(1.0);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn spectrum(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    symmetric_eigen(matrix).map(|e| e.values)
}

/// Determinant of a symmetric matrix as the product of its eigenvalues.
/// The empty matrix has determinant one.
pub fn symmetric_det(matrix: &DMatrix<f64>) -> Result<f64> {
    Ok(spectrum(matrix)?.iter().product())
}

/// Groups sorted eigenvalues into clusters separated by more than `gap`;
/// returns (cluster mean, multiplicity) pairs.
pub fn cluster_eigenvalues(sorted: &[f64], gap: f64) -> Vec<(f64, usize)> {
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &x in sorted {
        match clusters.last_mut() {
            Some((sum, count)) if x - last <= gap => {
                *sum += x;
                *count += 1;
            }
            _ => clusters.push((x, 1)),
        }
        last = x;
    }
    clusters
        .into_iter()
        .map(|(sum, count)| (sum / count as f64, count))
        .collect()
}

/// Max distance between a sorted spectrum and the multiset given as
/// (value, multiplicity) pairs; infinite if the sizes differ.
pub fn spectrum_deviation(sorted: &[f64], expected: &[(f64, usize)]) -> f64 {
    let mut target: Vec<f64> = expected
        .iter()
        .flat_map(|&(v, n)| std::iter::repeat_n(v, n))
        .collect();
    if target.len() != sorted.len() {
        return f64::INFINITY;
    }
    target.sort_by(f64::total_cmp);
    sorted
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Extends the orthonormal family `seed` to an orthonormal basis of R^n,
/// drawing candidates from the standard basis in index order and keeping
/// those whose residual norm exceeds `pivot`. Orthogonalization is done
/// twice per candidate.
pub fn complete_orthonormal(seed: &[DVector<f64>], n: usize, pivot: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = seed.to_vec();
    for idx in 0..n {
        if basis.len() >= n {
            break;
        }
        let mut w = DVector::<f64>::zeros(n);
        w[idx] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w -= b * c;
            }
        }
        let norm = w.norm();
        if norm > pivot {
            basis.push(w / norm);
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of `u` in R^n, as columns.
pub fn complement_basis(u: &DVector<f64>, pivot: f64) -> DMatrix<f64> {
    let n = u.len();
    let unit = u / u.norm();
    let full = complete_orthonormal(&[unit], n, pivot);
    DMatrix::from_columns(&full[1..])
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Gram matrix of a family of vectors.
pub fn gram(vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let n = vectors.len();
    DMatrix::from_fn(n, n, |i, j| vectors[i].dot(&vectors[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spectrum() {
        let s = spectrum(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spectrum(&m), Err(Error::NotSymmetric(_))));
        let r = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(spectrum(&r), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn two_by_two_closed_form() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let recon = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()))
            * e.vectors.transpose();
        assert!(max_abs(&(recon - m)) < 1e-13);
    }

    #[test]
    fn empty_det_is_one() {
        assert_eq!(symmetric_det(&DMatrix::<f64>::zeros(0, 0)).unwrap(), 1.0);
    }

    #[test]
    fn clusters() {
        let c = cluster_eigenvalues(&[0.0, 0.5, 0.5 + 1e-9, 1.0], 1e-6);
        assert_eq!(c.len(), 3);
        assert_eq!(c[1].1, 2);
    }

    #[test]
    fn completion_is_orthonormal() {
        let u = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]) / 2f64.sqrt();
        let b = complete_orthonormal(&[u], 4, 1e-8);
        assert_eq!(b.len(), 4);
        let g = gram(&b);
        assert!(max_abs(&(g - DMatrix::identity(4, 4))) < 1e-14);
    }
}
