//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

/// Sweeps stop once the off-diagonal Frobenius norm falls to this fraction
/// of the matrix norm, followed by one final sweep so eigenvectors of closely
/// spaced eigenvalues also settle.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unit eigenvectors, `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            sum += 2.0 * a[p * n + q] * a[p * n + q];
        }
    }
    sum.sqrt()
}

/// Decomposes the row-major `n × n` symmetric matrix `matrix`.
///
/// Deterministic: rotations are applied in fixed row-by-row order and ties in
/// the eigenvalue sort keep the diagonal order.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        let off = off_diagonal_norm(&a, n);
        if off == 0.0 || converged {
            break;
        }
        converged = off <= OFF_DIAGONAL_TOLERANCE * norm;
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        // [[2, 1], [1, 2]] has eigenpairs 3 -> (1,1)/√2 and 1 -> (1,-1)/√2.
        let e = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0].abs() - h).abs() < 1e-14);
        assert!((e.vectors[0][0] - e.vectors[0][1]).abs() < 1e-14);
    }

    #[test]
    fn diagonal_and_zero_matrices() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0], 3);
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        assert_eq!(e.sweeps, 0);
        let z = symmetric_eigen(&[0.0; 4], 2);
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn reconstructs_matrix() {
        let m = [
            4.0, -2.0, 0.5, 1.0, -2.0, 3.0, 0.25, 0.0, 0.5, 0.25, 2.0, -1.0, 1.0, 0.0, -1.0, 1.5,
        ];
        let e = symmetric_eigen(&m, 4);
        for i in 0..4 {
            for j in 0..4 {
                let r: f64 = (0..4).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                assert!((r - m[i * 4 + j]).abs() < 1e-12, "({i},{j}) {r} vs {}", m[i * 4 + j]);
            }
        }
    }
}
