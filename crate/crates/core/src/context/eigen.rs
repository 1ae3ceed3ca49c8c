//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.

/// Sweeps beyond this are not expected for well-formed input; the cap keeps
/// runtime bounded and results deterministic.
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Decomposes the row-major `n × n` symmetric matrix `a`.
///
/// Uses cyclic Jacobi rotations until every off-diagonal entry has been
/// annihilated or is negligible next to the matrix norm and its diagonal.
pub fn symmetric_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(a.len(), n * n, "matrix must be n × n");
    let mut m = a.to_vec();
    // v holds eigenvectors as columns, row-major
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    // off-diagonal entries below this are rounding noise
    let negligible = f64::EPSILON * 1e-3 * scale;

    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let g = 100.0 * apq.abs();
                if apq.abs() <= negligible
                    || (sweep > 3 && m[p * n + p].abs() + g == m[p * n + p].abs() && m[q * n + q].abs() + g == m[q * n + q].abs())
                {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        let nkp = akp - s * (akq + tau * akp);
                        let nkq = akq + s * (akp - tau * akq);
                        m[k * n + p] = nkp;
                        m[p * n + k] = nkp;
                        m[k * n + q] = nkq;
                        m[q * n + k] = nkq;
                    }
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp - s * (vkq + tau * vkp);
                    v[k * n + q] = vkq + s * (vkp - tau * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ties in index order
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    SymmetricEigen {
        values: order.iter().map(|&i| m[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0], 3);
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1 with vectors (1,1)/√2, (1,-1)/√2
        let e = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0].abs() - h).abs() < 1e-14);
        assert!((e.vectors[0][0] - e.vectors[0][1]).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric_matrix() {
        let n = 12;
        let mut a = vec![0.0; n * n];
        let mut x = 0.3f64;
        for i in 0..n {
            for j in i..n {
                x = (x * 3.7 + 0.11).fract();
                a[i * n + j] = x - 0.5;
                a[j * n + i] = x - 0.5;
            }
        }
        let e = symmetric_eigen(&a, n);
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                assert!((r - a[i * n + j]).abs() < 1e-12);
            }
        }
    }
}
