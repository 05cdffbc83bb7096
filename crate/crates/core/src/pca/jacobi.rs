use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen<const N: usize> {
    /// Eigenvalues in non-increasing order.
    pub values: [f64; N],
    /// Orthonormal eigenvectors stored as columns: `vectors[i][k]` is
    /// component `i` of the eigenvector for `values[k]`.
    pub vectors: [[f64; N]; N],
    pub sweeps: usize,
}

impl<const N: usize> SymmetricEigen<N> {
    pub fn column(&self, k: usize) -> [f64; N] {
        std::array::from_fn(|i| self.vectors[i][k])
    }
}

/// Cyclic Jacobi rotations. Stops once the largest off-diagonal entry is
/// below `1e-12` (scaled by the largest entry when that exceeds one) or after
/// 100 sweeps.
pub fn eigen_sym<const N: usize>(m: &[[f64; N]; N]) -> Result<SymmetricEigen<N>> {
    let mut asym: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..N {
        for j in 0..N {
            if !m[i][j].is_finite() {
                return Err(Error::NonFiniteInput(i * N + j));
            }
            asym = asym.max((m[i][j] - m[j][i]).abs());
            scale = scale.max(m[i][j].abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a: [[f64; N]; N] =
        std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (m[i][j] + m[j][i])));
    let mut v: [[f64; N]; N] =
        std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));

    let tol = OFF_DIAGONAL_TOL * scale;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && max_off_diagonal(&a) >= tol {
        for p in 0..N {
            for q in p + 1..N {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: [usize; N] = std::array::from_fn(|k| k);
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    Ok(SymmetricEigen {
        values: std::array::from_fn(|k| a[order[k]][order[k]]),
        vectors: std::array::from_fn(|i| std::array::from_fn(|k| v[i][order[k]])),
        sweeps,
    })
}

fn max_off_diagonal<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    let mut off: f64 = 0.0;
    for p in 0..N {
        for q in p + 1..N {
            off = off.max(a[p][q].abs());
        }
    }
    off
}

/// Applies the rotation that zeroes `a[p][q]` and accumulates it into `v`.
fn rotate<const N: usize>(a: &mut [[f64; N]; N], v: &mut [[f64; N]; N], p: usize, q: usize) {
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;
    for row in a.iter_mut() {
        let (akp, akq) = (row[p], row[q]);
        row[p] = c * akp - s * akq;
        row[q] = s * akp + c * akq;
    }
    for k in 0..N {
        let (apk, aqk) = (a[p][k], a[q][k]);
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
    }
    a[p][q] = 0.0;
    a[q][p] = 0.0;
    for row in v.iter_mut() {
        let (vkp, vkq) = (row[p], row[q]);
        row[p] = c * vkp - s * vkq;
        row[q] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual<const N: usize>(m: &[[f64; N]; N], e: &SymmetricEigen<N>) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..N {
            let v = e.column(k);
            for i in 0..N {
                let mv: f64 = (0..N).map(|j| m[i][j] * v[j]).sum();
                worst = worst.max((mv - e.values[k] * v[i]).abs());
            }
        }
        worst
    }

    #[test]
    fn identity() {
        let m: [[f64; 4]; 4] =
            std::array::from_fn(|i| std::array::from_fn(|j| f64::from(u8::from(i == j))));
        let e = eigen_sym(&m).unwrap();
        assert_eq!(e.values, [1.0; 4]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn embedded_correlation_block() {
        // eigenvalues of [[1, rho], [rho, 1]] are 1 +- rho; the rest are 1
        let rho = 0.6;
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m[1][3] = rho;
        m[3][1] = rho;
        let e = eigen_sym(&m).unwrap();
        assert!((e.values[0] - 1.6).abs() < 1e-14);
        assert!((e.values[3] - 0.4).abs() < 1e-14);
        assert!(residual(&m, &e) < 1e-12);
        let top = e.column(0);
        assert!((top[1].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let mut m = [[1.0, 0.0], [0.0, 2.0]];
        m[0][1] = 1e-6;
        assert!(matches!(eigen_sym(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn diagonal_is_sorted() {
        let m = [[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let e = eigen_sym(&m).unwrap();
        assert_eq!(e.values, [3.0, 2.0, 1.0]);
        assert_eq!(e.column(0), [0.0, 1.0, 0.0]);
    }
}
