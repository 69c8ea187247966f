//! Symmetric 3×3 eigen-decomposition and point covariance.

use crate::geom::{Mat3, Vec3};

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricEigen {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

/// Cyclic Jacobi rotations on a symmetric matrix. Converges to machine
/// precision in a handful of sweeps for 3×3 inputs and is deterministic.
pub fn symmetric_eigen(m: &Mat3) -> SymmetricEigen {
    let mut a = m.0;
    let mut v = Mat3::IDENTITY.0;
    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off == 0.0 || off <= f64::EPSILON * 1e-3 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    let mut pairs: Vec<(f64, Vec3)> = (0..3)
        .map(|j| (a[j][j], Vec3::new(v[0][j], v[1][j], v[2][j]).normalize()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    SymmetricEigen {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}

/// Mean and (population) covariance of a set of points.
pub fn covariance<I>(points: I) -> Option<(Vec3, Mat3)>
where
    I: IntoIterator<Item = Vec3>,
    I::IntoIter: Clone,
{
    let it = points.into_iter();
    let (n, sum) = it.clone().fold((0usize, Vec3::ZERO), |(n, s), p| (n + 1, s + p));
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let mut c = [[0.0; 3]; 3];
    for p in it {
        let d = (p - mean).to_array();
        for i in 0..3 {
            for j in i..3 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            c[i][j] /= n as f64;
            c[j][i] = c[i][j];
        }
    }
    Some((mean, Mat3(c)))
}

/// Lexicographic comparison on absolute components, used to break ties
/// between eigenvectors of (near) equal eigenvalues.
pub(crate) fn abs_lex_greater(a: Vec3, b: Vec3) -> bool {
    let (a, b) = (a.abs().to_array(), b.abs().to_array());
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] > b[i];
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_na(m: &Mat3) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::from_fn(|i, j| m.0[i][j])
    }

    #[test]
    fn diagonal_matrix() {
        let m = Mat3([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        let e = symmetric_eigen(&m);
        assert_eq!(e.values, [1.0, 2.0, 3.0]);
        assert!((e.vectors[0].abs() - Vec3::Y).norm() < 1e-15);
        assert!((e.vectors[2].abs() - Vec3::X).norm() < 1e-15);
    }

    #[test]
    fn covariance_of_line() {
        let (mean, c) = covariance((0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0))).unwrap();
        assert_eq!(mean, Vec3::new(2.0, 0.0, 0.0));
        assert!((c.0[0][0] - 2.0).abs() < 1e-15);
        assert_eq!(c.0[1][1], 0.0);
    }

    proptest! {
        #[test]
        fn matches_nalgebra_oracle(v in prop::collection::vec(-5.0..5.0f64, 6)) {
            let m = Mat3([[v[0], v[1], v[2]], [v[1], v[3], v[4]], [v[2], v[4], v[5]]]);
            let e = symmetric_eigen(&m);
            let mut want: Vec<f64> = to_na(&m).symmetric_eigen().eigenvalues.iter().copied().collect();
            want.sort_by(|a, b| a.total_cmp(b));
            for i in 0..3 {
                prop_assert!((e.values[i] - want[i]).abs() < 1e-9);
                // A v = λ v
                let av = m.mul_vec(e.vectors[i]);
                prop_assert!((av - e.vectors[i] * e.values[i]).norm() < 1e-9);
                prop_assert!((e.vectors[i].norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
