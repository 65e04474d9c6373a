//! Small dense helpers on `[[f64; N]; N]`.

use nalgebra::DMatrix;

use crate::{Matrix, Point};

pub fn identity<const N: usize>() -> Matrix<N> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

pub fn scaled_identity<const N: usize>(s: f64) -> Matrix<N> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { s } else { 0.0 }))
}

pub fn matmul<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..N).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn matvec<const N: usize>(a: &Matrix<N>, x: &Point<N>) -> Point<N> {
    std::array::from_fn(|i| (0..N).map(|k| a[i][k] * x[k]).sum())
}

pub fn sub<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] - b[i][j]))
}

fn to_dynamic<const N: usize>(a: &Matrix<N>) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |i, j| a[i][j])
}

pub fn det<const N: usize>(a: &Matrix<N>) -> f64 {
    match N {
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => to_dynamic(a).determinant(),
    }
}

/// Matrix inverse, or `None` when singular.
pub fn inverse<const N: usize>(a: &Matrix<N>) -> Option<Matrix<N>> {
    let inv = to_dynamic(a).try_inverse()?;
    Some(std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)])))
}

pub fn frobenius<const N: usize>(a: &Matrix<N>) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn operator_norm<const N: usize>(a: &Matrix<N>) -> f64 {
    to_dynamic(a).singular_values().max()
}

pub fn sup_norm<const N: usize>(x: &Point<N>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn euclid<const N: usize>(x: &Point<N>, y: &Point<N>) -> f64 {
    (0..N).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt()
}

/// Central-difference derivative with step `h`.
pub fn central_jacobian<const N: usize, F>(f: F, x: &Point<N>, h: f64) -> Matrix<N>
where
    F: Fn(&Point<N>) -> Point<N>,
{
    let mut jac = [[0.0; N]; N];
    for j in 0..N {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for i in 0..N {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_and_inverse() {
        let a = [[2.0, 1.0, 0.0], [0.0, 3.0, 0.0], [1.0, 0.0, 1.0]];
        assert!((det(&a) - 6.0).abs() < 1e-14);
        let inv = inverse(&a).unwrap();
        let prod = matmul(&a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                assert!((prod[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(inverse(&[[1.0, 2.0], [2.0, 4.0]]).is_none());
        let big = scaled_identity::<4>(2.0);
        assert!((det(&big) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn central_difference_is_exact_on_quadratics() {
        let f = |x: &Point<2>| [x[0] * x[0], x[0] * x[1]];
        let jac = central_jacobian(f, &[1.0, 2.0], 1e-3);
        assert!((jac[0][0] - 2.0).abs() < 1e-9);
        assert!((jac[1][0] - 2.0).abs() < 1e-9);
        assert!((jac[1][1] - 1.0).abs() < 1e-9);
        assert!(jac[0][1].abs() < 1e-12);
    }
}
