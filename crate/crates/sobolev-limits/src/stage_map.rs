//! The common interface of every finite-stage map: a bijection of the closed
//! cube with exact inverse and derivative.

use crate::linalg;
use crate::{Matrix, Point};

pub trait StageMap<const N: usize>: Send + Sync {
    fn forward(&self, x: &Point<N>) -> Point<N>;

    fn inverse(&self, y: &Point<N>) -> Point<N>;

    /// Derivative of `forward` at `x`; undefined on a null set of interfaces.
    fn jacobian(&self, x: &Point<N>) -> Matrix<N>;

    /// Derivative of `inverse` at `y`.
    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let x = self.inverse(y);
        linalg::inverse(&self.jacobian(&x)).unwrap_or([[f64::NAN; N]; N])
    }

    /// `det D forward(x)`; maps whose derivative has huge cancelling
    /// entries override this with an exact factorisation.
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        linalg::det(&self.jacobian(x))
    }

    /// `det D inverse(y)`.
    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        1.0 / self.jacobian_det(&self.inverse(y))
    }
}

impl<const N: usize, M: StageMap<N> + ?Sized> StageMap<N> for Box<M> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        (**self).forward(x)
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        (**self).inverse(y)
    }
    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        (**self).jacobian(x)
    }
    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        (**self).inverse_jacobian(y)
    }
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        (**self).jacobian_det(x)
    }
    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        (**self).inverse_jacobian_det(y)
    }
}

impl<const N: usize, M: StageMap<N> + ?Sized> StageMap<N> for &M {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        (**self).forward(x)
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        (**self).inverse(y)
    }
    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        (**self).jacobian(x)
    }
    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        (**self).inverse_jacobian(y)
    }
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        (**self).jacobian_det(x)
    }
    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        (**self).inverse_jacobian_det(y)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl<const N: usize> StageMap<N> for Identity {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        *x
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        *y
    }
    fn jacobian(&self, _: &Point<N>) -> Matrix<N> {
        linalg::identity()
    }
    fn inverse_jacobian(&self, _: &Point<N>) -> Matrix<N> {
        linalg::identity()
    }
}

/// `x -> A x + b` with invertible `A`.
#[derive(Debug, Clone, Copy)]
pub struct Affine<const N: usize> {
    matrix: Matrix<N>,
    inverse: Matrix<N>,
    shift: Point<N>,
}

impl<const N: usize> Affine<N> {
    pub fn new(matrix: Matrix<N>, shift: Point<N>) -> Option<Self> {
        let inverse = linalg::inverse(&matrix)?;
        Some(Self { matrix, inverse, shift })
    }
}

impl<const N: usize> StageMap<N> for Affine<N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        let y = linalg::matvec(&self.matrix, x);
        std::array::from_fn(|i| y[i] + self.shift[i])
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        let d: Point<N> = std::array::from_fn(|i| y[i] - self.shift[i]);
        linalg::matvec(&self.inverse, &d)
    }
    fn jacobian(&self, _: &Point<N>) -> Matrix<N> {
        self.matrix
    }
    fn inverse_jacobian(&self, _: &Point<N>) -> Matrix<N> {
        self.inverse
    }
}

/// `maps[last] ∘ … ∘ maps[0]`.
pub struct Chain<'a, const N: usize> {
    maps: Vec<Box<dyn StageMap<N> + 'a>>,
}

impl<'a, const N: usize> Chain<'a, N> {
    pub fn new() -> Self {
        Self { maps: Vec::new() }
    }

    /// Appends a factor applied after the current ones.
    pub fn then(mut self, map: impl StageMap<N> + 'a) -> Self {
        self.maps.push(Box::new(map));
        self
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

impl<const N: usize> Default for Chain<'_, N> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const N: usize> StageMap<N> for Chain<'_, N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        self.maps.iter().fold(*x, |p, m| m.forward(&p))
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        self.maps.iter().rev().fold(*y, |p, m| m.inverse(&p))
    }
    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        let mut p = *x;
        let mut jac = linalg::identity();
        for m in &self.maps {
            jac = linalg::matmul(&m.jacobian(&p), &jac);
            p = m.forward(&p);
        }
        jac
    }
    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut p = *y;
        let mut jac = linalg::identity();
        for m in self.maps.iter().rev() {
            jac = linalg::matmul(&m.inverse_jacobian(&p), &jac);
            p = m.inverse(&p);
        }
        jac
    }
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        let mut p = *x;
        let mut det = 1.0;
        for m in &self.maps {
            det *= m.jacobian_det(&p);
            p = m.forward(&p);
        }
        det
    }
    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        let mut p = *y;
        let mut det = 1.0;
        for m in self.maps.iter().rev() {
            det *= m.inverse_jacobian_det(&p);
            p = m.inverse(&p);
        }
        det
    }
}

/// Swaps the roles of forward and inverse.
#[derive(Debug, Clone, Copy)]
pub struct Inverted<M>(pub M);

impl<const N: usize, M: StageMap<N>> StageMap<N> for Inverted<M> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        self.0.inverse(x)
    }
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        self.0.forward(y)
    }
    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        self.0.inverse_jacobian(x)
    }
    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        self.0.jacobian(y)
    }
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        self.0.inverse_jacobian_det(x)
    }
    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        self.0.jacobian_det(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_composes_in_order() {
        let double = Affine::new(linalg::scaled_identity::<2>(2.0), [0.0, 0.0]).unwrap();
        let shift = Affine::new(linalg::identity::<2>(), [1.0, 0.0]).unwrap();
        let chain = Chain::new().then(double).then(shift);
        assert_eq!(chain.forward(&[1.0, 1.0]), [3.0, 2.0]);
        assert_eq!(chain.inverse(&[3.0, 2.0]), [1.0, 1.0]);
        assert_eq!(chain.jacobian(&[0.3, 0.1])[0][0], 2.0);
        assert_eq!(chain.inverse_jacobian(&[0.3, 0.1])[1][1], 0.5);
        let inv = Inverted(&chain);
        assert_eq!(inv.forward(&[3.0, 2.0]), [1.0, 1.0]);
    }
}
