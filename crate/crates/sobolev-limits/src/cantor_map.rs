//! The stage-`k` homeomorphism carrying the level-`k` cubes of one grid Cantor
//! construction onto those of another, cell by cell.
//!
//! Each frame `Q'\Q` is mapped by sup-norm radial interpolation
//! `z + t u -> z~ + lambda(t) u` (with `|u| = 1`, `lambda` affine), which agrees
//! with the enclosing linear maps on both boundary cubes. Level-`k` inner cubes
//! are mapped linearly.

use crate::error::{Error, Result};
use crate::geometry::{grid_vertex, CubeFamily, Layout, ParameterSchedule};
use crate::stage_map::StageMap;
use crate::{linalg, Matrix, Point};

/// Radial transfer of one frame onto another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusMap<const N: usize> {
    pub source_center: Point<N>,
    pub target_center: Point<N>,
    pub source_inner: f64,
    pub source_outer: f64,
    pub target_inner: f64,
    pub target_outer: f64,
}

impl<const N: usize> AnnulusMap<N> {
    fn slope(&self) -> f64 {
        (self.target_outer - self.target_inner) / (self.source_outer - self.source_inner)
    }

    /// Anchored at the outer radius so that `lambda(r') = r~'` exactly.
    fn radius(&self, t: f64) -> f64 {
        self.target_outer - (self.source_outer - t) * self.slope()
    }

    pub fn apply(&self, x: &Point<N>) -> Point<N> {
        let w: Point<N> = std::array::from_fn(|i| x[i] - self.source_center[i]);
        let t = linalg::sup_norm(&w);
        let s = self.radius(t) / t;
        if s == 1.0 && self.source_center == self.target_center {
            return *x;
        }
        std::array::from_fn(|i| self.target_center[i] + s * w[i])
    }

    pub fn derivative(&self, x: &Point<N>) -> Matrix<N> {
        let w: Point<N> = std::array::from_fn(|i| x[i] - self.source_center[i]);
        let (mut m, mut t) = (0, 0.0);
        for (i, v) in w.iter().enumerate() {
            if v.abs() > t {
                t = v.abs();
                m = i;
            }
        }
        let lambda = self.radius(t);
        let s = lambda / t;
        let ds = (self.slope() / t - lambda / (t * t)) * w[m].signum();
        let mut jac = linalg::scaled_identity(s);
        for i in 0..N {
            jac[i][m] += w[i] * ds;
        }
        jac
    }

    pub fn inverted(&self) -> Self {
        Self {
            source_center: self.target_center,
            target_center: self.source_center,
            source_inner: self.target_inner,
            source_outer: self.target_outer,
            target_inner: self.source_inner,
            target_outer: self.source_outer,
        }
    }
}

/// Which piece of the stage map governs a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece<const N: usize> {
    Frame(AnnulusMap<N>),
    /// `x -> target + scale (x - source)`.
    Core {
        source: Point<N>,
        target: Point<N>,
        scale: f64,
    },
}

impl<const N: usize> Piece<N> {
    fn apply(&self, x: &Point<N>) -> Point<N> {
        match self {
            Piece::Frame(a) => a.apply(x),
            Piece::Core { source, target, scale } => std::array::from_fn(|i| target[i] + scale * (x[i] - source[i])),
        }
    }

    fn derivative(&self, x: &Point<N>) -> Matrix<N> {
        match self {
            Piece::Frame(a) => a.derivative(x),
            Piece::Core { scale, .. } => linalg::scaled_identity(*scale),
        }
    }
}

/// Descends `from` and returns the governing piece mapping onto `to`.
fn piece<const N: usize>(from: &CubeFamily<N>, to: &CubeFamily<N>, stage: usize, x: &Point<N>) -> Piece<N> {
    let mut z = [0.0; N];
    let mut zt = [0.0; N];
    for i in 1..=stage {
        let mut mask = 0u32;
        for d in 0..N {
            if x[d] >= z[d] {
                mask |= 1 << (N - 1 - d);
            }
        }
        let v = grid_vertex::<N>(mask);
        let (hs, ht) = (0.5 * from.inner(i - 1), 0.5 * to.inner(i - 1));
        for d in 0..N {
            z[d] += hs * v[d];
            zt[d] += ht * v[d];
        }
        let r = from.inner(i);
        let inside = (0..N).all(|d| x[d] - z[d] >= -r && x[d] - z[d] < r);
        if !inside {
            return Piece::Frame(AnnulusMap {
                source_center: z,
                target_center: zt,
                source_inner: r,
                source_outer: from.outer(i),
                target_inner: to.inner(i),
                target_outer: to.outer(i),
            });
        }
    }
    Piece::Core { source: z, target: zt, scale: to.inner(stage) / from.inner(stage) }
}

/// `g_k`: grid family `source` onto grid family `target`, cell by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CantorMap<const N: usize> {
    source: CubeFamily<N>,
    target: CubeFamily<N>,
    stage: usize,
}

impl<const N: usize> CantorMap<N> {
    pub fn new(source: CubeFamily<N>, target: CubeFamily<N>, stage: usize) -> Result<Self> {
        if source.construction().layout() != Layout::Grid || target.construction().layout() != Layout::Grid {
            return Err(Error::InvalidSchedule("cantor map needs grid families".into()));
        }
        if stage == 0 || stage > crate::geometry::MAX_LEVEL {
            return Err(Error::OutOfRange { value: stage as f64, lo: 1.0, hi: crate::geometry::MAX_LEVEL as f64 });
        }
        Ok(Self { source, target, stage })
    }

    /// The fat set onto the null set, both with exponent `beta`.
    pub fn standard(beta: f64, stage: usize) -> Result<Self> {
        Self::new(CubeFamily::set_a(beta)?, CubeFamily::set_b(beta)?, stage)
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn source(&self) -> &CubeFamily<N> {
        &self.source
    }

    pub fn target(&self) -> &CubeFamily<N> {
        &self.target
    }

    pub fn forward_piece(&self, x: &Point<N>) -> Piece<N> {
        piece(&self.source, &self.target, self.stage, x)
    }

    pub fn inverse_piece(&self, y: &Point<N>) -> Piece<N> {
        piece(&self.target, &self.source, self.stage, y)
    }
}

impl<const N: usize> StageMap<N> for CantorMap<N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        self.forward_piece(x).apply(x)
    }

    fn inverse(&self, y: &Point<N>) -> Point<N> {
        self.inverse_piece(y).apply(y)
    }

    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        self.forward_piece(x).derivative(x)
    }

    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        self.inverse_piece(y).derivative(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Reference envelope for `|Dg|` on a level-`i` frame:
/// `max{b_i/a_i, (b_{i-1}-b_i)/(a_{i-1}-a_i)}` with the roles swapped for the inverse.
pub fn derivative_bound(
    source: &ParameterSchedule,
    target: &ParameterSchedule,
    direction: Direction,
    level: usize,
) -> f64 {
    let (from, to) = match direction {
        Direction::Forward => (source, target),
        Direction::Inverse => (target, source),
    };
    let i = level;
    let core = to.alpha(i) / from.alpha(i);
    let frame = (to.alpha(i - 1) - to.alpha(i)) / (from.alpha(i - 1) - from.alpha(i));
    core.max(frame)
}
