//! The stage-`k` rearrangement `L_k` of the null grid Cantor set into the
//! Cantor tower.
//!
//! `L_k = Lambda_k ∘ … ∘ Lambda_1`. Inside every level-`(i-1)` tower cell,
//! `Lambda_i` slides the `2^n` grid-placed children into their stacked slots
//! by a fixed sequence of straight moves. All cells share the same
//! geometry once rescaled to `[-1,1]^n`, so a single plan serves every cell
//! and every level.
//!
//! A straight move translates a buffer cube around one child rigidly along
//! one axis and is the identity outside a tube around its path. In between it
//! interpolates piecewise linearly, axially by a plateau profile and
//! transversally by a linear ramp.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{grid_vertex, in_half_open, mask_from_signs, tower_height, tower_vertex, CubeFamily};
use crate::stage_map::StageMap;
use crate::{linalg, rng, Matrix, Point};

/// The tower slot assigned to the grid vertex `v`: bits `(v_i+1)/2` read
/// big-endian give `j`, and the slot is `(0,…,0, -1 + (2j-1)/2^n)`.
pub fn slot_correspondence<const N: usize>(v: &[i8; N]) -> Result<Point<N>> {
    Ok(tower_vertex::<N>(mask_from_signs(v)?))
}

/// A rigid slide of one buffer cube along `axis`, tapered to the identity
/// across a tube. Coordinates are those of the rescaled parent cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightMove<const N: usize> {
    /// Child being moved (vertex mask).
    pub mask: u32,
    pub axis: usize,
    /// Center of the buffer before the move.
    pub from: Point<N>,
    /// Signed displacement along `axis`.
    pub shift: f64,
    /// Half-width of the rigidly moved buffer.
    pub buffer: f64,
    /// Transverse half-width of the tube.
    pub tube: f64,
    /// Axial extent of the tube.
    pub lo: f64,
    pub hi: f64,
}

impl<const N: usize> StraightMove<N> {
    /// Widest tube around the path of `from -> to` that stays inside the
    /// cell (up to `clearance`, and sideways up to `20 clearance` where the
    /// buffer allows) and misses the `obstacles` buffers, with
    /// axial ramps as long as the free space allows. `None` if no tube with
    /// a transverse ramp of at least `clearance / 4` fits.
    fn plan(
        mask: u32,
        axis: usize,
        from: Point<N>,
        to: f64,
        buffer: f64,
        clearance: f64,
        obstacles: &[Point<N>],
    ) -> Option<Self> {
        let shift = to - from[axis];
        let (core_lo, core_hi) = (from[axis].min(to) - buffer, from[axis].max(to) + buffer);
        let wall = 1.0 - clearance;
        let collar = 1.0 - 20.0 * clearance;
        let floor = 0.25 * clearance;
        // Axial extents for a transverse ramp `rho`; both shrink as `rho` grows.
        let extents = |rho: f64| -> Option<(f64, f64)> {
            let tube = buffer + rho;
            // Sideways the tube keeps out of a collar along the walls
            // unless the buffer itself already reaches into it.
            let edge_ok = |e: f64| if e + floor <= collar { e + rho <= collar } else { e + rho <= wall };
            if (0..N).any(|d| d != axis && !(edge_ok(from[d] + buffer) && edge_ok(buffer - from[d]))) {
                return None;
            }
            let (mut lo, mut hi) = (-wall, wall);
            // Obstacles are padded so that contacts survive rounding.
            let reach = buffer + 1e-9;
            for o in obstacles {
                if (0..N).any(|d| d != axis && (o[d] - from[d]).abs() >= reach + tube) {
                    continue;
                }
                let (olo, ohi) = (o[axis] - reach, o[axis] + reach);
                if ohi <= core_lo {
                    lo = lo.max(ohi);
                } else if olo >= core_hi {
                    hi = hi.min(olo);
                } else {
                    return None;
                }
            }
            (lo < core_lo && core_hi < hi).then_some((lo, hi))
        };
        let bisect = |ok: &dyn Fn(f64) -> bool, mut good: f64| {
            let mut bad = wall;
            for _ in 0..60 {
                let mid = 0.5 * (good + bad);
                if ok(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            good
        };
        extents(floor)?;
        // Largest `rho` not exceeding either axial ramp, then as wide as
        // possible without shortening them.
        let balanced = |rho: f64| extents(rho).is_some_and(|(lo, hi)| core_lo - lo >= rho && hi - core_hi >= rho);
        let rho = if balanced(floor) { bisect(&balanced, floor) } else { floor };
        let (lo0, hi0) = extents(rho)?;
        let good = bisect(&|r: f64| extents(r).is_some_and(|(lo, hi)| lo <= lo0 && hi >= hi0), rho);
        let (lo, hi) = extents(good)?;
        Some(Self { mask, axis, from, shift, buffer, tube: buffer + good, lo, hi })
    }

    pub fn to(&self) -> Point<N> {
        let mut c = self.from;
        c[self.axis] += self.shift;
        c
    }

    /// Lower and upper corners of the tube.
    pub fn tube_box(&self) -> (Point<N>, Point<N>) {
        let lo = std::array::from_fn(|d| if d == self.axis { self.lo } else { self.from[d] - self.tube });
        let hi = std::array::from_fn(|d| if d == self.axis { self.hi } else { self.from[d] + self.tube });
        (lo, hi)
    }

    /// Transverse sup-offset from the path and the coordinate attaining it.
    fn transverse(&self, y: &Point<N>) -> (f64, usize) {
        let mut q = 0.0;
        let mut arg = usize::MAX;
        for d in 0..N {
            if d != self.axis {
                let v = (y[d] - self.from[d]).abs();
                if v > q || arg == usize::MAX {
                    q = v;
                    arg = d;
                }
            }
        }
        (q, arg)
    }

    fn weight(&self, q: f64) -> f64 {
        ((self.tube - q) / (self.tube - self.buffer)).clamp(0.0, 1.0)
    }

    /// Axial knots `lo < a < b < hi`; `[a, b]` is the source buffer.
    fn knots(&self) -> [f64; 4] {
        let c = self.from[self.axis];
        [self.lo, c - self.buffer, c + self.buffer, self.hi]
    }

    /// Plateau profile and its slope.
    fn profile(&self, s: f64) -> (f64, f64) {
        let [lo, a, b, hi] = self.knots();
        if s <= lo || s >= hi {
            (0.0, 0.0)
        } else if s < a {
            ((s - lo) / (a - lo), 1.0 / (a - lo))
        } else if s <= b {
            (1.0, 0.0)
        } else {
            ((hi - s) / (hi - b), -1.0 / (hi - b))
        }
    }

    fn active(&self, y: &Point<N>) -> Option<(f64, usize)> {
        let s = y[self.axis];
        if s <= self.lo || s >= self.hi {
            return None;
        }
        let (q, arg) = self.transverse(y);
        (q < self.tube).then_some((q, arg))
    }

    pub fn forward(&self, y: &Point<N>) -> Point<N> {
        let Some((q, _)) = self.active(y) else { return *y };
        let (psi, _) = self.profile(y[self.axis]);
        let mut out = *y;
        out[self.axis] += self.weight(q) * self.shift * psi;
        out
    }

    pub fn inverse(&self, y: &Point<N>) -> Point<N> {
        let Some((q, _)) = self.active(y) else { return *y };
        let lift = self.weight(q) * self.shift;
        let [lo, a, b, hi] = self.knots();
        let (ia, ib) = (a + lift, b + lift);
        let s = y[self.axis];
        let x = if s < ia {
            lo + (s - lo) * (a - lo) / (ia - lo)
        } else if s <= ib {
            s - lift
        } else {
            hi - (hi - s) * (hi - b) / (hi - ib)
        };
        let mut out = *y;
        out[self.axis] = x;
        out
    }

    /// Only row `axis` differs from the identity.
    pub fn jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut jac = linalg::identity();
        let Some((q, arg)) = self.active(y) else { return jac };
        let (psi, dpsi) = self.profile(y[self.axis]);
        let theta = self.weight(q);
        jac[self.axis][self.axis] += theta * self.shift * dpsi;
        if q > self.buffer && arg < N {
            let dtheta = -(y[arg] - self.from[arg]).signum() / (self.tube - self.buffer);
            jac[self.axis][arg] += self.shift * psi * dtheta;
        }
        jac
    }
}

/// Inverse of a matrix that differs from the identity in one row only.
fn invert_row_matrix<const N: usize>(m: &Matrix<N>, row: usize) -> Matrix<N> {
    let mut inv = linalg::identity();
    let p = m[row][row];
    for j in 0..N {
        inv[row][j] = if j == row { 1.0 / p } else { -m[row][j] / p };
    }
    inv
}

/// The move sequence shared by every tower cell, in rescaled coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RelocationPlan<const N: usize> {
    /// Child half-width relative to the parent.
    pub child: f64,
    /// A quarter of the gap between neighbouring slots.
    pub margin: f64,
    pub buffer: f64,
    pub moves: Vec<StraightMove<N>>,
}

impl<const N: usize> RelocationPlan<N> {
    /// Plans the moves for children of relative half-width `child`.
    ///
    /// Each child first slides along the last axis to its slot height, then
    /// along axes `0..N-1` onto the axis. Within a column the lower child
    /// moves first unless its path is blocked by the upper child. Every
    /// tube is as wide and as long as the free space allows, which keeps
    /// the shears of the ramps small.
    pub fn new(child: f64) -> Result<Self> {
        let count = 1u32 << N;
        let spacing = 2.0 / count as f64;
        let margin = (spacing - 2.0 * child) / 4.0;
        if margin <= 0.0 {
            return Err(Error::Infeasible { level: 0, reason: "tower slots overlap".into() });
        }
        let buffer = child + 0.25 * margin;

        let mut centers: Vec<Point<N>> = (0..count).map(|m| grid_vertex::<N>(m).map(|v| 0.5 * v)).collect();
        let mut moves = Vec::new();
        let last = N - 1;
        let blocked = |m: u32| Error::Infeasible { level: 0, reason: format!("no free tube for child {m}") };
        let plan_move = |m: u32, axis: usize, to: f64, centers: &[Point<N>]| {
            let others: Vec<Point<N>> =
                centers.iter().enumerate().filter(|&(o, _)| o as u32 != m).map(|(_, c)| *c).collect();
            StraightMove::plan(m, axis, centers[m as usize], to, buffer, 0.125 * margin, &others)
        };

        for col in 0..count / 2 {
            let (lower, upper) = (2 * col, 2 * col + 1);
            let lower_first = plan_move(lower, last, tower_height::<N>(lower), &centers).is_some();
            let order = if lower_first { [lower, upper] } else { [upper, lower] };
            for m in order {
                let mv = plan_move(m, last, tower_height::<N>(m), &centers).ok_or_else(|| blocked(m))?;
                if mv.shift != 0.0 {
                    moves.push(mv);
                }
                centers[m as usize] = mv.to();
            }
        }
        for axis in 0..last {
            for m in 0..count {
                if centers[m as usize][axis] == 0.0 {
                    continue;
                }
                let mv = plan_move(m, axis, 0.0, &centers).ok_or_else(|| blocked(m))?;
                moves.push(mv);
                centers[m as usize] = mv.to();
            }
        }
        let plan = Self { child, margin, buffer, moves };
        plan.validate()?;
        Ok(plan)
    }

    /// Replays the plan checking that every tube stays inside the open
    /// parent cube and misses the buffers of all other children.
    pub fn validate(&self) -> Result<()> {
        let count = 1usize << N;
        let mut centers: Vec<Point<N>> = (0..count as u32).map(|m| grid_vertex::<N>(m).map(|v| 0.5 * v)).collect();
        for (idx, mv) in self.moves.iter().enumerate() {
            let (lo, hi) = mv.tube_box();
            if lo.iter().chain(hi.iter()).any(|v| v.abs() >= 1.0) {
                return Err(Error::Infeasible { level: 0, reason: format!("move {idx} leaves the parent cell") });
            }
            for (m, c) in centers.iter().enumerate() {
                if m as u32 != mv.mask && boxes_overlap(&(lo, hi), &buffer_box(c, self.buffer)) {
                    return Err(Error::Infeasible {
                        level: 0,
                        reason: format!("move {idx} of child {} crosses child {m}", mv.mask),
                    });
                }
            }
            centers[mv.mask as usize] = mv.to();
        }
        for (m, c) in centers.iter().enumerate() {
            if *c != tower_vertex::<N>(m as u32) {
                return Err(Error::Infeasible { level: 0, reason: format!("child {m} ends at {c:?}") });
            }
        }
        Ok(())
    }

    pub fn forward(&self, y: &Point<N>) -> Point<N> {
        self.moves.iter().fold(*y, |p, mv| mv.forward(&p))
    }

    pub fn inverse(&self, y: &Point<N>) -> Point<N> {
        self.moves.iter().rev().fold(*y, |p, mv| mv.inverse(&p))
    }

    pub fn jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut p = *y;
        let mut jac = linalg::identity();
        for mv in &self.moves {
            jac = linalg::matmul(&mv.jacobian(&p), &jac);
            p = mv.forward(&p);
        }
        jac
    }

    pub fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut p = *y;
        let mut jac = linalg::identity();
        for mv in self.moves.iter().rev() {
            p = mv.inverse(&p);
            let local = invert_row_matrix(&mv.jacobian(&p), mv.axis);
            jac = linalg::matmul(&local, &jac);
        }
        jac
    }
}

fn buffer_box<const N: usize>(c: &Point<N>, r: f64) -> (Point<N>, Point<N>) {
    (c.map(|v| v - r), c.map(|v| v + r))
}

/// Open boxes intersect.
fn boxes_overlap<const N: usize>(a: &(Point<N>, Point<N>), b: &(Point<N>, Point<N>)) -> bool {
    (0..N).all(|d| a.0[d] < b.1[d] && b.0[d] < a.1[d])
}

/// `L_k`: the null grid set onto the Cantor tower.
#[derive(Debug, Clone)]
pub struct TowerMap<const N: usize> {
    tower: CubeFamily<N>,
    grid: CubeFamily<N>,
    stage: usize,
    plan: Arc<RelocationPlan<N>>,
}

impl<const N: usize> TowerMap<N> {
    pub fn new(beta: f64, stage: usize) -> Result<Self> {
        let tower = CubeFamily::tower(beta)?;
        let grid = CubeFamily::set_b(beta)?;
        if stage == 0 || stage > crate::geometry::MAX_LEVEL {
            return Err(Error::OutOfRange { value: stage as f64, lo: 1.0, hi: crate::geometry::MAX_LEVEL as f64 });
        }
        let child = tower.inner(1);
        let plan = Arc::new(RelocationPlan::new(child)?);
        Ok(Self { tower, grid, stage, plan })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn plan(&self) -> &RelocationPlan<N> {
        &self.plan
    }

    pub fn tower(&self) -> &CubeFamily<N> {
        &self.tower
    }

    pub fn grid(&self) -> &CubeFamily<N> {
        &self.grid
    }

    /// Same map truncated at another stage.
    pub fn with_stage(&self, stage: usize) -> Self {
        Self { stage, ..self.clone() }
    }

    /// Center of the level-`level` tower cell whose inner cube holds `x`.
    fn tower_cell(&self, x: &Point<N>, level: usize) -> Option<Point<N>> {
        let mut z = [0.0; N];
        for i in 1..=level {
            let mask = self.tower.child_slot(i, &z, x);
            let off = self.tower.child_offset(i, mask);
            for d in 0..N {
                z[d] += off[d];
            }
            if !in_half_open(x, &z, self.tower.inner(i)) {
                return None;
            }
        }
        Some(z)
    }

    fn local(&self, x: &Point<N>, level: usize) -> Option<(Point<N>, f64, Point<N>)> {
        let z = self.tower_cell(x, level)?;
        let r = self.tower.inner(level);
        let y = std::array::from_fn(|d| (x[d] - z[d]) / r);
        Some((z, r, y))
    }

    fn lift(z: &Point<N>, r: f64, y: &Point<N>) -> Point<N> {
        std::array::from_fn(|d| z[d] + r * y[d])
    }

    /// `Lambda_i`.
    pub fn level_forward(&self, level: usize, x: &Point<N>) -> Point<N> {
        match self.local(x, level - 1) {
            Some((z, r, y)) => {
                let out = self.plan.forward(&y);
                if out == y {
                    *x
                } else {
                    Self::lift(&z, r, &out)
                }
            }
            None => *x,
        }
    }

    /// `Lambda_i^{-1}`.
    pub fn level_inverse(&self, level: usize, x: &Point<N>) -> Point<N> {
        match self.local(x, level - 1) {
            Some((z, r, y)) => {
                let out = self.plan.inverse(&y);
                if out == y {
                    *x
                } else {
                    Self::lift(&z, r, &out)
                }
            }
            None => *x,
        }
    }

    /// Checks that `L_k^{-1}` carries sampled points of every tower cell of
    /// level `i <= k` into the grid cell with the same word. Entry `i` is
    /// the verdict for level `i`; entry 0 is the whole cube.
    pub fn verify_goodmap(&self, samples_per_cell: usize, seed: u64) -> Vec<bool> {
        let mut out = vec![true];
        let mut rng = rng::stream(seed, 0x7077);
        let count = 1u32 << N;
        let mut words: Vec<Vec<u32>> = vec![Vec::new()];
        for i in 1..=self.stage {
            words = words.iter().flat_map(|w| (0..count).map(move |m| [w.as_slice(), &[m]].concat())).collect();
            let r_hat = self.tower.inner(i);
            let r_grid = self.grid.inner(i);
            let ok = words.iter().all(|w| {
                let zt = self.tower.center(w);
                let zg = self.grid.center(w);
                (0..samples_per_cell).all(|_| {
                    let u: Point<N> = rng::uniform_point(&mut rng, -1.0, 1.0);
                    let x = std::array::from_fn(|d| zt[d] + r_hat * u[d] * 0.999);
                    let back = self.inverse(&x);
                    in_half_open(&back, &zg, r_grid * (1.0 + 1e-9))
                })
            });
            out.push(ok);
        }
        out
    }
}

impl<const N: usize> StageMap<N> for TowerMap<N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        let mut p = *x;
        for i in 1..=self.stage {
            if self.tower_cell(&p, i - 1).is_none() {
                break;
            }
            p = self.level_forward(i, &p);
        }
        p
    }

    fn inverse(&self, y: &Point<N>) -> Point<N> {
        let mut p = *y;
        for i in (1..=self.stage).rev() {
            p = self.level_inverse(i, &p);
        }
        p
    }

    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        let mut p = *x;
        let mut jac = linalg::identity();
        for i in 1..=self.stage {
            let Some((z, r, y)) = self.local(&p, i - 1) else { break };
            jac = linalg::matmul(&self.plan.jacobian(&y), &jac);
            p = Self::lift(&z, r, &self.plan.forward(&y));
        }
        jac
    }

    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut p = *y;
        let mut jac = linalg::identity();
        for i in (1..=self.stage).rev() {
            if let Some((z, r, q)) = self.local(&p, i - 1) {
                jac = linalg::matmul(&self.plan.inverse_jacobian(&q), &jac);
                p = Self::lift(&z, r, &self.plan.inverse(&q));
            }
        }
        jac
    }
}
