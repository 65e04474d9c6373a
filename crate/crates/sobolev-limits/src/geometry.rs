//! Parameter schedules, nested-cube addressing and point location for the
//! grid Cantor sets and the Cantor tower.
//!
//! A vertex of `{-1,1}^n` is stored as a bitmask: coordinate `i` is `+1`
//! when bit `n-1-i` is set. Reading the bits big-endian gives the tower slot
//! index `j = mask + 1`, so the slot correspondence is the identity on masks.

use crate::error::{Error, Result};
use crate::Point;

/// Default cap on the nesting depth.
pub const MAX_LEVEL: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// `alpha_k = (1 + 2^{-k beta}) / 2`, a fat Cantor set.
    A,
    /// `alpha_k = 2^{-k beta}`, a null Cantor set.
    B,
    /// `alpha_k = 1 / (k + 1)`.
    Reciprocal,
    /// Explicit `alpha_1, alpha_2, ...`; `alpha_0 = 1` is implicit.
    Custom { alphas: Vec<f64>, limit: f64 },
}

/// The sequence `alpha_k` together with the dimension and the exponent `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSchedule {
    n: usize,
    beta: f64,
    kind: ScheduleKind,
}

impl ParameterSchedule {
    pub fn new(n: usize, beta: f64, kind: ScheduleKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSchedule(format!("dimension {n} < 2")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidSchedule(format!("beta = {beta} must be positive")));
        }
        if let ScheduleKind::Custom { alphas, limit } = &kind {
            let mut prev = 1.0;
            for (i, &a) in alphas.iter().enumerate() {
                if !(a > 0.0 && a < prev) {
                    return Err(Error::InvalidSchedule(format!("alpha_{} = {a} is not in (0, alpha_{})", i + 1, i)));
                }
                prev = a;
            }
            if !(*limit >= 0.0 && *limit <= prev) {
                return Err(Error::InvalidSchedule(format!("limit {limit} above the last term")));
            }
        }
        Ok(Self { n, beta, kind })
    }

    pub fn a(n: usize, beta: f64) -> Result<Self> {
        Self::new(n, beta, ScheduleKind::A)
    }

    pub fn b(n: usize, beta: f64) -> Result<Self> {
        Self::new(n, beta, ScheduleKind::B)
    }

    pub fn reciprocal(n: usize, beta: f64) -> Result<Self> {
        Self::new(n, beta, ScheduleKind::Reciprocal)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// `alpha_k`, with `alpha_0 = 1`.
    ///
    /// # Panics
    /// For a custom schedule, when `k` exceeds the number of stored terms.
    pub fn alpha(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let kb = -(k as f64) * self.beta;
        match &self.kind {
            ScheduleKind::A => 0.5 * (1.0 + kb.exp2()),
            ScheduleKind::B => kb.exp2(),
            ScheduleKind::Reciprocal => 1.0 / (k as f64 + 1.0),
            ScheduleKind::Custom { alphas, .. } => match alphas.get(k - 1) {
                Some(&a) => a,
                None => panic!("custom schedule has {} terms, alpha_{k} requested", alphas.len()),
            },
        }
    }

    /// `r_k = 2^{-k} alpha_k`.
    pub fn half_width(&self, k: usize) -> f64 {
        exp2i(k) * self.alpha(k)
    }

    /// `r'_k = 2^{-k} alpha_{k-1}`; equals `r_0 = 1` at `k = 0`.
    pub fn outer_half_width(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        exp2i(k) * self.alpha(k - 1)
    }

    /// `(r_k, r'_k)`.
    pub fn radii(&self, k: usize) -> (f64, f64) {
        (self.half_width(k), self.outer_half_width(k))
    }

    /// Total volume of the `2^{nk}` level-`k` inner cubes, `2^n alpha_k^n`.
    pub fn stage_measure(&self, k: usize) -> f64 {
        (2.0 * self.alpha(k)).powi(self.n as i32)
    }

    /// `2^n (lim alpha_k)^n`.
    pub fn limit_measure(&self) -> f64 {
        let lim = match &self.kind {
            ScheduleKind::A => 0.5,
            ScheduleKind::B | ScheduleKind::Reciprocal => 0.0,
            ScheduleKind::Custom { limit, .. } => *limit,
        };
        (2.0 * lim).powi(self.n as i32)
    }

    /// Volume of a single level-`k` frame `Q'\Q`.
    pub fn frame_measure(&self, k: usize) -> f64 {
        let (r, ro) = self.radii(k);
        let n = self.n as i32;
        (2.0 * ro).powi(n) - (2.0 * r).powi(n)
    }

    /// Whether `alpha_i > 2^n alpha_{i+1}` for `i < levels`, the spacing
    /// condition needed to stack children into a tower.
    pub fn tower_admissible(&self, levels: usize) -> bool {
        let scale = (self.n as f64).exp2();
        (0..levels).all(|i| self.alpha(i) > scale * self.alpha(i + 1))
    }
}

/// `2^{-k}`.
pub(crate) fn exp2i(k: usize) -> f64 {
    (-(k as f64)).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Construction {
    SetA,
    SetB,
    TowerB,
}

impl Construction {
    pub fn layout(self) -> Layout {
        match self {
            Construction::SetA | Construction::SetB => Layout::Grid,
            Construction::TowerB => Layout::Tower,
        }
    }
}

/// How children sit inside their parent's inner cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Children at `z + r_{k-1} v / 2`, `v` in `{-1,1}^n`.
    Grid,
    /// Children stacked along the last axis at `z + r_{k-1} v_hat`.
    Tower,
}

/// A word of vertex masks identifying a nested cube.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Address {
    pub construction: Construction,
    pub word: Vec<u32>,
}

impl Address {
    pub fn new(construction: Construction, n: usize, word: Vec<u32>) -> Result<Self> {
        let count = 1u32 << n;
        if let Some(bad) = word.iter().find(|&&m| m >= count) {
            return Err(Error::InvalidAddress(format!("vertex mask {bad} >= 2^{n}")));
        }
        Ok(Self { construction, word })
    }

    pub fn root(construction: Construction) -> Self {
        Self { construction, word: Vec::new() }
    }

    /// Builds a grid address from `{-1,1}` sign vectors.
    pub fn from_signs<const N: usize>(construction: Construction, signs: &[[i8; N]]) -> Result<Self> {
        let word = signs.iter().map(mask_from_signs).collect::<Result<Vec<_>>>()?;
        Self::new(construction, N, word)
    }

    /// Builds a tower address from vertices `(0,...,0, -1 + (2j-1)/2^n)`.
    pub fn from_tower_vertices<const N: usize>(vertices: &[Point<N>]) -> Result<Self> {
        let word = vertices.iter().map(mask_from_tower_vertex).collect::<Result<Vec<_>>>()?;
        Self::new(Construction::TowerB, N, word)
    }

    pub fn level(&self) -> usize {
        self.word.len()
    }

    pub fn parent(&self) -> Option<Self> {
        let (_, head) = self.word.split_last()?;
        Some(Self { construction: self.construction, word: head.to_vec() })
    }

    pub fn child(&self, mask: u32) -> Self {
        let mut word = self.word.clone();
        word.push(mask);
        Self { construction: self.construction, word }
    }
}

pub fn mask_from_signs<const N: usize>(signs: &[i8; N]) -> Result<u32> {
    let mut mask = 0u32;
    for (i, &s) in signs.iter().enumerate() {
        match s {
            1 => mask |= 1 << (N - 1 - i),
            -1 => {}
            _ => return Err(Error::InvalidAddress(format!("coordinate {s} not in {{-1, 1}}"))),
        }
    }
    Ok(mask)
}

pub fn mask_from_tower_vertex<const N: usize>(v: &Point<N>) -> Result<u32> {
    let count = (1u32 << N) as f64;
    if v[..N - 1].iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidAddress(format!("tower vertex {v:?} off the last axis")));
    }
    let j = ((v[N - 1] + 1.0) * count + 1.0) / 2.0;
    if j.fract() != 0.0 || j < 1.0 || j > count {
        return Err(Error::InvalidAddress(format!("tower vertex {v:?} is not a slot")));
    }
    Ok(j as u32 - 1)
}

/// The `{-1,1}^N` vertex encoded by `mask`.
pub fn grid_vertex<const N: usize>(mask: u32) -> Point<N> {
    std::array::from_fn(|i| if mask >> (N - 1 - i) & 1 == 1 { 1.0 } else { -1.0 })
}

/// Last coordinate of the tower slot encoded by `mask`: `-1 + (2j-1)/2^N`, `j = mask + 1`.
pub fn tower_height<const N: usize>(mask: u32) -> f64 {
    -1.0 + (2.0 * mask as f64 + 1.0) / (1u32 << N) as f64
}

/// The tower vertex `(0,...,0, tower_height(mask))`.
pub fn tower_vertex<const N: usize>(mask: u32) -> Point<N> {
    let mut v = [0.0; N];
    v[N - 1] = tower_height::<N>(mask);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    /// In the level-`i` frame `Q'\Q`.
    Frame(usize),
    /// In the inner cube at the depth cap.
    Core,
    /// Inside the deepest address's inner cube but outside every child's outer cube.
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub address: Address,
    pub zone: Zone,
}

/// A nested cube construction: a schedule plus a child layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily<const N: usize> {
    schedule: ParameterSchedule,
    construction: Construction,
}

impl<const N: usize> CubeFamily<N> {
    pub fn new(schedule: ParameterSchedule, construction: Construction) -> Result<Self> {
        if schedule.n() != N {
            return Err(Error::InvalidSchedule(format!(
                "schedule dimension {} differs from point dimension {N}",
                schedule.n()
            )));
        }
        if construction.layout() == Layout::Tower && !schedule.tower_admissible(MAX_LEVEL) {
            return Err(Error::InvalidSchedule("tower needs alpha_i > 2^n alpha_(i+1) at every level".into()));
        }
        Ok(Self { schedule, construction })
    }

    /// The fat set `C_A` with `alpha_k = (1 + 2^{-k beta})/2`.
    pub fn set_a(beta: f64) -> Result<Self> {
        Self::new(ParameterSchedule::a(N, beta)?, Construction::SetA)
    }

    /// The null set `C_B` with `beta_k = 2^{-k beta}`.
    pub fn set_b(beta: f64) -> Result<Self> {
        Self::new(ParameterSchedule::b(N, beta)?, Construction::SetB)
    }

    /// The Cantor tower built on `beta_k = 2^{-k beta}`.
    pub fn tower(beta: f64) -> Result<Self> {
        Self::new(ParameterSchedule::b(N, beta)?, Construction::TowerB)
    }

    pub fn schedule(&self) -> &ParameterSchedule {
        &self.schedule
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn inner(&self, k: usize) -> f64 {
        self.schedule.half_width(k)
    }

    pub fn outer(&self, k: usize) -> f64 {
        self.schedule.outer_half_width(k)
    }

    /// Offset from a level-`(k-1)` center to the center of its child `mask`.
    pub fn child_offset(&self, k: usize, mask: u32) -> Point<N> {
        let parent = self.inner(k - 1);
        match self.construction.layout() {
            Layout::Grid => grid_vertex::<N>(mask).map(|v| 0.5 * parent * v),
            Layout::Tower => tower_vertex::<N>(mask).map(|v| parent * v),
        }
    }

    /// Center of the cell addressed by `word`.
    pub fn center(&self, word: &[u32]) -> Point<N> {
        let mut z = [0.0; N];
        for (i, &mask) in word.iter().enumerate() {
            let off = self.child_offset(i + 1, mask);
            for d in 0..N {
                z[d] += off[d];
            }
        }
        z
    }

    /// Center of `address`, checking that it belongs to this family.
    pub fn cell_center(&self, address: &Address) -> Result<Point<N>> {
        if address.construction.layout() != self.construction.layout() {
            return Err(Error::InvalidAddress(format!(
                "{:?} address used with a {:?} family",
                address.construction, self.construction
            )));
        }
        let count = 1u32 << N;
        if let Some(bad) = address.word.iter().find(|&&m| m >= count) {
            return Err(Error::InvalidAddress(format!("vertex mask {bad} >= 2^{N}")));
        }
        Ok(self.center(&address.word))
    }

    /// The child of the level-`(k-1)` cell centered at `parent` whose slot
    /// contains `x` (half-open faces).
    pub fn child_slot(&self, k: usize, parent: &Point<N>, x: &Point<N>) -> u32 {
        match self.construction.layout() {
            Layout::Grid => {
                let mut mask = 0u32;
                for i in 0..N {
                    if x[i] >= parent[i] {
                        mask |= 1 << (N - 1 - i);
                    }
                }
                mask
            }
            Layout::Tower => {
                let r = self.inner(k - 1);
                let count = 1u32 << N;
                let rel = (x[N - 1] - parent[N - 1] + r) / (2.0 * r) * count as f64;
                rel.floor().clamp(0.0, (count - 1) as f64) as u32
            }
        }
    }

    /// Descends the address tree to the frame or depth-cap cube holding `x`.
    pub fn locate(&self, x: &Point<N>, max_level: usize) -> Location {
        let mut center = [0.0; N];
        let mut word = Vec::with_capacity(max_level);
        for k in 1..=max_level {
            let mask = self.child_slot(k, &center, x);
            let off = self.child_offset(k, mask);
            let child: Point<N> = std::array::from_fn(|i| center[i] + off[i]);
            if self.construction.layout() == Layout::Tower && !in_half_open(x, &child, self.outer(k)) {
                return Location { address: Address { construction: self.construction, word }, zone: Zone::Outside };
            }
            word.push(mask);
            if !in_half_open(x, &child, self.inner(k)) {
                return Location { address: Address { construction: self.construction, word }, zone: Zone::Frame(k) };
            }
            center = child;
        }
        Location { address: Address { construction: self.construction, word }, zone: Zone::Core }
    }
}

/// `x` in `[c - r, c + r)` coordinatewise.
pub fn in_half_open<const N: usize>(x: &Point<N>, c: &Point<N>, r: f64) -> bool {
    (0..N).all(|i| x[i] - c[i] >= -r && x[i] - c[i] < r)
}

/// `max_i |x_i - c_i|`.
pub fn sup_dist<const N: usize>(x: &Point<N>, c: &Point<N>) -> f64 {
    (0..N).fold(0.0, |m, i| m.max((x[i] - c[i]).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radii_of_schedule_a_level_one() {
        let s = ParameterSchedule::a(3, 4.0).unwrap();
        assert_eq!(s.radii(1), (17.0 / 64.0, 0.5));
        assert_eq!(s.radii(0), (1.0, 1.0));
    }

    #[test]
    fn radii_of_schedule_b_level_two() {
        let s = ParameterSchedule::b(3, 4.0).unwrap();
        assert_eq!(s.radii(2), ((-10f64).exp2(), 0.015625));
    }

    #[test]
    fn centers_of_level_one_cells() {
        let a = CubeFamily::<3>::set_a(4.0).unwrap();
        let addr = Address::from_signs(Construction::SetA, &[[1, 1, 1]]).unwrap();
        assert_eq!(a.cell_center(&addr).unwrap(), [0.5, 0.5, 0.5]);
        assert_eq!(a.cell_center(&Address::root(Construction::SetA)).unwrap(), [0.0; 3]);

        let t = CubeFamily::<3>::tower(4.0).unwrap();
        let addr = Address::from_tower_vertices(&[[0.0, 0.0, -1.0 + 1.0 / 8.0]]).unwrap();
        assert_eq!(addr.word, vec![0]);
        assert_eq!(t.cell_center(&addr).unwrap(), [0.0, 0.0, -7.0 / 8.0]);
    }

    #[test]
    fn invalid_vertices_are_rejected() {
        assert!(Address::from_signs::<3>(Construction::SetA, &[[1, 0, 1]]).is_err());
        assert!(Address::from_tower_vertices::<3>(&[[0.0, 0.0, 0.3]]).is_err());
        assert!(Address::new(Construction::SetA, 3, vec![8]).is_err());
    }

    #[test]
    fn locate_examples() {
        let a = CubeFamily::<3>::set_a(4.0).unwrap();
        let loc = a.locate(&[0.1, 0.1, 0.1], 5);
        assert_eq!(loc.zone, Zone::Frame(1));
        assert_eq!(loc.address.word, vec![7]);

        let center = a.center(&[7, 7, 7]);
        let loc = a.locate(&center, 3);
        assert_eq!(loc.zone, Zone::Core);
        assert_eq!(loc.address.word, vec![7, 7, 7]);

        // The level-1 center sits between its children, in their frames.
        let loc = a.locate(&[0.5, 0.5, 0.5], 3);
        assert_eq!(loc.zone, Zone::Frame(2));
        assert_eq!(loc.address.word, vec![7, 7]);

        let t = CubeFamily::<3>::tower(4.0).unwrap();
        let loc = t.locate(&[0.9, 0.9, 0.9], 5);
        assert_eq!(loc.zone, Zone::Outside);
        assert!(loc.address.word.is_empty());
    }

    #[test]
    fn measures() {
        let a = ParameterSchedule::a(3, 4.0).unwrap();
        assert_eq!(a.limit_measure(), 1.0);
        assert_relative_eq!(a.stage_measure(1), 8.0 * (17.0f64 / 32.0).powi(3), max_relative = 1e-15);
        assert_relative_eq!(a.stage_measure(1), 1.199463, epsilon = 1e-6);
        assert_eq!(ParameterSchedule::b(3, 4.0).unwrap().limit_measure(), 0.0);
    }

    #[test]
    fn custom_schedule_must_decrease() {
        let bad = ScheduleKind::Custom { alphas: vec![0.5, 0.6], limit: 0.0 };
        assert!(ParameterSchedule::new(3, 4.0, bad).is_err());
        let good = ScheduleKind::Custom { alphas: vec![0.5, 0.3], limit: 0.1 };
        let s = ParameterSchedule::new(3, 4.0, good).unwrap();
        assert_eq!(s.alpha(2), 0.3);
    }

    #[test]
    fn tower_requires_spacing() {
        assert!(CubeFamily::<3>::tower(4.0).is_ok());
        assert!(CubeFamily::<3>::tower(2.0).is_err());
    }
}
