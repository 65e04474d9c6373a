//! Tentacles attached to the tower cells and the maps that squeeze or
//! stretch them along their axis.
//!
//! A straight level-`k` tentacle is the tower cube `Q(0, r_k)` plus a thin
//! box `[r_k, e) x (-d_k, d_k)^{n-1}` reaching towards `x_1 = 1`. It is bent
//! into its parent tentacle by a shear of the last coordinate (the shift).
//! Inside the thin box the axial coordinate is remapped piecewise linearly
//! through four knots whose values depend on the transverse radius
//! `r = |x_perp|_inf` through `ln ln(1/r)`, which costs little
//! `W^{1,n-1}` energy.
//!
//! Lengths `b_k`, `d_k` are kept as [`LogMagnitude`]s; the strict schedules
//! put them far below `f64` range.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{exp2i, in_half_open, CubeFamily};
use crate::log_magnitude::LogMagnitude;
use crate::stage_map::StageMap;
use crate::{linalg, Matrix, Point};

/// Four strictly increasing knot pairs `(t_i, s_i)` of a monotone
/// piecewise-linear map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PLKnots {
    pub t: [f64; 4],
    pub s: [f64; 4],
}

impl PLKnots {
    pub fn new(t: [f64; 4], s: [f64; 4]) -> Result<Self> {
        if t.windows(2).any(|w| !(w[0] < w[1])) || s.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSchedule(format!("knots not strictly increasing: {t:?} -> {s:?}")));
        }
        Ok(Self { t, s })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= self.t[0] && t <= self.t[3]) {
            return Err(Error::OutOfRange { value: t, lo: self.t[0], hi: self.t[3] });
        }
        Ok(pl_eval(&self.t, &self.s, t))
    }

    pub fn inverse(&self, s: f64) -> Result<f64> {
        if !(s >= self.s[0] && s <= self.s[3]) {
            return Err(Error::OutOfRange { value: s, lo: self.s[0], hi: self.s[3] });
        }
        Ok(pl_eval(&self.s, &self.t, s))
    }

    /// Slope of the piece containing `t`.
    pub fn slope(&self, t: f64) -> f64 {
        let i = piece(&self.t, t);
        (self.s[i + 1] - self.s[i]) / (self.t[i + 1] - self.t[i])
    }
}

/// `h(t; [t_1,s_1],…,[t_4,s_4])`.
pub fn pl_interpolate(t: f64, knots: &PLKnots) -> Result<f64> {
    knots.eval(t)
}

fn piece(t: &[f64; 4], x: f64) -> usize {
    if x < t[1] {
        0
    } else if x < t[2] {
        1
    } else {
        2
    }
}

fn pl_eval(t: &[f64; 4], s: &[f64; 4], x: f64) -> f64 {
    let i = piece(t, x);
    let w = (x - t[i]) / (t[i + 1] - t[i]);
    s[i] + w * (s[i + 1] - s[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Long tentacles pulled back towards their tower cube.
    Squeeze,
    /// Short tentacles pushed out to full length.
    Stretch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleMode {
    /// Energy budgets `2^{-k beta(n-1)}/k^2` (squeeze) or
    /// `2^{-k beta(2n-1)}/k^2` (stretch); log form only.
    Strict,
    /// Representable radii for sampling and quadrature.
    Demo,
}

/// Identity up to `pivot`, then the affine map through `(pivot, pivot)`
/// and `(from, to)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLine {
    pub pivot: f64,
    pub from: f64,
    pub to: f64,
}

impl BoundaryLine {
    pub fn identity() -> Self {
        Self { pivot: f64::INFINITY, from: 0.0, to: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.pivot {
            t
        } else {
            self.pivot + (t - self.pivot) * (self.to - self.pivot) / (self.from - self.pivot)
        }
    }
}

/// Constants of one tentacle level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    pub level: usize,
    /// Half-width of the tower cube, `2^{-k(beta+1)}`.
    pub cube: f64,
    pub a: f64,
    pub c: f64,
    pub a_short: f64,
    pub c_short: f64,
    /// Second axial knot of the interpolation.
    pub inner_knot: f64,
    pub d: LogMagnitude,
    pub b: LogMagnitude,
    /// `ln ln(1/b) - ln ln(1/d)`.
    pub spread: f64,
    /// Bending amplitude of the inner knot value.
    pub amplitude: f64,
    /// `ln delta_k` and `ln delta~_k` in strict mode.
    pub ln_budget: Option<f64>,
    pub ln_stage_budget: Option<f64>,
    /// Axial knots; knot values are `base + rate * u`, `u in [0, spread]`.
    pub knots: [f64; 4],
    pub base: [f64; 4],
    pub rate: [f64; 4],
    /// Axial ends of the straight regions (all start at `cube`).
    pub domain_end: f64,
    pub core_end: f64,
    pub image_end: f64,
    pub image_core_end: f64,
}

impl LevelParams {
    /// `u(r) = ln ln(1/max(b, r)) - ln ln(1/d)`, clamped to `[0, spread]`,
    /// and `du/dr`.
    pub fn loglog(&self, r: f64) -> (f64, f64) {
        let ln_ud = self.d.log_neg_log();
        if r <= 0.0 {
            return (self.spread, 0.0);
        }
        let lr = -r.ln();
        let u = lr.ln() - ln_ud;
        if u >= self.spread {
            (self.spread, 0.0)
        } else if u <= 0.0 {
            (0.0, 0.0)
        } else {
            (u, -1.0 / (r * lr))
        }
    }

    /// Knot values for a given `u`.
    pub fn values(&self, u: f64) -> [f64; 4] {
        std::array::from_fn(|i| self.base[i] + self.rate[i] * u)
    }

    /// Axial knots at transverse radius `r`.
    pub fn slice(&self, r: f64) -> PLKnots {
        PLKnots { t: self.knots, s: self.values(self.loglog(r).0) }
    }
}

/// Parameters of all solved levels for one profile and schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TentacleParams {
    n: usize,
    beta: f64,
    profile: Profile,
    mode: ScheduleMode,
    levels: Vec<LevelParams>,
}

/// `2^{-j(beta+1)}`.
pub fn cube_radius(beta: f64, j: usize) -> f64 {
    (-(j as f64) * (beta + 1.0)).exp2()
}

/// `a_k = 1 - sum_{i=0}^{k} r_{i+2}`.
pub fn axial_end(beta: f64, k: usize) -> f64 {
    1.0 - (0..=k).map(|i| cube_radius(beta, i + 2)).sum::<f64>()
}

/// Surface measure of the unit sup-norm sphere in `R^{n-1}`.
pub fn sphere_constant(n: usize) -> f64 {
    2.0 * (n as f64 - 1.0) * ((n as f64) - 2.0).exp2()
}

/// `(1 + max shear)^{2(n-1)}`, the distortion of `|D.|^{n-1}` under the shift.
pub fn shift_constant(n: usize, beta: f64) -> f64 {
    let shear = (1.0 - exp2i(n)) / (1.0 - (-(beta + 1.0)).exp2());
    (1.0 + shear).powi(2 * (n as i32 - 1))
}

/// `ln ln(1/d)` for the smallest `d` allowed by the budget
/// `2^{(beta+1)k(n-1)} / ln^{n-2}(1/d) <= C delta`, given `ln(C delta)`.
pub fn radius_for_budget(n: usize, beta: f64, k: usize, ln_scaled_budget: f64) -> f64 {
    let num = (beta + 1.0) * (k * (n - 1)) as f64 * std::f64::consts::LN_2;
    (num - ln_scaled_budget) / (n as f64 - 2.0)
}

impl TentacleParams {
    pub fn new(n: usize, beta: f64, profile: Profile, mode: ScheduleMode) -> Result<Self> {
        if n < 3 {
            return Err(Error::UnsupportedDimension(n, "tentacles need n >= 3"));
        }
        if beta < (n + 1) as f64 {
            return Err(Error::InvalidSchedule(format!("beta = {beta} < n + 1")));
        }
        Ok(Self { n, beta, profile, mode, levels: Vec::new() })
    }

    /// Solves levels `1..=k_max`.
    pub fn solve(n: usize, beta: f64, profile: Profile, mode: ScheduleMode, k_max: usize) -> Result<Self> {
        let mut p = Self::new(n, beta, profile, mode)?;
        for _ in 0..k_max {
            p.solve_next()?;
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn solved_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[LevelParams] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> Result<&LevelParams> {
        if k == 0 {
            return Err(Error::OutOfRange { value: 0.0, lo: 1.0, hi: self.levels.len() as f64 });
        }
        self.levels.get(k - 1).ok_or(Error::NotInitialized(k))
    }

    pub fn cube(&self, j: usize) -> f64 {
        cube_radius(self.beta, j)
    }

    /// `l_j` (squeeze) or `l~_j` (stretch); the identity for `j = 0`.
    pub fn boundary_line(&self, j: usize) -> Result<BoundaryLine> {
        if j == 0 {
            return Ok(BoundaryLine::identity());
        }
        let p = self.level(j)?;
        Ok(match self.profile {
            Profile::Squeeze => BoundaryLine { pivot: p.cube, from: p.a, to: p.a_short },
            Profile::Stretch => BoundaryLine { pivot: p.cube, from: p.a_short, to: p.a },
        })
    }

    /// `ln delta~_k` of the strict schedule.
    pub fn ln_stage_budget(&self, k: usize) -> f64 {
        let (n, kf) = (self.n as f64, k as f64);
        let exponent = match self.profile {
            Profile::Squeeze => n - 1.0,
            Profile::Stretch => 2.0 * n - 1.0,
        };
        -kf * self.beta * exponent * std::f64::consts::LN_2 - 2.0 * kf.ln()
    }

    /// Solves the next level from the ones already present.
    pub fn solve_next(&mut self) -> Result<&LevelParams> {
        let k = self.levels.len() + 1;
        let n = self.n;
        let infeasible = |reason: String| Error::Infeasible { level: k, reason };
        let cube = self.cube(k);
        let cube_prev = self.cube(k - 1);
        let a = axial_end(self.beta, k);
        let c = axial_end(self.beta, k - 1);
        let a_short = 2.0 * cube;
        let c_short = if k == 1 { c } else { 2.0 * cube_prev };
        let inner_knot = if k == 1 { 0.5 } else { cube_prev };
        let prev_line = self.boundary_line(k - 1)?;
        let prev_b = self.levels.last().map(|p| p.b);

        let spread = match self.profile {
            Profile::Squeeze => prev_line.eval(a) - a_short,
            Profile::Stretch => a - prev_line.eval(a_short),
        };

        let nesting = (n as f64) * 4f64.ln();
        let (d, ln_budget, ln_stage_budget) = match self.mode {
            ScheduleMode::Demo => {
                let mut d = 0.05 * 4f64.powi(1 - k as i32);
                if let Some(b) = prev_b {
                    d = d.min(b.value_or_zero() * 4f64.powi(-(n as i32)));
                }
                d = d.min(0.5 * exp2i(n) * cube_prev);
                if !(d > 0.0) {
                    return Err(infeasible("transverse radius underflows".into()));
                }
                (LogMagnitude::from_value(d), None, None)
            }
            ScheduleMode::Strict => {
                let ln_tilde = self.ln_stage_budget(k);
                let ln_delta =
                    -((n * k) as f64) * std::f64::consts::LN_2 + ln_tilde - shift_constant(n, self.beta).ln();
                let ln_fixd = (n as f64 - 2.0).ln() - sphere_constant(n).ln();
                let mut ln_ud = radius_for_budget(n, self.beta, k, ln_fixd + ln_delta);
                if let Some(b) = prev_b {
                    ln_ud = ln_ud.max((b.neg_log() + nesting).ln());
                }
                (LogMagnitude::from_neg_log(ln_ud.exp()), Some(ln_delta), Some(ln_tilde))
            }
        };
        let b = d.powf(spread.exp());

        let own_line = match self.profile {
            Profile::Squeeze => BoundaryLine { pivot: cube, from: a, to: a_short },
            Profile::Stretch => BoundaryLine { pivot: cube, from: a_short, to: a },
        };
        let (amplitude, knots, base, rate, ends) = match self.profile {
            Profile::Squeeze => {
                let amp = (inner_knot - own_line.eval(inner_knot)) / spread;
                (
                    amp,
                    [cube, inner_knot, a, c],
                    [cube, inner_knot, prev_line.eval(a), prev_line.eval(c)],
                    [0.0, -amp, -1.0, 0.0],
                    (c, a, prev_line.eval(c), a_short),
                )
            }
            Profile::Stretch => {
                let amp = (0.5 * (a + c) - inner_knot) / spread;
                (
                    amp,
                    [cube, a_short, inner_knot, c_short],
                    [cube, a_short, inner_knot, prev_line.eval(c_short)],
                    [0.0, 1.0, amp, 0.0],
                    (c_short, a_short, prev_line.eval(c_short), a),
                )
            }
        };

        if !(spread > 0.0) {
            return Err(infeasible(format!("non-positive spread {spread}")));
        }
        if !(b < d) || !(d < LogMagnitude::from_neg_log(1.0)) {
            return Err(infeasible("need b < d < 1/e".into()));
        }
        if let Some(pb) = prev_b {
            if d.neg_log() < pb.neg_log() + nesting * (1.0 - 1e-12) {
                return Err(infeasible("d_k exceeds 4^{-n} b_{k-1}".into()));
            }
        }
        let vals0: [f64; 4] = base;
        let vals1: [f64; 4] = std::array::from_fn(|i| base[i] + rate[i] * spread);
        for s in [knots, vals0, vals1] {
            if s.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(infeasible(format!("knots out of order: {s:?}")));
            }
        }

        self.levels.push(LevelParams {
            level: k,
            cube,
            a,
            c,
            a_short,
            c_short,
            inner_knot,
            d,
            b,
            spread,
            amplitude,
            ln_budget,
            ln_stage_budget,
            knots,
            base,
            rate,
            domain_end: ends.0,
            core_end: ends.1,
            image_end: ends.2,
            image_core_end: ends.3,
        });
        Ok(self.levels.last().expect("just pushed"))
    }

    /// `ln` of `c_geom 2^{(beta+1)k(n-1)} (u_d^{2-n} - u_b^{2-n}) / (n-2)`.
    pub fn ln_seminorm_bound(&self, k: usize) -> Result<f64> {
        let p = self.level(k)?;
        let n = self.n as f64;
        let ln_ud = p.d.log_neg_log();
        let shell = -(-(n - 2.0) * p.spread).exp_m1();
        if shell == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(sphere_constant(self.n).ln() + (self.beta + 1.0) * (k as f64) * (n - 1.0) * std::f64::consts::LN_2
            - (n - 2.0).ln()
            - (n - 2.0) * ln_ud
            + shell.ln())
    }

    /// The closed-form majorant of `int_{P'_k} |DH|^{n-1}`.
    pub fn seminorm_bound(&self, k: usize) -> Result<f64> {
        Ok(self.ln_seminorm_bound(k)?.exp())
    }

    /// `ln` of `2^{nk} (2^{n-1} c_k d_k^{n-1} + (2 r_k)^n)`, a bound on the
    /// volume of all level-`k` tentacles.
    pub fn ln_union_measure(&self, k: usize) -> Result<f64> {
        let p = self.level(k)?;
        let n = self.n as f64;
        let ln2 = std::f64::consts::LN_2;
        let thin = (n - 1.0) * ln2 + p.c.ln() - (n - 1.0) * p.d.neg_log();
        let cube = n * (2.0 * p.cube).ln();
        let (hi, lo) = if thin > cube { (thin, cube) } else { (cube, thin) };
        Ok(n * k as f64 * ln2 + hi + (lo - hi).exp().ln_1p())
    }

    /// Exact `int_{P'_k} |DH^S_k|_F^2` for `n = 3`.
    ///
    /// Per slice the axial map is piecewise linear, so the axial part
    /// integrates in closed form and the transverse part reduces to a radial
    /// integral in `v = ln ln(1/r)`, done by composite Simpson.
    pub fn tentacle_energy(&self, k: usize) -> Result<f64> {
        if self.n != 3 {
            return Err(Error::UnsupportedDimension(self.n, "closed-form energy is for n = 3"));
        }
        let p = self.level(k)?;
        p.d.value().ok_or(Error::LogOnly(k))?;
        let b = p.b.value().ok_or(Error::LogOnly(k))?;
        let t = p.knots;
        let len = t[3] - t[0];

        // Squared Frobenius norm on a slice with knot values s and
        // transverse derivative weight g = du/dr (one nonzero entry).
        let slice = |s: [f64; 4], g: f64| -> f64 {
            let mut total = 0.0;
            for i in 0..3 {
                let h = t[i + 1] - t[i];
                let slope = (s[i + 1] - s[i]) / h;
                // d h/d u is linear in the piece from rate[i] to rate[i+1].
                let (q0, q1) = (p.rate[i] * g, p.rate[i + 1] * g);
                total += h * (slope * slope + (q0 * q0 + q0 * q1 + q1 * q1) / 3.0);
            }
            total + 2.0 * len
        };
        // Cross-section measure of the sup-norm shell at radius r in R^2 is 8 r dr.
        let inner = 4.0 * b * b * slice(p.values(p.spread), 0.0);
        let (ln_ub, ln_ud) = (p.b.log_neg_log(), p.d.log_neg_log());
        let steps = 2000;
        let hstep = (ln_ub - ln_ud) / steps as f64;
        let f = |v: f64| {
            let lr = v.exp();
            let r = (-lr).exp();
            let u = v - ln_ud;
            let g = -1.0 / (r * lr);
            // dr = -r lr dv
            8.0 * r * slice(p.values(u), g) * r * lr
        };
        let mut acc = f(ln_ud) + f(ln_ub);
        for i in 1..steps {
            let v = ln_ud + i as f64 * hstep;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(v);
        }
        Ok(inner + acc * hstep / 3.0)
    }
}

/// The shear bending a straight tentacle into its parent:
/// `x_n -> x_n - sum_j sigma_j(x_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMap {
    /// `(start, end, amount)`: `sigma` ramps from 0 at `start` to `amount` at `end`.
    terms: Vec<(f64, f64, f64)>,
}

impl ShiftMap {
    /// The shift of the tentacle with tower word `word`.
    pub fn new(params: &TentacleParams, word: &[u32]) -> Result<Self> {
        let n = params.n();
        let mut terms = Vec::with_capacity(word.len().saturating_sub(1));
        for j in 2..=word.len() {
            let height = height_of(n, word[j - 1]);
            let b_prev = params.level(j - 1)?.b.value_or_zero();
            let (lo, hi) = (params.cube(j), params.cube(j - 1));
            terms.push((lo, hi, height * (hi - b_prev)));
        }
        Ok(Self { terms })
    }

    pub fn offset(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(lo, hi, amount)| amount * ((t - lo) / (hi - lo)).clamp(0.0, 1.0)).sum()
    }

    pub fn slope(&self, t: f64) -> f64 {
        self.terms.iter().filter(|&&(lo, hi, _)| t > lo && t < hi).map(|&(lo, hi, amount)| amount / (hi - lo)).sum()
    }
}

impl<const N: usize> StageMap<N> for ShiftMap {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        let mut y = *x;
        y[N - 1] -= self.offset(x[0]);
        y
    }

    fn inverse(&self, y: &Point<N>) -> Point<N> {
        let mut x = *y;
        x[N - 1] += self.offset(y[0]);
        x
    }

    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        let mut jac = linalg::identity();
        jac[N - 1][0] = -self.slope(x[0]);
        jac
    }

    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        let mut jac = linalg::identity();
        jac[N - 1][0] = self.slope(y[0]);
        jac
    }
}

fn height_of(n: usize, mask: u32) -> f64 {
    -1.0 + (2.0 * mask as f64 + 1.0) / (1u64 << n) as f64
}

/// Which straight-chart set a membership test refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Where the level-`k` map acts (`T'`).
    Domain,
    /// The thinner tentacle with transverse radius `b_k` (`T`).
    Core,
    /// Image of `Domain`.
    Image,
    /// Image of `Core`.
    ImageCore,
}

/// A located tentacle: level, tower word, cube center.
#[derive(Debug, Clone, PartialEq)]
pub struct TentacleHit<const N: usize> {
    pub level: usize,
    pub word: Vec<u32>,
    pub center: Point<N>,
}

/// The global stage map `h_k` (squeeze) or `h~_k` (stretch).
#[derive(Debug, Clone)]
pub struct TentacleMap<const N: usize> {
    params: Arc<TentacleParams>,
    tower: CubeFamily<N>,
    stage: usize,
}

impl<const N: usize> TentacleMap<N> {
    pub fn new(params: Arc<TentacleParams>, stage: usize) -> Result<Self> {
        if N != params.n() {
            return Err(Error::InvalidSchedule(format!("params for n = {} used with N = {N}", params.n())));
        }
        for k in 1..=stage {
            let p = params.level(k)?;
            if !p.b.is_representable() {
                return Err(Error::LogOnly(k));
            }
        }
        let tower = CubeFamily::tower(params.beta())?;
        Ok(Self { params, tower, stage })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn params(&self) -> &TentacleParams {
        &self.params
    }

    pub fn shared_params(&self) -> Arc<TentacleParams> {
        self.params.clone()
    }

    pub fn with_stage(&self, stage: usize) -> Result<Self> {
        Self::new(self.params.clone(), stage)
    }

    /// Straight-chart coordinates of `x` for the tentacle `word`.
    pub fn chart(&self, word: &[u32], x: &Point<N>) -> Result<Point<N>> {
        let shift = ShiftMap::new(&self.params, word)?;
        let z = self.tower.center(word);
        let s = StageMap::<N>::inverse(&shift, x);
        Ok(std::array::from_fn(|i| s[i] - z[i]))
    }

    /// Inverse of [`Self::chart`].
    pub fn unchart(&self, word: &[u32], y: &Point<N>) -> Result<Point<N>> {
        let shift = ShiftMap::new(&self.params, word)?;
        let z = self.tower.center(word);
        let p: Point<N> = std::array::from_fn(|i| y[i] + z[i]);
        Ok(StageMap::<N>::forward(&shift, &p))
    }

    fn region_end(p: &LevelParams, region: Region) -> (f64, LogMagnitude) {
        match region {
            Region::Domain => (p.domain_end, p.d),
            Region::Core => (p.core_end, p.b),
            Region::Image => (p.image_end, p.d),
            Region::ImageCore => (p.image_core_end, p.b),
        }
    }

    /// Whether the straight-chart point `y` lies in the level-`k` region.
    pub fn chart_contains(&self, k: usize, region: Region, y: &Point<N>) -> bool {
        let Ok(p) = self.params.level(k) else { return false };
        if in_half_open(y, &[0.0; N], p.cube) {
            return true;
        }
        let (end, radius) = Self::region_end(p, region);
        let r = y[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        y[0] >= p.cube && y[0] < end && r < radius.value_or_zero()
    }

    /// Whether `x` lies in the twisted tentacle region of `word`.
    pub fn contains(&self, word: &[u32], region: Region, x: &Point<N>) -> Result<bool> {
        let y = self.chart(word, x)?;
        Ok(self.chart_contains(word.len(), region, &y))
    }

    /// The deepest tentacle up to the current stage holding `x` in `region`
    /// (`Domain` for forward evaluation, `Image` for inverse).
    pub fn deepest(&self, x: &Point<N>, region: Region) -> Option<TentacleHit<N>> {
        let count = 1u32 << N;
        let mut hit: Option<TentacleHit<N>> = None;
        let mut word = Vec::with_capacity(self.stage);
        for k in 1..=self.stage {
            let mut found = false;
            for m in 0..count {
                word.push(m);
                let y = self.chart(&word, x).ok()?;
                if self.chart_contains(k, region, &y) {
                    found = true;
                    break;
                }
                word.pop();
            }
            if !found {
                break;
            }
            hit = Some(TentacleHit { level: k, word: word.clone(), center: self.tower.center(&word) });
        }
        hit
    }

    /// The level-`k` straight map `H^S_k` on `P'_k`, identity elsewhere in the chart.
    pub fn chart_forward(&self, k: usize, y: &Point<N>) -> Point<N> {
        let p = &self.params.levels[k - 1];
        if !self.chart_contains(k, Region::Domain, y) || y[0] < p.cube {
            return *y;
        }
        let r = y[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = p.values(p.loglog(r).0);
        let mut out = *y;
        out[0] = pl_eval(&p.knots, &s, y[0]);
        out
    }

    pub fn chart_inverse(&self, k: usize, y: &Point<N>) -> Point<N> {
        let p = &self.params.levels[k - 1];
        if !self.chart_contains(k, Region::Image, y) || y[0] < p.cube {
            return *y;
        }
        let r = y[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = p.values(p.loglog(r).0);
        let mut out = *y;
        out[0] = pl_eval(&s, &p.knots, y[0]);
        out
    }

    /// Derivative of `H^S_k` at the chart point `y`.
    pub fn chart_jacobian(&self, k: usize, y: &Point<N>) -> Matrix<N> {
        let mut jac = linalg::identity();
        let p = &self.params.levels[k - 1];
        if !self.chart_contains(k, Region::Domain, y) || y[0] < p.cube {
            return jac;
        }
        let (mut r, mut arg) = (0.0f64, 1);
        for (i, v) in y.iter().enumerate().skip(1) {
            if v.abs() > r {
                r = v.abs();
                arg = i;
            }
        }
        let (u, du) = p.loglog(r);
        let s = p.values(u);
        let i = piece(&p.knots, y[0]);
        let h = p.knots[i + 1] - p.knots[i];
        let w = (y[0] - p.knots[i]) / h;
        jac[0][0] = (s[i + 1] - s[i]) / h;
        let dvalue = (1.0 - w) * p.rate[i] + w * p.rate[i + 1];
        jac[0][arg] = dvalue * du * y[arg].signum();
        jac
    }

    fn twisted<F>(&self, hit: &TentacleHit<N>, x: &Point<N>, chart_map: F) -> Point<N>
    where
        F: Fn(usize, &Point<N>) -> Point<N>,
    {
        let shift = ShiftMap::new(&self.params, &hit.word).expect("solved levels");
        let s = StageMap::<N>::inverse(&shift, x);
        let y: Point<N> = std::array::from_fn(|i| s[i] - hit.center[i]);
        let out = chart_map(hit.level, &y);
        if out == y {
            return *x;
        }
        let back: Point<N> = std::array::from_fn(|i| out[i] + hit.center[i]);
        StageMap::<N>::forward(&shift, &back)
    }
}

impl<const N: usize> StageMap<N> for TentacleMap<N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        match self.deepest(x, Region::Domain) {
            Some(hit) => self.twisted(&hit, x, |k, y| self.chart_forward(k, y)),
            None => *x,
        }
    }

    fn inverse(&self, y: &Point<N>) -> Point<N> {
        match self.deepest(y, Region::Image) {
            Some(hit) => self.twisted(&hit, y, |k, q| self.chart_inverse(k, q)),
            None => *y,
        }
    }

    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        let Some(hit) = self.deepest(x, Region::Domain) else { return linalg::identity() };
        let shift = ShiftMap::new(&self.params, &hit.word).expect("solved levels");
        let s = StageMap::<N>::inverse(&shift, x);
        let y: Point<N> = std::array::from_fn(|i| s[i] - hit.center[i]);
        let out = self.chart_forward(hit.level, &y);
        let back: Point<N> = std::array::from_fn(|i| out[i] + hit.center[i]);
        let j1 = StageMap::<N>::inverse_jacobian(&shift, x);
        let j2 = self.chart_jacobian(hit.level, &y);
        let j3 = StageMap::<N>::jacobian(&shift, &back);
        linalg::matmul(&j3, &linalg::matmul(&j2, &j1))
    }

    /// The shift is volume preserving, so this is the axial slope in the chart.
    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        let Some(hit) = self.deepest(x, Region::Domain) else { return 1.0 };
        let y = self.chart(&hit.word, x).expect("solved levels");
        self.chart_jacobian(hit.level, &y)[0][0]
    }

    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        1.0 / self.jacobian_det(&self.inverse(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(profile: Profile, k: usize) -> Arc<TentacleParams> {
        Arc::new(TentacleParams::solve(3, 4.0, profile, ScheduleMode::Demo, k).unwrap())
    }

    #[test]
    fn pl_examples() {
        let knots = PLKnots::new([0.0, 1.0, 2.0, 3.0], [0.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pl_interpolate(0.5, &knots).unwrap(), 1.0);
        assert_eq!(pl_interpolate(0.0, &knots).unwrap(), 0.0);
        assert_eq!(pl_interpolate(2.5, &knots).unwrap(), 3.5);
        assert_eq!(knots.inverse(3.5).unwrap(), 2.5);
        assert!(pl_interpolate(3.5, &knots).is_err());
        assert!(PLKnots::new([0.0, 1.0, 1.0, 3.0], [0.0, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn demo_level_one() {
        let p = demo(Profile::Squeeze, 1);
        let l = p.level(1).unwrap();
        assert_eq!(l.a, 0.998992919921875);
        assert_eq!(l.a_short, 0.0625);
        assert!((l.spread - 0.936493).abs() < 1e-6);
        assert!((l.d.value().unwrap() - 0.05).abs() < 1e-17);
        assert!((l.b.log_neg_log() - 2.03367).abs() < 2e-5);
        assert!((l.b.value().unwrap() - 4.795e-4).abs() < 1e-6);
    }

    #[test]
    fn c_equals_previous_a() {
        for profile in [Profile::Squeeze, Profile::Stretch] {
            for mode in [ScheduleMode::Demo, ScheduleMode::Strict] {
                let p = TentacleParams::solve(3, 4.0, profile, mode, 4).unwrap();
                for k in 2..=4 {
                    assert_eq!(p.level(k).unwrap().c, p.level(k - 1).unwrap().a);
                }
            }
        }
    }

    #[test]
    fn budget_inversion() {
        let ln_ud = radius_for_budget(3, 4.0, 1, 1e-3f64.ln());
        assert!((ln_ud.exp() - 1.024e6).abs() < 1e-3);
    }

    #[test]
    fn strict_bound_example() {
        let ud = 1.024e6f64;
        let ub = ud * 0.93649f64.exp();
        let bracket = 1.0 / ud - 1.0 / ub;
        assert!((bracket - 5.9375e-7).abs() < 1e-10);
        assert!(1.64 * 1024.0 * bracket <= 1e-3);
        assert!(1.65 * 1024.0 * bracket > 1e-3);
    }

    #[test]
    fn unsolved_levels_are_reported() {
        let p = TentacleParams::new(3, 4.0, Profile::Squeeze, ScheduleMode::Demo).unwrap();
        assert_eq!(p.level(1).unwrap_err(), Error::NotInitialized(1));
        assert!(TentacleParams::new(2, 4.0, Profile::Squeeze, ScheduleMode::Demo).is_err());
    }

    #[test]
    fn shift_example() {
        let p = demo(Profile::Squeeze, 2);
        // Tower word with second letter at height 7/8.
        let shift = ShiftMap::new(&p, &[0, 7]).unwrap();
        let y = StageMap::<3>::forward(&shift, &[0.5, 0.0, 0.2]);
        let b1 = p.level(1).unwrap().b.value().unwrap();
        let expected = 0.2 - (0.03125 - b1) * 0.875;
        assert_eq!(y[2], expected);
        assert!((y[2] - 0.173076).abs() < 2e-6);
        let x = [2f64.powi(-10), 0.0, 0.2];
        assert_eq!(StageMap::<3>::forward(&shift, &x), x);
        assert!((shift.offset(0.03125) - shift.offset(0.5)).abs() < 1e-18);
    }

    #[test]
    fn squeeze_boundary_values() {
        let p = demo(Profile::Squeeze, 1);
        let l = p.level(1).unwrap();
        let d = l.d.value().unwrap();
        assert_eq!(l.values(l.loglog(d).0)[2], l.a);
        let s = l.values(l.loglog(0.5 * l.b.value().unwrap()).0);
        assert!((s[2] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn stretch_boundary_values() {
        let p = demo(Profile::Stretch, 1);
        let l = p.level(1).unwrap();
        let s = l.values(l.loglog(0.0).0);
        assert!((pl_eval(&l.knots, &s, l.a_short) - l.a).abs() < 1e-15);
        let s = l.values(l.loglog(l.d.value().unwrap()).0);
        for t in [0.2, 0.5, 0.9] {
            assert!((pl_eval(&l.knots, &s, t) - t).abs() < 1e-15);
        }
    }

    #[test]
    fn tower_cube_is_fixed() {
        let p = demo(Profile::Squeeze, 2);
        let h = TentacleMap::<3>::new(p, 2).unwrap();
        let z = [0.0, 0.0, 0.875];
        let x = [z[0] + 0.01, z[1] - 0.02, z[2] + 0.005];
        assert_eq!(h.forward(&x), x);
    }

    #[test]
    fn strict_mode_is_log_only() {
        let p = Arc::new(TentacleParams::solve(3, 4.0, Profile::Squeeze, ScheduleMode::Strict, 1).unwrap());
        assert_eq!(TentacleMap::<3>::new(p, 1).unwrap_err(), Error::LogOnly(1));
    }

    fn tentacle_samples(h: &TentacleMap<3>, k: usize, count: usize) -> Vec<[f64; 3]> {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, k as u64);
        let p = h.params().level(k).unwrap().clone();
        let d = p.d.value().unwrap();
        let mut out = Vec::new();
        while out.len() < count {
            let word: Vec<u32> = (0..k).map(|_| rng.gen_range(0..8)).collect();
            let y = [
                rng.gen_range(p.cube..p.domain_end),
                0.9 * rng.gen_range(-d..d) * rng.gen::<f64>().powi(6),
                0.9 * rng.gen_range(-d..d),
            ];
            out.push(h.unchart(&word, &y).unwrap());
        }
        out
    }

    #[test]
    fn roundtrip_and_derivative() {
        for profile in [Profile::Squeeze, Profile::Stretch] {
            // Demo stretch radii drop below f64 resolution of absolute
            // coordinates from level 3 on.
            let top = if profile == Profile::Squeeze { 3 } else { 2 };
            let h = TentacleMap::<3>::new(demo(profile, top), top).unwrap();
            for k in 1..=top {
                for x in tentacle_samples(&h, k, 200) {
                    let hit = h.deepest(&x, Region::Domain).expect("inside");
                    assert!(hit.level >= k, "{profile:?} k={k} {hit:?} x={x:?} chart={:?}", h.chart(&hit.word, &x));
                    let y = h.forward(&x);
                    let back = h.inverse(&y);
                    let err = crate::geometry::sup_dist(&back, &x);
                    assert!(err < 1e-10, "{profile:?} k={k} err={err} x={x:?}");
                    assert!(h.jacobian_det(&x) > 0.0);
                }
            }
        }
    }

    #[test]
    fn derivative_matches_differences() {
        let h = TentacleMap::<3>::new(demo(Profile::Squeeze, 2), 2).unwrap();
        let x = h.unchart(&[5, 2], &[0.4, 3e-7, -2e-6]).unwrap();
        let fd = linalg::central_jacobian(|p| h.forward(p), &x, 1e-9);
        let an = h.jacobian(&x);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fd[i][j] - an[i][j]).abs() < 1e-4 * (1.0 + an[i][j].abs()), "{i}{j} {fd:?} {an:?}");
            }
        }
    }

    #[test]
    fn continuous_across_levels() {
        // Points just inside and outside the level-2 domain agree.
        let h = TentacleMap::<3>::new(demo(Profile::Squeeze, 2), 2).unwrap();
        let p2 = h.params().level(2).unwrap().clone();
        let d2 = p2.d.value().unwrap();
        for t in [0.2, 0.5, 0.9] {
            let inside = h.unchart(&[3, 6], &[t, 0.0, d2 * (1.0 - 1e-9)]).unwrap();
            let outside = h.unchart(&[3, 6], &[t, 0.0, d2 * (1.0 + 1e-9)]).unwrap();
            let gap = crate::geometry::sup_dist(&h.forward(&inside), &h.forward(&outside));
            assert!(gap < 1e-9, "t={t} gap={gap}");
        }
    }
}
