//! Numerical Sobolev seminorms, Cauchy-difference tables, Jacobian surveys
//! and boundary probes.
//!
//! Integrals use adaptive midpoint refinement: a cell is accepted once its
//! midpoint value agrees with the mean over its `2^n` children. Each report
//! also carries the value from one further refinement step.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::composite::{CompositeStage, Variant};
use crate::error::{Error, Result};
use crate::rng;
use crate::stage_map::{Identity, StageMap};
use crate::tentacle::{Region, TentacleMap, TentacleParams};
use crate::{linalg, Matrix, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureConfig {
    /// Base cells per axis.
    pub resolution: usize,
    /// Maximal adaptive subdivision depth below the base grid.
    pub max_depth: usize,
    /// Relative acceptance tolerance of a cell.
    pub tolerance: f64,
    /// Central-difference step.
    pub fd_step: f64,
    pub seed: u64,
    /// Tentacles integrated per level; the rest are scaled in.
    pub tentacle_samples: usize,
    /// Geometric shells between `b_k` and `d_k`.
    pub shells: usize,
    /// Cells per axial piece and per face axis in tentacle charts.
    pub axial: usize,
    /// Uniform midpoint cells per axis on tower cubes in Cauchy rows.
    pub cube_grid: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            resolution: 4,
            max_depth: 5,
            tolerance: 1e-2,
            fd_step: 1e-8,
            seed: 0,
            tentacle_samples: 16,
            shells: 12,
            axial: 6,
            cube_grid: 64,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 {
            return Err(Error::OutOfRange { value: self.resolution as f64, lo: 4.0, hi: f64::INFINITY });
        }
        if !(self.tolerance > 0.0)
            || !(self.fd_step > 0.0)
            || self.tentacle_samples == 0
            || self.shells == 0
            || self.axial == 0
            || self.cube_grid == 0
        {
            return Err(Error::InvalidSchedule("quadrature settings must be positive".into()));
        }
        Ok(())
    }

    /// One refinement step.
    pub fn refined(&self) -> Self {
        Self {
            max_depth: self.max_depth + 1,
            tolerance: self.tolerance / 4.0,
            shells: self.shells * 2,
            axial: self.axial * 2,
            cube_grid: self.cube_grid * 2,
            ..self.clone()
        }
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox<const N: usize> {
    pub lo: Point<N>,
    pub hi: Point<N>,
}

impl<const N: usize> AxisBox<N> {
    pub fn cube(center: &Point<N>, radius: f64) -> Self {
        Self { lo: std::array::from_fn(|i| center[i] - radius), hi: std::array::from_fn(|i| center[i] + radius) }
    }

    pub fn volume(&self) -> f64 {
        (0..N).map(|i| self.hi[i] - self.lo[i]).product()
    }

    fn center(&self) -> Point<N> {
        std::array::from_fn(|i| 0.5 * (self.lo[i] + self.hi[i]))
    }

    fn children(&self) -> Vec<Self> {
        let c = self.center();
        (0..1usize << N)
            .map(|m| {
                let mut b = *self;
                for i in 0..N {
                    if m >> i & 1 == 1 {
                        b.lo[i] = c[i];
                    } else {
                        b.hi[i] = c[i];
                    }
                }
                b
            })
            .collect()
    }

    fn grid(&self, cells: usize) -> Vec<Self> {
        let total = cells.pow(N as u32);
        (0..total)
            .map(|mut idx| {
                let mut b = *self;
                for i in 0..N {
                    let j = idx % cells;
                    idx /= cells;
                    let w = (self.hi[i] - self.lo[i]) / cells as f64;
                    b.lo[i] = self.lo[i] + j as f64 * w;
                    b.hi[i] = if j + 1 == cells { self.hi[i] } else { self.lo[i] + (j + 1) as f64 * w };
                }
                b
            })
            .collect()
    }
}

/// Value of an integral and the change under one refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormReport {
    pub value: f64,
    pub coarse: f64,
    pub relative_change: f64,
}

impl SeminormReport {
    fn new(coarse: f64, value: f64) -> Self {
        let relative_change = if value == 0.0 && coarse == 0.0 { 0.0 } else { (value - coarse).abs() / value.abs() };
        Self { value, coarse, relative_change }
    }
}

/// `scale` is the mean of `|f|` on the base grid; cells whose midpoint
/// error is small against it are accepted.
fn adaptive_cell<const N: usize, F>(
    f: &F,
    cell: &AxisBox<N>,
    mid: f64,
    depth: usize,
    scale: f64,
    cfg: &QuadratureConfig,
) -> f64
where
    F: Fn(&Point<N>) -> f64,
{
    let vol = cell.volume();
    let kids = cell.children();
    let vals: Vec<f64> = kids.iter().map(|c| f(&c.center())).collect();
    let fine = vals.iter().sum::<f64>() / vals.len() as f64;
    if depth >= cfg.max_depth || (fine - mid).abs() <= cfg.tolerance * fine.abs().max(mid.abs()).max(scale) {
        return fine * vol;
    }
    kids.iter().zip(&vals).map(|(c, &v)| adaptive_cell(f, c, v, depth + 1, scale, cfg)).sum()
}

/// `int_region f` by adaptive midpoint refinement.
pub fn integrate<const N: usize, F>(f: &F, region: &[AxisBox<N>], cfg: &QuadratureConfig) -> f64
where
    F: Fn(&Point<N>) -> f64 + Sync,
{
    let cells: Vec<AxisBox<N>> = region.iter().flat_map(|b| b.grid(cfg.resolution)).collect();
    let mids: Vec<f64> = cells.par_iter().map(|c| f(&c.center())).collect();
    let scale = mids.iter().map(|v| v.abs()).sum::<f64>() / mids.len().max(1) as f64;
    let parts: Vec<f64> = cells.par_iter().zip(&mids).map(|(c, &m)| adaptive_cell(f, c, m, 0, scale, cfg)).collect();
    pairwise_sum(&parts)
}

/// `int_region f` by the midpoint rule on `cells^N` equal cells.
pub fn midpoint<const N: usize, F>(f: &F, region: &AxisBox<N>, cells: usize) -> f64
where
    F: Fn(&Point<N>) -> f64 + Sync,
{
    let width: Point<N> = std::array::from_fn(|i| (region.hi[i] - region.lo[i]) / cells as f64);
    let inner = cells.pow(N as u32 - 1);
    let slabs: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|first| {
            let values: Vec<f64> = (0..inner)
                .map(|mut idx| {
                    let mut x = [0.0; N];
                    x[0] = region.lo[0] + (first as f64 + 0.5) * width[0];
                    for i in 1..N {
                        x[i] = region.lo[i] + ((idx % cells) as f64 + 0.5) * width[i];
                        idx /= cells;
                    }
                    f(&x)
                })
                .collect();
            pairwise_sum(&values)
        })
        .collect();
    pairwise_sum(&slabs) * width.iter().product::<f64>()
}

/// Deterministic tree reduction.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn frobenius_pow<const N: usize>(a: &Matrix<N>, p: f64) -> f64 {
    linalg::frobenius(a).powf(p)
}

/// `int_region |Df|_F^p` with the analytic derivative.
pub fn seminorm<const N: usize, M: StageMap<N>>(
    map: &M,
    p: f64,
    region: &[AxisBox<N>],
    cfg: &QuadratureConfig,
) -> Result<SeminormReport> {
    cfg.validate()?;
    for b in region {
        if b.lo.iter().chain(b.hi.iter()).any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::OutsideDomain(b.lo.iter().chain(b.hi.iter()).copied().collect()));
        }
    }
    let f = |x: &Point<N>| frobenius_pow(&map.jacobian(x), p);
    let coarse = integrate(&f, region, cfg);
    let fine = integrate(&f, region, &cfg.refined());
    Ok(SeminormReport::new(coarse, fine))
}

/// `int` over the straight box `[cube, end) x (-d, d)^{n-1}` in sup-norm
/// shells: uniform in `r` on `[0, b]`, geometric on `[b, d]`.
pub fn chart_integral<const N: usize, F>(f: &F, axial_breaks: &[f64], b: f64, d: f64, cfg: &QuadratureConfig) -> f64
where
    F: Fn(&Point<N>) -> f64 + Sync,
{
    let m = cfg.axial;
    let mut axial = Vec::new();
    for w in axial_breaks.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        axial.extend((0..m).map(|i| (w[0] + (i as f64 + 0.5) * h, h)));
    }
    let mut shells = vec![(0.5 * b, b)];
    let ratio = (d / b).ln() / cfg.shells as f64;
    for i in 0..cfg.shells {
        let (r0, r1) = (b * (ratio * i as f64).exp(), b * (ratio * (i + 1) as f64).exp());
        shells.push((0.5 * (r0 + r1), r1 - r0));
    }
    // Face points of the unit sup-sphere in R^{n-1}: (face axis, sign, params).
    let faces = N - 1;
    let per_face = m.pow((faces - 1) as u32);
    let face_weight = (2.0f64 / m as f64).powi((faces - 1) as i32);
    let mut face_points: Vec<(Vec<f64>, f64)> = Vec::new();
    for axis in 0..faces {
        for sign in [-1.0, 1.0] {
            for idx in 0..per_face {
                let mut q = vec![0.0; faces];
                let mut rest = idx;
                for (j, slot) in q.iter_mut().enumerate() {
                    if j == axis {
                        *slot = sign;
                    } else {
                        *slot = -1.0 + (rest % m) as f64 * 2.0 / m as f64 + 1.0 / m as f64;
                        rest /= m;
                    }
                }
                face_points.push((q, face_weight));
            }
        }
    }
    let parts: Vec<f64> = axial
        .par_iter()
        .map(|&(t, ht)| {
            let mut acc = 0.0;
            for &(r, hr) in &shells {
                // Surface element of the shell of radius r: r^{n-2} dsigma.
                let surface = r.powi((faces - 1) as i32);
                for (q, w) in &face_points {
                    let mut y = [0.0; N];
                    y[0] = t;
                    for j in 0..faces {
                        y[j + 1] = r * q[j];
                    }
                    acc += f(&y) * surface * w * hr;
                }
            }
            acc * ht
        })
        .collect();
    pairwise_sum(&parts)
}

pub fn tentacle_breaks(params: &TentacleParams, k: usize) -> Result<Vec<f64>> {
    let p = params.level(k)?;
    let mut breaks = p.knots.to_vec();
    if k >= 2 {
        breaks.push(params.cube(k - 1));
    }
    breaks.push(p.domain_end);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    breaks.retain(|&t| t <= p.domain_end);
    Ok(breaks)
}

/// `int_{P'_k} |DH^S_k|_F^p` of the straight level-`k` map.
pub fn tentacle_seminorm<const N: usize>(
    tentacles: &TentacleMap<N>,
    k: usize,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<SeminormReport> {
    cfg.validate()?;
    let params = tentacles.params();
    let level = params.level(k)?;
    let b = level.b.value().ok_or(Error::LogOnly(k))?;
    let d = level.d.value().ok_or(Error::LogOnly(k))?;
    let breaks = tentacle_breaks(params, k)?;
    let f = |y: &Point<N>| frobenius_pow(&tentacles.chart_jacobian(k, y), p);
    let coarse = chart_integral(&f, &breaks, b, d, cfg);
    let fine = chart_integral(&f, &breaks, b, d, &cfg.refined());
    Ok(SeminormReport::new(coarse, fine))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyRow {
    pub k: usize,
    pub integral: f64,
    /// Share from the level-`(k-1)` tower cubes.
    pub cube_part: f64,
    /// Share from the level-`k` tentacles (scaled from the sampled ones).
    pub tentacle_part: f64,
    pub tentacles_sampled: usize,
    pub envelope: f64,
    pub relative_change: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyTable {
    pub rows: Vec<CauchyRow>,
    /// Single constant `c` with `row <= c (2^{-k beta} + k^{-2})`.
    pub constant: f64,
    /// Rows positive and decreasing, tail sums contracting.
    pub summable: bool,
}

/// `int_{M_k} |Df_k - Df_{k-1}|_F^p` for `T1`, where
/// `M_k` is the union of the level-`k` tentacles and level-`(k-1)` tower
/// cubes, outside which consecutive stages agree.
pub fn cauchy_table(variant: Variant, beta: f64, p: f64, k_max: usize, cfg: &QuadratureConfig) -> Result<CauchyTable> {
    cfg.validate()?;
    if variant != Variant::T1 {
        return Err(Error::NotInvertible("cauchy tables are computed for T1"));
    }
    let stages: Vec<CompositeStage<3>> =
        (1..=k_max).map(|k| CompositeStage::<3>::demo(variant, beta, k)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let fk = &stages[k - 1];
        let prev: &dyn StageMap<3> = if k == 1 { &Identity } else { &stages[k - 2] };
        let (coarse, fine, sampled) = cauchy_row(fk, prev, k, p, cfg)?;
        let envelope = (-(k as f64) * beta).exp2() + 1.0 / (k * k) as f64;
        rows.push(CauchyRow {
            k,
            integral: fine.0 + fine.1,
            cube_part: fine.0,
            tentacle_part: fine.1,
            tentacles_sampled: sampled,
            envelope,
            relative_change: SeminormReport::new(coarse.0 + coarse.1, fine.0 + fine.1).relative_change,
            pass: false,
        });
    }
    let constant = rows.iter().map(|r| r.integral / r.envelope).fold(0.0, f64::max);
    let decreasing = rows.windows(2).all(|w| w[1].integral < w[0].integral);
    let tails: Vec<f64> = (0..rows.len()).map(|i| rows[i..].iter().map(|r| r.integral).sum()).collect();
    let contracting = tails.windows(2).all(|w| w[1] < w[0]);
    for r in &mut rows {
        r.pass = r.integral > 0.0 && r.integral <= constant * r.envelope * (1.0 + 1e-12);
    }
    let summable = decreasing && contracting && rows.iter().all(|r| r.pass);
    Ok(CauchyTable { rows, constant, summable })
}

type Parts = (f64, f64);

fn cauchy_row(
    fk: &CompositeStage<3>,
    prev: &dyn StageMap<3>,
    k: usize,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<(Parts, Parts, usize)> {
    let tentacles = fk.tentacle().expect("T1 has tentacles");
    let params = tentacles.params();
    let level = params.level(k)?;
    let cube_k = level.cube;
    let diff = |x: &Point<3>| frobenius_pow(&linalg::sub(&fk.jacobian(x), &prev.jacobian(x)), p);

    // Representative level-(k-1) tower cube; all of them are translates.
    let rep: Vec<u32> = vec![(1u32 << 3) - 1; k - 1];
    let center = fk.tower().tower().center(&rep);
    let radius = if k == 1 { 1.0 } else { params.cube(k - 1) };
    let copies = (1u64 << (3 * (k - 1))) as f64;
    let in_thin = |x: &Point<3>| match tentacles.deepest(x, Region::Domain) {
        Some(hit) if hit.level == k => tentacles.chart(&hit.word, x).map(|y| y[0] >= cube_k).unwrap_or(false),
        _ => false,
    };
    let cube_f = |x: &Point<3>| if in_thin(x) { 0.0 } else { diff(x) };
    let region = AxisBox::cube(&center, radius);
    let cube_coarse = copies * midpoint(&cube_f, &region, cfg.cube_grid);
    let cube_fine = copies * midpoint(&cube_f, &region, 2 * cfg.cube_grid);

    // Level-k tentacles, all or a seeded sample.
    let total = 1usize << (3 * k);
    let take = cfg.tentacle_samples.min(total);
    let mut r = rng::stream(cfg.seed, 0xCA0C + k as u64);
    let mut picks: Vec<usize> = sample(&mut r, total, take).into_vec();
    picks.sort_unstable();
    let weight = total as f64 / take as f64;
    let b = level.b.value().ok_or(Error::LogOnly(k))?;
    let d = level.d.value().ok_or(Error::LogOnly(k))?;
    let breaks = tentacle_breaks(params, k)?;
    let mut tent = (0.0, 0.0);
    for idx in picks {
        let word: Vec<u32> = (0..k).map(|j| ((idx >> (3 * (k - 1 - j))) & 7) as u32).collect();
        let f = |y: &Point<3>| match tentacles.unchart(&word, y) {
            Ok(x) => diff(&x),
            Err(_) => 0.0,
        };
        tent.0 += weight * chart_integral(&f, &breaks, b, d, cfg);
        tent.1 += weight * chart_integral(&f, &breaks, b, d, &cfg.refined());
    }
    Ok(((cube_coarse, tent.0), (cube_fine, tent.1), take))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSurvey<const N: usize> {
    pub samples: usize,
    pub positive_fraction: f64,
    pub min_det: f64,
    pub nonpositive: Vec<Point<N>>,
    /// Non-positive samples whose analytic derivative changes within
    /// `10 fd_step`.
    pub at_interfaces: usize,
}

/// Central-difference Jacobian determinants at seeded uniform points.
pub fn jacobian_survey<const N: usize, M: StageMap<N>>(
    map: &M,
    count: usize,
    cfg: &QuadratureConfig,
) -> JacobianSurvey<N> {
    let points = rng::cube_samples::<N>(cfg.seed, 0x1AC0, count);
    let h = cfg.fd_step;
    let dets: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let x = clamp_inside(x, h);
            linalg::det(&linalg::central_jacobian(|q| map.forward(q), &x, h))
        })
        .collect();
    let mut nonpositive = Vec::new();
    let mut at_interfaces = 0;
    for (x, &det) in points.iter().zip(&dets) {
        if !(det > 0.0) {
            nonpositive.push(*x);
            if near_interface(map, &clamp_inside(x, h), 10.0 * h) {
                at_interfaces += 1;
            }
        }
    }
    let positive = count - nonpositive.len();
    JacobianSurvey {
        samples: count,
        positive_fraction: if count == 0 { 1.0 } else { positive as f64 / count as f64 },
        min_det: dets.iter().copied().fold(f64::INFINITY, f64::min),
        nonpositive,
        at_interfaces,
    }
}

fn clamp_inside<const N: usize>(x: &Point<N>, h: f64) -> Point<N> {
    std::array::from_fn(|i| x[i].clamp(-1.0 + 2.0 * h, 1.0 - 2.0 * h))
}

/// Whether the analytic derivative differs anywhere on the axis stencil of
/// radius `radius` around `x`.
pub fn near_interface<const N: usize, M: StageMap<N>>(map: &M, x: &Point<N>, radius: f64) -> bool {
    let j0 = map.jacobian(x);
    let scale = linalg::frobenius(&j0).max(1.0);
    (0..N).any(|i| {
        [-radius, radius].iter().any(|&s| {
            let mut q = *x;
            q[i] += s;
            linalg::frobenius(&linalg::sub(&map.jacobian(&q), &j0)) > 1e-6 * scale
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCheck {
    pub samples: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Samples every face of `[-1, 1]^n` and measures `max |f(x) - x|_inf`.
pub fn boundary_identity_check<const N: usize, M: StageMap<N>>(map: &M, per_face: usize, seed: u64) -> BoundaryCheck {
    let mut r = rng::stream(seed, 0xB0DA);
    let mut max_deviation = 0.0f64;
    let mut samples = 0;
    for axis in 0..N {
        for sign in [-1.0, 1.0] {
            for _ in 0..per_face {
                let mut x: Point<N> = std::array::from_fn(|_| r.gen_range(-1.0..=1.0));
                x[axis] = sign;
                let y = map.forward(&x);
                max_deviation = max_deviation.max(crate::geometry::sup_dist(&x, &y));
                samples += 1;
            }
        }
    }
    BoundaryCheck { samples, max_deviation, pass: max_deviation <= 1e-12 }
}
