//! Topological degree of a map over a sphere, by signed solid angles of the
//! image mesh (`n = 3`) or winding numbers (`n = 2`), and the degree-based
//! invertibility probes built on it.

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::pairwise_sum;
use crate::composite::{CompositeStage, Variant};
use crate::error::{Error, Result};
use crate::stage_map::StageMap;
use crate::{linalg, rng, Point};

/// Sphere `S(center, radius)` meshed at `refinement` (octahedron split
/// `refinement` times for `n = 3`, `8 * 2^refinement` edges for `n = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereProbe<const N: usize> {
    pub center: Point<N>,
    pub radius: f64,
    pub refinement: usize,
    pub max_refinement: usize,
}

impl<const N: usize> SphereProbe<N> {
    pub fn new(center: Point<N>, radius: f64) -> Self {
        Self { center, radius, refinement: 2, max_refinement: 6 }
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        Self { radius, ..self.clone() }
    }

    /// Mesh vertices and oriented simplices (edges or triangles).
    pub fn mesh(&self, level: usize) -> Result<(Vec<Point<N>>, Vec<[usize; 3]>)> {
        match N {
            2 => {
                let m = 8usize << level;
                let verts = (0..m)
                    .map(|i| {
                        let th = std::f64::consts::TAU * i as f64 / m as f64;
                        let mut p = self.center;
                        p[0] += self.radius * th.cos();
                        p[1] += self.radius * th.sin();
                        p
                    })
                    .collect();
                let edges = (0..m).map(|i| [i, (i + 1) % m, 0]).collect();
                Ok((verts, edges))
            }
            3 => {
                let (unit, tris) = octahedron_sphere(level);
                let verts = unit.iter().map(|u| std::array::from_fn(|i| self.center[i] + self.radius * u[i])).collect();
                Ok((verts, tris))
            }
            _ => Err(Error::UnsupportedDimension(N, "degree is computed for n = 2, 3")),
        }
    }
}

fn octahedron_sphere(level: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let mut verts: Vec<[f64; 3]> =
        vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let mut tris = Vec::new();
    for (sx, sy, sz) in [(0, 2, 4), (1, 2, 4), (0, 3, 4), (1, 3, 4), (0, 2, 5), (1, 2, 5), (0, 3, 5), (1, 3, 5)] {
        let sign = [sx, sy, sz].iter().filter(|&&i| i % 2 == 1).count();
        tris.push(if sign % 2 == 0 { [sx, sy, sz] } else { [sx, sz, sy] });
    }
    let mut cache = std::collections::HashMap::new();
    for _ in 0..level {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mut mid = |a: usize, b: usize| {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    let m = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    verts.push([m[0] / norm, m[1] / norm, m[2] / norm]);
                    verts.len() - 1
                })
            };
            let (ab, bc, ca) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0]));
            next.extend([[t[0], ab, ca], [ab, t[1], bc], [ca, bc, t[2]], [ab, bc, ca]]);
        }
        tris = next;
        cache.clear();
    }
    (verts, tris)
}

/// Signed solid angle of triangle `abc` seen from the origin.
fn solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let norm = |u: &[f64; 3]| dot(u, u).sqrt();
    let cross = [b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2], b[0] * c[1] - b[1] * c[0]];
    let (la, lb, lc) = (norm(a), norm(b), norm(c));
    let num = dot(a, &cross);
    let den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    2.0 * num.atan2(den)
}

/// Image of a sphere mesh under a map.
#[derive(Debug, Clone)]
pub struct ImageMesh<const N: usize> {
    pub level: usize,
    pub vertices: Vec<Point<N>>,
    pub cells: Vec<[usize; 3]>,
}

impl<const N: usize> ImageMesh<N> {
    pub fn new<F>(f: &F, probe: &SphereProbe<N>, level: usize) -> Result<Self>
    where
        F: Fn(&Point<N>) -> Point<N> + Sync,
    {
        let (verts, cells) = probe.mesh(level)?;
        let vertices = verts.par_iter().map(f).collect();
        Ok(Self { level, vertices, cells })
    }

    /// `(1/4 pi) sum Omega` or the winding number, unrounded.
    pub fn raw_degree(&self, y: &Point<N>) -> f64 {
        let rel = |i: usize| -> [f64; 3] {
            let v = &self.vertices[i];
            std::array::from_fn(|d| if d < N { v[d] - y[d] } else { 0.0 })
        };
        let parts: Vec<f64> = self
            .cells
            .iter()
            .map(|c| {
                if N == 2 {
                    let (a, b) = (rel(c[0]), rel(c[1]));
                    (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
                } else {
                    solid_angle(&rel(c[0]), &rel(c[1]), &rel(c[2]))
                }
            })
            .collect();
        let total = pairwise_sum(&parts);
        if N == 2 {
            total / std::f64::consts::TAU
        } else {
            total / (4.0 * std::f64::consts::PI)
        }
    }

    /// Distance from `y` to the image vertices.
    pub fn distance(&self, y: &Point<N>) -> f64 {
        self.vertices.iter().map(|v| linalg::euclid(v, y)).fold(f64::INFINITY, f64::min)
    }

    /// Longest image edge, the resolution of the mesh.
    pub fn max_edge(&self) -> f64 {
        let k = if N == 2 { 2 } else { 3 };
        self.cells
            .iter()
            .flat_map(|c| (0..k).map(move |i| (c[i], c[(i + 1) % k])))
            .map(|(a, b)| linalg::euclid(&self.vertices[a], &self.vertices[b]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeReport {
    pub degree: i64,
    pub raw: f64,
    pub distance: f64,
    /// Raw sums at successive refinements.
    pub history: Vec<f64>,
    /// Whether the sphere radius was perturbed to avoid the image.
    pub radius_perturbed: bool,
}

const SNAP: f64 = 0.2;
const STABLE: f64 = 0.05;

fn settle(history: &[f64], distance: f64, radius_perturbed: bool) -> Option<DegreeReport> {
    let n = history.len();
    if n < 2 {
        return None;
    }
    let (last, prev) = (history[n - 1], history[n - 2]);
    let degree = last.round();
    if (last - degree).abs() < SNAP && (last - prev).abs() < STABLE {
        return Some(DegreeReport {
            degree: degree as i64,
            raw: last,
            distance,
            history: history.to_vec(),
            radius_perturbed,
        });
    }
    None
}

/// `deg(f, S(a, r), y)`, refining until the raw sum is within 0.2 of an
/// integer and stable across one refinement.
pub fn degree<const N: usize, F>(f: &F, probe: &SphereProbe<N>, y: &Point<N>) -> Result<DegreeReport>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    let mut history = Vec::new();
    let mut distance = f64::INFINITY;
    for level in probe.refinement..=probe.max_refinement {
        let mesh = ImageMesh::new(f, probe, level)?;
        distance = mesh.distance(y);
        if distance == 0.0 {
            return Err(Error::Indeterminate(format!("y lies on the image mesh at level {level}")));
        }
        history.push(mesh.raw_degree(y));
        if distance > mesh.max_edge() {
            if let Some(r) = settle(&history, distance, false) {
                return Ok(r);
            }
        }
    }
    Err(Error::Indeterminate(format!("raw degree did not settle: {history:?}, distance {distance:e}")))
}

/// Like [`degree`], retrying with radii perturbed by up to 1% when the
/// image sphere passes too close to `y`.
pub fn degree_perturbed<const N: usize, F>(
    f: &F,
    probe: &SphereProbe<N>,
    y: &Point<N>,
    seed: u64,
) -> Result<DegreeReport>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    match degree(f, probe, y) {
        Ok(r) => Ok(r),
        Err(first) => {
            let mut r = rng::stream(seed, 0xDE6);
            for _ in 0..4 {
                let radius = probe.radius * (1.0 + r.gen_range(-0.01..0.01));
                if let Ok(mut rep) = degree(f, &probe.with_radius(radius), y) {
                    rep.radius_perturbed = true;
                    return Ok(rep);
                }
            }
            Err(first)
        }
    }
}

/// Signed count of preimages of `y` in `B(a, r)`: Newton from a grid of
/// starts, distinct roots summed with `sgn J_f`.
pub fn preimage_degree<const N: usize, F>(f: &F, center: &Point<N>, radius: f64, y: &Point<N>, grid: usize) -> i64
where
    F: Fn(&Point<N>) -> Point<N>,
{
    let h = 1e-7 * radius.max(1e-3);
    let mut roots: Vec<Point<N>> = Vec::new();
    let total = grid.pow(N as u32);
    for mut idx in 0..total {
        let mut x: Point<N> = [0.0; N];
        for d in 0..N {
            let j = idx % grid;
            idx /= grid;
            x[d] = center[d] - radius + (j as f64 + 0.5) * 2.0 * radius / grid as f64;
        }
        for _ in 0..60 {
            let fx = f(&x);
            let res: Point<N> = std::array::from_fn(|i| fx[i] - y[i]);
            if linalg::sup_norm(&res) < 1e-13 {
                break;
            }
            let Some(inv) = linalg::inverse(&linalg::central_jacobian(|p| f(p), &x, h)) else { break };
            let step = linalg::matvec(&inv, &res);
            for i in 0..N {
                x[i] -= step[i];
            }
        }
        let fx = f(&x);
        let ok = (0..N).all(|i| (fx[i] - y[i]).abs() < 1e-9);
        if ok && linalg::euclid(&x, center) < radius && !roots.iter().any(|r| linalg::euclid(r, &x) < 1e-6 * radius) {
            roots.push(x);
        }
    }
    roots.iter().map(|x| linalg::det(&linalg::central_jacobian(|p| f(p), x, h)).signum() as i64).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvReport {
    pub inside_checked: usize,
    pub outside_checked: usize,
    pub inside_violations: usize,
    pub outside_violations: usize,
    /// Samples whose image lies within the mesh resolution of `f(S)`.
    pub near_sphere: usize,
}

impl InvReport {
    pub fn violations(&self) -> usize {
        self.inside_violations + self.outside_violations
    }
}

/// Probes the (INV) condition on `B(a, r)`: images of inside points have
/// nonzero degree, images of outside points degree zero, unless they lie
/// on `f(S(a, r))` up to mesh resolution.
pub fn inv_check<const N: usize, F>(
    f: &F,
    probe: &SphereProbe<N>,
    inside: usize,
    outside: usize,
    seed: u64,
) -> Result<InvReport>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    let fine = ImageMesh::new(f, probe, probe.max_refinement)?;
    let coarse = ImageMesh::new(f, probe, probe.max_refinement - 1)?;
    let tol = fine.max_edge();
    let mut r = rng::stream(seed, 0x1A7);
    let mut report = InvReport {
        inside_checked: 0,
        outside_checked: 0,
        inside_violations: 0,
        outside_violations: 0,
        near_sphere: 0,
    };
    let mut draw = |lo: f64, hi: f64| -> Point<N> {
        loop {
            let u: Point<N> = rng::uniform_point(&mut r, -1.0, 1.0);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 && norm <= 1.0 {
                let s = probe.radius * (lo + (hi - lo) * r.gen::<f64>());
                let x: Point<N> = std::array::from_fn(|i| probe.center[i] + s * u[i] / norm);
                if x.iter().all(|v| (-1.0..=1.0).contains(v)) {
                    return x;
                }
            }
        }
    };
    let mut samples: Vec<(Point<N>, bool)> = (0..inside).map(|_| (draw(0.0, 1.0), true)).collect();
    samples.extend((0..outside).map(|_| (draw(1.0, 2.0), false)));
    for (x, is_inside) in samples {
        let y = f(&x);
        if fine.distance(&y) <= 2.0 * tol {
            report.near_sphere += 1;
            continue;
        }
        let (a, b) = (fine.raw_degree(&y), coarse.raw_degree(&y));
        let deg = a.round();
        let settled = (a - deg).abs() < SNAP && (a - b).abs() < STABLE;
        if is_inside {
            report.inside_checked += 1;
            if !settled || deg == 0.0 {
                report.inside_violations += 1;
            }
        } else {
            report.outside_checked += 1;
            if !settled || deg != 0.0 {
                report.outside_violations += 1;
            }
        }
    }
    Ok(report)
}

/// Degrees of `f_k` over stages `ks` at a fixed sphere and target.
pub fn degree_stability(
    variant: Variant,
    beta: f64,
    ks: std::ops::RangeInclusive<usize>,
    probe: &SphereProbe<3>,
    y: &Point<3>,
) -> Result<Vec<DegreeReport>> {
    ks.map(|k| {
        let f = CompositeStage::<3>::demo(variant, beta, k)?;
        degree(&|x: &Point<3>| f.forward(x), probe, y)
    })
    .collect()
}

/// Points of `grid` with nonzero degree for the small ball but zero for the
/// containing ball (nesting), or nonzero for both of two disjoint balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestingReport {
    pub checked: usize,
    pub violations: usize,
    pub skipped: usize,
}

fn degrees_on<const N: usize, F>(f: &F, probe: &SphereProbe<N>, grid: &[Point<N>]) -> Result<Vec<Option<i64>>>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    let fine = ImageMesh::new(f, probe, probe.max_refinement)?;
    let coarse = ImageMesh::new(f, probe, probe.max_refinement - 1)?;
    let tol = 2.0 * fine.max_edge();
    Ok(grid
        .iter()
        .map(|y| {
            if fine.distance(y) <= tol {
                return None;
            }
            let (a, b) = (fine.raw_degree(y), coarse.raw_degree(y));
            let d = a.round();
            ((a - d).abs() < SNAP && (a - b).abs() < STABLE).then_some(d as i64)
        })
        .collect())
}

/// `E(f, B(a, r)) subset E(f, B(b, s))` on a point grid, for `B(a,r) subset B(b,s)`.
pub fn nesting_check<const N: usize, F>(
    f: &F,
    small: &SphereProbe<N>,
    large: &SphereProbe<N>,
    grid: &[Point<N>],
) -> Result<NestingReport>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    let a = degrees_on(f, small, grid)?;
    let b = degrees_on(f, large, grid)?;
    let mut rep = NestingReport { checked: 0, violations: 0, skipped: 0 };
    for (da, db) in a.iter().zip(&b) {
        match (da, db) {
            (Some(x), Some(y)) => {
                rep.checked += 1;
                if *x != 0 && *y == 0 {
                    rep.violations += 1;
                }
            }
            _ => rep.skipped += 1,
        }
    }
    Ok(rep)
}

/// Topological images of disjoint balls are disjoint on a point grid.
pub fn disjointness_check<const N: usize, F>(
    f: &F,
    first: &SphereProbe<N>,
    second: &SphereProbe<N>,
    grid: &[Point<N>],
) -> Result<NestingReport>
where
    F: Fn(&Point<N>) -> Point<N> + Sync,
{
    let a = degrees_on(f, first, grid)?;
    let b = degrees_on(f, second, grid)?;
    let mut rep = NestingReport { checked: 0, violations: 0, skipped: 0 };
    for (da, db) in a.iter().zip(&b) {
        match (da, db) {
            (Some(x), Some(y)) => {
                rep.checked += 1;
                if *x != 0 && *y != 0 {
                    rep.violations += 1;
                }
            }
            _ => rep.skipped += 1,
        }
    }
    Ok(rep)
}

/// `count` seeded target points: images of points drawn in the box
/// `center +- spread`.
pub fn image_grid<const N: usize, F>(f: &F, center: &Point<N>, spread: f64, count: usize, seed: u64) -> Vec<Point<N>>
where
    F: Fn(&Point<N>) -> Point<N>,
{
    let mut r = rng::stream(seed, 0x96D);
    (0..count)
        .map(|_| {
            let x: Point<N> = std::array::from_fn(|i| (center[i] + spread * r.gen_range(-1.0..1.0)).clamp(-1.0, 1.0));
            f(&x)
        })
        .collect()
}
