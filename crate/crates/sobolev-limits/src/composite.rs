//! The counterexample maps assembled from the stage factors, and witnesses
//! of the continua they collapse.

use std::sync::Arc;

use crate::cantor_map::CantorMap;
use crate::error::{Error, Result};
use crate::geometry::{Construction, CubeFamily, ParameterSchedule};
use crate::stage_map::{Chain, Inverted, StageMap};
use crate::tentacle::{Profile, ScheduleMode, TentacleMap, TentacleParams};
use crate::tower::TowerMap;
use crate::{linalg, Matrix, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `g^{-1} L^{-1} h`: a Sobolev limit that is not injective.
    T1,
    /// `g^{-1} L^{-1} h~ L g`.
    T2,
    /// `g^{-1} L^{-1} h~^{-1} L g`, the generalized inverse of `T2`.
    W,
    /// `S L g` with `alpha_k = 1/(k+1)`: Lipschitz, collapses the fat set.
    FL,
}

impl Variant {
    /// Tentacle profile the variant needs, if any.
    pub fn profile(self) -> Option<Profile> {
        match self {
            Variant::T1 => Some(Profile::Squeeze),
            Variant::T2 | Variant::W => Some(Profile::Stretch),
            Variant::FL => None,
        }
    }
}

/// Collapse of the tower axis to the origin,
/// `x -> (x_perp, x_n m(x))` with `m = |x_perp|_2` on `Q(0, 1 - delta)`
/// blended linearly in `|x|_inf` to `m = 1` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCollapse {
    pub delta: f64,
}

impl AxisCollapse {
    fn weight<const N: usize>(&self, x: &Point<N>) -> (f64, usize, f64) {
        let (mut rho, mut arg) = (0.0f64, 0);
        for (i, v) in x.iter().enumerate() {
            if v.abs() > rho {
                rho = v.abs();
                arg = i;
            }
        }
        let raw = (1.0 - rho) / self.delta;
        let dlam = if raw > 0.0 && raw < 1.0 { -x[arg].signum() / self.delta } else { 0.0 };
        (raw.clamp(0.0, 1.0), arg, dlam)
    }

    fn perp<const N: usize>(x: &Point<N>) -> f64 {
        x[..N - 1].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn apply<const N: usize>(&self, x: &Point<N>) -> Point<N> {
        let (lam, _, _) = self.weight(x);
        let m = lam * Self::perp(x) + (1.0 - lam);
        let mut y = *x;
        y[N - 1] = x[N - 1] * m;
        y
    }

    pub fn derivative<const N: usize>(&self, x: &Point<N>) -> Matrix<N> {
        let (lam, arg, dlam) = self.weight(x);
        let p = Self::perp(x);
        let m = lam * p + (1.0 - lam);
        let mut jac = linalg::identity();
        for j in 0..N {
            let mut dm = if j < N - 1 && p > 0.0 { lam * x[j] / p } else { 0.0 };
            if j == arg {
                dm += (p - 1.0) * dlam;
            }
            jac[N - 1][j] = x[N - 1] * dm;
        }
        jac[N - 1][N - 1] += m;
        jac
    }
}

/// One stage of a composite map.
pub struct CompositeStage<const N: usize> {
    variant: Variant,
    stage: usize,
    cantor: CantorMap<N>,
    tower: TowerMap<N>,
    tentacle: Option<TentacleMap<N>>,
    collapse: Option<AxisCollapse>,
    chain: Chain<'static, N>,
}

impl<const N: usize> CompositeStage<N> {
    /// `params` must carry the variant's profile with at least `stage`
    /// levels; it is ignored for `FL`.
    pub fn new(variant: Variant, beta: f64, params: Option<Arc<TentacleParams>>, stage: usize) -> Result<Self> {
        let tower = TowerMap::new(beta, stage)?;
        let (cantor, tentacle, collapse) = match variant.profile() {
            Some(profile) => {
                let params = params.ok_or(Error::NotInitialized(stage))?;
                if params.profile() != profile {
                    return Err(Error::InvalidSchedule(format!("{variant:?} needs {profile:?} tentacles")));
                }
                (CantorMap::standard(beta, stage)?, Some(TentacleMap::new(params, stage)?), None)
            }
            None => {
                let source = CubeFamily::new(ParameterSchedule::reciprocal(N, beta)?, Construction::SetA)?;
                let cantor = CantorMap::new(source, CubeFamily::set_b(beta)?, stage)?;
                (cantor, None, Some(AxisCollapse { delta: 1.0 / 16.0 }))
            }
        };
        let chain = match variant {
            Variant::T1 => Chain::new()
                .then(tentacle.clone().expect("profile checked"))
                .then(Inverted(tower.clone()))
                .then(Inverted(cantor.clone())),
            Variant::T2 => Chain::new()
                .then(cantor.clone())
                .then(tower.clone())
                .then(tentacle.clone().expect("profile checked"))
                .then(Inverted(tower.clone()))
                .then(Inverted(cantor.clone())),
            Variant::W => Chain::new()
                .then(cantor.clone())
                .then(tower.clone())
                .then(Inverted(tentacle.clone().expect("profile checked")))
                .then(Inverted(tower.clone()))
                .then(Inverted(cantor.clone())),
            Variant::FL => Chain::new().then(cantor.clone()).then(tower.clone()),
        };
        Ok(Self { variant, stage, cantor, tower, tentacle, collapse, chain })
    }

    /// Solves demo parameters for the variant and builds the stage.
    pub fn demo(variant: Variant, beta: f64, stage: usize) -> Result<Self> {
        let params = match variant.profile() {
            Some(p) => Some(Arc::new(TentacleParams::solve(N, beta, p, ScheduleMode::Demo, stage.max(1))?)),
            None => None,
        };
        Self::new(variant, beta, params, stage)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn cantor(&self) -> &CantorMap<N> {
        &self.cantor
    }

    pub fn tower(&self) -> &TowerMap<N> {
        &self.tower
    }

    pub fn tentacle(&self) -> Option<&TentacleMap<N>> {
        self.tentacle.as_ref()
    }

    fn check_domain(x: &Point<N>) -> Result<()> {
        if x.iter().all(|v| (-1.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(x.to_vec()))
        }
    }

    /// The composite at `x`, rejecting points outside the closed cube.
    pub fn eval(&self, x: &Point<N>) -> Result<Point<N>> {
        Self::check_domain(x)?;
        Ok(self.forward(x))
    }

    /// Inverse; `FL` is not injective.
    pub fn eval_inverse(&self, y: &Point<N>) -> Result<Point<N>> {
        Self::check_domain(y)?;
        if self.collapse.is_some() {
            return Err(Error::NotInvertible("FL collapses the tower axis"));
        }
        Ok(self.chain.inverse(y))
    }
}

impl<const N: usize> StageMap<N> for CompositeStage<N> {
    fn forward(&self, x: &Point<N>) -> Point<N> {
        let y = self.chain.forward(x);
        match &self.collapse {
            Some(c) => c.apply(&y),
            None => y,
        }
    }

    /// NaN for `FL`.
    fn inverse(&self, y: &Point<N>) -> Point<N> {
        match self.collapse {
            Some(_) => [f64::NAN; N],
            None => self.chain.inverse(y),
        }
    }

    fn jacobian(&self, x: &Point<N>) -> Matrix<N> {
        let jac = self.chain.jacobian(x);
        match &self.collapse {
            Some(c) => linalg::matmul(&c.derivative(&self.chain.forward(x)), &jac),
            None => jac,
        }
    }

    fn inverse_jacobian(&self, y: &Point<N>) -> Matrix<N> {
        match self.collapse {
            Some(_) => [[f64::NAN; N]; N],
            None => self.chain.inverse_jacobian(y),
        }
    }

    fn jacobian_det(&self, x: &Point<N>) -> f64 {
        let det = self.chain.jacobian_det(x);
        match &self.collapse {
            Some(c) => det * linalg::det(&c.derivative(&self.chain.forward(x))),
            None => det,
        }
    }

    fn inverse_jacobian_det(&self, y: &Point<N>) -> f64 {
        match self.collapse {
            Some(_) => f64::NAN,
            None => self.chain.inverse_jacobian_det(y),
        }
    }
}

/// Sampled nested tentacle chain and its images.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumWitness<const N: usize> {
    pub variant: Variant,
    pub stage: usize,
    /// Word of the target cell of the fat set.
    pub word: Vec<u32>,
    /// Points in the domain of the composite, cube center first, tip last.
    pub polyline: Vec<Point<N>>,
    pub images: Vec<Point<N>>,
    pub endpoint_distance: f64,
    pub image_diameter: f64,
}

impl<const N: usize> ContinuumWitness<N> {
    /// First and last polyline points.
    pub fn endpoints(&self) -> (Point<N>, Point<N>) {
        (self.polyline[0], *self.polyline.last().expect("non-empty polyline"))
    }
}

/// Pads `word` to length `k` by repeating its last letter, or truncates it.
pub fn extend_word(word: &[u32], k: usize) -> Vec<u32> {
    let last = word.last().copied().unwrap_or(0);
    (0..k).map(|i| word.get(i).copied().unwrap_or(last)).collect()
}

/// Samples the stage-`k` tentacle chain ending in the tower cell of `word`
/// and maps it by `T1` (or by `W` for the stretch variants).
///
/// The tentacle factor is evaluated in the straight chart of the known
/// tentacle, which stays exact where the transverse radii are far below
/// the resolution of absolute coordinates.
pub fn continuum_witness<const N: usize>(
    stage: &CompositeStage<N>,
    word: &[u32],
    samples: usize,
) -> Result<ContinuumWitness<N>> {
    let k = stage.stage();
    let tentacles = stage.tentacle().ok_or(Error::NotInvertible("FL has no tentacles"))?;
    if samples < 2 {
        return Err(Error::OutOfRange { value: samples as f64, lo: 2.0, hi: f64::INFINITY });
    }
    let word = extend_word(word, k);
    let level = tentacles.params().level(k)?.clone();
    // The long tentacle: the squeeze domain core, or the stretch image core.
    let end = match stage.variant() {
        Variant::T1 => level.core_end,
        _ => level.image_core_end,
    };
    let tip = end * (1.0 - 1e-9);
    let mut polyline = Vec::with_capacity(samples);
    let mut images = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = tip * i as f64 / (samples - 1) as f64;
        let mut chart = [0.0; N];
        chart[0] = t;
        let chain_point = tentacles.unchart(&word, &chart)?;
        let moved = match stage.variant() {
            Variant::T1 => tentacles.chart_forward(k, &chart),
            _ => tentacles.chart_inverse(k, &chart),
        };
        let moved = tentacles.unchart(&word, &moved)?;
        let back = |p: &Point<N>| {
            let q = stage.tower().inverse(p);
            stage.cantor().inverse(&q)
        };
        match stage.variant() {
            Variant::T1 => polyline.push(chain_point),
            _ => polyline.push(back(&chain_point)),
        }
        images.push(back(&moved));
    }
    let endpoint_distance = linalg::euclid(&polyline[0], &polyline[samples - 1]);
    let mut image_diameter = 0.0f64;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            image_diameter = image_diameter.max(linalg::euclid(&images[i], &images[j]));
        }
    }
    Ok(ContinuumWitness {
        variant: stage.variant(),
        stage: k,
        word,
        polyline,
        images,
        endpoint_distance,
        image_diameter,
    })
}
