//! Reproducible experiments: the generic model `T = R exp(Σ λⁿ P_n)` on the
//! circle or on the flag manifold, and the circle walk with a non-unique
//! invariant measure.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{act, per_replica, BirkhoffEstimate, Sampling};
use crate::error::{Error, Result};
use crate::frame::{IsotropicFrame, FRAME_TOLERANCE};
use crate::matrix::{expm, qr_positive, ComplexMatrix, C64};
use crate::stats::RunningStats;
use crate::wires::{rotation_group_with_limit, WiresModel, DEFAULT_MAX_ORDER, ORDER_TOLERANCE};

/// Draws one term `P_{n,σ}` of the exponent.
pub type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> ComplexMatrix + Send + Sync>;

/// `T_{λ,σ} = R exp(Σ_{n ≤ M} λⁿ P_{n,σ})`. All terms are drawn at every
/// step, even beyond the truncation order, so that truncations of one model
/// see identical random streams.
#[derive(Clone)]
pub struct GenericModel {
    r: ComplexMatrix,
    series: Vec<Sampler>,
    lambda: f64,
    truncation: usize,
}

impl std::fmt::Debug for GenericModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericModel")
            .field("r", &self.r)
            .field("terms", &self.series.len())
            .field("lambda", &self.lambda)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl GenericModel {
    pub fn new(r: ComplexMatrix, series: Vec<Sampler>, lambda: f64) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::Dimension(format!("R must be square, got {}x{}", r.rows(), r.cols())));
        }
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be finite"));
        }
        let truncation = series.len();
        Ok(Self {
            r,
            series,
            lambda,
            truncation,
        })
    }

    /// The wires model: `R = R_k`, `P_1 = P(W)` and no higher terms.
    pub fn from_wires(model: &WiresModel) -> Self {
        let m = model.clone();
        let p1: Sampler = Arc::new(move |rng: &mut ChaCha8Rng| m.p_of(&m.sample_w(rng)));
        Self {
            r: model.r_k(),
            series: vec![p1],
            lambda: model.lambda(),
            truncation: 1,
        }
    }

    /// Keep only the first `m` terms of the exponent.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            truncation: m.min(self.series.len()),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.r.rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rotation(&self) -> &ComplexMatrix {
        &self.r
    }

    pub fn sample_step(&self, rng: &mut ChaCha8Rng) -> Result<ComplexMatrix> {
        let n = self.dim();
        let mut exponent = ComplexMatrix::zeros(n, n);
        let mut power = 1.0;
        for (i, sampler) in self.series.iter().enumerate() {
            power *= self.lambda;
            let p = sampler(rng);
            if p.rows() != n || p.cols() != n {
                return Err(Error::Dimension(format!(
                    "term {} has shape {}x{}, expected {n}x{n}",
                    i + 1,
                    p.rows(),
                    p.cols()
                )));
            }
            if i < self.truncation {
                exponent += &p.scale_real(power);
            }
        }
        Ok(self.r.matmul(&expm(&exponent)?))
    }

    /// Monte Carlo estimate of `E(P_1)` and of its commutator with `R`.
    pub fn centering<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<CenteringDiagnostics> {
        let n = self.dim();
        let Some(p1) = self.series.first() else {
            return Ok(CenteringDiagnostics::trivial(samples));
        };
        if samples < 2 {
            return Err(Error::invalid("samples", "need at least 2"));
        }
        let mut stream = ChaCha8Rng::seed_from_u64(rng.random());
        let mut acc = vec![RunningStats::new(); 2 * n * n];
        for _ in 0..samples {
            let p = p1(&mut stream);
            for (k, z) in p.as_slice().iter().enumerate() {
                acc[2 * k].push(z.re);
                acc[2 * k + 1].push(z.im);
            }
        }
        let mean = ComplexMatrix::from_fn(n, n, |i, j| {
            let k = i * n + j;
            C64::new(acc[2 * k].mean(), acc[2 * k + 1].mean())
        });
        let noise = acc.iter().map(|s| s.stderr().powi(2)).sum::<f64>().sqrt();
        let mean_norm = mean.frobenius_norm();
        let commutator_norm = mean.commutator(&self.r).frobenius_norm();
        let r_norm = self.r.frobenius_norm();
        Ok(CenteringDiagnostics {
            samples,
            mean_norm,
            commutator_norm,
            noise,
            centered: mean_norm <= 4.0 * noise + 1e-12,
            commutes_with_r: commutator_norm <= 8.0 * r_norm * noise + 1e-12,
        })
    }
}

/// Whether `E(P_1)` vanishes, or at least commutes with `R`, within Monte
/// Carlo error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteringDiagnostics {
    pub samples: usize,
    /// `‖E(P_1)‖_F` as estimated.
    pub mean_norm: f64,
    /// `‖[E(P_1), R]‖_F` as estimated.
    pub commutator_norm: f64,
    /// Frobenius norm of the entrywise standard errors.
    pub noise: f64,
    pub centered: bool,
    pub commutes_with_r: bool,
}

impl CenteringDiagnostics {
    fn trivial(samples: usize) -> Self {
        Self {
            samples,
            mean_norm: 0.0,
            commutator_norm: 0.0,
            noise: 0.0,
            centered: true,
            commutes_with_r: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    /// The unit circle, acted on by `1×1` unitaries.
    Circle,
    /// Isotropic flags of `C^{2L}`, acted on by U(L,L).
    Flag(usize),
}

impl Manifold {
    fn ambient_dim(&self) -> usize {
        match *self {
            Manifold::Circle => 1,
            Manifold::Flag(l) => 2 * l,
        }
    }

    pub fn haar_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match *self {
            Manifold::Circle => Point::Circle(C64::from_polar(1.0, rng.random::<f64>() * TAU)),
            Manifold::Flag(l) => Point::Flag(IsotropicFrame::haar(l, rng)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Circle(C64),
    Flag(IsotropicFrame),
}

impl Point {
    pub fn manifold(&self) -> Manifold {
        match self {
            Point::Circle(_) => Manifold::Circle,
            Point::Flag(f) => Manifold::Flag(f.l()),
        }
    }

    pub fn as_circle(&self) -> Option<C64> {
        match self {
            Point::Circle(z) => Some(*z),
            Point::Flag(_) => None,
        }
    }

    pub fn as_flag(&self) -> Option<&IsotropicFrame> {
        match self {
            Point::Flag(f) => Some(f),
            Point::Circle(_) => None,
        }
    }
}

/// Unitarity tolerance for circle steps.
pub const CIRCLE_TOLERANCE: f64 = 1e-10;

/// Apply one group element to a point.
pub fn step_point(t: &ComplexMatrix, x: &Point) -> Result<Point> {
    match x {
        Point::Circle(z) => {
            if t.rows() != 1 || t.cols() != 1 {
                return Err(Error::Dimension(format!("circle steps need 1x1 elements, got {}x{}", t.rows(), t.cols())));
            }
            let m = t[(0, 0)];
            if (m.norm() - 1.0).abs() > CIRCLE_TOLERANCE {
                return Err(Error::invalid("model", format!("step {m} does not preserve the circle")));
            }
            let w = m * z;
            Ok(Point::Circle(w / w.norm()))
        }
        Point::Flag(f) => {
            let g = act(t, f)?;
            if g.unitarity_defect() > 0.1 * FRAME_TOLERANCE {
                let (u, _) = qr_positive(g.u())?;
                let (v, _) = qr_positive(g.v())?;
                return Ok(Point::Flag(IsotropicFrame::new(u, v)?));
            }
            Ok(Point::Flag(g))
        }
    }
}

fn check_manifold(model: &GenericModel, manifold: Manifold) -> Result<()> {
    if model.dim() != manifold.ambient_dim() {
        return Err(Error::Dimension(format!(
            "model acts on C^{}, manifold {manifold:?} needs C^{}",
            model.dim(),
            manifold.ambient_dim()
        )));
    }
    Ok(())
}

/// `x_1, …, x_n` driven by `rng`.
pub fn generic_trajectory(model: &GenericModel, x0: &Point, n: u64, mut rng: ChaCha8Rng) -> Result<Vec<Point>> {
    check_manifold(model, x0.manifold())?;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        x = step_point(&model.sample_step(&mut rng)?, &x)?;
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenericRun {
    pub estimate: BirkhoffEstimate,
    pub centering: CenteringDiagnostics,
}

/// Samples used for the centering diagnostics of [`run_generic`].
pub const CENTERING_SAMPLES: usize = 10_000;

/// Birkhoff average of `f` along the generic chain, from Haar-distributed
/// starting points.
pub fn run_generic<F, R>(model: &GenericModel, manifold: Manifold, f: F, sampling: &Sampling, rng: &mut R) -> Result<GenericRun>
where
    F: Fn(&Point) -> f64 + Sync,
    R: Rng + ?Sized,
{
    generic_impl(model, manifold, &f, None, sampling, rng)
}

/// As [`run_generic`], with every replica started from `x0`.
pub fn run_generic_from<F, R>(model: &GenericModel, f: F, x0: &Point, sampling: &Sampling, rng: &mut R) -> Result<GenericRun>
where
    F: Fn(&Point) -> f64 + Sync,
    R: Rng + ?Sized,
{
    generic_impl(model, x0.manifold(), &f, Some(x0), sampling, rng)
}

fn generic_impl<F, R>(
    model: &GenericModel,
    manifold: Manifold,
    f: &F,
    x0: Option<&Point>,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<GenericRun>
where
    F: Fn(&Point) -> f64 + Sync,
    R: Rng + ?Sized,
{
    check_manifold(model, manifold)?;
    if sampling.n_steps == 0 || sampling.replicas == 0 {
        return Err(Error::invalid("sampling", "steps and replicas must be positive"));
    }
    let centering = model.centering(CENTERING_SAMPLES, rng)?;
    let means = per_replica(rng, sampling.replicas, |mut rng| {
        let mut x = match x0 {
            Some(x) => x.clone(),
            None => manifold.haar_point(&mut rng),
        };
        for _ in 0..sampling.burn_in {
            x = step_point(&model.sample_step(&mut rng)?, &x)?;
        }
        let mut acc = 0.0;
        for _ in 0..sampling.n_steps {
            acc += f(&x);
            x = step_point(&model.sample_step(&mut rng)?, &x)?;
        }
        Ok(acc / sampling.n_steps as f64)
    })?;
    Ok(GenericRun {
        estimate: BirkhoffEstimate::from_replicas(&means, sampling),
        centering,
    })
}

/// Final points of independent chains of length `n` from Haar starts.
pub fn generic_endpoints<R: Rng + ?Sized>(
    model: &GenericModel,
    manifold: Manifold,
    n: u64,
    replicas: usize,
    rng: &mut R,
) -> Result<Vec<Point>> {
    check_manifold(model, manifold)?;
    per_replica(rng, replicas, |mut rng| {
        let mut x = manifold.haar_point(&mut rng);
        for _ in 0..n {
            x = step_point(&model.sample_step(&mut rng)?, &x)?;
        }
        Ok(x)
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of the angles
/// (taken mod 2π) and the uniform law on the circle.
pub fn ks_distance_uniform(angles: &[f64]) -> f64 {
    let mut u: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU) / TAU).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Birkhoff averages of `Re(z^m)` for the walk `z ↦ e^{±iπλ} z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub lambda: f64,
    pub x0: [f64; 2],
    /// Order of `e^{iπλ}` as a root of unity, if it is one.
    pub step_order: Option<u64>,
    pub observables: Vec<(u32, BirkhoffEstimate)>,
}

impl CounterexampleReport {
    pub fn observable(&self, m: u32) -> Option<&BirkhoffEstimate> {
        self.observables.iter().find(|(k, _)| *k == m).map(|(_, e)| e)
    }
}

pub const COUNTEREXAMPLE_POWERS: [u32; 3] = [1, 2, 4];

pub fn circle_counterexample<R: Rng + ?Sized>(
    lambda: f64,
    x0: C64,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<CounterexampleReport> {
    circle_counterexample_powers(lambda, x0, &COUNTEREXAMPLE_POWERS, sampling, rng)
}

/// As [`circle_counterexample`] for arbitrary powers `m`.
///
/// The walk is tracked through its integer position `m_n`, with
/// `z_n = x0 · e^{iπλ m_n}`, so that no rounding accumulates along it.
pub fn circle_counterexample_powers<R: Rng + ?Sized>(
    lambda: f64,
    x0: C64,
    powers: &[u32],
    sampling: &Sampling,
    rng: &mut R,
) -> Result<CounterexampleReport> {
    if (x0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("x0", "must lie on the unit circle"));
    }
    if sampling.n_steps == 0 || sampling.replicas == 0 {
        return Err(Error::invalid("sampling", "steps and replicas must be positive"));
    }
    let per = per_replica(rng, sampling.replicas, |mut rng| {
        let mut m: i64 = 0;
        for _ in 0..sampling.burn_in {
            m += if rng.random::<bool>() { 1 } else { -1 };
        }
        let mut acc = vec![0.0; powers.len()];
        for _ in 0..sampling.n_steps {
            let phase = PI * lambda * m as f64;
            for (a, &p) in acc.iter_mut().zip(powers) {
                let z = x0.powu(p) * C64::from_polar(1.0, phase * p as f64);
                *a += z.re;
            }
            m += if rng.random::<bool>() { 1 } else { -1 };
        }
        Ok(acc.into_iter().map(|a| a / sampling.n_steps as f64).collect::<Vec<f64>>())
    })?;
    let observables = powers
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let means: Vec<f64> = per.iter().map(|r| r[i]).collect();
            (p, BirkhoffEstimate::from_replicas(&means, sampling))
        })
        .collect();
    Ok(CounterexampleReport {
        lambda,
        x0: [x0.re, x0.im],
        step_order: rotation_group_with_limit(PI * lambda, ORDER_TOLERANCE, DEFAULT_MAX_ORDER).order,
        observables,
    })
}

/// The circle model `R = 1`, `P_1 = ±i` with fair signs.
pub fn bernoulli_circle_model(lambda: f64) -> GenericModel {
    let p1: Sampler = Arc::new(|rng: &mut ChaCha8Rng| {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        ComplexMatrix::scalar(1, C64::new(0.0, s))
    });
    GenericModel::new(ComplexMatrix::identity(1), vec![p1], lambda).expect("valid circle model")
}
