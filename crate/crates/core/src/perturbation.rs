//! Lowest-order perturbative quantities for the wires model and numerical
//! checks of the averaged generator `L̂ = E_θ E_σ ∂²_{R_θ P R_θ⁻¹}`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{act, replica_seeds};
use crate::error::{Error, Result};
use crate::frame::{horizontal_basis, rotation_matrix, tangent_lift, IsotropicFrame};
use crate::matrix::{expm, ComplexMatrix, C64, ZERO};
use crate::stats::{Estimate, RunningStats};
use crate::wires::{energy_to_k, WiresModel, DEFAULT_QUADRATURE_GRID};

/// `γ_p = λ²(1 + 2(L − p)) / (8 sin²k)`.
pub fn gamma_perturbative(l: usize, energy: f64, lambda: f64, p: usize) -> Result<f64> {
    if p == 0 || p > l {
        return Err(Error::invalid("p", format!("must lie in 1..={l}")));
    }
    let s = energy_to_k(energy)?.sin();
    Ok(lambda * lambda * (1.0 + 2.0 * (l - p) as f64) / (8.0 * s * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbativePrediction {
    pub l: usize,
    pub energy: f64,
    pub lambda: f64,
    pub exponents: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl PerturbativePrediction {
    pub fn new(l: usize, energy: f64, lambda: f64) -> Result<Self> {
        let exponents = (1..=l)
            .map(|p| gamma_perturbative(l, energy, lambda, p))
            .collect::<Result<Vec<_>>>()?;
        let partial_sums = exponents
            .iter()
            .scan(0.0, |acc, g| {
                *acc += g;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            l,
            energy,
            lambda,
            exponents,
            partial_sums,
        })
    }

    /// Constant gap `λ² / (4 sin²k)` between consecutive exponents.
    pub fn spacing(&self) -> f64 {
        let s = (-self.energy / 2.0).acos().sin();
        self.lambda * self.lambda / (4.0 * s * s)
    }
}

fn partial_trace(m: &ComplexMatrix, p: usize) -> C64 {
    (0..p).map(|i| m[(i, i)]).sum()
}

/// Complex value of `F_p` before the imaginary residue is discarded.
pub fn class_function_fp_complex(frame: &IsotropicFrame, p: usize) -> C64 {
    let l = frame.l() as f64;
    let uv = frame.relative_phase();
    let vu = uv.adjoint();
    let t_uv = partial_trace(&uv, p);
    let t_vu = partial_trace(&vu, p);
    let p = p as f64;
    2.0 * l * p + l * (t_vu + t_uv) + 0.5 * t_uv * t_uv + 0.5 * t_vu * t_vu - p * p
}

/// `F_p(Φ) = 2Lp + L Tr(1_p(V^*U + U^*V)) + ½[Tr(1_p U^*V)]² + ½[Tr(1_p V^*U)]² − p²`,
/// where `1_p` keeps the first `p` diagonal entries.
pub fn class_function_fp(frame: &IsotropicFrame, p: usize) -> f64 {
    assert!(p >= 1 && p <= frame.l(), "p = {p} out of range for L = {}", frame.l());
    let z = class_function_fp_complex(frame, p);
    debug_assert!(z.im.abs() <= 1e-12 * (1.0 + z.re.abs()), "F_p has imaginary part {}", z.im);
    z.re
}

/// Haar expectation of `F_p`.
pub fn fp_haar_mean(l: usize, p: usize) -> f64 {
    (2 * l * p) as f64 - (p * p) as f64
}

/// Fourier coefficients `f_j = (1/G) Σ_m e^{−ijθ_m} f(R_{θ_m}·x)` for
/// `j = −J..=J` on the uniform grid of `G` angles.
pub fn fourier_coeffs<F>(f: F, frame: &IsotropicFrame, j_max: usize, grid: usize) -> Result<Vec<C64>>
where
    F: Fn(&IsotropicFrame) -> C64,
{
    if grid < 4 * j_max + 1 {
        return Err(Error::invalid("grid", format!("need at least {} points", 4 * j_max + 1)));
    }
    let angles: Vec<f64> = (0..grid).map(|m| std::f64::consts::TAU * m as f64 / grid as f64).collect();
    let values: Vec<C64> = angles.iter().map(|&t| f(&frame.rotated(t))).collect();
    let j_max = j_max as i64;
    Ok((-j_max..=j_max)
        .map(|j| {
            angles
                .iter()
                .zip(&values)
                .map(|(&t, v)| C64::from_polar(1.0, -(j as f64) * t) * v)
                .sum::<C64>()
                / grid as f64
        })
        .collect())
}

/// Index of coefficient `j` in the output of [`fourier_coeffs`].
pub fn fourier_index(j: i64, j_max: usize) -> usize {
    (j + j_max as i64) as usize
}

/// Finite-difference step bounds accepted by the generator estimators.
pub const MIN_STEP: f64 = 1e-4;
pub const MAX_STEP: f64 = 1e-2;
/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-3;

fn check_step(h: f64) -> Result<()> {
    if (MIN_STEP..=MAX_STEP).contains(&h) {
        Ok(())
    } else {
        Err(Error::invalid("h", format!("must lie in [{MIN_STEP}, {MAX_STEP}]")))
    }
}

/// `exp(tP)`, taking the shortcut `1 + tP` when `P² = 0`.
pub fn flow(p: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let scale = p.max_abs();
    if p.matmul(p).max_abs() <= 1e-15 * scale * scale {
        let mut m = p.scale_real(t);
        for i in 0..m.rows() {
            m[(i, i)] += 1.0;
        }
        Ok(m)
    } else {
        expm(&p.scale_real(t))
    }
}

/// A fixed set of coupling draws `P(W_1), …, P(W_n)`, so that several
/// generator evaluations can share their randomness.
#[derive(Debug, Clone)]
pub struct SampledDirections {
    directions: Vec<ComplexMatrix>,
}

impl SampledDirections {
    pub fn draw<R: Rng + ?Sized>(model: &WiresModel, nsamples: usize, rng: &mut R) -> Self {
        let directions = (0..nsamples).map(|_| model.p_of(&model.sample_w(rng))).collect();
        Self { directions }
    }

    pub fn from_directions(directions: Vec<ComplexMatrix>) -> Self {
        Self { directions }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[ComplexMatrix] {
        &self.directions
    }
}

/// `R_θ P R_θ⁻¹` for every angle.
pub fn conjugated_directions(p: &ComplexMatrix, angles: &[f64]) -> Vec<ComplexMatrix> {
    let l = p.rows() / 2;
    angles
        .iter()
        .map(|&t| {
            let r = rotation_matrix(l, t);
            r.matmul(p).matmul(&r.adjoint())
        })
        .collect()
}

/// Central second difference of `f` along the flow of `p` at `frame`.
pub fn second_difference<F>(f: &F, p: &ComplexMatrix, frame: &IsotropicFrame, h: f64) -> Result<C64>
where
    F: Fn(&IsotropicFrame) -> C64,
{
    let fwd = act(&flow(p, h)?, frame)?;
    let bwd = act(&flow(p, -h)?, frame)?;
    Ok((f(&fwd) - f(frame) * 2.0 + f(&bwd)) / (h * h))
}

fn generator_samples<F>(
    f: &F,
    dirs: &SampledDirections,
    frame: &IsotropicFrame,
    h: f64,
    angles: Option<&[f64]>,
) -> Result<Vec<C64>>
where
    F: Fn(&IsotropicFrame) -> C64,
{
    check_step(h)?;
    dirs.directions
        .iter()
        .map(|p| match angles {
            None => second_difference(f, p, frame, h),
            Some(angles) => {
                let conj = conjugated_directions(p, angles);
                let mut acc = ZERO;
                for q in &conj {
                    acc += second_difference(f, q, frame, h)?;
                }
                Ok(acc / angles.len() as f64)
            }
        })
        .collect()
}

fn real_estimate(samples: &[C64]) -> Estimate {
    let s: RunningStats = samples.iter().map(|z| z.re).collect();
    Estimate::from(&s)
}

/// Monte Carlo estimate of `(Lf)(x) = E_σ ∂²_{P(W)} f(x)`.
pub fn apply_generator<F, R>(
    model: &WiresModel,
    f: F,
    frame: &IsotropicFrame,
    h: f64,
    nsamples: usize,
    rng: &mut R,
) -> Result<Estimate>
where
    F: Fn(&IsotropicFrame) -> f64,
    R: Rng + ?Sized,
{
    let dirs = SampledDirections::draw(model, nsamples, rng);
    apply_generator_with(&f, &dirs, frame, h)
}

pub fn apply_generator_with<F>(f: &F, dirs: &SampledDirections, frame: &IsotropicFrame, h: f64) -> Result<Estimate>
where
    F: Fn(&IsotropicFrame) -> f64,
{
    let g = |x: &IsotropicFrame| C64::new(f(x), 0.0);
    Ok(real_estimate(&generator_samples(&g, dirs, frame, h, None)?))
}

/// Monte Carlo estimate of `(L̂f)(x)`, the generator additionally averaged
/// over the conjugates `R_θ P R_θ⁻¹` by the closed group generated by `R_k`.
pub fn averaged_generator<F, R>(
    model: &WiresModel,
    f: F,
    frame: &IsotropicFrame,
    h: f64,
    nsamples: usize,
    rng: &mut R,
) -> Result<Estimate>
where
    F: Fn(&IsotropicFrame) -> f64,
    R: Rng + ?Sized,
{
    let dirs = SampledDirections::draw(model, nsamples, rng);
    let angles = model.rotation_group().averaging_angles(DEFAULT_QUADRATURE_GRID);
    let g = |x: &IsotropicFrame| C64::new(f(x), 0.0);
    Ok(real_estimate(&generator_samples(&g, &dirs, frame, h, Some(&angles))?))
}

/// `L̂f` for a complex observable with fixed directions and angles; returns
/// the sample mean.
pub fn averaged_generator_complex<F>(
    f: &F,
    dirs: &SampledDirections,
    angles: &[f64],
    frame: &IsotropicFrame,
    h: f64,
) -> Result<C64>
where
    F: Fn(&IsotropicFrame) -> C64,
{
    let samples = generator_samples(f, dirs, frame, h, Some(angles))?;
    Ok(samples.iter().sum::<C64>() / samples.len().max(1) as f64)
}

/// Number of gauge-invariant observables written by [`phase_observables`].
pub fn phase_observable_count(l: usize) -> usize {
    2 + l
}

/// `|Tr(U*V)|²`, `Re Tr((U*V)²)` and `F_1, …, F_L`.
pub fn phase_observables(frame: &IsotropicFrame, out: &mut [f64]) {
    let m = frame.relative_phase();
    out[0] = m.trace().norm_sqr();
    out[1] = m.matmul(&m).trace().re;
    for (p, o) in out[2..].iter_mut().enumerate() {
        *o = class_function_fp(frame, p + 1);
    }
}

pub fn phase_observable_names(l: usize) -> Vec<String> {
    let mut names = vec!["|Tr(U*V)|^2".to_string(), "Re Tr((U*V)^2)".to_string()];
    names.extend((1..=l).map(|p| format!("F_{p}")));
    names
}

/// Moments of [`phase_observables`] over `n` independent Haar frames.
pub fn haar_phase_moments<R: Rng + ?Sized>(l: usize, n: usize, rng: &mut R) -> Vec<Estimate> {
    let width = phase_observable_count(l);
    let mut stats = vec![RunningStats::new(); width];
    let mut out = vec![0.0; width];
    for _ in 0..n {
        phase_observables(&IsotropicFrame::haar(l, rng), &mut out);
        for (s, &x) in stats.iter_mut().zip(&out) {
            s.push(x);
        }
    }
    stats.iter().map(Estimate::from).collect()
}

/// `C = diag(2j − 1 − 2L)`, `j = 1..=L`.
pub fn divergence_weights(l: usize) -> Vec<f64> {
    (1..=l).map(|j| (2 * j) as f64 - 1.0 - (2 * l) as f64).collect()
}

/// `div(∂_P) = 2 Re Tr(C U^* B V)` for `P` with upper-right block `B`.
pub fn divergence_dp(frame: &IsotropicFrame, b: &ComplexMatrix) -> f64 {
    let m = frame.u().adjoint().matmul(b).matmul(frame.v());
    let c = divergence_weights(frame.l());
    2.0 * c.iter().enumerate().map(|(j, cj)| cj * m[(j, j)].re).sum::<f64>()
}

/// Finite-difference divergence of `∂_P` with respect to the invariant
/// measure: `Σ_i δ_{S_i} ⟨S_i, X̂⟩`, where `S_i` runs over the horizontal
/// basis, `δ_S` differentiates along right translation by `exp(tS)` and
/// `X̂` is the left-trivialized lift of the vector field.
pub fn divergence_numeric(p: &ComplexMatrix, frame: &IsotropicFrame, h: f64) -> Result<f64> {
    let basis = horizontal_basis(frame.l());
    let mut total = 0.0;
    for (su, sv) in &basis {
        let component = |t: f64| -> Result<f64> {
            let moved = IsotropicFrame::new(
                frame.u().matmul(&expm(&su.scale_real(t))?),
                frame.v().matmul(&expm(&sv.scale_real(t))?),
            )?;
            let (xu, xv) = tangent_lift(p, &moved);
            Ok(su.real_inner(&xu) + sv.real_inner(&xv))
        };
        total += (component(h)? - component(-h)?) / (2.0 * h);
    }
    Ok(total)
}

/// Frames sampled by [`check_rho0_haar`].
pub const RHO0_FRAMES: usize = 32;
/// Smallest step of the extrapolated derivative of the divergence.
pub const RHO0_STEP: f64 = 1e-3;

/// Result of [`check_rho0_haar`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho0Check {
    /// Estimate of `E_x[(L̂^*1)(x)²]` over Haar frames.
    pub value: f64,
    /// Statistical and discretization errors combined in quadrature.
    pub stderr: f64,
    pub statistical_stderr: f64,
    /// Bound on the finite-difference error carried into `value`.
    pub discretization_error: f64,
    /// Plain Haar average of `L̂^*1`, which vanishes at every energy.
    pub haar_mean: Estimate,
    pub frames: usize,
    pub nsamples: usize,
}

/// Tests whether the Haar measure solves `L̂^*ρ = 0`, i.e. whether
/// `(L̂^*1)(x) = E_θ E_σ [∂_X(div X) + (div X)²]` with `X = ∂_{R_θ P R_θ⁻¹}`
/// vanishes identically.
///
/// Since `∫ L̂^*1 dx = 0` for every energy, the Haar average alone cannot
/// detect anything. Instead each Haar frame gets two independent estimates
/// `v₁, v₂` of `(L̂^*1)(x)` from disjoint sets of `nsamples` couplings, and
/// `v₁v₂` is an unbiased estimate of `(L̂^*1)(x)²`. Its mean over frames is
/// zero exactly when the Haar measure is invariant to lowest order.
pub fn check_rho0_haar<R: Rng + ?Sized>(model: &WiresModel, nsamples: usize, rng: &mut R) -> Result<Rho0Check> {
    check_rho0_haar_with(model, RHO0_FRAMES, nsamples, RHO0_STEP, rng)
}

pub fn check_rho0_haar_with<R: Rng + ?Sized>(
    model: &WiresModel,
    frames: usize,
    nsamples: usize,
    h: f64,
    rng: &mut R,
) -> Result<Rho0Check> {
    if frames < 2 {
        return Err(Error::invalid("frames", "need at least 2"));
    }
    if nsamples == 0 {
        return Err(Error::invalid("nsamples", "must be at least 1"));
    }
    check_step(h)?;
    let angles = model.rotation_group().averaging_angles(DEFAULT_QUADRATURE_GRID);
    let l = model.l();
    let pairs = replica_seeds(rng, frames)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = IsotropicFrame::haar(l, &mut rng);
            let a = adjoint_on_constant(model, &x, &angles, nsamples, h, &mut rng)?;
            let b = adjoint_on_constant(model, &x, &angles, nsamples, h, &mut rng)?;
            Ok((a, b))
        })
        .collect::<Result<Vec<(AdjointEstimate, AdjointEstimate)>>>()?;
    let products: RunningStats = pairs.iter().map(|(a, b)| a.value * b.value).collect();
    let means: RunningStats = pairs.iter().map(|(a, b)| 0.5 * (a.value + b.value)).collect();
    let discretization = pairs
        .iter()
        .map(|(a, b)| a.value.abs() * b.error + b.value.abs() * a.error + a.error * b.error)
        .sum::<f64>()
        / frames as f64;
    let statistical = products.stderr();
    Ok(Rho0Check {
        value: products.mean(),
        stderr: statistical.hypot(discretization),
        statistical_stderr: statistical,
        discretization_error: discretization,
        haar_mean: Estimate::from(&means),
        frames,
        nsamples,
    })
}

/// Monte Carlo estimate of `(L̂^*1)(x)` with a bound on its
/// finite-difference error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointEstimate {
    pub value: f64,
    pub error: f64,
}

/// Estimate `(L̂^*1)(x)` from `nsamples` fresh couplings. The derivative of
/// the divergence along the flow is a Richardson extrapolation of central
/// differences with steps `h` and `2h`; comparing with the same
/// extrapolation from `2h` and `4h` bounds its error.
pub fn adjoint_on_constant<R: Rng + ?Sized>(
    model: &WiresModel,
    x: &IsotropicFrame,
    angles: &[f64],
    nsamples: usize,
    h: f64,
    rng: &mut R,
) -> Result<AdjointEstimate> {
    let l = model.l();
    let mut acc = 0.0;
    let mut err = 0.0;
    for _ in 0..nsamples {
        let p = model.p_of(&model.sample_w(rng));
        for q in conjugated_directions(&p, angles) {
            let b = q.block(0, l, l, l);
            let div = divergence_dp(x, &b);
            let central = |t: f64| -> Result<f64> {
                let fwd = act(&flow(&q, t)?, x)?;
                let bwd = act(&flow(&q, -t)?, x)?;
                Ok((divergence_dp(&fwd, &b) - divergence_dp(&bwd, &b)) / (2.0 * t))
            };
            let (d1, d2, d4) = (central(h)?, central(2.0 * h)?, central(4.0 * h)?);
            let fine = (4.0 * d1 - d2) / 3.0;
            let coarse = (4.0 * d2 - d4) / 3.0;
            acc += fine + div * div;
            err += (fine - coarse).abs() / 15.0;
        }
    }
    let count = (nsamples * angles.len()) as f64;
    Ok(AdjointEstimate {
        value: acc / count,
        error: err / count,
    })
}
