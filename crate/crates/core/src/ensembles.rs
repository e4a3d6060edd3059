//! Random Hermitian coupling matrices, Monte Carlo validators for their
//! moment identities, and the whitening decomposition of a vector-valued
//! random variable into uncorrelated scalar coefficients.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, ONE};
use crate::stats::RunningStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for Ensemble {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "rademacher" => Ok(Ensemble::Rademacher),
            other => Err(Error::invalid(
                "ensemble",
                format!("unknown ensemble `{other}` (expected gaussian or rademacher)"),
            )),
        }
    }
}

/// Distribution of the Hermitian coupling matrix `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WignerSpec {
    pub l: usize,
    pub kind: Ensemble,
}

impl WignerSpec {
    pub fn new(l: usize, kind: Ensemble) -> Self {
        Self { l, kind }
    }

    pub fn gaussian(l: usize) -> Self {
        Self::new(l, Ensemble::Gaussian)
    }
}

fn sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draw a Hermitian `W` with independent centered entries satisfying
/// `E(W_ij²) = 0`, `E|W_ij|² = 1` for `i < j` and `E(W_kk²) = 1`.
pub fn sample_w<R: Rng + ?Sized>(spec: &WignerSpec, rng: &mut R) -> ComplexMatrix {
    let mut w = ComplexMatrix::zeros(spec.l, spec.l);
    fill_w(spec, rng, w.as_mut_slice());
    w
}

/// [`sample_w`] into a row-major `L×L` buffer. Both consume the random
/// stream identically.
pub(crate) fn fill_w<R: Rng + ?Sized>(spec: &WignerSpec, rng: &mut R, w: &mut [C64]) {
    let l = spec.l;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..l {
        let d = match spec.kind {
            Ensemble::Gaussian => rng.sample::<f64, _>(StandardNormal),
            Ensemble::Rademacher => sign(rng),
        };
        w[i * l + i] = C64::new(d, 0.0);
        for j in i + 1..l {
            let z = match spec.kind {
                Ensemble::Gaussian => C64::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ),
                Ensemble::Rademacher => C64::new(sign(rng), sign(rng)),
            } * s;
            w[i * l + j] = z;
            w[j * l + i] = z.conj();
        }
    }
}

/// Monte Carlo comparison of one (possibly matrix-valued) expectation with
/// its predicted value. Real and imaginary parts of every entry are tracked
/// as separate components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    /// Largest `|estimate − expected|` over all components.
    pub max_deviation: f64,
    /// Largest `|estimate − expected| / stderr` over all components.
    pub max_z: f64,
    /// Largest component standard error.
    pub max_stderr: f64,
    components: Vec<(f64, f64)>,
}

impl MomentCheck {
    fn new(name: &str, stats: &[RunningStats], expected: &[f64]) -> Self {
        let components: Vec<(f64, f64)> = stats
            .iter()
            .zip(expected)
            .map(|(s, &e)| (s.mean() - e, s.stderr()))
            .collect();
        let max_deviation = components.iter().map(|c| c.0.abs()).fold(0.0, f64::max);
        let max_stderr = components.iter().map(|c| c.1).fold(0.0, f64::max);
        let max_z = components
            .iter()
            .map(|&(d, se)| if d.abs() <= EXACT_SLACK { 0.0 } else { d.abs() / se })
            .fold(0.0, f64::max);
        Self {
            name: name.to_string(),
            max_deviation,
            max_z,
            max_stderr,
            components,
        }
    }

    /// Every component within `sigmas` standard errors. Components that are
    /// exact by construction (zero spread) are compared up to rounding.
    pub fn passes(&self, sigmas: f64) -> bool {
        self.components
            .iter()
            .all(|&(d, se)| d.abs() <= sigmas * se + EXACT_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub samples: u64,
    pub checks: Vec<MomentCheck>,
}

impl MomentReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.checks.iter().all(|c| c.passes(sigmas))
    }

    pub fn check(&self, name: &str) -> Option<&MomentCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const CHUNK: u64 = 50_000;

const EXACT_SLACK: f64 = 1e-12;

/// Run `per_sample` over `n` draws of `W`, spread over independent chunks
/// with their own RNG streams. `per_sample` pushes its observations into the
/// slice of accumulators; the chunks are merged in order.
fn accumulate<R, F>(spec: &WignerSpec, n: u64, width: usize, rng: &mut R, per_sample: F) -> Vec<RunningStats>
where
    R: Rng + ?Sized,
    F: Fn(&ComplexMatrix, &mut [RunningStats]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.random()).collect();
    let partial: Vec<Vec<RunningStats>> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = CHUNK.min(n - c as u64 * CHUNK);
            let mut acc = vec![RunningStats::new(); width];
            for _ in 0..count {
                let w = sample_w(spec, &mut rng);
                per_sample(&w, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![RunningStats::new(); width];
    for part in &partial {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

fn push_matrix(m: &ComplexMatrix, acc: &mut [RunningStats]) {
    for (k, z) in m.as_slice().iter().enumerate() {
        acc[2 * k].push(z.re);
        acc[2 * k + 1].push(z.im);
    }
}

fn flatten(m: &ComplexMatrix) -> Vec<f64> {
    m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Empirical check of the second-moment conditions on the entries of `W`.
pub fn ensemble_moments<R: Rng + ?Sized>(spec: &WignerSpec, n: u64, rng: &mut R) -> MomentReport {
    let l = spec.l;
    let pairs: Vec<(usize, usize)> = (0..l)
        .flat_map(|i| (i + 1..l).map(move |j| (i, j)))
        .collect();
    let np = pairs.len();
    // Layout: [E W_ij (re, im)] [E W_ij² (re, im)] [E |W_ij|²] [E W_kk] [E W_kk²]
    let width = 2 * np + 2 * np + np + l + l;
    let stats = accumulate(spec, n, width, rng, |w, acc| {
        for (t, &(i, j)) in pairs.iter().enumerate() {
            let z = w[(i, j)];
            let z2 = z * z;
            acc[2 * t].push(z.re);
            acc[2 * t + 1].push(z.im);
            acc[2 * np + 2 * t].push(z2.re);
            acc[2 * np + 2 * t + 1].push(z2.im);
            acc[4 * np + t].push(z.norm_sqr());
        }
        for k in 0..l {
            let d = w[(k, k)].re;
            acc[5 * np + k].push(d);
            acc[5 * np + l + k].push(d * d);
        }
    });
    let mut checks = Vec::new();
    if np > 0 {
        checks.push(MomentCheck::new("E(W_ij)", &stats[..2 * np], &vec![0.0; 2 * np]));
        checks.push(MomentCheck::new("E(W_ij^2)", &stats[2 * np..4 * np], &vec![0.0; 2 * np]));
        checks.push(MomentCheck::new("E(|W_ij|^2)", &stats[4 * np..5 * np], &vec![1.0; np]));
    }
    checks.push(MomentCheck::new("E(W_kk)", &stats[5 * np..5 * np + l], &vec![0.0; l]));
    checks.push(MomentCheck::new("E(W_kk^2)", &stats[5 * np + l..], &vec![1.0; l]));
    MomentReport { samples: n, checks }
}

/// Monte Carlo check of the averaging identities
/// `E(W) = 0`, `E(W²) = L·1`, `E(Tr(PW) Tr(QW)) = Tr(PQ)`,
/// `E(W P W) = Tr(P)·1` and `E(W Q W̄) = Q^t`.
pub fn verify_w_identities<R: Rng + ?Sized>(
    spec: &WignerSpec,
    p: &ComplexMatrix,
    q: &ComplexMatrix,
    nsamples: u64,
    rng: &mut R,
) -> Result<MomentReport> {
    let l = spec.l;
    for (name, m) in [("P", p), ("Q", q)] {
        if m.rows() != l || m.cols() != l {
            return Err(Error::Dimension(format!(
                "{name} must be {l}x{l}, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
    }
    let mm = 2 * l * l;
    // Layout: E(W) | E(W²) | E(Tr(PW)Tr(QW)) | E(WPW) | E(WQW̄)
    let width = 4 * mm + 2;
    let stats = accumulate(spec, nsamples, width, rng, |w, acc| {
        push_matrix(w, &mut acc[..mm]);
        push_matrix(&w.matmul(w), &mut acc[mm..2 * mm]);
        let t = p.matmul(w).trace() * q.matmul(w).trace();
        acc[2 * mm].push(t.re);
        acc[2 * mm + 1].push(t.im);
        push_matrix(&w.matmul(p).matmul(w), &mut acc[2 * mm + 2..3 * mm + 2]);
        push_matrix(&w.matmul(q).matmul(&w.conj()), &mut acc[3 * mm + 2..]);
    });
    let tr_pq = p.matmul(q).trace();
    let checks = vec![
        MomentCheck::new("E(W)", &stats[..mm], &vec![0.0; mm]),
        MomentCheck::new(
            "E(W^2)",
            &stats[mm..2 * mm],
            &flatten(&ComplexMatrix::scalar(l, ONE * l as f64)),
        ),
        MomentCheck::new("E(Tr(PW)Tr(QW))", &stats[2 * mm..2 * mm + 2], &[tr_pq.re, tr_pq.im]),
        MomentCheck::new(
            "E(WPW)",
            &stats[2 * mm + 2..3 * mm + 2],
            &flatten(&ComplexMatrix::scalar(l, p.trace())),
        ),
        MomentCheck::new("E(WQconj(W))", &stats[3 * mm + 2..], &flatten(&q.transpose())),
    ];
    Ok(MomentReport {
        samples: nsamples,
        checks,
    })
}

/// Relative eigenvalue cutoff below which coordinates count as linearly
/// dependent.
pub const WHITEN_RANK_CUTOFF: f64 = 1e-10;

/// Decomposition `a = Σ_i v_i b_i` of a centered random vector into fixed
/// vectors `b_i` with uncorrelated coefficients `v_i`.
#[derive(Debug, Clone)]
pub struct WhiteningResult {
    /// The fixed vectors `b_i`, one per retained coordinate.
    pub vectors: Vec<Vec<f64>>,
    /// `E(v_i²)`; all ones when unit normalization was requested.
    pub variances: Vec<f64>,
    /// Coordinates of `a` kept as a basis of the span of its support.
    pub selected: Vec<usize>,
    /// Second-moment matrix `E(a aᵗ)` the decomposition was built from.
    pub covariance: DMatrix<f64>,
    /// Lower unitriangular map `v = Λ a_selected` (before normalization).
    transform: DMatrix<f64>,
    scales: Vec<f64>,
}

impl WhiteningResult {
    pub fn rank(&self) -> usize {
        self.selected.len()
    }

    /// The Gram–Schmidt coefficients `λ_{k,i}` (entries of the unitriangular
    /// transform below the diagonal).
    pub fn lambda(&self, k: usize, i: usize) -> f64 {
        self.transform[(k, i)]
    }

    /// Coefficients `v_i(a)` of a sample.
    pub fn coefficients(&self, a: &[f64]) -> Vec<f64> {
        let sel: Vec<f64> = self.selected.iter().map(|&i| a[i]).collect();
        let r = self.rank();
        (0..r)
            .map(|k| {
                let v: f64 = (0..=k).map(|i| self.transform[(k, i)] * sel[i]).sum();
                v / self.scales[k]
            })
            .collect()
    }

    /// `Σ_i v_i b_i`.
    pub fn reconstruct(&self, v: &[f64]) -> Vec<f64> {
        let n = self.covariance.nrows();
        let mut a = vec![0.0; n];
        for (vi, b) in v.iter().zip(&self.vectors) {
            for (x, bi) in a.iter_mut().zip(b) {
                *x += vi * bi;
            }
        }
        a
    }
}

/// Whiten from a second-moment matrix `E(a aᵗ)`.
pub fn whiten_covariance(cov: &[Vec<f64>], unit_variance: bool) -> Result<WhiteningResult> {
    let n = cov.len();
    if n == 0 || cov.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("covariance", "must be a non-empty square matrix"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    build_whitening(m, unit_variance)
}

/// Whiten from samples of a centered random vector, using the empirical
/// second moments `(1/N) Σ a aᵗ`.
pub fn whiten_samples(samples: &[Vec<f64>], unit_variance: bool) -> Result<WhiteningResult> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "at least two samples are required"));
    }
    let n = samples[0].len();
    if n == 0 || samples.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("samples", "samples must share a non-zero length"));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += s[i] * s[j];
            }
        }
    }
    m /= samples.len() as f64;
    build_whitening(m, unit_variance)
}

fn build_whitening(cov: DMatrix<f64>, unit_variance: bool) -> Result<WhiteningResult> {
    let n = cov.nrows();
    let scale = cov.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    if (&cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::invalid("covariance", "matrix is not symmetric"));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let sigma_max = eig.eigenvalues.max();
    let sigma_min = eig.eigenvalues.min();
    if sigma_min < -1e-10 * sigma_max.max(1.0) {
        return Err(Error::invalid(
            "covariance",
            format!("matrix is not positive semidefinite (eigenvalue {sigma_min:e})"),
        ));
    }
    let tol = WHITEN_RANK_CUTOFF * sigma_max.max(0.0);

    // Gram–Schmidt in L²: incremental LDLᵗ of the covariance restricted to
    // the retained coordinates. Rows of `l_rows` are rows of the unit lower
    // factor; a coordinate whose residual variance is below `tol` is
    // expressed through the earlier retained ones.
    let mut selected: Vec<usize> = Vec::new();
    let mut l_rows: Vec<Vec<f64>> = Vec::new();
    let mut d: Vec<f64> = Vec::new();
    let mut expressions: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0..n {
        let r = selected.len();
        // Forward solve L y = Σ_{S,i}.
        let mut y = vec![0.0; r];
        for k in 0..r {
            let mut acc = cov[(selected[k], i)];
            for t in 0..k {
                acc -= l_rows[k][t] * y[t];
            }
            y[k] = acc;
        }
        let resid = cov[(i, i)] - (0..r).map(|k| y[k] * y[k] / d[k]).sum::<f64>();
        if resid > tol {
            let mut row: Vec<f64> = (0..r).map(|k| y[k] / d[k]).collect();
            row.push(1.0);
            l_rows.push(row);
            d.push(resid);
            selected.push(i);
        } else {
            // β = L^{-ᵗ} D^{-1} y expresses a_i through the retained prefix.
            let mut beta: Vec<f64> = (0..r).map(|k| y[k] / d[k]).collect();
            for k in (0..r).rev() {
                for t in k + 1..r {
                    beta[k] -= l_rows[t][k] * beta[t];
                }
            }
            expressions.push((i, beta));
        }
    }
    let r = selected.len();
    if r == 0 {
        return Err(Error::invalid("covariance", "random variable is identically zero"));
    }
    let lower = DMatrix::from_fn(r, r, |i, j| if j <= i { l_rows[i][j] } else { 0.0 });
    let transform = lower
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("covariance", "triangular factor not invertible"))?;

    // a = M · a_S with M selecting retained coordinates and expanding the
    // dependent ones; then a = (M L) v.
    let mut mmap = DMatrix::<f64>::zeros(n, r);
    for (k, &i) in selected.iter().enumerate() {
        mmap[(i, k)] = 1.0;
    }
    for (i, beta) in &expressions {
        for (k, b) in beta.iter().enumerate() {
            mmap[(*i, k)] = *b;
        }
    }
    let bmat = mmap * lower;
    let scales: Vec<f64> = if unit_variance {
        d.iter().map(|x| x.sqrt()).collect()
    } else {
        vec![1.0; r]
    };
    let vectors = (0..r)
        .map(|k| (0..n).map(|i| bmat[(i, k)] * scales[k]).collect())
        .collect();
    let variances = if unit_variance { vec![1.0; r] } else { d };
    Ok(WhiteningResult {
        vectors,
        variances,
        selected,
        covariance: cov,
        transform,
        scales,
    })
}

/// Whitening of the real coordinates of `W`, fitted on one batch of samples
/// and evaluated on a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteningCheck {
    pub samples: usize,
    pub rank: usize,
    /// Largest `|Σ v_i b_i − a|` over the fresh batch.
    pub reconstruction_error: f64,
    /// Largest `|(1/N) Σ v_i v_j|`, `i ≠ j`, over the fresh batch.
    pub max_cross_correlation: f64,
}

impl WhiteningCheck {
    pub fn passes(&self, reconstruction_tol: f64) -> bool {
        self.reconstruction_error <= reconstruction_tol
            && self.max_cross_correlation < 4.0 / (self.samples as f64).sqrt()
    }
}

pub fn whitening_check<R: Rng + ?Sized>(spec: &WignerSpec, n: usize, rng: &mut R) -> Result<WhiteningCheck> {
    if n < 2 {
        return Err(Error::invalid("samples", "at least two samples are required"));
    }
    let d = 2 * spec.l * spec.l;
    let mut second = vec![vec![0.0; d]; d];
    for _ in 0..n {
        let a = flatten(&sample_w(spec, rng));
        for (row, ai) in second.iter_mut().zip(&a) {
            for (m, aj) in row.iter_mut().zip(&a) {
                *m += ai * aj;
            }
        }
    }
    for row in &mut second {
        for m in row.iter_mut() {
            *m /= n as f64;
        }
    }
    let white = whiten_covariance(&second, true)?;
    let r = white.rank();
    let mut cross = vec![0.0; r * r];
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let a = flatten(&sample_w(spec, rng));
        let v = white.coefficients(&a);
        for (x, y) in white.reconstruct(&v).iter().zip(&a) {
            worst = worst.max((x - y).abs());
        }
        for i in 0..r {
            for j in i + 1..r {
                cross[i * r + j] += v[i] * v[j];
            }
        }
    }
    Ok(WhiteningCheck {
        samples: n,
        rank: r,
        reconstruction_error: worst,
        max_cross_correlation: cross.iter().map(|c| c.abs() / n as f64).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::I;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn samples_are_hermitian() {
        let mut r = rng(1);
        for kind in [Ensemble::Gaussian, Ensemble::Rademacher] {
            for l in 1..5 {
                let w = sample_w(&WignerSpec::new(l, kind), &mut r);
                assert!(w.is_hermitian(0.0));
                for k in 0..l {
                    assert_eq!(w[(k, k)].im, 0.0);
                }
            }
        }
    }

    #[test]
    fn rademacher_entries_have_unit_modulus() {
        let mut r = rng(2);
        let w = sample_w(&WignerSpec::new(4, Ensemble::Rademacher), &mut r);
        for z in w.as_slice() {
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_gaussian_has_unit_variance() {
        let mut r = rng(3);
        let n = 100_000;
        let s: RunningStats = (0..n)
            .map(|_| sample_w(&WignerSpec::gaussian(1), &mut r)[(0, 0)].re.powi(2))
            .collect();
        assert!((s.mean() - 1.0).abs() < 3.0 * s.stderr());
    }

    #[test]
    fn second_moments_match() {
        let mut r = rng(4);
        for kind in [Ensemble::Gaussian, Ensemble::Rademacher] {
            let rep = ensemble_moments(&WignerSpec::new(2, kind), 100_000, &mut r);
            assert!(rep.passes(4.0), "{rep:?}");
        }
    }

    #[test]
    fn identities_with_zero_test_matrices_vanish() {
        let mut r = rng(5);
        let z = ComplexMatrix::zeros(2, 2);
        let rep = verify_w_identities(&WignerSpec::gaussian(2), &z, &z, 1000, &mut r).unwrap();
        for name in ["E(Tr(PW)Tr(QW))", "E(WPW)", "E(WQconj(W))"] {
            let c = rep.check(name).unwrap();
            assert_eq!(c.max_deviation, 0.0, "{name}");
        }
    }

    #[test]
    fn identity_p_gives_l_times_one() {
        let mut r = rng(6);
        let l = 3;
        let id = ComplexMatrix::identity(l);
        let rep = verify_w_identities(&WignerSpec::gaussian(l), &id, &id, 50_000, &mut r).unwrap();
        assert!(rep.check("E(WPW)").unwrap().passes(3.5));
        assert!(rep.check("E(W^2)").unwrap().passes(3.5));
    }

    #[test]
    fn trace_product_identity() {
        let mut r = rng(7);
        let p = ComplexMatrix::from_fn(2, 2, |i, j| C64::new(i as f64 - 0.3, j as f64) + I * 0.2);
        let rep = verify_w_identities(&WignerSpec::gaussian(2), &p, &p, 200_000, &mut r).unwrap();
        assert!(rep.check("E(Tr(PW)Tr(QW))").unwrap().passes(3.5));
    }

    #[test]
    fn identities_reject_wrong_size() {
        let mut r = rng(8);
        let p = ComplexMatrix::zeros(3, 3);
        assert!(verify_w_identities(&WignerSpec::gaussian(2), &p, &p, 10, &mut r).is_err());
    }

    #[test]
    fn whitening_identity_covariance() {
        let w = whiten_covariance(&[vec![1.0, 0.0], vec![0.0, 1.0]], false).unwrap();
        assert_eq!(w.vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(w.coefficients(&[0.3, -2.0]), vec![0.3, -2.0]);
    }

    #[test]
    fn whitening_two_by_two_normal_equation() {
        // λ₂₁ = −E(a₂a₁)/E(a₁²) = −0.5; E(v₂²) = 1 − 0.5² = 0.75.
        let w = whiten_covariance(&[vec![1.0, 0.5], vec![0.5, 1.0]], false).unwrap();
        assert!((w.lambda(1, 0) + 0.5).abs() < 1e-15);
        assert!((w.variances[1] - 0.75).abs() < 1e-15);
        let a = [0.7, -1.3];
        let v = w.coefficients(&a);
        let back = w.reconstruct(&v);
        assert!((back[0] - a[0]).abs() < 1e-15 && (back[1] - a[1]).abs() < 1e-15);
    }

    #[test]
    fn whitening_reduces_rank() {
        let mut r = rng(9);
        let samples: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let x: f64 = r.sample(StandardNormal);
                let y: f64 = r.sample(StandardNormal);
                vec![x, y, 2.0 * x - y]
            })
            .collect();
        let w = whiten_samples(&samples, false).unwrap();
        assert_eq!(w.rank(), 2);
        for s in &samples {
            let back = w.reconstruct(&w.coefficients(s));
            let err: f64 = back.iter().zip(s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn whitening_rejects_indefinite() {
        assert!(whiten_covariance(&[vec![1.0, 2.0], vec![2.0, 1.0]], false).is_err());
        assert!(whiten_samples(&[vec![1.0]], false).is_err());
    }

    #[test]
    fn unit_variance_rescales_vectors() {
        let w = whiten_covariance(&[vec![4.0, 2.0], vec![2.0, 2.0]], true).unwrap();
        assert_eq!(w.variances, vec![1.0, 1.0]);
        let a = [1.0, -0.5];
        let back = w.reconstruct(&w.coefficients(&a));
        assert!((back[0] - a[0]).abs() < 1e-14 && (back[1] - a[1]).abs() < 1e-14);
        // E(v vᵗ) = B⁻¹ Σ B⁻ᵗ = 1 for B = [b_1 b_2].
        let b = DMatrix::from_fn(2, 2, |i, k| w.vectors[k][i]);
        let binv = b.try_inverse().unwrap();
        let g = &binv * &w.covariance * binv.transpose();
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn whitening_of_w_decorrelates_fresh_samples() {
        for kind in [Ensemble::Gaussian, Ensemble::Rademacher] {
            let c = whitening_check(&WignerSpec::new(2, kind), 20_000, &mut rng(31)).unwrap();
            assert_eq!(c.rank, 4);
            assert!(c.passes(1e-12), "{c:?}");
        }
    }
}
