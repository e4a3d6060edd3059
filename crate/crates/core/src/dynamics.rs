//! The Markov chain `x_n = T_{λ,σ_n} · x_{n−1}` on isotropic frames, Birkhoff
//! averages along it, and two estimators of the Lyapunov spectrum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::fill_w;
use crate::error::{Error, Result};
use crate::frame::{IsotropicFrame, FRAME_TOLERANCE};
use crate::matrix::{haar_unitary, householder_qr, matmul_into, qr_positive, ComplexMatrix, C64, I, ZERO};
use crate::stats::{Estimate, RunningStats};
use crate::wires::WiresModel;

/// Steps between re-orthonormalizations in [`lyapunov_qr`].
pub const REQR_INTERVAL: u64 = 8;
/// Column norm that triggers an early re-orthonormalization.
pub const OVERFLOW_GUARD: f64 = 1e100;
/// Unitarity drift of `V` tolerated before it is re-orthonormalized.
pub const DRIFT_TOLERANCE: f64 = 1e-11;
const DRIFT_CHECK_INTERVAL: u64 = 4;
/// Smallest run length accepted by the Lyapunov estimators.
pub const MIN_LYAPUNOV_STEPS: u64 = 1000;

/// `max(10³, 10/λ²)` steps, or `10³` at `λ = 0`.
pub fn default_burn_in(lambda: f64) -> u64 {
    if lambda > 0.0 {
        ((10.0 / (lambda * lambda)).ceil() as u64).max(1000)
    } else {
        1000
    }
}

/// Run length shared by all replica-parallel estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub n_steps: u64,
    pub replicas: usize,
    pub burn_in: u64,
    /// Each replica's run is split into this many equal batches, and
    /// standard errors come from the spread of all batch means.
    #[serde(default = "one_batch")]
    pub batches: usize,
}

fn one_batch() -> usize {
    1
}

impl Sampling {
    pub fn new(n_steps: u64, replicas: usize, burn_in: u64) -> Self {
        Self {
            n_steps,
            replicas,
            burn_in,
            batches: 1,
        }
    }

    pub fn with_batches(self, batches: usize) -> Self {
        Self { batches, ..self }
    }

    fn batch_len(&self) -> u64 {
        self.n_steps / self.batches as u64
    }

    pub fn with_default_burn_in(n_steps: u64, replicas: usize, lambda: f64) -> Self {
        Self::new(n_steps, replicas, default_burn_in(lambda))
    }

    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        if self.batches == 0 || self.n_steps % self.batches as u64 != 0 {
            return Err(Error::invalid("batches", "must be positive and divide the number of steps"));
        }
        Ok(())
    }
}

/// Apply `T = (A B; C D)` to the frame: `(U', V') = ((AU+BV)S, (CU+DV)S)`
/// with `S = R⁻¹` from the positive QR factorization of `AU + BV`.
pub fn act(t: &ComplexMatrix, frame: &IsotropicFrame) -> Result<IsotropicFrame> {
    act_logged(t, frame).map(|(f, _)| f)
}

/// [`act`], also returning `log R_ii`, the one-step growth of the nested
/// frame volumes.
pub fn act_logged(t: &ComplexMatrix, frame: &IsotropicFrame) -> Result<(IsotropicFrame, Vec<f64>)> {
    let l = frame.l();
    if t.rows() != 2 * l || t.cols() != 2 * l {
        return Err(Error::Dimension(format!(
            "cannot act with a {}x{} matrix on a frame with L = {l}",
            t.rows(),
            t.cols()
        )));
    }
    let image = t.matmul(&ComplexMatrix::vstack(frame.u(), frame.v()));
    let x = image.block(0, 0, l, l);
    let y = image.block(l, 0, l, l);
    let (_, r) = qr_positive(&x).map_err(|e| match e {
        Error::Singular { .. } => Error::DegenerateFrame { step: 0 },
        other => other,
    })?;
    let s = upper_triangular_inverse(&r);
    let u = x.matmul(&s);
    let v = y.matmul(&s);
    let defect = v.unitarity_defect();
    if defect > FRAME_TOLERANCE {
        return Err(Error::NotUnitary { defect });
    }
    let logs = r.diagonal().iter().map(|z| z.re.ln()).collect();
    Ok((IsotropicFrame::from_parts(u, v), logs))
}

fn upper_triangular_inverse(r: &ComplexMatrix) -> ComplexMatrix {
    let n = r.rows();
    let mut s = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        s[(j, j)] = r[(j, j)].inv();
        for i in (0..j).rev() {
            let mut acc = ZERO;
            for m in i + 1..=j {
                acc += r[(i, m)] * s[(m, j)];
            }
            s[(i, j)] = -acc / r[(i, i)];
        }
    }
    s
}

/// `log √det(1_{p×L} Φ^* T^* T Φ 1_{L×p})` evaluated from the Gram
/// determinant: the log of the `p`-volume spanned by the images of the
/// first `p` columns of `Φ = 2^{-1/2}(U; V)`.
pub fn log_volume_expansion(t: &ComplexMatrix, frame: &IsotropicFrame, p: usize) -> Result<f64> {
    let l = frame.l();
    if p == 0 || p > l {
        return Err(Error::invalid("p", format!("must lie in 1..={l}")));
    }
    let cols = frame.phi().block(0, 0, 2 * l, p);
    let image = t.matmul(&cols);
    let gram = image.adjoint().matmul(&image);
    let det = gram.determinant()?;
    if !(det.re > 0.0) {
        return Err(Error::DegenerateVolume { p });
    }
    Ok(0.5 * det.re.ln())
}

/// Snapshot of a running chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub frame: IsotropicFrame,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

/// A chain driven by the wires model. Each step draws `W`, forms
/// `T = R_k(1 + λP(W))` (the normal form; `P² = 0`) and applies it to the
/// frame. Buffers are reused so stepping does not allocate.
#[derive(Debug, Clone)]
pub struct Chain<'m> {
    model: &'m WiresModel,
    rng: ChaCha8Rng,
    step: u64,
    u: Vec<C64>,
    v: Vec<C64>,
    w: Vec<C64>,
    sum: Vec<C64>,
    mix: Vec<C64>,
    x: Vec<C64>,
    y: Vec<C64>,
    q: Vec<C64>,
    r: Vec<C64>,
    log_r: Vec<f64>,
    down: C64,
    up: C64,
    coupling: C64,
}

impl<'m> Chain<'m> {
    pub fn new(model: &'m WiresModel, x0: &IsotropicFrame, rng: ChaCha8Rng) -> Result<Self> {
        let l = model.l();
        if x0.l() != l {
            return Err(Error::Dimension(format!(
                "initial frame has L = {}, model has L = {l}",
                x0.l()
            )));
        }
        let k = model.k();
        let buf = || vec![ZERO; l * l];
        Ok(Self {
            model,
            rng,
            step: 0,
            u: x0.u().as_slice().to_vec(),
            v: x0.v().as_slice().to_vec(),
            w: buf(),
            sum: buf(),
            mix: buf(),
            x: buf(),
            y: buf(),
            q: buf(),
            r: buf(),
            log_r: vec![0.0; l],
            down: C64::from_polar(1.0, -k),
            up: C64::from_polar(1.0, k),
            coupling: I * (model.lambda() / (2.0 * k.sin())),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn frame(&self) -> IsotropicFrame {
        let l = self.model.l();
        IsotropicFrame::from_parts(
            ComplexMatrix::from_vec(l, l, self.u.clone()).expect("buffer size"),
            ComplexMatrix::from_vec(l, l, self.v.clone()).expect("buffer size"),
        )
    }

    /// `log R_ii` of the most recent step.
    pub fn log_expansion(&self) -> &[f64] {
        &self.log_r
    }

    pub fn into_state(self) -> ChainState {
        let frame = self.frame();
        ChainState {
            frame,
            step: self.step,
            rng: self.rng,
        }
    }

    pub fn advance(&mut self) -> Result<()> {
        let l = self.model.l();
        fill_w(self.model.spec(), &mut self.rng, &mut self.w);
        for ((s, u), v) in self.sum.iter_mut().zip(&self.u).zip(&self.v) {
            *s = u + v;
        }
        matmul_into(&self.w, &self.sum, &mut self.mix, l, l, l);
        for i in 0..l * l {
            let m = self.coupling * self.mix[i];
            self.x[i] = self.down * (self.u[i] + m);
            self.y[i] = self.up * (self.v[i] - m);
        }
        self.step += 1;
        if householder_qr(&mut self.x, &mut self.q, &mut self.r, l, l).is_err() {
            return Err(Error::DegenerateFrame { step: self.step });
        }
        // U' = Q; V' solves V' R = Y row by row.
        self.u.copy_from_slice(&self.q);
        for row in 0..l {
            for j in 0..l {
                let mut acc = self.y[row * l + j];
                for i in 0..j {
                    acc -= self.v[row * l + i] * self.r[i * l + j];
                }
                self.v[row * l + j] = acc / self.r[j * l + j].re;
            }
        }
        for (i, lr) in self.log_r.iter_mut().enumerate() {
            *lr = self.r[i * l + i].re.ln();
        }
        if self.step % DRIFT_CHECK_INTERVAL == 0 {
            self.reorthonormalize_if_drifted()?;
        }
        Ok(())
    }

    fn reorthonormalize_if_drifted(&mut self) -> Result<()> {
        let l = self.model.l();
        let mut defect = 0.0f64;
        for a in 0..l {
            for b in 0..l {
                let mut g = ZERO;
                for row in 0..l {
                    g += self.v[row * l + a].conj() * self.v[row * l + b];
                }
                if a == b {
                    g -= 1.0;
                }
                defect += g.norm_sqr();
            }
        }
        if defect.sqrt() > DRIFT_TOLERANCE {
            self.x.copy_from_slice(&self.v);
            if householder_qr(&mut self.x, &mut self.q, &mut self.r, l, l).is_err() {
                return Err(Error::DegenerateFrame { step: self.step });
            }
            self.v.copy_from_slice(&self.q);
        }
        Ok(())
    }
}

/// Iterator over `x_1, …, x_n`.
pub struct ChainIter<'m> {
    chain: Chain<'m>,
    remaining: u64,
}

impl Iterator for ChainIter<'_> {
    type Item = Result<IsotropicFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        match self.chain.advance() {
            Ok(()) => Some(Ok(self.chain.frame())),
            Err(e) => {
                self.remaining = 0;
                Some(Err(e))
            }
        }
    }
}

pub fn run_chain<'m>(
    model: &'m WiresModel,
    x0: &IsotropicFrame,
    n: u64,
    rng: ChaCha8Rng,
) -> Result<ChainIter<'m>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(ChainIter {
        chain: Chain::new(model, x0, rng)?,
        remaining: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffEstimate {
    pub mean: f64,
    /// Spread of the replica (or batch) means; NaN with a single one.
    pub stderr: f64,
    pub n_steps: u64,
    pub n_replicas: usize,
    pub burn_in: u64,
}

impl BirkhoffEstimate {
    pub(crate) fn from_replicas(means: &[f64], sampling: &Sampling) -> Self {
        let stats: RunningStats = means.iter().copied().collect();
        Self {
            mean: stats.mean(),
            stderr: stats.stderr(),
            n_steps: sampling.n_steps,
            n_replicas: sampling.replicas,
            burn_in: sampling.burn_in,
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.stderr)
    }
}

/// Birkhoff averages of several observables along the same chains. `f`
/// writes the `width` observables of a frame into its output slice.
pub fn birkhoff_multi<F, R>(
    model: &WiresModel,
    f: F,
    width: usize,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<Vec<BirkhoffEstimate>>
where
    F: Fn(&IsotropicFrame, &mut [f64]) + Sync,
    R: Rng + ?Sized,
{
    sampling.validate()?;
    let means = per_replica(rng, sampling.replicas, |mut rng| {
        let start = IsotropicFrame::haar(model.l(), &mut rng);
        let mut chain = Chain::new(model, &start, rng)?;
        for _ in 0..sampling.burn_in {
            chain.advance()?;
        }
        let len = sampling.batch_len();
        let mut out = vec![0.0; width];
        let mut rows = Vec::with_capacity(sampling.batches);
        for _ in 0..sampling.batches {
            let mut acc = vec![0.0; width];
            for _ in 0..len {
                f(&chain.frame(), &mut out);
                for (a, o) in acc.iter_mut().zip(&out) {
                    *a += o;
                }
                chain.advance()?;
            }
            rows.push(acc.into_iter().map(|a| a / len as f64).collect::<Vec<f64>>());
        }
        Ok(rows)
    })?;
    let means = means.concat();
    Ok((0..width)
        .map(|i| {
            let m: Vec<f64> = means.iter().map(|r| r[i]).collect();
            BirkhoffEstimate::from_replicas(&m, sampling)
        })
        .collect())
}

pub(crate) fn replica_seeds<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.random()).collect()
}

/// Run `job` once per replica in parallel, each with its own stream seeded
/// from `rng`, and collect the results in replica order.
pub(crate) fn per_replica<T, R, F>(rng: &mut R, replicas: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    R: Rng + ?Sized,
    F: Fn(ChaCha8Rng) -> Result<T> + Sync,
{
    replica_seeds(rng, replicas)
        .into_par_iter()
        .map(|seed| job(ChaCha8Rng::seed_from_u64(seed)))
        .collect()
}

/// Disorder-averaged Birkhoff sum of `f`, started from independent Haar
/// frames.
pub fn birkhoff<F, R>(model: &WiresModel, f: F, sampling: &Sampling, rng: &mut R) -> Result<BirkhoffEstimate>
where
    F: Fn(&IsotropicFrame) -> f64 + Sync,
    R: Rng + ?Sized,
{
    birkhoff_impl(model, &f, None, sampling, rng)
}

/// As [`birkhoff`], with every replica started from `x0`.
pub fn birkhoff_from<F, R>(
    model: &WiresModel,
    f: F,
    x0: &IsotropicFrame,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<BirkhoffEstimate>
where
    F: Fn(&IsotropicFrame) -> f64 + Sync,
    R: Rng + ?Sized,
{
    birkhoff_impl(model, &f, Some(x0), sampling, rng)
}

fn birkhoff_impl<F, R>(
    model: &WiresModel,
    f: &F,
    x0: Option<&IsotropicFrame>,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<BirkhoffEstimate>
where
    F: Fn(&IsotropicFrame) -> f64 + Sync,
    R: Rng + ?Sized,
{
    sampling.validate()?;
    let means = per_replica(rng, sampling.replicas, |mut rng| {
        let start = match x0 {
            Some(x) => x.clone(),
            None => IsotropicFrame::haar(model.l(), &mut rng),
        };
        let mut chain = Chain::new(model, &start, rng)?;
        for _ in 0..sampling.burn_in {
            chain.advance()?;
        }
        let len = sampling.batch_len();
        let mut out = Vec::with_capacity(sampling.batches);
        for _ in 0..sampling.batches {
            let mut acc = 0.0;
            for _ in 0..len {
                acc += f(&chain.frame());
                chain.advance()?;
            }
            out.push(acc / len as f64);
        }
        Ok(out)
    })?;
    Ok(BirkhoffEstimate::from_replicas(&means.concat(), sampling))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    QrOracle,
    BirkhoffFp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Descending. `QrOracle` gives all `2L` exponents, `BirkhoffFp` the
    /// `L` non-negative ones.
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: LyapunovMethod,
    pub n_steps: u64,
    pub n_replicas: usize,
    pub burn_in: u64,
    /// Exponents per replica, or per batch when replicas are split into
    /// batches; used for the errors of derived quantities.
    pub replicas: Vec<Vec<f64>>,
}

impl LyapunovSpectrum {
    fn from_replicas(replicas: Vec<Vec<f64>>, method: LyapunovMethod, sampling: &Sampling) -> Self {
        let width = replicas.first().map_or(0, Vec::len);
        let stats: Vec<RunningStats> = (0..width)
            .map(|i| replicas.iter().map(|r| r[i]).collect())
            .collect();
        Self {
            exponents: stats.iter().map(RunningStats::mean).collect(),
            stderr: stats.iter().map(RunningStats::stderr).collect(),
            method,
            n_steps: sampling.n_steps,
            n_replicas: sampling.replicas,
            burn_in: sampling.burn_in,
            replicas,
        }
    }

    fn derived(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let s: RunningStats = self.replicas.iter().map(|r| g(r)).collect();
        Estimate::from(&s)
    }

    pub fn exponent(&self, p: usize) -> Estimate {
        Estimate::new(self.exponents[p - 1], self.stderr[p - 1])
    }

    /// `γ_1 + … + γ_p` for `p = 1..=L`.
    pub fn partial_sums(&self, l: usize) -> Vec<Estimate> {
        (1..=l.min(self.exponents.len()))
            .map(|p| self.derived(|r| r[..p].iter().sum()))
            .collect()
    }

    /// `γ_p − γ_{p+1}` for `p = 1..L`.
    pub fn spacings(&self, l: usize) -> Vec<Estimate> {
        (1..l.min(self.exponents.len()))
            .map(|p| self.derived(|r| r[p - 1] - r[p]))
            .collect()
    }

    /// `γ_l + γ_{2L+1−l}` for `l = 1..=L`; only meaningful for `QrOracle`.
    pub fn symmetry_defects(&self) -> Vec<Estimate> {
        let n = self.exponents.len();
        (0..n / 2).map(|i| self.derived(|r| r[i] + r[n - 1 - i])).collect()
    }
}

/// Reorthogonalized product of the transfer matrices `T̂` on a `2L`-frame.
///
/// The accumulated `log R_ii` measure volumes in the Euclidean metric of the
/// `T̂` coordinates. A boundary term converts them to the metric of the
/// normal form coordinates, where `R_k` is an isometry, so that `λ = 0`
/// yields zero up to rounding rather than `O(1/n)`.
pub fn lyapunov_qr<R: Rng + ?Sized>(model: &WiresModel, sampling: &Sampling, rng: &mut R) -> Result<LyapunovSpectrum> {
    sampling.validate()?;
    if sampling.n_steps < MIN_LYAPUNOV_STEPS {
        return Err(Error::invalid("steps", format!("must be at least {MIN_LYAPUNOV_STEPS}")));
    }
    let to_normal = model.cayley().matmul(&model.normal_conjugator());
    let replicas = per_replica(rng, sampling.replicas, |mut rng| {
        qr_replica(model, &to_normal, sampling, &mut rng)
    })?;
    Ok(LyapunovSpectrum::from_replicas(replicas.concat(), LyapunovMethod::QrOracle, sampling))
}

fn qr_replica(
    model: &WiresModel,
    to_normal: &ComplexMatrix,
    sampling: &Sampling,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let l = model.l();
    let n2 = 2 * l;
    let (energy, lambda) = (model.energy(), model.lambda());
    // Frame rows: first the top block (L×2L), then the bottom block.
    let mut frame = haar_unitary(n2, rng).into_vec();
    let mut next_top = vec![ZERO; l * n2];
    let mut w = vec![ZERO; l * l];
    let mut wtop = vec![ZERO; l * n2];
    let mut q = vec![ZERO; n2 * n2];
    let mut r = vec![ZERO; n2 * n2];
    let mut sums = vec![0.0; n2];

    let mut reqr = |frame: &mut Vec<C64>, sums: Option<&mut Vec<f64>>, step: u64| -> Result<()> {
        householder_qr(frame, &mut q, &mut r, n2, n2).map_err(|_| Error::DegenerateFrame { step })?;
        if let Some(sums) = sums {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += r[i * n2 + i].re.ln();
            }
        }
        frame.copy_from_slice(&q);
        Ok(())
    };

    let total = sampling.burn_in + sampling.n_steps;
    let len = sampling.batch_len();
    let mut batches = Vec::with_capacity(sampling.batches);
    let mut start_logs = None;
    if sampling.burn_in == 0 {
        start_logs = Some(normal_volume_logs(to_normal, &frame, n2)?);
    }
    for step in 1..=total {
        fill_w(model.spec(), rng, &mut w);
        let (top, bottom) = frame.split_at_mut(l * n2);
        matmul_into(&w, top, &mut wtop, l, l, n2);
        let mut big = 0.0f64;
        for i in 0..l * n2 {
            let t = wtop[i] * lambda - top[i] * energy - bottom[i];
            big = big.max(t.norm_sqr());
            next_top[i] = t;
        }
        bottom.copy_from_slice(top);
        top.copy_from_slice(&next_top);

        let accumulating = step > sampling.burn_in;
        let batch_end = accumulating && (step - sampling.burn_in) % len == 0;
        if step == sampling.burn_in {
            reqr(&mut frame, None, step)?;
            start_logs = Some(normal_volume_logs(to_normal, &frame, n2)?);
        } else if accumulating
            && ((step - sampling.burn_in) % REQR_INTERVAL == 0 || batch_end || big > OVERFLOW_GUARD * OVERFLOW_GUARD)
        {
            reqr(&mut frame, Some(&mut sums), step)?;
        } else if !accumulating && (step % REQR_INTERVAL == 0 || big > OVERFLOW_GUARD * OVERFLOW_GUARD) {
            reqr(&mut frame, None, step)?;
        }
        if batch_end {
            // Boundary terms of consecutive batches telescope.
            let begin = start_logs.take().expect("set at the start of each batch");
            let end = normal_volume_logs(to_normal, &frame, n2)?;
            batches.push(
                sums.iter()
                    .zip(begin.iter().zip(&end))
                    .map(|(s, (b, e))| (s + e - b) / len as f64)
                    .collect(),
            );
            sums.iter_mut().for_each(|s| *s = 0.0);
            start_logs = Some(end);
        }
    }
    Ok(batches)
}

/// `log R_ii` of `to_normal · Q` for an orthonormal frame `Q`.
fn normal_volume_logs(to_normal: &ComplexMatrix, frame: &[C64], n2: usize) -> Result<Vec<f64>> {
    let q = ComplexMatrix::from_vec(n2, n2, frame.to_vec())?;
    let (_, r) = qr_positive(&to_normal.matmul(&q))?;
    Ok(r.diagonal().iter().map(|z| z.re.ln()).collect())
}

/// Birkhoff average of the one-step `p`-volume expansion along the chain,
/// which converges to `γ_1 + … + γ_p`.
pub fn lyapunov_birkhoff<R: Rng + ?Sized>(
    model: &WiresModel,
    p: usize,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<BirkhoffEstimate> {
    let l = model.l();
    if p == 0 || p > l {
        return Err(Error::invalid("p", format!("must lie in 1..={l}")));
    }
    let sums = volume_replicas(model, sampling, rng)?;
    let means: Vec<f64> = sums.iter().map(|s| s[p - 1]).collect();
    Ok(BirkhoffEstimate::from_replicas(&means, sampling))
}

/// All partial sums at once from one set of chains, returned as the
/// spectrum `γ_p = S_p − S_{p−1}` of the `L` non-negative exponents.
pub fn lyapunov_birkhoff_all<R: Rng + ?Sized>(
    model: &WiresModel,
    sampling: &Sampling,
    rng: &mut R,
) -> Result<LyapunovSpectrum> {
    let sums = volume_replicas(model, sampling, rng)?;
    let replicas = sums
        .into_iter()
        .map(|s| {
            let mut prev = 0.0;
            s.into_iter()
                .map(|v| {
                    let g = v - prev;
                    prev = v;
                    g
                })
                .collect()
        })
        .collect();
    Ok(LyapunovSpectrum::from_replicas(replicas, LyapunovMethod::BirkhoffFp, sampling))
}

/// Per replica, the Birkhoff means of `S_p = Σ_{i≤p} log R_ii` for all `p`.
fn volume_replicas<R: Rng + ?Sized>(model: &WiresModel, sampling: &Sampling, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    sampling.validate()?;
    if sampling.n_steps < MIN_LYAPUNOV_STEPS {
        return Err(Error::invalid("steps", format!("must be at least {MIN_LYAPUNOV_STEPS}")));
    }
    let l = model.l();
    per_replica(rng, sampling.replicas, |mut rng| {
        let start = IsotropicFrame::haar(l, &mut rng);
        let mut chain = Chain::new(model, &start, rng)?;
        for _ in 0..sampling.burn_in {
            chain.advance()?;
        }
        let len = sampling.batch_len();
        let mut rows = Vec::with_capacity(sampling.batches);
        for _ in 0..sampling.batches {
            let mut acc = vec![0.0; l];
            for _ in 0..len {
                chain.advance()?;
                for (a, lr) in acc.iter_mut().zip(chain.log_expansion()) {
                    *a += lr;
                }
            }
            let mut running = 0.0;
            rows.push(
                acc.iter()
                    .map(|a| {
                        running += a;
                        running / len as f64
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        Ok(rows)
    })
    .map(|r| r.concat())
}
