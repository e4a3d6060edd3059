//! Command-line scenarios and their JSON reports.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    birkhoff_multi, default_burn_in, lyapunov_birkhoff_all, lyapunov_qr, Chain, LyapunovSpectrum, Sampling,
    MIN_LYAPUNOV_STEPS,
};
use crate::ensembles::{ensemble_moments, verify_w_identities, whitening_check, Ensemble, WignerSpec};
use crate::error::{Error, Result};
use crate::frame::IsotropicFrame;
use crate::liealg::certify_coupling;
use crate::matrix::{complex_gaussian, random_lorentz_generator, ComplexMatrix, C64};
use crate::perturbation::{
    class_function_fp, divergence_dp, divergence_numeric, fp_haar_mean, haar_phase_moments, phase_observable_count,
    phase_observable_names, phase_observables, PerturbativePrediction,
};
use crate::scenarios::{circle_counterexample_powers, COUNTEREXAMPLE_POWERS};
use crate::stats::{combined_stderr, Estimate};
use crate::wires::{rotation_group_with_limit, WiresModel, DEFAULT_MAX_ORDER, ORDER_TOLERANCE};

/// Environment variable overriding the size of the replica thread pool.
pub const THREADS_ENV: &str = "FLAGCHAIN_THREADS";

/// Haar frames drawn for the reference moments of `haar-check`.
pub const HAAR_REFERENCE_SAMPLES: usize = 200_000;
/// Frames sampled by `closure` and `divergence`.
pub const CHECK_FRAMES: usize = 20;
/// Samples used to fit and test the whitening in `moments`.
pub const WHITENING_SAMPLES: u64 = 1_000_000;

const DIVERGENCE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Lyapunov spectrum by QR reorthogonalization vs the perturbative formula.
    Lyapunov,
    /// Lyapunov partial sums as Birkhoff averages of the volume expansion.
    Birkhoff,
    /// Chain moments of gauge-invariant observables vs Haar moments.
    HaarCheck,
    /// Lie bracket closure and tangent rank of the couplings.
    Closure,
    /// Circle walk with rational or irrational rotation steps.
    Counterexample,
    /// Moment conditions and whitening of the coupling ensemble.
    Moments,
    /// Closed-form divergence vs finite differences, and gauge invariance.
    Divergence,
}

impl Scenario {
    fn uses_energy(self) -> bool {
        matches!(
            self,
            Scenario::Lyapunov | Scenario::Birkhoff | Scenario::HaarCheck | Scenario::Closure
        )
    }

    fn writes_series(self) -> bool {
        matches!(self, Scenario::Lyapunov | Scenario::Birkhoff | Scenario::HaarCheck)
    }
}

/// Random Lie-group Markov chains on isotropic flag manifolds.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "flagchain", version, about)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Number of wires.
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    pub l: usize,
    /// Energy, strictly inside the band (-2, 2).
    #[arg(long = "E", default_value_t = 1.0, allow_hyphen_values = true)]
    #[serde(rename = "E")]
    pub energy: f64,
    /// Coupling strength.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// gaussian or rademacher.
    #[arg(long, default_value = "gaussian")]
    pub ensemble: Ensemble,
    /// Steps per replica after burn-in; sample count for `moments`.
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 8)]
    pub replicas: usize,
    /// Batches per replica for the standard errors; must divide `steps`.
    #[arg(long, default_value_t = 1)]
    pub batches: usize,
    /// Defaults to max(1000, 10/λ²) for chains on the flag manifold, 0 on the circle.
    #[arg(long = "burn-in")]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub seed: u64,
    /// JSON report path; the report goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV time series path (lyapunov, birkhoff and haar-check).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Restrict to one exponent or partial sum `p`.
    #[arg(long)]
    pub p: Option<usize>,
    /// Override the scenario's main tolerance parameter.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

impl RunConfig {
    /// Defaults for everything but the scenario and the seed.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            l: 1,
            energy: 1.0,
            lambda: 0.1,
            ensemble: Ensemble::Gaussian,
            steps: 1_000_000,
            replicas: 8,
            batches: 1,
            burn_in: None,
            seed,
            out: None,
            csv: None,
            p: None,
            tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 && self.scenario != Scenario::Counterexample {
            return Err(Error::invalid("L", "must be at least 1"));
        }
        if self.scenario.uses_energy() && !(self.energy.is_finite() && self.energy.abs() < 2.0) {
            return Err(Error::invalid("E", "must satisfy |E| < 2"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be finite and non-negative"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if matches!(self.scenario, Scenario::Lyapunov | Scenario::Birkhoff) && self.steps < MIN_LYAPUNOV_STEPS {
            return Err(Error::invalid("steps", format!("must be at least {MIN_LYAPUNOV_STEPS}")));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        if self.batches == 0 || self.steps % self.batches as u64 != 0 {
            return Err(Error::invalid("batches", "must be positive and divide steps"));
        }
        if let Some(p) = self.p {
            if p == 0 || p > self.l {
                return Err(Error::invalid("p", format!("must lie in 1..={}", self.l)));
            }
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid("tolerance", "must be finite and positive"));
            }
        }
        if self.csv.is_some() && !self.scenario.writes_series() {
            return Err(Error::invalid("csv", "only lyapunov, birkhoff and haar-check write time series"));
        }
        Ok(())
    }

    fn sampling(&self, default_burn: u64) -> Sampling {
        Sampling::new(self.steps, self.replicas, self.burn_in.unwrap_or(default_burn)).with_batches(self.batches)
    }

    fn model(&self) -> Result<WiresModel> {
        WiresModel::new(self.l, self.energy, self.lambda, self.ensemble)
    }

    fn series_p(&self) -> usize {
        self.p.unwrap_or(1)
    }
}

/// One compared quantity. `pass` is `None` for informational records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub name: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub prediction: Option<f64>,
    pub prediction_ref: String,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl Record {
    /// `|estimate − prediction| ≤ tolerance`.
    pub fn check(name: impl Into<String>, est: Estimate, prediction: f64, prediction_ref: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            estimate: est.mean,
            stderr: est.stderr.is_finite().then_some(est.stderr),
            prediction: Some(prediction),
            prediction_ref: prediction_ref.to_string(),
            tolerance: Some(tolerance),
            pass: Some((est.mean - prediction).abs() <= tolerance),
        }
    }

    /// `estimate ≥ prediction − tolerance`.
    pub fn at_least(name: impl Into<String>, estimate: f64, prediction: f64, prediction_ref: &str, tolerance: f64) -> Self {
        Self {
            pass: Some(estimate >= prediction - tolerance),
            ..Self::check(name, Estimate::new(estimate, 0.0), prediction, prediction_ref, tolerance)
        }
    }

    pub fn info(name: impl Into<String>, est: Estimate, prediction_ref: &str) -> Self {
        Self {
            name: name.into(),
            estimate: est.mean,
            stderr: est.stderr.is_finite().then_some(est.stderr),
            prediction: None,
            prediction_ref: prediction_ref.to_string(),
            tolerance: None,
            pass: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub config: RunConfig,
    pub records: Vec<Record>,
    pub notes: Vec<String>,
    /// Scenario-specific raw output.
    pub details: serde_json::Value,
    /// Total Markov chain steps including burn-in, or samples drawn.
    pub steps: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub pass: bool,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.pass == Some(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per record.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let tag = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            s.push_str(&format!("{tag} {}: {:.6e}", r.name, r.estimate));
            if let Some(se) = r.stderr {
                s.push_str(&format!(" ± {se:.2e}"));
            }
            if let (Some(p), Some(t)) = (r.prediction, r.tolerance) {
                s.push_str(&format!(" (prediction {p:.6e}, tolerance {t:.2e})"));
            }
            s.push('\n');
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s.push_str(&format!(
            "{} in {:.2}s, {} steps\n",
            if self.pass { "all checks passed" } else { "some checks failed" },
            self.wall_clock_seconds,
            self.steps
        ));
        s
    }
}

/// A runtime failure, reported as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        let kind = match e {
            Error::Dimension(_) => "dimension",
            Error::Singular { .. } => "singular",
            Error::BandEdge { .. } => "band_edge",
            Error::DegenerateFrame { .. } => "degenerate_frame",
            Error::DegenerateVolume { .. } => "degenerate_volume",
            Error::NotUnitary { .. } => "not_unitary",
            Error::InvalidInput { .. } => "invalid_input",
            Error::ClosureNotStable { .. } => "closure_not_stable",
        };
        Self {
            error: kind.to_string(),
            message: e.to_string(),
        }
    }
}

/// Apply [`THREADS_ENV`] to the global thread pool.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Outcome {
    records: Vec<Record>,
    notes: Vec<String>,
    details: serde_json::Value,
    steps: u64,
}

/// Validate, run the scenario, and write the JSON report and CSV series
/// when paths are configured.
pub fn run(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let outcome = match config.scenario {
        Scenario::Lyapunov => run_lyapunov(config, &mut rng)?,
        Scenario::Birkhoff => run_birkhoff(config, &mut rng)?,
        Scenario::HaarCheck => run_haar_check(config, &mut rng)?,
        Scenario::Closure => run_closure(config, &mut rng)?,
        Scenario::Counterexample => run_counterexample(config, &mut rng)?,
        Scenario::Moments => run_moments(config, &mut rng)?,
        Scenario::Divergence => run_divergence(config, &mut rng)?,
    };
    if let Some(path) = &config.csv {
        write_series(config, path, &mut rng)?;
    }
    let pass = outcome.records.iter().all(|r| r.pass != Some(false));
    let report = Report {
        config: config.clone(),
        records: outcome.records,
        notes: outcome.notes,
        details: outcome.details,
        steps: outcome.steps,
        threads: rayon::current_num_threads(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        pass,
    };
    if let Some(path) = &config.out {
        std::fs::write(path, report.to_json()).map_err(|e| io_error("out", e))?;
    }
    Ok(report)
}

fn io_error(field: &str, e: impl std::fmt::Display) -> Error {
    Error::invalid(field, e.to_string())
}

fn to_details<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("details serialize")
}

fn chain_steps(s: &Sampling) -> u64 {
    (s.n_steps + s.burn_in) * s.replicas as u64
}

const REF_GAMMA: &str = "perturbative exponent λ²(1+2(L−p))/(8 sin²k)";
const REF_PARTIAL: &str = "perturbative partial sum Σ_{q≤p} λ²(1+2(L−q))/(8 sin²k)";
const REF_SPACING: &str = "equidistant spectrum, spacing λ²/(4 sin²k)";

fn lyapunov_records(
    config: &RunConfig,
    spectrum: &LyapunovSpectrum,
    prediction: &PerturbativePrediction,
    partial_sums: bool,
) -> Vec<Record> {
    let l = config.l;
    let rel = config.tolerance.unwrap_or(0.15);
    let ps: Vec<usize> = match config.p {
        Some(p) => vec![p],
        None => (1..=l).collect(),
    };
    let mut records = Vec::new();
    let sums = spectrum.partial_sums(l);
    for &p in &ps {
        let (name, est, pred, reference) = if partial_sums {
            (format!("S_{p}"), sums[p - 1], prediction.partial_sums[p - 1], REF_PARTIAL)
        } else {
            (format!("gamma_{p}"), spectrum.exponent(p), prediction.exponents[p - 1], REF_GAMMA)
        };
        let tol = (rel * pred.abs()).max(3.0 * est.stderr.max(0.0));
        records.push(Record::check(name, est, pred, reference, tol));
    }
    if !partial_sums {
        if let Some(p) = config.p {
            let est = sums[p - 1];
            let pred = prediction.partial_sums[p - 1];
            let tol = (rel * pred.abs()).max(3.0 * est.stderr.max(0.0));
            records.push(Record::check(format!("S_{p}"), est, pred, REF_PARTIAL, tol));
        }
    }
    let sin_k = crate::wires::energy_to_k(config.energy).map(f64::sin).unwrap_or(f64::NAN);
    let slack = 0.2 * config.lambda.powi(3) / sin_k.powi(3);
    for (i, est) in spectrum.spacings(l).into_iter().enumerate() {
        let tol = 3.0 * est.stderr.max(0.0) + slack;
        records.push(Record::check(
            format!("gamma_{} - gamma_{}", i + 1, i + 2),
            est,
            prediction.spacing(),
            REF_SPACING,
            tol,
        ));
    }
    records
}

fn run_lyapunov(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let model = config.model()?;
    let sampling = config.sampling(default_burn_in(config.lambda));
    let spectrum = lyapunov_qr(&model, &sampling, rng)?;
    let prediction = PerturbativePrediction::new(config.l, config.energy, config.lambda)?;
    let mut records = lyapunov_records(config, &spectrum, &prediction, false);
    for (i, est) in spectrum.symmetry_defects().into_iter().enumerate() {
        let l = i + 1;
        records.push(Record::info(
            format!("gamma_{l} + gamma_{}", 2 * config.l + 1 - l),
            est,
            "symplectic pairing of the spectrum",
        ));
    }
    Ok(Outcome {
        records,
        notes: Vec::new(),
        details: to_details(&spectrum),
        steps: chain_steps(&sampling),
    })
}

fn run_birkhoff(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let model = config.model()?;
    let sampling = config.sampling(default_burn_in(config.lambda));
    let spectrum = lyapunov_birkhoff_all(&model, &sampling, rng)?;
    let prediction = PerturbativePrediction::new(config.l, config.energy, config.lambda)?;
    Ok(Outcome {
        records: lyapunov_records(config, &spectrum, &prediction, true),
        notes: Vec::new(),
        details: to_details(&spectrum),
        steps: chain_steps(&sampling),
    })
}

fn run_haar_check(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let model = config.model()?;
    let l = config.l;
    let sampling = config.sampling(default_burn_in(config.lambda));
    let width = phase_observable_count(l);
    let chain = birkhoff_multi(&model, phase_observables, width, &sampling, rng)?;
    let haar = haar_phase_moments(l, HAAR_REFERENCE_SAMPLES, rng);
    let slack = config.tolerance.unwrap_or(0.5) * config.lambda;
    let names = phase_observable_names(l);
    let keep = |i: usize| match config.p {
        Some(p) => i < 2 || i == p + 1,
        None => true,
    };
    let mut records = Vec::new();
    for i in (0..width).filter(|&i| keep(i)) {
        let c = chain[i].estimate();
        let h = haar[i];
        let tol = 3.0 * combined_stderr(c.stderr.max(0.0), h.stderr) + slack;
        records.push(Record::check(
            format!("chain {}", names[i]),
            c,
            h.mean,
            "Haar moment, Monte Carlo over independent Haar frames",
            tol,
        ));
    }
    for p in (1..=l).filter(|&p| keep(p + 1)) {
        let h = haar[p + 1];
        records.push(Record::check(
            format!("Haar {}", names[p + 1]),
            h,
            fp_haar_mean(l, p),
            "Haar expectation 2Lp − p²",
            4.0 * h.stderr,
        ));
    }
    Ok(Outcome {
        records,
        notes: Vec::new(),
        details: serde_json::json!({ "haar_samples": HAAR_REFERENCE_SAMPLES, "chain": chain }),
        steps: chain_steps(&sampling),
    })
}

fn run_closure(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let model = config.model()?;
    let cert = certify_coupling(&model, CHECK_FRAMES, rng)?;
    let l = config.l;
    let min_rank = cert.tangent_ranks.iter().copied().min().unwrap_or(0);
    let max_rank = cert.tangent_ranks.iter().copied().max().unwrap_or(0);
    let target = (2 * l * l - 1) as f64;
    let records = vec![
        Record::at_least(
            "closure dimension",
            cert.closure_dim as f64,
            target,
            "lower bound 2L² − 1 for the coupling algebra",
            0.0,
        ),
        Record::check(
            "minimum tangent rank",
            Estimate::new(min_rank as f64, 0.0),
            cert.manifold_dim as f64,
            "dimension 2L² − L of the flag manifold",
            0.0,
        ),
        Record::check(
            "maximum tangent rank",
            Estimate::new(max_rank as f64, 0.0),
            cert.manifold_dim as f64,
            "dimension 2L² − L of the flag manifold",
            0.0,
        ),
    ];
    Ok(Outcome {
        records,
        notes: vec![format!("bracket dimensions {:?}", cert.dims)],
        details: to_details(&cert),
        steps: 0,
    })
}

fn run_counterexample(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let lambda = config.lambda;
    let sampling = config.sampling(0);
    let order = rotation_group_with_limit(PI * lambda, ORDER_TOLERANCE, DEFAULT_MAX_ORDER).order;
    let mut powers = COUNTEREXAMPLE_POWERS.to_vec();
    let second = match order {
        Some(s) => {
            let s = s as u32;
            if !powers.contains(&s) {
                powers.push(s);
            }
            C64::from_polar(1.0, PI / (2.0 * s as f64))
        }
        None => C64::from_polar(1.0, PI / 8.0),
    };
    let starts = [C64::new(1.0, 0.0), second];
    let mut records = Vec::new();
    let mut notes = Vec::new();
    let mut reports = Vec::new();
    for x0 in starts {
        reports.push(circle_counterexample_powers(lambda, x0, &powers, &sampling, rng)?);
    }
    let label = |x0: C64| format!("x0 = e^(i {:.6})", x0.arg());
    match order {
        Some(s) => {
            let s32 = s as u32;
            let tol = config.tolerance.unwrap_or(1e-12);
            let mut averages = Vec::new();
            for (x0, rep) in starts.iter().zip(&reports) {
                let est = rep.observable(s32).expect("power present").estimate();
                averages.push(est.mean);
                records.push(Record::check(
                    format!("Re(z^{s}) from {}", label(*x0)),
                    est,
                    x0.powu(s32).re,
                    "invariant along the orbit: Re(x0^s) for a rotation of order s",
                    tol,
                ));
            }
            notes.push(format!("rotation step e^(iπλ) has order {s}"));
            if (averages[0] - averages[1]).abs() > 2.0 * tol {
                notes.push("non-unique invariant measure: averages depend on the starting point".to_string());
            }
            for (x0, rep) in starts.iter().zip(&reports) {
                for &(m, e) in rep.observables.iter().filter(|(m, _)| *m != s32) {
                    records.push(Record::info(format!("Re(z^{m}) from {}", label(*x0)), e.estimate(), "orbit average"));
                }
            }
        }
        None => {
            let slack = 10.0 / (config.steps as f64 * lambda * lambda);
            for (x0, rep) in starts.iter().zip(&reports) {
                for &(m, e) in &rep.observables {
                    let est = e.estimate();
                    records.push(Record::check(
                        format!("Re(z^{m}) from {}", label(*x0)),
                        est,
                        0.0,
                        "equidistribution on the circle for an irrational rotation step",
                        3.0 * est.stderr.max(0.0) + slack,
                    ));
                }
            }
            notes.push("rotation step is not a root of unity; averages independent of the starting point".to_string());
        }
    }
    Ok(Outcome {
        records,
        notes,
        details: to_details(&reports),
        steps: chain_steps(&sampling) * starts.len() as u64,
    })
}

fn run_moments(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let spec = WignerSpec::new(config.l, config.ensemble);
    let sigmas = config.tolerance.unwrap_or(4.0);
    let l = config.l;
    let n = config.steps;
    let p = ComplexMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
    let q = ComplexMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
    let moments = ensemble_moments(&spec, n, rng);
    let identities = verify_w_identities(&spec, &p, &q, n, rng)?;
    let mut records = Vec::new();
    for (group, report) in [("variance condition", &moments), ("identity", &identities)] {
        for c in &report.checks {
            records.push(Record {
                pass: Some(c.passes(sigmas)),
                ..Record::check(
                    format!("{group} {}", c.name),
                    Estimate::new(c.max_deviation, c.max_stderr),
                    0.0,
                    "exact moment of the coupling ensemble",
                    sigmas * c.max_stderr + 1e-12,
                )
            });
        }
    }
    let wn = n.min(WHITENING_SAMPLES) as usize;
    let white = whitening_check(&spec, wn, rng)?;
    records.push(Record::check(
        "whitening reconstruction",
        Estimate::new(white.reconstruction_error, 0.0),
        0.0,
        "exact decomposition a = Σ v_i b_i",
        1e-12,
    ));
    records.push(Record {
        pass: Some(white.passes(1e-12)),
        ..Record::check(
            "whitening cross-correlation",
            Estimate::new(white.max_cross_correlation, 0.0),
            0.0,
            "uncorrelated coefficients",
            4.0 / (wn as f64).sqrt(),
        )
    });
    Ok(Outcome {
        records,
        notes: Vec::new(),
        details: serde_json::json!({ "moments": moments, "identities": identities, "whitening": white }),
        steps: 2 * n + 2 * wn as u64,
    })
}

fn run_divergence(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let l = config.l;
    let tol = config.tolerance.unwrap_or(1e-4);
    let mut fd_gap: f64 = 0.0;
    let mut gauge_div: f64 = 0.0;
    let mut gauge_fp: f64 = 0.0;
    for _ in 0..CHECK_FRAMES {
        let frame = IsotropicFrame::haar(l, rng);
        let p = random_lorentz_generator(l, rng);
        let b = p.block(0, l, l, l);
        let closed = divergence_dp(&frame, &b);
        let numeric = divergence_numeric(&p, &frame, DIVERGENCE_STEP)?;
        fd_gap = fd_gap.max((closed - numeric).abs());
        let phases: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let gauged = frame.with_gauge(&phases);
        gauge_div = gauge_div.max((divergence_dp(&gauged, &b) - closed).abs());
        for q in 1..=l {
            gauge_fp = gauge_fp.max((class_function_fp(&gauged, q) - class_function_fp(&frame, q)).abs());
        }
    }
    let exact = |name: &str, value: f64, reference: &str| {
        Record::check(name, Estimate::new(value, 0.0), 0.0, reference, 1e-10)
    };
    let records = vec![
        Record::check(
            "max |closed form − finite difference|",
            Estimate::new(fd_gap, 0.0),
            0.0,
            "divergence 2 Re Tr(C U*BV) against a finite-difference oracle",
            tol,
        ),
        exact("gauge defect of divergence", gauge_div, "gauge invariance"),
        exact("gauge defect of F_p", gauge_fp, "gauge invariance"),
    ];
    Ok(Outcome {
        records,
        notes: Vec::new(),
        details: serde_json::json!({ "frames": CHECK_FRAMES, "step": DIVERGENCE_STEP }),
        steps: 0,
    })
}

/// One chain of `steps` steps after burn-in: the one-step volume expansion
/// `Σ_{i≤p} log R_ii` for the Lyapunov scenarios, `F_p` for `haar-check`.
fn write_series(config: &RunConfig, path: &PathBuf, rng: &mut ChaCha8Rng) -> Result<()> {
    let model = config.model()?;
    let p = config.series_p();
    let burn = config.burn_in.unwrap_or(default_burn_in(config.lambda));
    let mut stream = ChaCha8Rng::seed_from_u64(rng.random());
    let start = IsotropicFrame::haar(config.l, &mut stream);
    let mut chain = Chain::new(&model, &start, stream)?;
    for _ in 0..burn {
        chain.advance()?;
    }
    let file = File::create(path).map_err(|e| io_error("csv", e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["step", "value", "running_mean"]).map_err(|e| io_error("csv", e))?;
    let mut total = 0.0;
    for step in 1..=config.steps {
        let value = if config.scenario == Scenario::HaarCheck {
            let v = class_function_fp(&chain.frame(), p);
            chain.advance()?;
            v
        } else {
            chain.advance()?;
            chain.log_expansion()[..p].iter().sum()
        };
        total += value;
        w.write_record(&[step.to_string(), value.to_string(), (total / step as f64).to_string()])
            .map_err(|e| io_error("csv", e))?;
    }
    w.into_inner()
        .map_err(|e| io_error("csv", e))?
        .flush()
        .map_err(|e| io_error("csv", e))
}
