//! Runtime checks of the inequalities used in the convergence analysis.
//!
//! Each checker is a pure function of stored trace data and returns a
//! [`LemmaReport`]. Deterministic inequalities allow a relative slack of
//! [`RELATIVE_TOLERANCE`]; the sign-probability bound is checked against an
//! empirical frequency with a 3σ Monte-Carlo allowance.

use std::fmt;

use rand_distr::{Distribution, Normal, StudentT, Uniform};

use crate::error::{Error, Result};
use crate::metrics::linf_distance;
use crate::rng::{stream, StreamTag};
use crate::trace::Trace;

pub const RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub lemma: String,
    pub samples: usize,
    pub violations: usize,
    /// Observations that did not meet the checker's preconditions.
    pub skipped: usize,
    /// Smallest `bound − observed` seen (`+∞` when nothing was checked).
    pub worst_margin: f64,
}

impl LemmaReport {
    fn new(lemma: &str) -> Self {
        Self {
            lemma: lemma.to_string(),
            samples: 0,
            violations: 0,
            skipped: 0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Records one observation of `observed ≤ bound`, tolerating `scale × 1e-9`.
    fn observe(&mut self, observed: f64, bound: f64, scale: f64) {
        self.samples += 1;
        let margin = bound - observed;
        self.worst_margin = self.worst_margin.min(margin);
        if margin.is_nan() || -margin > RELATIVE_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Combines reports for the same lemma.
    pub fn merge(&mut self, other: &LemmaReport) {
        self.samples += other.samples;
        self.violations += other.violations;
        self.skipped += other.skipped;
        self.worst_margin = self.worst_margin.min(other.worst_margin);
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} samples={} violations={} skipped={} worst_margin={:.6e} {}",
            self.lemma,
            self.samples,
            self.violations,
            self.skipped,
            self.worst_margin,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// sign probability

/// `P(sign(a_j) ≠ sign(b_j)) ≤ E|a_j − b_j| / |b_j|`, per coordinate, from samples of `a`.
///
/// The empirical mismatch frequency may exceed the empirical bound by three
/// binomial standard errors plus three standard errors of the mean-absolute
/// deviation estimate. Coordinates with `b_j = 0` are skipped.
pub fn check_sign_markov(a_samples: &[Vec<f64>], b: &[f64]) -> Result<LemmaReport> {
    if a_samples.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 samples, got {}",
            a_samples.len()
        )));
    }
    if let Some(a) = a_samples.iter().find(|a| a.len() != b.len()) {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    let n = a_samples.len() as f64;
    let mut report = LemmaReport::new("sign_markov");
    for (j, bj) in b.iter().enumerate() {
        if *bj == 0.0 {
            report.skipped += 1;
            continue;
        }
        let mismatches = a_samples.iter().filter(|a| sign_of(a[j]) != sign_of(*bj)).count() as f64;
        let freq = mismatches / n;
        let dev: Vec<f64> = a_samples.iter().map(|a| (a[j] - bj).abs()).collect();
        let mean = dev.iter().sum::<f64>() / n;
        let var = dev.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let bound = mean / bj.abs();
        let p = bound.clamp(0.0, 1.0).max(freq);
        let slack = 3.0 * (p * (1.0 - p) / n).sqrt() + 3.0 * (var / n).sqrt() / bj.abs();
        report.observe(freq, bound + slack, 1.0);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sd: f64 },
    Uniform { half_width: f64 },
    StudentT { df: f64, scale: f64 },
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian { .. } => "gaussian",
            NoiseModel::Uniform { .. } => "uniform",
            NoiseModel::StudentT { .. } => "student_t",
        }
    }
}

/// Draws `samples` vectors `a = b + noise` and runs [`check_sign_markov`].
pub fn sign_markov_monte_carlo(noise: NoiseModel, b: &[f64], samples: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = stream(seed, StreamTag::MonteCarlo, 0, 0);
    let bad = |e: String| Error::InvalidArgument(format!("noise model: {e}"));
    let mut draw: Box<dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> f64> = match noise {
        NoiseModel::Gaussian { sd } => {
            let dist = Normal::new(0.0, sd).map_err(|e| bad(e.to_string()))?;
            Box::new(move |r| dist.sample(r))
        }
        NoiseModel::Uniform { half_width } => {
            let dist = Uniform::new_inclusive(-half_width, half_width).map_err(|e| bad(e.to_string()))?;
            Box::new(move |r| dist.sample(r))
        }
        NoiseModel::StudentT { df, scale } => {
            let dist = StudentT::new(df).map_err(|e| bad(e.to_string()))?;
            Box::new(move |r| scale * dist.sample(r))
        }
    };
    let a: Vec<Vec<f64>> = (0..samples)
        .map(|_| b.iter().map(|bj| bj + draw(&mut rng)).collect())
        .collect();
    let mut report = check_sign_markov(&a, b)?;
    report.lemma = format!("sign_markov[{}]", noise.name());
    Ok(report)
}

// ---------------------------------------------------------------------------
// trajectory checks

fn check_lhat(lhat: &[f64], d: usize) -> Result<()> {
    if lhat.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: lhat.len(),
        });
    }
    Ok(())
}

/// `|v_j − [∇f(x)]_j| ≤ 2 L̂_j D_t^i` at every applied variance-reduced step.
///
/// Records without diagnostics or without an anchor are skipped.
pub fn check_vr_bound(trace: &Trace, lhat: &[f64]) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("vr_bound");
    for r in &trace.records {
        let Some(d) = r.diag.as_ref().filter(|d| d.anchor.is_some()) else {
            report.skipped += 1;
            continue;
        };
        if !r.applied {
            continue;
        }
        check_lhat(lhat, d.grad.len())?;
        for j in 0..d.grad.len() {
            let observed = (d.estimator[j] - d.grad[j]).abs();
            let bound = 2.0 * lhat[j] * r.d_threshold;
            let scale = bound.max(observed).max(d.estimator[j].abs()).max(d.grad[j].abs());
            report.observe(observed, bound, scale);
        }
    }
    Ok(report)
}

/// `f(x⁺) − f(x) ≤ −γ‖∇f(x)‖₁ + (γ²/2)‖L̂‖₁ + 2γ Σ_j |[∇f(x)]_j|·1{s_j ≠ sign([∇f(x)]_j)}`
/// for every applied step whose direction `s` is a sign vector. Averaged sign
/// directions (entries strictly inside `[−1, 1]`) are checked against
/// `−γ⟨∇f(x), s⟩ + (γ²/2) Σ_j L̂_j s_j²` instead.
pub fn check_descent(trace: &Trace, lhat: &[f64]) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("descent");
    let l1_l: f64 = lhat.iter().sum();
    for r in &trace.records {
        let Some(d) = r.diag.as_ref() else {
            report.skipped += 1;
            continue;
        };
        if !r.applied {
            continue;
        }
        if d.direction.iter().any(|s| !(s.abs() <= 1.0)) {
            report.skipped += 1;
            continue;
        }
        check_lhat(lhat, d.grad.len())?;
        let gamma = r.gamma;
        let g1: f64 = d.grad.iter().map(|g| g.abs()).sum();
        let is_sign = d.direction.iter().all(|s| *s == 1.0 || *s == -1.0 || *s == 0.0);
        let bound = if is_sign {
            let mismatch: f64 = d
                .grad
                .iter()
                .zip(&d.direction)
                .filter(|(g, s)| **s != sign_of(**g))
                .map(|(g, _)| g.abs())
                .sum();
            -gamma * g1 + 0.5 * gamma * gamma * l1_l + 2.0 * gamma * mismatch
        } else {
            // Averaged signs: the plain coordinate-smoothness bound along the step.
            let inner: f64 = d.grad.iter().zip(&d.direction).map(|(g, s)| g * s).sum();
            let quad: f64 = lhat.iter().zip(&d.direction).map(|(l, s)| l * s * s).sum();
            -gamma * inner + 0.5 * gamma * gamma * quad
        };
        let observed = d.f_next - r.f;
        let scale = r.f.abs().max(d.f_next.abs()).max(gamma * g1);
        report.observe(observed, bound, scale);
    }
    Ok(report)
}

/// Applied steps must start within the freeze threshold: `‖x − y‖_∞ ≤ D_t^i`.
pub fn check_freeze(trace: &Trace) -> LemmaReport {
    let mut report = LemmaReport::new("freeze");
    for r in &trace.records {
        match r.diag.as_ref().and_then(|d| d.anchor.as_ref().map(|y| (d, y))) {
            Some((d, y)) => {
                let dist = linf_distance(&d.x, y);
                if r.applied {
                    report.samples += 1;
                    report.worst_margin = report.worst_margin.min(r.d_threshold - dist);
                    if dist > r.d_threshold {
                        report.violations += 1;
                    }
                } else if dist <= r.d_threshold {
                    // Frozen although inside the threshold.
                    report.samples += 1;
                    report.violations += 1;
                }
            }
            None => report.skipped += 1,
        }
    }
    report
}

/// At the first step of an epoch `x = y`, so the semi-stochastic gradient must
/// equal the full gradient exactly.
pub fn check_anchor_cancellation(trace: &Trace) -> LemmaReport {
    let mut report = LemmaReport::new("anchor_cancellation");
    for r in trace.records.iter().filter(|r| r.i == 0) {
        let Some(d) = r.diag.as_ref().filter(|d| d.anchor.is_some()) else {
            report.skipped += 1;
            continue;
        };
        report.samples += 1;
        let dev = linf_distance(&d.estimator, &d.grad);
        report.worst_margin = report.worst_margin.min(-dev);
        if d.estimator != d.grad {
            report.violations += 1;
        }
    }
    report
}

/// Replays `q ← β q + (1 − β) v` from the logged estimators and compares with
/// the logged momentum, coordinate-wise within `tolerance`.
///
/// The buffer restarts from zero at each epoch unless `carried`.
pub fn check_momentum_replay(trace: &Trace, beta: f64, carried: bool, tolerance: f64) -> LemmaReport {
    let mut report = LemmaReport::new("momentum_replay");
    let mut q: Vec<f64> = Vec::new();
    let mut epoch = usize::MAX;
    let mut expected_i = 0;
    for r in &trace.records {
        let Some(d) = r.diag.as_ref() else {
            report.skipped += 1;
            continue;
        };
        let Some(logged) = d.momentum.as_ref() else {
            report.skipped += 1;
            continue;
        };
        if r.t != epoch {
            epoch = r.t;
            expected_i = 0;
            if !carried || q.is_empty() {
                q = vec![0.0; logged.len()];
            }
        }
        if r.i != expected_i {
            // Gaps (telemetry stride) make the replay impossible.
            report.skipped += 1;
            q.clone_from(logged);
            expected_i = r.i + 1;
            continue;
        }
        expected_i += 1;
        for (qj, vj) in q.iter_mut().zip(&d.estimator) {
            *qj = beta * *qj + (1.0 - beta) * vj;
        }
        report.samples += 1;
        let dev = linf_distance(&q, logged);
        report.worst_margin = report.worst_margin.min(tolerance - dev);
        if dev > tolerance {
            report.violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{StepDiagnostics, TraceRecord};

    fn step(f: f64, f_next: f64, gamma: f64, grad: Vec<f64>, dir: Vec<f64>) -> TraceRecord {
        TraceRecord {
            t: 0,
            i: 0,
            f,
            grad_l1: grad.iter().map(|g| g.abs()).sum(),
            grad_l2: 0.0,
            applied: true,
            gamma,
            d_threshold: 0.0,
            diag: Some(StepDiagnostics {
                f_next,
                x: vec![0.0; grad.len()],
                anchor: Some(vec![0.0; grad.len()]),
                estimator: grad.clone(),
                momentum: None,
                direction: dir,
                grad,
            }),
        }
    }

    #[test]
    fn markov_noiseless_has_zero_rate() {
        let b = vec![1.0, -2.0, 0.0];
        let a = vec![b.clone(); 200];
        let r = check_sign_markov(&a, &b).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.samples, 2);
    }

    #[test]
    fn markov_gaussian_small_noise() {
        let r = sign_markov_monte_carlo(NoiseModel::Gaussian { sd: 0.1 }, &[1.0], 100_000, 1).unwrap();
        assert!(r.passed(), "{r}");
        // Bound ≈ E|N(0, 0.1)| = 0.1·√(2/π) ≈ 0.080, observed ≈ 0.
        assert!(r.worst_margin > 0.07 && r.worst_margin < 0.1, "{r}");
    }

    #[test]
    fn markov_vacuous_bound() {
        let r = sign_markov_monte_carlo(NoiseModel::StudentT { df: 3.0, scale: 10.0 }, &[0.01], 1000, 2).unwrap();
        assert!(r.passed());
        assert!(r.worst_margin > 0.0);
    }

    #[test]
    fn markov_needs_enough_samples() {
        assert!(check_sign_markov(&vec![vec![1.0]; 10], &[1.0]).is_err());
    }

    #[test]
    fn descent_exact_sign_step_on_quadratic() {
        // f(x) = ½·2·x², x = 1, γ = 0.1: f(0.9) − f(1) = 0.81 − 1 = −0.19;
        // bound = −0.1·2 + 0.005·L̂ = −0.2 + 0.01 = −0.19 with L̂ = 2.
        let r = check_descent(&Trace { records: vec![step(1.0, 0.81, 0.1, vec![2.0], vec![1.0])] }, &[3.0]).unwrap();
        assert!(r.passed());
        assert!(r.worst_margin > 0.0);
        let tight = check_descent(&Trace { records: vec![step(1.0, 0.81, 0.1, vec![2.0], vec![1.0])] }, &[2.0]).unwrap();
        assert!(tight.passed());
        assert!(tight.worst_margin.abs() < 1e-12);
        let bad = check_descent(&Trace { records: vec![step(1.0, 0.9, 0.1, vec![2.0], vec![1.0])] }, &[2.0]).unwrap();
        assert_eq!(bad.violations, 1);
    }

    #[test]
    fn descent_at_stationary_point() {
        let r = check_descent(&Trace { records: vec![step(0.0, 0.0, 0.1, vec![0.0], vec![0.0])] }, &[4.0]).unwrap();
        assert!(r.passed());
        assert!((r.worst_margin - 0.02).abs() < 1e-15);
    }

    #[test]
    fn vr_bound_zero_threshold() {
        let r = check_vr_bound(&Trace { records: vec![step(0.0, 0.0, 0.1, vec![1.0], vec![1.0])] }, &[1.0]).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_margin, 0.0);
        let mut rec = step(0.0, 0.0, 0.1, vec![1.0], vec![1.0]);
        rec.diag.as_mut().unwrap().estimator = vec![1.5];
        rec.d_threshold = 0.1;
        let r = check_vr_bound(&Trace { records: vec![rec] }, &[1.0]).unwrap();
        assert_eq!(r.violations, 1);
    }
}
