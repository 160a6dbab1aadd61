//! Sign-based random-reshuffling methods and the with-replacement baselines.
//!
//! Every method advances one epoch at a time through [`EpochOptimizer`] and
//! records one [`TraceRecord`](crate::trace::TraceRecord) per recorded inner
//! iteration.

mod baselines;
mod sign_rr;
mod variance_reduced;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::metrics::{l1_norm, l2_norm};
use crate::problems::FiniteSumProblem;
use crate::rng::{stream, StreamTag};
use crate::schedules::Schedule;
use crate::trace::{StepDiagnostics, Telemetry, Trace, TraceRecord};

pub use baselines::{baseline_epoch, BaselineKind, BaselineParams, BaselineState};
pub use sign_rr::{signrr_epoch, SignRrState};
pub(crate) use variance_reduced::check_beta;
pub use variance_reduced::{bias_correct, signrvm_epoch, signrvr_epoch, SignRvmState, SignRvrState};

// ---------------------------------------------------------------------------
// sign

/// Elementwise sign with entries in {−1, 0, +1}; `sign(0) = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|s| f64::from(*s)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
fn sign_scalar(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sign(v: &[f64]) -> Result<SignVector> {
    let mut out = vec![0.0; v.len()];
    sign_into(v, &mut out)?;
    Ok(SignVector(out.into_iter().map(|s| s as i8).collect()))
}

/// Writes `sign(v)` as ±1.0 / 0.0 into `out`. A NaN entry is an error.
pub fn sign_into(v: &[f64], out: &mut [f64]) -> Result<()> {
    for (j, (o, x)) in out.iter_mut().zip(v).enumerate() {
        if x.is_nan() {
            return Err(Error::NaN { coordinate: j });
        }
        *o = sign_scalar(*x);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// permutations

/// One epoch's ordering of `[n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub epoch: usize,
    pub master_seed: u64,
}

impl Permutation {
    pub fn is_bijection(&self) -> bool {
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        sorted.iter().enumerate().all(|(k, v)| k == *v)
    }
}

/// Fisher–Yates permutation of `[n]` for epoch `t`.
pub fn shuffle(n: usize, t: usize, master_seed: u64) -> Permutation {
    shuffle_for_worker(n, t, master_seed, 0)
}

/// Per-worker stream. Worker 0 is the centralized stream, so a one-worker
/// simulation sees the same orderings as the centralized method.
pub fn shuffle_for_worker(n: usize, t: usize, master_seed: u64, worker: usize) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(master_seed, StreamTag::Shuffle, worker as u64, t as u64);
    order.shuffle(&mut rng);
    Permutation {
        order,
        epoch: t,
        master_seed,
    }
}

// ---------------------------------------------------------------------------
// shared step arithmetic
//
// The distributed simulator calls the same helpers so that a one-worker run
// reproduces the centralized trajectory bit for bit.

/// Number of inner iterations for `n` components and batch size `batch`.
pub fn iterations_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch.max(1))
}

/// Mean gradient over `indices` (a single index is passed through unscaled).
pub(crate) fn batch_grad_into(
    p: &dyn FiniteSumProblem,
    indices: &[usize],
    x: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    match indices {
        [i] => p.component_grad_into(*i, x, out),
        _ => {
            out.iter_mut().for_each(|o| *o = 0.0);
            for &i in indices {
                p.component_grad_into(i, x, scratch);
                out.iter_mut().zip(scratch.iter()).for_each(|(o, g)| *o += g);
            }
            let k = indices.len() as f64;
            out.iter_mut().for_each(|o| *o /= k);
        }
    }
}

/// `v = ∇f_π(x) − ∇f_π(y) + ∇f(y)`.
#[inline]
pub(crate) fn semi_stochastic_into(gx: &[f64], gy: &[f64], anchor_grad: &[f64], out: &mut [f64]) {
    for j in 0..out.len() {
        out[j] = gx[j] - gy[j] + anchor_grad[j];
    }
}

/// `q ← β q + (1 − β) v`.
#[inline]
pub(crate) fn momentum_update(q: &mut [f64], v: &[f64], beta: f64) {
    for (qj, vj) in q.iter_mut().zip(v) {
        *qj = beta * *qj + (1.0 - beta) * vj;
    }
}

/// `x ← x − γ·dir`.
#[inline]
pub(crate) fn apply_step(x: &mut [f64], gamma: f64, dir: &[f64]) {
    for (xj, dj) in x.iter_mut().zip(dir) {
        *xj -= gamma * dj;
    }
}

/// Full-objective telemetry taken before an update.
pub(crate) struct Probe {
    pub f: f64,
    pub grad: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
}

impl Probe {
    pub fn take(p: &dyn FiniteSumProblem, x: &[f64]) -> Result<Self> {
        let f = p.value(x);
        let grad = p.grad(x);
        let l1 = l1_norm(&grad)?;
        let l2 = l2_norm(&grad)?;
        Ok(Self { f, grad, l1, l2 })
    }
}

/// Assembles a trace record from a probe and the step that followed it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_record(
    p: &dyn FiniteSumProblem,
    probe: Probe,
    telemetry: &Telemetry,
    t: usize,
    i: usize,
    applied: bool,
    gamma: f64,
    d_threshold: f64,
    x_before: Option<Vec<f64>>,
    x_after: &[f64],
    anchor: Option<&[f64]>,
    estimator: &[f64],
    momentum: Option<&[f64]>,
    direction: &[f64],
) -> TraceRecord {
    let diag = if telemetry.diagnostics {
        let f_next = if applied { p.value(x_after) } else { probe.f };
        Some(StepDiagnostics {
            f_next,
            x: x_before.unwrap_or_else(|| x_after.to_vec()),
            anchor: anchor.map(<[f64]>::to_vec),
            estimator: estimator.to_vec(),
            momentum: momentum.map(<[f64]>::to_vec),
            direction: direction.to_vec(),
            grad: probe.grad,
        })
    } else {
        None
    };
    TraceRecord {
        t,
        i,
        f: probe.f,
        grad_l1: probe.l1,
        grad_l2: probe.l2,
        applied,
        gamma,
        d_threshold,
        diag,
    }
}

/// Settings shared by every epoch driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochContext {
    pub seed: u64,
    pub batch: usize,
    pub telemetry: Telemetry,
}

impl Default for EpochContext {
    fn default() -> Self {
        Self {
            seed: 0,
            batch: 1,
            telemetry: Telemetry::default(),
        }
    }
}

pub(crate) fn check_dim(p: &dyn FiniteSumProblem, x: &[f64]) -> Result<()> {
    if p.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// uniform driver

/// Every centralized method behind one interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    SignRr,
    SignRvr,
    SignRvm,
    Sgd,
    Rr,
    SignSgd,
    Signum,
    Adam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::SignRr,
        Algorithm::SignRvr,
        Algorithm::SignRvm,
        Algorithm::Sgd,
        Algorithm::Rr,
        Algorithm::SignSgd,
        Algorithm::Signum,
        Algorithm::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SignRr => "signrr",
            Algorithm::SignRvr => "signrvr",
            Algorithm::SignRvm => "signrvm",
            Algorithm::Sgd => "sgd",
            Algorithm::Rr => "rr",
            Algorithm::SignSgd => "signsgd",
            Algorithm::Signum => "signum",
            Algorithm::Adam => "adam",
        }
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Algorithm::SignRvm | Algorithm::Signum | Algorithm::Adam)
    }

    pub fn uses_threshold(self) -> bool {
        matches!(self, Algorithm::SignRvr | Algorithm::SignRvm)
    }

    /// Updates of the form `x ← x − γ·sign(·)`.
    pub fn is_sign_based(self) -> bool {
        matches!(
            self,
            Algorithm::SignRr | Algorithm::SignRvr | Algorithm::SignRvm | Algorithm::SignSgd | Algorithm::Signum
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

/// Hyperparameters for one run of one centralized method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub algorithm: Algorithm,
    pub gamma: Schedule,
    /// Freeze threshold for the variance-reduced methods.
    pub threshold: Option<Schedule>,
    /// Momentum constant (SignRVM, Signum) or Adam's β₁.
    pub beta: f64,
    pub beta2: f64,
    pub eps: f64,
    pub carry_momentum: bool,
}

impl OptimizerSpec {
    pub fn new(algorithm: Algorithm, gamma: Schedule) -> Self {
        Self {
            algorithm,
            gamma,
            threshold: None,
            beta: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            carry_momentum: false,
        }
    }

    pub fn threshold(mut self, d: Schedule) -> Self {
        self.threshold = Some(d);
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

pub trait EpochOptimizer: Send {
    fn algorithm(&self) -> Algorithm;

    fn x(&self) -> &[f64];

    /// Runs the next epoch and returns its records.
    fn run_epoch(&mut self, problem: &dyn FiniteSumProblem, ctx: &EpochContext) -> Result<Trace>;
}

struct SignRrDriver {
    state: SignRrState,
    gamma: Schedule,
}

impl EpochOptimizer for SignRrDriver {
    fn algorithm(&self) -> Algorithm {
        Algorithm::SignRr
    }
    fn x(&self) -> &[f64] {
        &self.state.x
    }
    fn run_epoch(&mut self, problem: &dyn FiniteSumProblem, ctx: &EpochContext) -> Result<Trace> {
        signrr_epoch(&mut self.state, problem, &self.gamma, ctx)
    }
}

struct SignRvrDriver {
    state: SignRvrState,
    gamma: Schedule,
    threshold: Schedule,
}

impl EpochOptimizer for SignRvrDriver {
    fn algorithm(&self) -> Algorithm {
        Algorithm::SignRvr
    }
    fn x(&self) -> &[f64] {
        &self.state.x
    }
    fn run_epoch(&mut self, problem: &dyn FiniteSumProblem, ctx: &EpochContext) -> Result<Trace> {
        signrvr_epoch(&mut self.state, problem, &self.gamma, &self.threshold, ctx)
    }
}

struct SignRvmDriver {
    state: SignRvmState,
    gamma: Schedule,
    threshold: Schedule,
}

impl EpochOptimizer for SignRvmDriver {
    fn algorithm(&self) -> Algorithm {
        Algorithm::SignRvm
    }
    fn x(&self) -> &[f64] {
        &self.state.rvr.x
    }
    fn run_epoch(&mut self, problem: &dyn FiniteSumProblem, ctx: &EpochContext) -> Result<Trace> {
        signrvm_epoch(&mut self.state, problem, &self.gamma, &self.threshold, ctx)
    }
}

struct BaselineDriver {
    kind: BaselineKind,
    state: BaselineState,
    params: BaselineParams,
}

impl EpochOptimizer for BaselineDriver {
    fn algorithm(&self) -> Algorithm {
        self.kind.algorithm()
    }
    fn x(&self) -> &[f64] {
        &self.state.x
    }
    fn run_epoch(&mut self, problem: &dyn FiniteSumProblem, ctx: &EpochContext) -> Result<Trace> {
        baseline_epoch(self.kind, &mut self.state, problem, &self.params, ctx)
    }
}

/// Builds the driver for `spec` starting from `x0`.
pub fn build_optimizer(spec: &OptimizerSpec, x0: Vec<f64>) -> Result<Box<dyn EpochOptimizer>> {
    let need_threshold = || {
        spec.threshold
            .ok_or_else(|| Error::InvalidArgument(format!("{} needs a freeze threshold", spec.algorithm)))
    };
    Ok(match spec.algorithm {
        Algorithm::SignRr => Box::new(SignRrDriver {
            state: SignRrState::new(x0),
            gamma: spec.gamma,
        }),
        Algorithm::SignRvr => Box::new(SignRvrDriver {
            state: SignRvrState::new(x0),
            gamma: spec.gamma,
            threshold: need_threshold()?,
        }),
        Algorithm::SignRvm => {
            let mut state = SignRvmState::new(x0, spec.beta)?;
            state.carry_momentum = spec.carry_momentum;
            Box::new(SignRvmDriver {
                state,
                gamma: spec.gamma,
                threshold: need_threshold()?,
            })
        }
        other => {
            let kind = BaselineKind::try_from(other)?;
            let params = BaselineParams {
                gamma: spec.gamma,
                beta: spec.beta,
                beta2: spec.beta2,
                eps: spec.eps,
            };
            params.validate(kind)?;
            Box::new(BaselineDriver {
                kind,
                state: BaselineState::new(x0),
                params,
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_examples() {
        assert_eq!(sign(&[1.5, -0.2, 0.0]).unwrap().entries(), &[1, -1, 0]);
        assert_eq!(sign(&[0.1, 2.0, 1e-300]).unwrap().entries(), &[1, 1, 1]);
        assert!(matches!(sign(&[1.0, f64::NAN]), Err(Error::NaN { coordinate: 1 })));
        assert_eq!(sign(&[-0.0]).unwrap().entries(), &[0]);
    }

    #[test]
    fn shuffle_examples() {
        assert_eq!(shuffle(1, 0, 9).order, vec![0]);
        assert_eq!(shuffle(5, 2, 9), shuffle(5, 2, 9));
        let p = shuffle(1000, 3, 42);
        assert!(p.is_bijection());
        let mut sorted = p.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
        assert_ne!(shuffle(1000, 3, 42).order, shuffle(1000, 4, 42).order);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("ssdm".parse::<Algorithm>().is_err());
    }
}
