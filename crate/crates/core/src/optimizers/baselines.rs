use rand::Rng;

use crate::error::{Error, Result};
use crate::problems::FiniteSumProblem;
use crate::rng::{stream, StreamTag};
use crate::schedules::Schedule;
use crate::trace::Trace;

use super::variance_reduced::check_beta;
use super::{
    apply_step, batch_grad_into, check_dim, finish_record, iterations_per_epoch, momentum_update, shuffle,
    sign_into, Algorithm, EpochContext, Probe,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Sgd,
    Rr,
    SignSgd,
    Signum,
    Adam,
}

impl BaselineKind {
    pub fn algorithm(self) -> Algorithm {
        match self {
            BaselineKind::Sgd => Algorithm::Sgd,
            BaselineKind::Rr => Algorithm::Rr,
            BaselineKind::SignSgd => Algorithm::SignSgd,
            BaselineKind::Signum => Algorithm::Signum,
            BaselineKind::Adam => Algorithm::Adam,
        }
    }
}

impl TryFrom<Algorithm> for BaselineKind {
    type Error = Error;

    fn try_from(a: Algorithm) -> Result<Self> {
        Ok(match a {
            Algorithm::Sgd => BaselineKind::Sgd,
            Algorithm::Rr => BaselineKind::Rr,
            Algorithm::SignSgd => BaselineKind::SignSgd,
            Algorithm::Signum => BaselineKind::Signum,
            Algorithm::Adam => BaselineKind::Adam,
            other => return Err(Error::InvalidArgument(format!("{other} is not a baseline"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub gamma: Schedule,
    /// Signum momentum, or Adam's β₁.
    pub beta: f64,
    /// Adam's β₂.
    pub beta2: f64,
    pub eps: f64,
}

impl BaselineParams {
    pub fn new(gamma: Schedule) -> Self {
        Self {
            gamma,
            beta: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self, kind: BaselineKind) -> Result<()> {
        match kind {
            BaselineKind::Signum => check_beta(self.beta),
            BaselineKind::Adam => {
                check_beta(self.beta)?;
                check_beta(self.beta2)?;
                if self.eps > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("Adam ε must be positive, got {}", self.eps)))
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub x: Vec<f64>,
    pub t: usize,
    /// First moment (Signum, Adam).
    pub momentum: Vec<f64>,
    /// Second moment (Adam).
    pub second_moment: Vec<f64>,
    /// Total updates taken, for Adam's bias correction.
    pub steps: u64,
}

impl BaselineState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            t: 0,
            momentum: vec![0.0; d],
            second_moment: vec![0.0; d],
            steps: 0,
        }
    }
}

/// One epoch (`⌈n / batch⌉` updates) of a baseline method.
///
/// `rr` walks a fresh permutation; every other kind samples each mini-batch
/// uniformly with replacement.
pub fn baseline_epoch(
    kind: BaselineKind,
    state: &mut BaselineState,
    problem: &dyn FiniteSumProblem,
    params: &BaselineParams,
    ctx: &EpochContext,
) -> Result<Trace> {
    check_dim(problem, &state.x)?;
    params.validate(kind)?;
    let d = problem.dim();
    let n = problem.num_components();
    let batch = ctx.batch.max(1);
    let iters = iterations_per_epoch(n, batch);
    let t = state.t;
    state.momentum.resize(d, 0.0);
    state.second_moment.resize(d, 0.0);

    let perm = (kind == BaselineKind::Rr).then(|| shuffle(n, t, ctx.seed));
    let mut rng = stream(ctx.seed, StreamTag::Sample, 0, t as u64);
    let mut idx = vec![0usize; batch];

    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut trace = Trace::new();

    for i in 0..iters {
        let indices: &[usize] = match &perm {
            Some(p) => &p.order[i * batch..((i + 1) * batch).min(n)],
            None => {
                idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
                &idx
            }
        };
        let record = ctx.telemetry.records(i);
        let probe = if record { Some(Probe::take(problem, &state.x)?) } else { None };
        let x_before = (record && ctx.telemetry.diagnostics).then(|| state.x.clone());

        let step = params.gamma.value_at(t, i, iters);
        batch_grad_into(problem, indices, &state.x, &mut g, &mut scratch);
        if let Some(j) = g.iter().position(|v| v.is_nan()) {
            return Err(Error::NaN { coordinate: j });
        }

        match kind {
            BaselineKind::Sgd | BaselineKind::Rr => dir.copy_from_slice(&g),
            BaselineKind::SignSgd => sign_into(&g, &mut dir)?,
            BaselineKind::Signum => {
                momentum_update(&mut state.momentum, &g, params.beta);
                sign_into(&state.momentum, &mut dir)?;
            }
            BaselineKind::Adam => {
                state.steps += 1;
                let k = i32::try_from(state.steps).unwrap_or(i32::MAX);
                let c1 = 1.0 - params.beta.powi(k);
                let c2 = 1.0 - params.beta2.powi(k);
                for j in 0..d {
                    let m = &mut state.momentum[j];
                    let v = &mut state.second_moment[j];
                    *m = params.beta * *m + (1.0 - params.beta) * g[j];
                    *v = params.beta2 * *v + (1.0 - params.beta2) * g[j] * g[j];
                    dir[j] = (*m / c1) / ((*v / c2).sqrt() + params.eps);
                }
            }
        }
        apply_step(&mut state.x, step, &dir);

        if let Some(probe) = probe {
            let momentum = matches!(kind, BaselineKind::Signum | BaselineKind::Adam).then_some(state.momentum.as_slice());
            trace.records.push(finish_record(
                problem,
                probe,
                &ctx.telemetry,
                t,
                i,
                true,
                step,
                0.0,
                x_before,
                &state.x,
                None,
                &g,
                momentum,
                &dir,
            ));
        }
    }
    state.t += 1;
    Ok(trace)
}
