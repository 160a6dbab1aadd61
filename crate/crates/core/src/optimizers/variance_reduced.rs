use crate::error::{Error, Result};
use crate::metrics::linf_distance;
use crate::problems::FiniteSumProblem;
use crate::schedules::Schedule;
use crate::trace::Trace;

use super::{
    apply_step, batch_grad_into, check_dim, finish_record, iterations_per_epoch, momentum_update,
    semi_stochastic_into, shuffle, sign_into, EpochContext, Probe,
};

/// Iterate, epoch anchor `y`, and the cached full gradient `∇f(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignRvrState {
    pub x: Vec<f64>,
    pub anchor: Vec<f64>,
    pub anchor_grad: Vec<f64>,
    /// Next epoch to run.
    pub t: usize,
    /// Inner index reached in the last epoch.
    pub i: usize,
}

impl SignRvrState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            anchor: x0.clone(),
            x: x0,
            anchor_grad: vec![0.0; d],
            t: 0,
            i: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignRvmState {
    pub rvr: SignRvrState,
    pub momentum: Vec<f64>,
    pub beta: f64,
    /// Keep the momentum buffer across epochs instead of zeroing it.
    pub carry_momentum: bool,
}

impl SignRvmState {
    pub fn new(x0: Vec<f64>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let d = x0.len();
        Ok(Self {
            rvr: SignRvrState::new(x0),
            momentum: vec![0.0; d],
            beta,
            carry_momentum: false,
        })
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("momentum β must lie in (0, 1), got {beta}")))
    }
}

/// `q / (1 − β^{i+1})`. Positive rescaling, so signs are unchanged.
pub fn bias_correct(q: &[f64], beta: f64, i: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let exponent = i32::try_from(i + 1).unwrap_or(i32::MAX);
    let denom = 1.0 - beta.powi(exponent);
    Ok(q.iter().map(|v| v / denom).collect())
}

/// One epoch of SignRVR.
///
/// Sets the anchor `y ← x`, caches `∇f(y)`, then for each permuted index forms
/// `v = ∇f_π(x) − ∇f_π(y) + ∇f(y)` and steps `x ← x − γ_t^i·sign(v)` only
/// while `‖x − y‖_∞ ≤ D_t^i`.
pub fn signrvr_epoch(
    state: &mut SignRvrState,
    problem: &dyn FiniteSumProblem,
    gamma: &Schedule,
    threshold: &Schedule,
    ctx: &EpochContext,
) -> Result<Trace> {
    vr_epoch(state, None, problem, gamma, threshold, ctx)
}

/// One epoch of SignRVM: SignRVR with the step taken along `sign(q)`, where
/// `q ← β q + (1 − β) v` runs on every iteration, frozen or not.
pub fn signrvm_epoch(
    state: &mut SignRvmState,
    problem: &dyn FiniteSumProblem,
    gamma: &Schedule,
    threshold: &Schedule,
    ctx: &EpochContext,
) -> Result<Trace> {
    check_beta(state.beta)?;
    if state.momentum.len() != state.rvr.x.len() {
        return Err(Error::DimensionMismatch {
            expected: state.rvr.x.len(),
            got: state.momentum.len(),
        });
    }
    if !state.carry_momentum {
        state.momentum.iter_mut().for_each(|q| *q = 0.0);
    }
    let beta = state.beta;
    vr_epoch(&mut state.rvr, Some((&mut state.momentum, beta)), problem, gamma, threshold, ctx)
}

fn vr_epoch(
    state: &mut SignRvrState,
    mut momentum: Option<(&mut Vec<f64>, f64)>,
    problem: &dyn FiniteSumProblem,
    gamma: &Schedule,
    threshold: &Schedule,
    ctx: &EpochContext,
) -> Result<Trace> {
    check_dim(problem, &state.x)?;
    let d = problem.dim();
    let n = problem.num_components();
    let batch = ctx.batch.max(1);
    let iters = iterations_per_epoch(n, batch);
    let t = state.t;
    let perm = shuffle(n, t, ctx.seed);

    state.anchor.clone_from(&state.x);
    state.anchor_grad.resize(d, 0.0);
    problem.grad_into(&state.anchor, &mut state.anchor_grad);

    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut trace = Trace::new();

    for i in 0..iters {
        state.i = i;
        let idx = &perm.order[i * batch..((i + 1) * batch).min(n)];
        let record = ctx.telemetry.records(i);
        let probe = if record { Some(Probe::take(problem, &state.x)?) } else { None };
        let x_before = (record && ctx.telemetry.diagnostics).then(|| state.x.clone());

        let step = gamma.value_at(t, i, iters);
        let limit = threshold.value_at(t, i, iters);
        let applied = linf_distance(&state.x, &state.anchor) <= limit;

        batch_grad_into(problem, idx, &state.x, &mut gx, &mut scratch);
        batch_grad_into(problem, idx, &state.anchor, &mut gy, &mut scratch);
        semi_stochastic_into(&gx, &gy, &state.anchor_grad, &mut v);

        match momentum.as_mut() {
            Some((q, beta)) => {
                momentum_update(q, &v, *beta);
                sign_into(q, &mut dir)?;
            }
            None => sign_into(&v, &mut dir)?,
        }
        if applied {
            apply_step(&mut state.x, step, &dir);
        }

        if let Some(probe) = probe {
            let q = momentum.as_ref().map(|(q, _)| q.as_slice());
            trace.records.push(finish_record(
                problem,
                probe,
                &ctx.telemetry,
                t,
                i,
                applied,
                step,
                limit,
                x_before,
                &state.x,
                Some(&state.anchor),
                &v,
                q,
                &dir,
            ));
        }
    }
    state.t += 1;
    Ok(trace)
}
