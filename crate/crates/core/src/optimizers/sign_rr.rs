use crate::error::Result;
use crate::problems::FiniteSumProblem;
use crate::schedules::Schedule;
use crate::trace::Trace;

use super::{
    apply_step, batch_grad_into, check_dim, finish_record, iterations_per_epoch, shuffle, sign_into, EpochContext,
    Probe,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SignRrState {
    pub x: Vec<f64>,
    /// Next epoch to run.
    pub t: usize,
}

impl SignRrState {
    pub fn new(x0: Vec<f64>) -> Self {
        Self { x: x0, t: 0 }
    }
}

/// One epoch of signSGD over a fresh permutation:
/// `x ← x − γ_t^i · sign(∇f_{π_i}(x))` for each index in order.
pub fn signrr_epoch(
    state: &mut SignRrState,
    problem: &dyn FiniteSumProblem,
    gamma: &Schedule,
    ctx: &EpochContext,
) -> Result<Trace> {
    check_dim(problem, &state.x)?;
    let d = problem.dim();
    let n = problem.num_components();
    let batch = ctx.batch.max(1);
    let iters = iterations_per_epoch(n, batch);
    let t = state.t;
    let perm = shuffle(n, t, ctx.seed);

    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut trace = Trace::new();

    for i in 0..iters {
        let idx = &perm.order[i * batch..((i + 1) * batch).min(n)];
        let record = ctx.telemetry.records(i);
        let probe = if record { Some(Probe::take(problem, &state.x)?) } else { None };
        let x_before = (record && ctx.telemetry.diagnostics).then(|| state.x.clone());

        let step = gamma.value_at(t, i, iters);
        batch_grad_into(problem, idx, &state.x, &mut g, &mut scratch);
        sign_into(&g, &mut dir)?;
        apply_step(&mut state.x, step, &dir);

        if let Some(probe) = probe {
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
                None,
                &dir,
            ));
        }
    }
    state.t += 1;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{RosenbrockSum, SeparableQuadratic};

    /// f_i(x) = |x - c_i| in one dimension.
    struct AbsValue(Vec<f64>);

    impl FiniteSumProblem for AbsValue {
        fn num_components(&self) -> usize {
            self.0.len()
        }
        fn dim(&self) -> usize {
            1
        }
        fn component_value(&self, i: usize, x: &[f64]) -> f64 {
            (x[0] - self.0[i]).abs()
        }
        fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
            let r = x[0] - self.0[i];
            out[0] = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    }

    #[test]
    fn single_sign_step() {
        let p = AbsValue(vec![0.0]);
        let mut s = SignRrState::new(vec![0.35]);
        let trace = signrr_epoch(&mut s, &p, &Schedule::constant(0.1).unwrap(), &EpochContext::default()).unwrap();
        assert!((s.x[0] - 0.25).abs() < 1e-15);
        assert_eq!(trace.len(), 1);
        assert!(trace.records[0].applied);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_iterate() {
        let p = SeparableQuadratic::new(vec![1.0, 1.0], vec![vec![0.5, -0.5]; 3]).unwrap();
        let mut s = SignRrState::new(vec![0.5, -0.5]);
        signrr_epoch(&mut s, &p, &Schedule::constant(0.1).unwrap(), &EpochContext::default()).unwrap();
        assert_eq!(s.x, vec![0.5, -0.5]);
    }

    #[test]
    fn rosenbrock_matches_hand_unrolled_steps() {
        let p = RosenbrockSum::new(3, 2, 10.0, 21).unwrap();
        let ctx = EpochContext {
            seed: 5,
            ..Default::default()
        };
        let gamma = 0.05;
        let x0 = vec![-0.4, 0.8];
        let mut s = SignRrState::new(x0.clone());
        signrr_epoch(&mut s, &p, &Schedule::constant(gamma).unwrap(), &ctx).unwrap();

        // Independent unroll: analytic 2-D Rosenbrock gradient written out here.
        let order = shuffle(3, 0, 5).order;
        let mut x = x0;
        for &k in &order {
            let b = p.scales()[k];
            let r = x[1] - x[0] * x[0];
            let g = [-4.0 * b * x[0] * r - 2.0 * (1.0 - x[0]), 2.0 * b * r];
            for j in 0..2 {
                x[j] -= gamma * g[j].signum() * f64::from(u8::from(g[j] != 0.0));
            }
        }
        assert_eq!(s.x, x);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let p = RosenbrockSum::new(3, 3, 10.0, 1).unwrap();
        let mut s = SignRrState::new(vec![0.0; 2]);
        assert!(signrr_epoch(&mut s, &p, &Schedule::constant(0.1).unwrap(), &EpochContext::default()).is_err());
    }
}
