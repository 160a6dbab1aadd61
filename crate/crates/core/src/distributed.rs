//! In-process simulation of `M` workers and one parameter server.
//!
//! Workers hold equally sized shards `f^m` of the objective, push sign vectors
//! every inner iteration and pull the server's aggregate. Every replica
//! applies the same update, so the shared iterate stays bit-identical across
//! workers; the simulator checks this after each iteration.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::linf_distance;
use crate::optimizers::{
    apply_step, batch_grad_into, check_beta, finish_record, iterations_per_epoch, momentum_update,
    semi_stochastic_into, shuffle_for_worker, sign_into, EpochContext, Probe,
};
use crate::problems::FiniteSumProblem;
use crate::rng::{stream, StreamTag};
use crate::schedules::Schedule;
use crate::trace::Trace;

/// Server rule for combining worker sign vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `(1/M) Σ s^m`, sent back as floats.
    SignAverage,
    /// `sign(Σ s^m)`, sent back as signs.
    MajorityVote,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign_average" => Ok(Aggregation::SignAverage),
            "majority_vote" => Ok(Aggregation::MajorityVote),
            _ => Err(Error::InvalidArgument(format!("unknown aggregation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rule: Aggregation,
    pub payload: Vec<f64>,
}

/// Combines worker sign vectors in worker order.
pub fn aggregate(rule: Aggregation, signs: &[Vec<f64>]) -> Result<Aggregate> {
    let Some(first) = signs.first() else {
        return Err(Error::InvalidArgument("no worker vectors to aggregate".into()));
    };
    let d = first.len();
    let mut payload = vec![0.0; d];
    sum_signs(signs, &mut payload)?;
    finish_aggregate(rule, signs.len(), &mut payload)?;
    Ok(Aggregate { rule, payload })
}

fn sum_signs(signs: &[Vec<f64>], out: &mut [f64]) -> Result<()> {
    out.iter_mut().for_each(|o| *o = 0.0);
    for s in signs {
        if s.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                got: s.len(),
            });
        }
        out.iter_mut().zip(s).for_each(|(o, v)| *o += v);
    }
    Ok(())
}

fn finish_aggregate(rule: Aggregation, m: usize, sum: &mut [f64]) -> Result<()> {
    match rule {
        Aggregation::SignAverage => {
            let m = m as f64;
            sum.iter_mut().for_each(|v| *v /= m);
        }
        Aggregation::MajorityVote => {
            let votes = sum.to_vec();
            sign_into(&votes, sum)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// communication accounting

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub bytes_per_sign: u64,
    pub bytes_per_float: u64,
}

impl Default for CostModel {
    /// One byte per sign and 64 per float, the accounting under which the
    /// float-averaging methods cost 32.5× the majority-vote ones.
    fn default() -> Self {
        Self {
            bytes_per_sign: 1,
            bytes_per_float: 64,
        }
    }
}

/// Server settings for the variance-reduced runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Server {
    pub rule: Aggregation,
    pub cost: CostModel,
}

impl Default for Server {
    fn default() -> Self {
        Self {
            rule: Aggregation::SignAverage,
            cost: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub rounds: u64,
    pub cost: CostModel,
}

impl CommLedger {
    pub fn new(cost: CostModel) -> Self {
        Self {
            cost,
            ..Default::default()
        }
    }

    /// One push/pull round: `m` workers each send a `d`-vector of signs and
    /// receive the aggregate.
    pub fn record_round(&mut self, m: usize, d: usize, rule: Aggregation) {
        let entries = (m * d) as u64;
        self.bytes_up += entries * self.cost.bytes_per_sign;
        self.bytes_down += entries
            * match rule {
                Aggregation::SignAverage => self.cost.bytes_per_float,
                Aggregation::MajorityVote => self.cost.bytes_per_sign,
            };
        self.rounds += 1;
    }

    pub fn total(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }
}

impl fmt::Display for CommLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rounds={} bytes_up={} bytes_down={} total={}",
            self.rounds,
            self.bytes_up,
            self.bytes_down,
            self.total()
        )
    }
}

// ---------------------------------------------------------------------------
// workers

/// One simulated machine: its shard and its replica of the shared state.
#[derive(Clone)]
pub struct WorkerNode {
    /// 1-based worker id.
    pub id: usize,
    pub problem: Arc<dyn FiniteSumProblem>,
    pub x: Vec<f64>,
    pub anchor: Vec<f64>,
    /// `∇f^m(y)` for the local shard.
    pub anchor_grad: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl fmt::Debug for WorkerNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorkerNode")
            .field("id", &self.id)
            .field("n0", &self.problem.num_components())
            .field("x", &self.x)
            .finish_non_exhaustive()
    }
}

/// `M` workers with equal shard sizes.
///
/// As a [`FiniteSumProblem`] the cluster is the global objective
/// `f = (1/M) Σ f^m`, with component `k` living on worker `k / n₀`.
#[derive(Debug, Clone)]
pub struct Cluster {
    workers: Vec<WorkerNode>,
    n0: usize,
    dim: usize,
}

impl Cluster {
    pub fn new(shards: Vec<Arc<dyn FiniteSumProblem>>) -> Result<Self> {
        let Some(first) = shards.first() else {
            return Err(Error::InvalidArgument("a cluster needs at least one worker".into()));
        };
        let (n0, dim) = (first.num_components(), first.dim());
        if n0 == 0 {
            return Err(Error::InvalidArgument("worker shards must be nonempty".into()));
        }
        for s in &shards {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
            if s.num_components() != n0 {
                return Err(Error::InvalidArgument(format!(
                    "workers hold different shard sizes ({n0} and {})",
                    s.num_components()
                )));
            }
        }
        let workers = shards
            .into_iter()
            .enumerate()
            .map(|(k, problem)| WorkerNode {
                id: k + 1,
                problem,
                x: Vec::new(),
                anchor: Vec::new(),
                anchor_grad: vec![0.0; dim],
                momentum: vec![0.0; dim],
            })
            .collect();
        Ok(Self { workers, n0, dim })
    }

    pub fn workers(&self) -> &[WorkerNode] {
        &self.workers
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    fn reset(&mut self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x0.len(),
            });
        }
        for w in &mut self.workers {
            w.x = x0.to_vec();
            w.anchor = x0.to_vec();
            w.anchor_grad.iter_mut().for_each(|v| *v = 0.0);
            w.momentum.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    /// Max over workers of `‖x^m − x¹‖_∞`.
    pub fn replica_spread(&self) -> f64 {
        let x1 = &self.workers[0].x;
        self.workers
            .iter()
            .map(|w| linf_distance(&w.x, x1))
            .fold(0.0, f64::max)
    }

    fn check_replicas(&self) -> Result<()> {
        let x1 = &self.workers[0].x;
        if self.workers.iter().any(|w| w.x != *x1 || w.anchor != self.workers[0].anchor) {
            return Err(Error::InvalidArgument(format!(
                "worker replicas diverged (spread {})",
                self.replica_spread()
            )));
        }
        Ok(())
    }
}

impl FiniteSumProblem for Cluster {
    fn num_components(&self) -> usize {
        self.n0 * self.workers.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, k: usize, x: &[f64]) -> f64 {
        self.workers[k / self.n0].problem.component_value(k % self.n0, x)
    }

    fn component_grad_into(&self, k: usize, x: &[f64], out: &mut [f64]) {
        self.workers[k / self.n0].problem.component_grad_into(k % self.n0, x, out)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.workers.iter().map(|w| w.problem.value(x)).sum();
        sum / self.workers.len() as f64
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; self.dim];
        out.iter_mut().for_each(|o| *o = 0.0);
        for w in &self.workers {
            w.problem.grad_into(x, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, g)| *o += g);
        }
        let m = self.workers.len() as f64;
        out.iter_mut().for_each(|o| *o /= m);
    }
}

// ---------------------------------------------------------------------------
// runs

#[derive(Debug, Clone, PartialEq)]
pub struct DistRun {
    pub x: Vec<f64>,
    pub trace: Trace,
    pub ledger: CommLedger,
}

/// Majority-vote baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VoteKind {
    SignSgdMv,
    SignumMv,
}

impl VoteKind {
    pub fn name(self) -> &'static str {
        match self {
            VoteKind::SignSgdMv => "signsgd_mv",
            VoteKind::SignumMv => "signum_mv",
        }
    }
}

impl FromStr for VoteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signsgd_mv" => Ok(VoteKind::SignSgdMv),
            "signum_mv" => Ok(VoteKind::SignumMv),
            _ => Err(Error::InvalidArgument(format!("unknown majority-vote method `{s}`"))),
        }
    }
}

/// dist-SignRVR: workers push `sign(∇f^m_π(x) − ∇f^m_π(y) + ∇f^m(y))` with
/// their own permutations and the server averages (or votes, if `server`
/// says so).
pub fn dist_signrvr_run(
    cluster: &mut Cluster,
    x0: &[f64],
    epochs: usize,
    gamma: &Schedule,
    threshold: &Schedule,
    ctx: &EpochContext,
    server: Server,
) -> Result<DistRun> {
    dist_vr_run(cluster, x0, epochs, gamma, threshold, None, ctx, server)
}

/// dist-SignRVM: as dist-SignRVR, but each worker pushes the sign of its own
/// momentum `q^m ← β q^m + (1 − β) v^m`, reset at the start of every epoch.
#[allow(clippy::too_many_arguments)]
pub fn dist_signrvm_run(
    cluster: &mut Cluster,
    x0: &[f64],
    epochs: usize,
    gamma: &Schedule,
    threshold: &Schedule,
    beta: f64,
    ctx: &EpochContext,
    server: Server,
) -> Result<DistRun> {
    check_beta(beta)?;
    dist_vr_run(cluster, x0, epochs, gamma, threshold, Some(beta), ctx, server)
}

#[allow(clippy::too_many_arguments)]
fn dist_vr_run(
    cluster: &mut Cluster,
    x0: &[f64],
    epochs: usize,
    gamma: &Schedule,
    threshold: &Schedule,
    beta: Option<f64>,
    ctx: &EpochContext,
    server: Server,
) -> Result<DistRun> {
    cluster.reset(x0)?;
    let d = cluster.dim;
    let n0 = cluster.n0;
    let m = cluster.num_workers();
    let batch = ctx.batch.max(1);
    let iters = iterations_per_epoch(n0, batch);
    let mut ledger = CommLedger::new(server.cost);
    let mut trace = Trace::new();

    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut pushed = vec![vec![0.0; d]; m];
    let mut payload = vec![0.0; d];
    let mut mean_v = vec![0.0; d];
    let mut mean_q = vec![0.0; d];

    for t in 0..epochs {
        let perms: Vec<_> = (0..m).map(|k| shuffle_for_worker(n0, t, ctx.seed, k)).collect();
        for w in &mut cluster.workers {
            w.anchor.clone_from(&w.x);
            w.problem.grad_into(&w.anchor, &mut w.anchor_grad);
            if beta.is_some() {
                w.momentum.iter_mut().for_each(|q| *q = 0.0);
            }
        }

        for i in 0..iters {
            let record = ctx.telemetry.records(i);
            let x_shared = cluster.workers[0].x.clone();
            let probe = if record { Some(Probe::take(&*cluster, &x_shared)?) } else { None };

            let step = gamma.value_at(t, i, iters);
            let limit = threshold.value_at(t, i, iters);
            mean_v.iter_mut().for_each(|e| *e = 0.0);
            mean_q.iter_mut().for_each(|e| *e = 0.0);

            for (k, w) in cluster.workers.iter_mut().enumerate() {
                let idx = &perms[k].order[i * batch..((i + 1) * batch).min(n0)];
                batch_grad_into(&*w.problem, idx, &w.x, &mut gx, &mut scratch);
                batch_grad_into(&*w.problem, idx, &w.anchor, &mut gy, &mut scratch);
                semi_stochastic_into(&gx, &gy, &w.anchor_grad, &mut v);
                match beta {
                    Some(b) => {
                        momentum_update(&mut w.momentum, &v, b);
                        sign_into(&w.momentum, &mut pushed[k])?;
                    }
                    None => sign_into(&v, &mut pushed[k])?,
                }
                if record {
                    mean_v.iter_mut().zip(&v).for_each(|(a, e)| *a += e);
                    mean_q.iter_mut().zip(&w.momentum).for_each(|(a, e)| *a += e);
                }
            }
            sum_signs(&pushed, &mut payload)?;
            finish_aggregate(server.rule, m, &mut payload)?;
            ledger.record_round(m, d, server.rule);

            let mut applied = false;
            for w in &mut cluster.workers {
                applied = linf_distance(&w.x, &w.anchor) <= limit;
                if applied {
                    apply_step(&mut w.x, step, &payload);
                }
            }
            cluster.check_replicas()?;

            if let Some(probe) = probe {
                let mf = m as f64;
                mean_v.iter_mut().for_each(|e| *e /= mf);
                mean_q.iter_mut().for_each(|e| *e /= mf);
                let w0 = &cluster.workers[0];
                trace.records.push(finish_record(
                    &*cluster,
                    probe,
                    &ctx.telemetry,
                    t,
                    i,
                    applied,
                    step,
                    limit,
                    Some(x_shared),
                    &w0.x,
                    Some(&w0.anchor),
                    &mean_v,
                    beta.map(|_| mean_q.as_slice()),
                    &payload,
                ));
            }
        }
    }
    Ok(DistRun {
        x: cluster.workers[0].x.clone(),
        trace,
        ledger,
    })
}

/// signSGD / Signum with majority vote: each worker samples its own
/// mini-batch with replacement, pushes the sign of its stochastic gradient
/// (or of its local momentum) and steps along `sign(Σ_m s^m)`.
#[allow(clippy::too_many_arguments)]
pub fn dist_majority_vote_run(
    kind: VoteKind,
    cluster: &mut Cluster,
    x0: &[f64],
    epochs: usize,
    gamma: &Schedule,
    beta: f64,
    ctx: &EpochContext,
    cost: CostModel,
) -> Result<DistRun> {
    if kind == VoteKind::SignumMv {
        check_beta(beta)?;
    }
    cluster.reset(x0)?;
    let d = cluster.dim;
    let n0 = cluster.n0;
    let m = cluster.num_workers();
    let batch = ctx.batch.max(1);
    let iters = iterations_per_epoch(n0, batch);
    let mut ledger = CommLedger::new(cost);
    let mut trace = Trace::new();

    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut idx = vec![0usize; batch];
    let mut pushed = vec![vec![0.0; d]; m];
    let mut payload = vec![0.0; d];
    let mut mean_g = vec![0.0; d];
    let mut mean_q = vec![0.0; d];

    for t in 0..epochs {
        let mut rngs: Vec<_> = (0..m).map(|k| stream(ctx.seed, StreamTag::Sample, k as u64, t as u64)).collect();
        for i in 0..iters {
            let record = ctx.telemetry.records(i);
            let x_shared = cluster.workers[0].x.clone();
            let probe = if record { Some(Probe::take(&*cluster, &x_shared)?) } else { None };
            let step = gamma.value_at(t, i, iters);
            mean_g.iter_mut().for_each(|e| *e = 0.0);
            mean_q.iter_mut().for_each(|e| *e = 0.0);

            for (k, w) in cluster.workers.iter_mut().enumerate() {
                idx.iter_mut().for_each(|j| *j = rngs[k].random_range(0..n0));
                batch_grad_into(&*w.problem, &idx, &w.x, &mut g, &mut scratch);
                match kind {
                    VoteKind::SignSgdMv => sign_into(&g, &mut pushed[k])?,
                    VoteKind::SignumMv => {
                        momentum_update(&mut w.momentum, &g, beta);
                        sign_into(&w.momentum, &mut pushed[k])?;
                    }
                }
                if record {
                    mean_g.iter_mut().zip(&g).for_each(|(a, e)| *a += e);
                    mean_q.iter_mut().zip(&w.momentum).for_each(|(a, e)| *a += e);
                }
            }
            sum_signs(&pushed, &mut payload)?;
            finish_aggregate(Aggregation::MajorityVote, m, &mut payload)?;
            ledger.record_round(m, d, Aggregation::MajorityVote);
            for w in &mut cluster.workers {
                apply_step(&mut w.x, step, &payload);
            }
            cluster.check_replicas()?;

            if let Some(probe) = probe {
                let mf = m as f64;
                mean_g.iter_mut().for_each(|e| *e /= mf);
                mean_q.iter_mut().for_each(|e| *e /= mf);
                trace.records.push(finish_record(
                    &*cluster,
                    probe,
                    &ctx.telemetry,
                    t,
                    i,
                    true,
                    step,
                    0.0,
                    Some(x_shared),
                    &cluster.workers[0].x,
                    None,
                    &mean_g,
                    (kind == VoteKind::SignumMv).then_some(mean_q.as_slice()),
                    &payload,
                ));
            }
        }
    }
    Ok(DistRun {
        x: cluster.workers[0].x.clone(),
        trace,
        ledger,
    })
}
