//! Grid sweeps over methods, problem scales, worker counts, hyperparameters
//! and seeds, with per-cell trace CSVs and summary tables.

mod config;

pub use config::{
    parse_override, preset, ExperimentConfig, Method, ProblemKind, SummaryMetric, LEARNING_RATE_GRID, MOMENTUM_GRID,
    PRESETS,
};

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::distributed::{
    dist_majority_vote_run, dist_signrvm_run, dist_signrvr_run, Cluster, CommLedger, Server,
};
use crate::error::{Error, Result};
use crate::metrics::{emit_csv, moving_average, CsvOptions};
use crate::optimizers::{build_optimizer, EpochContext, OptimizerSpec};
use crate::problems::{estimate_coordinate_smoothness, FiniteSumProblem, LogisticProblem, Region, RosenbrockSum};
use crate::rng::{stream, StreamTag};
use crate::schedules::Schedule;
use crate::theory::{
    check_anchor_cancellation, check_descent, check_freeze, check_momentum_replay, check_vr_bound, LemmaReport,
};
use crate::trace::{Telemetry, Trace};

/// Coordinates always covered by the smoothness estimate.
const LHAT_BOX: f64 = 2.0;
const MOMENTUM_REPLAY_TOLERANCE: f64 = 1e-12;

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    /// Rosenbrock scale bound; `None` for data-driven problems.
    pub u_max: Option<f64>,
    /// Worker count for distributed methods.
    pub workers: Option<usize>,
    pub gamma0: f64,
    pub beta: Option<f64>,
    pub d0: Option<f64>,
    pub seed: u64,
}

impl Cell {
    pub fn file_name(&self) -> String {
        let mut s = self.method.name().to_string();
        if let Some(u) = self.u_max {
            let _ = write!(s, "_u{u}");
        }
        if let Some(m) = self.workers {
            let _ = write!(s, "_m{m}");
        }
        let _ = write!(s, "_lr{:e}", self.gamma0);
        if let Some(b) = self.beta {
            let _ = write!(s, "_b{b}");
        }
        if let Some(d) = self.d0 {
            let _ = write!(s, "_d{d:e}");
        }
        let _ = write!(s, "_s{}.csv", self.seed);
        s
    }

    fn group(&self) -> (Method, Option<u64>, Option<usize>) {
        (self.method, self.u_max.map(f64::to_bits), self.workers)
    }

    fn hyper(&self) -> Hyper {
        (self.gamma0, self.beta.unwrap_or(0.0), self.d0.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// A NaN or infinity appeared; the CSV holds the completed epochs.
    Diverged,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub status: CellStatus,
    /// Last value of the smoothed per-epoch series; `+∞` if diverged.
    pub metric: f64,
    pub final_f: f64,
    pub final_grad_l1: f64,
    pub epochs: usize,
    pub ledger: Option<CommLedger>,
    pub lemmas: Vec<LemmaReport>,
    pub csv: PathBuf,
}

/// Best hyperparameters for one (method, scale, workers) group: lowest mean
/// metric over seeds, ties going to the smaller learning rate, then β, then D.
#[derive(Debug, Clone)]
pub struct BestEntry {
    pub method: Method,
    pub u_max: Option<f64>,
    pub workers: Option<usize>,
    pub gamma0: f64,
    pub beta: Option<f64>,
    pub d0: Option<f64>,
    pub mean_metric: f64,
    /// `(seed, metric)` at the chosen hyperparameters.
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub cells: Vec<CellResult>,
    pub best: Vec<BestEntry>,
    /// Lemma reports merged over all cells, one per lemma.
    pub lemmas: Vec<LemmaReport>,
}

impl ExperimentSummary {
    pub fn lemma_violations(&self) -> usize {
        self.lemmas.iter().map(|l| l.violations).sum()
    }

    pub fn best_for(&self, method: Method, u_max: Option<f64>, workers: Option<usize>) -> Option<&BestEntry> {
        self.best
            .iter()
            .find(|b| b.method == method && b.u_max == u_max && b.workers == workers)
    }
}

/// `log10` of the per-record quantity, averaged per epoch, smoothed with a
/// trailing window, last value. Non-finite anywhere gives `+∞`.
pub fn summary_metric(trace: &Trace, metric: SummaryMetric, window: usize) -> Result<f64> {
    let per_epoch = trace.epoch_means(|r| {
        let v = match metric {
            SummaryMetric::GradL1 => r.grad_l1,
            SummaryMetric::F => r.f,
        };
        v.max(f64::MIN_POSITIVE).log10()
    });
    if per_epoch.is_empty() || per_epoch.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    Ok(*moving_average(&per_epoch, window)?.last().expect("nonempty"))
}

/// Enumerates the sweep in a fixed order.
pub fn cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    config.validate()?;
    let mut out = Vec::new();
    let scales: Vec<Option<f64>> = match config.problem {
        ProblemKind::Rosenbrock => config.u_max.iter().map(|u| Some(*u)).collect(),
        ProblemKind::Logistic => vec![None],
    };
    for method in config.methods()? {
        let workers: Vec<Option<usize>> = if method.is_distributed() {
            config.workers.iter().map(|m| Some(*m)).collect()
        } else {
            vec![None]
        };
        let betas: Vec<Option<f64>> = if method.uses_momentum() {
            config.betas.iter().map(|b| Some(*b)).collect()
        } else {
            vec![None]
        };
        let d0s: Vec<Option<f64>> = if method.uses_threshold() {
            config.d0.iter().map(|d| Some(*d)).collect()
        } else {
            vec![None]
        };
        for &u_max in &scales {
            for &m in &workers {
                for &gamma0 in &config.gamma0 {
                    for &beta in &betas {
                        for &d0 in &d0s {
                            for &seed in &config.seeds {
                                out.push(Cell {
                                    method,
                                    u_max,
                                    workers: m,
                                    gamma0,
                                    beta,
                                    d0,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Starting point for `seed`: `config.x0`, zeros when the radius is 0, or a
/// uniform draw from the box of half-width `init_radius`.
pub fn initial_point(config: &ExperimentConfig, dim: usize, seed: u64) -> Vec<f64> {
    if let Some(x0) = &config.x0 {
        return x0.clone();
    }
    if config.init_radius == 0.0 {
        return vec![0.0; dim];
    }
    let r = config.init_radius;
    let mut rng = stream(seed, StreamTag::Init, 0, 0);
    (0..dim).map(|_| rng.random_range(-r..=r)).collect()
}

enum Instance {
    Central(Arc<dyn FiniteSumProblem>),
    Dist(Cluster),
}

impl Instance {
    fn problem(&self) -> &dyn FiniteSumProblem {
        match self {
            Instance::Central(p) => &**p,
            Instance::Dist(c) => c,
        }
    }
}

fn build_instance(config: &ExperimentConfig, data: Option<&LogisticProblem>, cell: &Cell) -> Result<Instance> {
    match (config.problem, cell.workers) {
        (ProblemKind::Rosenbrock, None) => {
            let n = config.n.expect("validated");
            let p = RosenbrockSum::new(n, config.d, cell.u_max.expect("scale"), cell.seed)?;
            Ok(Instance::Central(Arc::new(p)))
        }
        (ProblemKind::Rosenbrock, Some(m)) => {
            let n0 = config.n0.expect("validated");
            let full = RosenbrockSum::new(m * n0, config.d, cell.u_max.expect("scale"), cell.seed)?;
            let shards = full.partition(m)?.into_iter().map(|p| Arc::new(p) as Arc<dyn FiniteSumProblem>);
            Ok(Instance::Dist(Cluster::new(shards.collect())?))
        }
        (ProblemKind::Logistic, workers) => {
            let data = data.expect("loaded");
            let rows = config.n.unwrap_or(usize::MAX).min(data.num_components());
            match workers {
                None => Ok(Instance::Central(Arc::new(data.head(rows)?))),
                Some(m) => {
                    let k = match config.n0 {
                        Some(n0) => m * n0,
                        None => m * (rows / m),
                    };
                    if k == 0 || k > data.num_components() {
                        return Err(Error::config(
                            "n0",
                            format!("{m} workers need {k} rows, dataset has {}", data.num_components()),
                        ));
                    }
                    let shards = data.head(k)?.partition(m)?;
                    Ok(Instance::Dist(Cluster::new(
                        shards.into_iter().map(|p| Arc::new(p) as Arc<dyn FiniteSumProblem>).collect(),
                    )?))
                }
            }
        }
    }
}

fn schedules(config: &ExperimentConfig, cell: &Cell) -> Result<(Schedule, Schedule)> {
    let shift = config.shift.unwrap_or_else(|| cell.method.default_shift());
    let gamma = config.schedule.build(cell.gamma0, shift)?;
    let d_kind = config.d_schedule.unwrap_or(config.schedule);
    let threshold = d_kind.build(cell.d0.unwrap_or(1.0), shift)?;
    Ok((gamma, threshold))
}

struct Outcome {
    trace: Trace,
    diverged: bool,
    ledger: Option<CommLedger>,
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NaN { .. })
}

fn run_cell_trace(config: &ExperimentConfig, instance: &mut Instance, cell: &Cell, x0: &[f64]) -> Result<Outcome> {
    let (gamma, threshold) = schedules(config, cell)?;
    let ctx = EpochContext {
        seed: cell.seed,
        batch: config.batch_size,
        telemetry: Telemetry {
            stride: config.telemetry_stride,
            diagnostics: config.lemma_checks || config.csv_diagnostics,
        },
    };
    let beta = cell.beta.unwrap_or(0.9);
    match (cell.method, instance) {
        (Method::Central(algorithm), Instance::Central(problem)) => {
            let mut spec = OptimizerSpec::new(algorithm, gamma).beta(beta);
            if algorithm.uses_threshold() {
                spec = spec.threshold(threshold);
            }
            spec.beta2 = config.beta2;
            spec.eps = config.eps;
            spec.carry_momentum = config.carry_momentum;
            let mut opt = build_optimizer(&spec, x0.to_vec())?;
            let mut trace = Trace::new();
            for _ in 0..config.epochs {
                match opt.run_epoch(&**problem, &ctx) {
                    Ok(t) => trace.extend(t),
                    Err(e) if is_divergence(&e) => {
                        return Ok(Outcome { trace, diverged: true, ledger: None });
                    }
                    Err(e) => return Err(e),
                }
                if opt.x().iter().any(|v| !v.is_finite()) {
                    return Ok(Outcome { trace, diverged: true, ledger: None });
                }
            }
            Ok(Outcome { trace, diverged: false, ledger: None })
        }
        (method, Instance::Dist(cluster)) => {
            let server = Server {
                rule: config.aggregation,
                cost: config.cost_model(),
            };
            let run = match method {
                Method::DistSignRvr => dist_signrvr_run(cluster, x0, config.epochs, &gamma, &threshold, &ctx, server),
                Method::DistSignRvm => {
                    dist_signrvm_run(cluster, x0, config.epochs, &gamma, &threshold, beta, &ctx, server)
                }
                Method::Vote(kind) => {
                    dist_majority_vote_run(kind, cluster, x0, config.epochs, &gamma, beta, &ctx, config.cost_model())
                }
                Method::Central(_) => unreachable!("central methods get central instances"),
            };
            match run {
                Ok(r) => {
                    let diverged = r.x.iter().any(|v| !v.is_finite());
                    Ok(Outcome {
                        trace: r.trace,
                        diverged,
                        ledger: Some(r.ledger),
                    })
                }
                // The driver runs all epochs at once, so nothing survives.
                Err(e) if is_divergence(&e) => Ok(Outcome {
                    trace: Trace::new(),
                    diverged: true,
                    ledger: None,
                }),
                Err(e) => Err(e),
            }
        }
        (_, Instance::Central(_)) => unreachable!("distributed methods get clusters"),
    }
}

/// Bounding box of every logged iterate and anchor, widened to `[−2, 2]^d`.
fn lemma_region(trace: &Trace, dim: usize) -> Region {
    let mut region = Region::cube(dim, -LHAT_BOX, LHAT_BOX);
    for d in trace.records.iter().filter_map(|r| r.diag.as_ref()) {
        for v in std::iter::once(&d.x).chain(d.anchor.as_ref()) {
            for (j, x) in v.iter().enumerate() {
                if x.is_finite() {
                    region.lower[j] = region.lower[j].min(*x);
                    region.upper[j] = region.upper[j].max(*x);
                }
            }
        }
    }
    region
}

fn lemma_reports(config: &ExperimentConfig, problem: &dyn FiniteSumProblem, cell: &Cell, trace: &Trace) -> Result<Vec<LemmaReport>> {
    let mut out = Vec::new();
    if !config.lemma_checks || trace.is_empty() {
        return Ok(out);
    }
    let region = lemma_region(trace, problem.dim());
    let lhat = estimate_coordinate_smoothness(
        problem,
        &region,
        config.smoothness_samples,
        cell.seed,
        config.smoothness_safety,
    )?;
    if cell.method.uses_threshold() {
        out.push(check_vr_bound(trace, &lhat)?);
        out.push(check_freeze(trace));
        out.push(check_anchor_cancellation(trace));
    }
    if cell.method.is_sign_based() {
        out.push(check_descent(trace, &lhat)?);
    }
    if cell.method.uses_momentum() {
        out.push(check_momentum_replay(
            trace,
            cell.beta.unwrap_or(0.9),
            cell.method.momentum_carried(config.carry_momentum),
            MOMENTUM_REPLAY_TOLERANCE,
        ));
    }
    Ok(out)
}

fn run_cell(config: &ExperimentConfig, data: Option<&LogisticProblem>, cell: &Cell, out_dir: &Path) -> Result<CellResult> {
    let mut instance = build_instance(config, data, cell)?;
    let x0 = initial_point(config, instance.problem().dim(), cell.seed);
    let outcome = run_cell_trace(config, &mut instance, cell, &x0)?;
    let csv = out_dir.join(cell.file_name());
    emit_csv(
        &outcome.trace,
        &csv,
        CsvOptions {
            diagnostics: config.csv_diagnostics,
        },
    )?;
    let finite = outcome
        .trace
        .records
        .iter()
        .all(|r| r.f.is_finite() && r.grad_l1.is_finite());
    let status = if outcome.diverged || !finite {
        CellStatus::Diverged
    } else {
        CellStatus::Ok
    };
    let metric = match status {
        CellStatus::Ok => summary_metric(&outcome.trace, config.metric, config.smoothing_window)?,
        CellStatus::Diverged => f64::INFINITY,
    };
    let lemmas = match status {
        CellStatus::Ok => lemma_reports(config, instance.problem(), cell, &outcome.trace)?,
        CellStatus::Diverged => Vec::new(),
    };
    let last = outcome.trace.records.last();
    Ok(CellResult {
        cell: *cell,
        status,
        metric,
        final_f: last.map_or(f64::NAN, |r| r.f),
        final_grad_l1: last.map_or(f64::NAN, |r| r.grad_l1),
        epochs: outcome.trace.epochs(),
        ledger: outcome.ledger,
        lemmas,
        csv,
    })
}

/// `(γ₀, β, D₀)` with absent values as 0.
type Hyper = (f64, f64, f64);

fn hyper_cmp(a: Hyper, b: Hyper) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
}

fn select_best(results: &[CellResult]) -> Vec<BestEntry> {
    let mut groups: Vec<(Method, Option<u64>, Option<usize>)> = Vec::new();
    for r in results {
        if !groups.contains(&r.cell.group()) {
            groups.push(r.cell.group());
        }
    }
    let mut best = Vec::new();
    for g in groups {
        let members: Vec<&CellResult> = results.iter().filter(|r| r.cell.group() == g).collect();
        let mut hypers: Vec<Hyper> = Vec::new();
        for r in &members {
            if !hypers.iter().any(|h| hyper_cmp(*h, r.cell.hyper()).is_eq()) {
                hypers.push(r.cell.hyper());
            }
        }
        let mut chosen: Option<(f64, Hyper, Vec<&CellResult>)> = None;
        for h in hypers {
            let at: Vec<&CellResult> = members
                .iter()
                .copied()
                .filter(|r| hyper_cmp(r.cell.hyper(), h).is_eq())
                .collect();
            let mean = at.iter().map(|r| r.metric).sum::<f64>() / at.len() as f64;
            let better = match &chosen {
                None => true,
                Some((m, ch, _)) => mean.total_cmp(m).then(hyper_cmp(h, *ch)).is_lt(),
            };
            if better {
                chosen = Some((mean, h, at));
            }
        }
        let (mean, _, at) = chosen.expect("groups are nonempty");
        let c = at[0].cell;
        best.push(BestEntry {
            method: c.method,
            u_max: c.u_max,
            workers: c.workers,
            gamma0: c.gamma0,
            beta: c.beta,
            d0: c.d0,
            mean_metric: mean,
            per_seed: at.iter().map(|r| (r.cell.seed, r.metric)).collect(),
        });
    }
    best
}

fn merge_lemmas(results: &[CellResult]) -> Vec<LemmaReport> {
    let mut merged: Vec<LemmaReport> = Vec::new();
    for l in results.iter().flat_map(|r| &r.lemmas) {
        match merged.iter_mut().find(|m| m.lemma == l.lemma) {
            Some(m) => m.merge(l),
            None => merged.push(l.clone()),
        }
    }
    merged
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_summaries(config: &ExperimentConfig, summary: &ExperimentSummary) -> Result<Vec<PathBuf>> {
    let dir = &summary.out_dir;
    let mut written = Vec::new();

    let path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record([
        "method", "u_max", "workers", "gamma0", "beta", "d0", "seed", "status", "metric", "final_f", "final_grad_l1",
        "epochs", "bytes_up", "bytes_down", "file",
    ])
    .map_err(|e| Error::csv(&path, e))?;
    for r in &summary.cells {
        let c = &r.cell;
        w.write_record([
            c.method.name().to_string(),
            opt_str(c.u_max),
            opt_str(c.workers),
            format!("{:e}", c.gamma0),
            opt_str(c.beta),
            opt_str(c.d0.map(|d| format!("{d:e}"))),
            c.seed.to_string(),
            r.status.name().to_string(),
            format!("{:.16e}", r.metric),
            format!("{:.16e}", r.final_f),
            format!("{:.16e}", r.final_grad_l1),
            r.epochs.to_string(),
            opt_str(r.ledger.map(|l| l.bytes_up)),
            opt_str(r.ledger.map(|l| l.bytes_down)),
            r.csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        ])
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("best.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["method", "u_max", "workers", "gamma0", "beta", "d0", "mean_metric", "seed", "metric"])
        .map_err(|e| Error::csv(&path, e))?;
    for b in &summary.best {
        for (seed, m) in &b.per_seed {
            w.write_record([
                b.method.name().to_string(),
                opt_str(b.u_max),
                opt_str(b.workers),
                format!("{:e}", b.gamma0),
                opt_str(b.beta),
                opt_str(b.d0.map(|d| format!("{d:e}"))),
                format!("{:.16e}", b.mean_metric),
                seed.to_string(),
                format!("{m:.16e}"),
            ])
            .map_err(|e| Error::csv(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("lemmas.txt");
    let mut text = String::new();
    for l in &summary.lemmas {
        let _ = writeln!(text, "{l}");
    }
    for r in summary.cells.iter() {
        for l in r.lemmas.iter().filter(|l| !l.passed()) {
            let _ = writeln!(text, "{}: {l}", r.csv.file_name().unwrap_or_default().to_string_lossy());
        }
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("config.json");
    let json = serde_json::to_string_pretty(config).map_err(|e| Error::config("<config>", e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Runs every cell (in parallel, results in sweep order), writes one trace
/// CSV per cell plus `cells.csv`, `best.csv`, `lemmas.txt` and
/// `config.json` into `config.out_dir`. On error the files written so far
/// are removed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let sweep = cells(config)?;
    let data = match config.problem {
        ProblemKind::Logistic => {
            let path = config.csv_path.as_ref().expect("validated");
            Some(LogisticProblem::from_csv(path, config.csv_header, config.num_classes)?)
        }
        ProblemKind::Rosenbrock => None,
    };
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let results: Vec<Result<CellResult>> = sweep
        .par_iter()
        .map(|cell| run_cell(config, data.as_ref(), cell, &out_dir))
        .collect();
    let cleanup = |extra: &[PathBuf]| {
        for cell in &sweep {
            let _ = fs::remove_file(out_dir.join(cell.file_name()));
        }
        for p in extra {
            let _ = fs::remove_file(p);
        }
    };
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => {
                cleanup(&[]);
                return Err(e);
            }
        }
    }
    let summary = ExperimentSummary {
        out_dir: out_dir.clone(),
        best: select_best(&ok),
        lemmas: merge_lemmas(&ok),
        cells: ok,
    };
    if let Err(e) = write_summaries(config, &summary) {
        let names = ["cells.csv", "best.csv", "lemmas.txt", "config.json"].map(|n| out_dir.join(n));
        cleanup(&names);
        return Err(e);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Algorithm;
    use crate::trace::TraceRecord;

    fn small(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            n: Some(20),
            n0: Some(10),
            d: 3,
            epochs: 4,
            algorithms: vec!["signrr".into(), "signrvm".into(), "dist_signrvr".into(), "signsgd_mv".into()],
            gamma0: vec![1e-2, 1e-3],
            betas: vec![0.5, 0.9],
            seeds: vec![1, 2],
            workers: vec![2],
            smoothing_window: 2,
            lemma_checks: true,
            smoothness_samples: 200,
            out_dir: out.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_order_and_names() {
        let dir = tempfile::tempdir().unwrap();
        let cs = cells(&small(dir.path())).unwrap();
        // signrr 2 lr, signrvm 2 lr x 2 beta, dist 2 lr, vote 2 lr; 2 seeds each
        assert_eq!(cs.len(), (2 + 4 + 2 + 2) * 2);
        assert_eq!(cs[0].file_name(), "signrr_u10_lr1e-2_s1.csv");
        let rvm = cs.iter().find(|c| c.method == Method::Central(Algorithm::SignRvm)).unwrap();
        assert_eq!(rvm.file_name(), "signrvm_u10_lr1e-2_b0.5_d1e-1_s1.csv");
        let dist = cs.iter().find(|c| c.method == Method::DistSignRvr).unwrap();
        assert_eq!(dist.file_name(), "dist_signrvr_u10_m2_lr1e-2_d1e-1_s1.csv");
        let names: std::collections::BTreeSet<_> = cs.iter().map(Cell::file_name).collect();
        assert_eq!(names.len(), cs.len());
    }

    #[test]
    fn runs_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = small(dir.path());
        let s = run_experiment(&config).unwrap();
        assert_eq!(s.cells.len(), 20);
        for f in ["cells.csv", "best.csv", "lemmas.txt", "config.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        for r in &s.cells {
            assert!(r.csv.exists());
            assert_eq!(r.status, CellStatus::Ok);
            assert_eq!(r.epochs, 4);
            assert_eq!(r.ledger.is_some(), r.cell.method.is_distributed());
        }
        assert_eq!(s.best.len(), 4);
        assert_eq!(s.lemma_violations(), 0, "{:?}", s.lemmas);
        let saved = ExperimentConfig::from_file(&dir.path().join("config.json")).unwrap();
        assert_eq!(saved, config);
    }

    #[test]
    fn divergence_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            algorithms: vec!["sgd".into()],
            gamma0: vec![10.0],
            seeds: vec![3],
            n: Some(20),
            epochs: 50,
            init_radius: 2.0,
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let s = run_experiment(&config).unwrap();
        assert_eq!(s.cells[0].status, CellStatus::Diverged);
        assert_eq!(s.cells[0].metric, f64::INFINITY);
        assert!(s.cells[0].epochs < 50);
    }

    #[test]
    fn logistic_sweep_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let mut text = String::from("a,b,label\n");
        for k in 0..43 {
            let (a, b) = ((k % 7) as f64 / 7.0, (k % 5) as f64 / 5.0);
            let _ = writeln!(text, "{a},{b},{}", usize::from(a > b) + usize::from(a > 0.8));
        }
        fs::write(&data, text).unwrap();
        let mut config = preset("logistic_dist", 1.0).unwrap();
        config.csv_path = Some(data);
        config.algorithms = vec!["adam".into(), "dist_signrvm".into(), "signum_mv".into()];
        config.workers = vec![4];
        config.epochs = 3;
        config.batch_size = 2;
        config.telemetry_stride = 1;
        config.gamma0 = vec![1e-2];
        config.betas = vec![0.9];
        config.seeds = vec![1];
        config.lemma_checks = true;
        config.smoothness_samples = 50;
        config.out_dir = dir.path().join("out");
        let s = run_experiment(&config).unwrap();
        assert_eq!(s.cells.len(), 3);
        assert!(s.cells.iter().all(|r| r.status == CellStatus::Ok));
        // 43 rows over 4 workers: 40 used, 10 per worker, 5 batches per epoch
        let dist = &s.cells[1];
        assert_eq!(dist.ledger.unwrap().rounds, 3 * 5);
        assert_eq!(s.lemma_violations(), 0, "{:?}", s.lemmas);
        // features 2 x classes 3
        assert_eq!(s.cells[0].cell.u_max, None);
    }

    #[test]
    fn best_prefers_lower_mean_then_smaller_lr() {
        let mk = |gamma0: f64, seed: u64, metric: f64| CellResult {
            cell: Cell {
                method: Method::Central(Algorithm::SignRr),
                u_max: Some(10.0),
                workers: None,
                gamma0,
                beta: None,
                d0: None,
                seed,
            },
            status: CellStatus::Ok,
            metric,
            final_f: 0.0,
            final_grad_l1: 0.0,
            epochs: 1,
            ledger: None,
            lemmas: vec![],
            csv: PathBuf::new(),
        };
        let rs = vec![mk(0.1, 1, 1.0), mk(0.1, 2, 3.0), mk(0.01, 1, 2.0), mk(0.01, 2, 2.0), mk(0.001, 1, 5.0), mk(0.001, 2, 0.0)];
        let b = select_best(&rs);
        assert_eq!(b.len(), 1);
        // 0.1 and 0.01 tie at mean 2; 0.001 has mean 2.5
        assert_eq!(b[0].gamma0, 0.01);
        assert_eq!(b[0].per_seed, vec![(1, 2.0), (2, 2.0)]);
    }

    #[test]
    fn metric_smooths_epoch_means() {
        let rec = |t: usize, g: f64| TraceRecord {
            t,
            i: 0,
            f: 1.0,
            grad_l1: g,
            grad_l2: g,
            applied: true,
            gamma: 0.1,
            d_threshold: 0.0,
            diag: None,
        };
        let trace = Trace {
            records: vec![rec(0, 1000.0), rec(1, 10.0), rec(1, 1000.0), rec(2, 0.1)],
        };
        // epoch means of log10: 3, 2, -1; window 2 -> last = 0.5
        assert_eq!(summary_metric(&trace, SummaryMetric::GradL1, 2).unwrap(), 0.5);
        assert_eq!(summary_metric(&trace, SummaryMetric::F, 3).unwrap(), 0.0);
        let bad = Trace {
            records: vec![rec(0, f64::INFINITY)],
        };
        assert_eq!(summary_metric(&bad, SummaryMetric::GradL1, 1).unwrap(), f64::INFINITY);
    }
}
