//! Per-iteration telemetry.

/// Vectors captured at one step for the lemma checks and replay invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Objective after the step (equals `f` when the step was frozen).
    pub f_next: f64,
    /// Pre-update iterate.
    pub x: Vec<f64>,
    /// Epoch anchor `y`, for variance-reduced methods.
    pub anchor: Option<Vec<f64>>,
    /// Gradient estimator fed into the update (the semi-stochastic gradient
    /// for variance-reduced methods, the stochastic gradient otherwise).
    pub estimator: Vec<f64>,
    /// Momentum buffer after this step's recurrence, for momentum methods.
    pub momentum: Option<Vec<f64>>,
    /// Update direction: the step was `x ← x − γ·direction` when applied.
    pub direction: Vec<f64>,
    /// Full gradient at the pre-update iterate.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub i: usize,
    pub f: f64,
    pub grad_l1: f64,
    pub grad_l2: f64,
    pub applied: bool,
    pub gamma: f64,
    pub d_threshold: f64,
    pub diag: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: Trace) {
        self.records.extend(other.records);
    }

    /// Number of distinct epochs present.
    pub fn epochs(&self) -> usize {
        self.records.last().map_or(0, |r| r.t + 1)
    }

    /// Mean of `metric` over each epoch's records.
    pub fn epoch_means(&self, metric: impl Fn(&TraceRecord) -> f64) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = vec![(0.0, 0); self.epochs()];
        for r in &self.records {
            out[r.t].0 += metric(r);
            out[r.t].1 += 1;
        }
        out.into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(s, c)| s / c as f64)
            .collect()
    }
}

/// What each iteration records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Telemetry {
    /// Record every `stride`-th inner iteration (1 = all).
    pub stride: usize,
    /// Capture [`StepDiagnostics`] on recorded iterations.
    pub diagnostics: bool,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self {
            stride: 1,
            diagnostics: false,
        }
    }
}

impl Telemetry {
    pub fn with_diagnostics() -> Self {
        Self {
            stride: 1,
            diagnostics: true,
        }
    }

    #[inline]
    pub(crate) fn records(&self, i: usize) -> bool {
        i.is_multiple_of(self.stride.max(1))
    }
}
