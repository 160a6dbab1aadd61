//! Experiment configuration: flat JSON keys, presets, and `key=value`
//! overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::distributed::{Aggregation, CostModel, VoteKind};
use crate::error::{Error, Result};
use crate::optimizers::Algorithm;
use crate::problems::DEFAULT_SMOOTHNESS_SAFETY;
use crate::schedules::{ScheduleKind, Shift};

/// Every method the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Central(Algorithm),
    DistSignRvr,
    DistSignRvm,
    Vote(VoteKind),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Central(a) => a.name(),
            Method::DistSignRvr => "dist_signrvr",
            Method::DistSignRvm => "dist_signrvm",
            Method::Vote(v) => v.name(),
        }
    }

    pub fn is_distributed(self) -> bool {
        !matches!(self, Method::Central(_))
    }

    pub fn uses_momentum(self) -> bool {
        match self {
            Method::Central(a) => a.uses_momentum(),
            Method::DistSignRvm | Method::Vote(VoteKind::SignumMv) => true,
            Method::DistSignRvr | Method::Vote(VoteKind::SignSgdMv) => false,
        }
    }

    pub fn uses_threshold(self) -> bool {
        match self {
            Method::Central(a) => a.uses_threshold(),
            Method::DistSignRvr | Method::DistSignRvm => true,
            Method::Vote(_) => false,
        }
    }

    pub fn is_sign_based(self) -> bool {
        match self {
            Method::Central(a) => a.is_sign_based(),
            _ => true,
        }
    }

    /// Whether the momentum buffer survives epoch boundaries. The
    /// with-replacement methods have no epochs to reset at.
    pub fn momentum_carried(self, carry_flag: bool) -> bool {
        match self {
            Method::Central(Algorithm::SignRvm) | Method::DistSignRvm => carry_flag,
            _ => true,
        }
    }

    /// The schedule offset the theory pairs with each method when adaptive.
    pub fn default_shift(self) -> Shift {
        match self {
            Method::Central(Algorithm::SignRvm) | Method::DistSignRvm => Shift::Epoch,
            _ => Shift::None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist_signrvr" => Ok(Method::DistSignRvr),
            "dist_signrvm" => Ok(Method::DistSignRvm),
            _ => match s.parse::<VoteKind>() {
                Ok(v) => Ok(Method::Vote(v)),
                Err(_) => s
                    .parse::<Algorithm>()
                    .map(Method::Central)
                    .map_err(|_| Error::InvalidArgument(format!("unknown algorithm `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Rosenbrock,
    Logistic,
}

/// Quantity summarized per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMetric {
    /// `log10 ‖∇f(x)‖₁`
    #[default]
    GradL1,
    /// `log10 f(x)`
    F,
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// A full sweep description. Grid-valued keys accept a scalar or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Components (Rosenbrock) or a cap on the rows read (logistic).
    pub n: Option<usize>,
    /// Components per worker for the distributed methods.
    pub n0: Option<usize>,
    pub d: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub u_max: Vec<f64>,
    pub csv_path: Option<PathBuf>,
    pub csv_header: bool,
    pub num_classes: Option<usize>,

    #[serde(deserialize_with = "one_or_many")]
    pub algorithms: Vec<String>,
    pub epochs: usize,
    pub schedule: ScheduleKind,
    /// Threshold schedule; follows `schedule` when absent.
    pub d_schedule: Option<ScheduleKind>,
    /// Forces one offset for every method; otherwise each method uses the
    /// offset its analysis pairs it with.
    pub shift: Option<Shift>,
    #[serde(deserialize_with = "one_or_many")]
    pub gamma0: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub d0: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub betas: Vec<f64>,
    pub beta2: f64,
    pub eps: f64,
    pub carry_momentum: bool,
    pub batch_size: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub seeds: Vec<u64>,

    #[serde(deserialize_with = "one_or_many")]
    pub workers: Vec<usize>,
    pub aggregation: Aggregation,
    pub bytes_per_sign: u64,
    pub bytes_per_float: u64,

    /// Starting point; drawn per seed from `[−init_radius, init_radius]^d`
    /// when absent (all zeros if the radius is 0).
    pub x0: Option<Vec<f64>>,
    pub init_radius: f64,

    pub telemetry_stride: usize,
    pub smoothing_window: usize,
    pub metric: SummaryMetric,
    pub csv_diagnostics: bool,
    pub lemma_checks: bool,
    pub smoothness_samples: usize,
    pub smoothness_safety: f64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Rosenbrock,
            n: Some(1000),
            n0: None,
            d: 5,
            u_max: vec![10.0],
            csv_path: None,
            csv_header: false,
            num_classes: None,
            algorithms: Vec::new(),
            epochs: 150,
            schedule: ScheduleKind::Constant,
            d_schedule: None,
            shift: None,
            gamma0: LEARNING_RATE_GRID.to_vec(),
            d0: vec![0.1],
            betas: MOMENTUM_GRID.to_vec(),
            beta2: 0.999,
            eps: 1e-8,
            carry_momentum: false,
            batch_size: 1,
            seeds: vec![1, 2, 3, 4, 5],
            workers: vec![1],
            aggregation: Aggregation::SignAverage,
            bytes_per_sign: CostModel::default().bytes_per_sign,
            bytes_per_float: CostModel::default().bytes_per_float,
            x0: None,
            init_radius: 1.0,
            telemetry_stride: 1,
            smoothing_window: 10,
            metric: SummaryMetric::GradL1,
            csv_diagnostics: false,
            lemma_checks: false,
            smoothness_samples: 2000,
            smoothness_safety: DEFAULT_SMOOTHNESS_SAFETY,
            out_dir: PathBuf::from("runs"),
        }
    }
}

pub const LEARNING_RATE_GRID: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
pub const MOMENTUM_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub const PRESETS: [(&str, &str); 4] = [
    ("rosenbrock_central", "Rosenbrock sum, n=1000, d=5, T=150, U in {10,20,30}, sign methods and baselines"),
    ("rosenbrock_dist", "Rosenbrock sum, U=10, n0=1000 per worker, M in {10,20,30}, smoothing window 7"),
    ("logistic_central", "softmax regression on a CSV dataset (set csv_path), batch 64"),
    ("logistic_dist", "softmax regression on a CSV dataset (set csv_path), M in {10,20,30}, batch 64"),
];

fn scaled(v: usize, scale: f64) -> usize {
    ((v as f64 * scale).round() as usize).max(1)
}

/// A named configuration with `n`, `n0` and `epochs` multiplied by `scale`.
pub fn preset(name: &str, scale: f64) -> Result<ExperimentConfig> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config("scale", format!("must be positive, got {scale}")));
    }
    let central: Vec<String> = Algorithm::ALL.iter().map(|a| a.name().to_string()).collect();
    let dist: Vec<String> = ["dist_signrvr", "dist_signrvm", "signsgd_mv", "signum_mv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut c = ExperimentConfig {
        lemma_checks: true,
        ..Default::default()
    };
    match name {
        "rosenbrock_central" => {
            c.n = Some(1000);
            c.u_max = vec![10.0, 20.0, 30.0];
            c.algorithms = central;
            c.out_dir = PathBuf::from("runs/rosenbrock_central");
        }
        "rosenbrock_dist" => {
            c.n = None;
            c.n0 = Some(1000);
            c.u_max = vec![10.0];
            c.workers = vec![10, 20, 30];
            c.algorithms = dist;
            c.smoothing_window = 7;
            c.metric = SummaryMetric::F;
            c.out_dir = PathBuf::from("runs/rosenbrock_dist");
        }
        "logistic_central" | "logistic_dist" => {
            c.problem = ProblemKind::Logistic;
            c.n = Some(60_000);
            c.epochs = 20;
            c.batch_size = 64;
            c.csv_header = true;
            c.init_radius = 0.0;
            c.lemma_checks = false;
            c.telemetry_stride = 50;
            c.metric = SummaryMetric::F;
            if name == "logistic_dist" {
                c.workers = vec![10, 20, 30];
                c.algorithms = dist;
            } else {
                c.algorithms = central;
            }
            c.out_dir = PathBuf::from(format!("runs/{name}"));
        }
        _ => {
            return Err(Error::config(
                "preset",
                format!(
                    "unknown preset `{name}` (known: {})",
                    PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
                ),
            ))
        }
    }
    c.n = c.n.map(|n| scaled(n, scale));
    c.n0 = c.n0.map(|n| scaled(n, scale));
    c.epochs = scaled(c.epochs, scale);
    Ok(c)
}

/// Parses `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "override must look like key=value"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| {
        if raw.contains(',') {
            Value::Array(
                raw.split(',')
                    .map(|p| serde_json::from_str(p.trim()).unwrap_or_else(|_| Value::String(p.trim().to_string())))
                    .collect(),
            )
        } else {
            Value::String(raw.to_string())
        }
    });
    Ok((key, value))
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(Error::config("<file>", "top level must be an object"));
        };
        Self::default().with_overrides(map)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Applies flat key/value pairs on top of `self`, naming the first bad key.
    pub fn with_overrides(self, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut base) = serde_json::to_value(&self).map_err(|e| Error::config("<config>", e.to_string()))?
        else {
            unreachable!("config serializes to an object");
        };
        for (k, v) in overrides {
            if !base.contains_key(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            let probe = Value::Object(Map::from_iter([(k.clone(), v.clone())]));
            if let Err(e) = serde_json::from_value::<ExperimentConfig>(probe) {
                return Err(Error::config(k, e.to_string()));
            }
            base.insert(k, v);
        }
        serde_json::from_value(Value::Object(base)).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn set(self, key: &str, value: Value) -> Result<Self> {
        self.with_overrides(Map::from_iter([(key.to_string(), value)]))
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.algorithms
            .iter()
            .map(|a| a.parse::<Method>().map_err(|e| Error::config("algorithms", e.to_string())))
            .collect()
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            bytes_per_sign: self.bytes_per_sign,
            bytes_per_float: self.bytes_per_float,
        }
    }

    /// Checks every field a run depends on.
    pub fn validate(&self) -> Result<()> {
        let methods = self.methods()?;
        if methods.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        let mut seen = BTreeSet::new();
        for m in &methods {
            if !seen.insert(*m) {
                return Err(Error::config("algorithms", format!("`{m}` listed twice")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        nonempty_positive("gamma0", &self.gamma0)?;
        if methods.iter().any(|m| m.uses_threshold()) {
            nonempty_positive("d0", &self.d0)?;
        }
        if methods.iter().any(|m| m.uses_momentum()) {
            if self.betas.is_empty() {
                return Err(Error::config("betas", "grid is empty"));
            }
            if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
                return Err(Error::config("betas", format!("{b} is outside (0, 1)")));
            }
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("beta2", "must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.telemetry_stride == 0 {
            return Err(Error::config("telemetry_stride", "must be at least 1"));
        }
        if self.smoothing_window == 0 {
            return Err(Error::config("smoothing_window", "must be at least 1"));
        }
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return Err(Error::config("init_radius", "must be finite and nonnegative"));
        }
        if self.lemma_checks {
            if self.smoothness_samples == 0 {
                return Err(Error::config("smoothness_samples", "must be at least 1"));
            }
            if !(self.smoothness_safety >= 1.0) {
                return Err(Error::config("smoothness_safety", "must be at least 1"));
            }
        }
        if methods.iter().any(|m| m.is_distributed())
            && (self.workers.is_empty() || self.workers.contains(&0)) {
                return Err(Error::config("workers", "need a nonempty list of positive worker counts"));
            }
        match self.problem {
            ProblemKind::Rosenbrock => {
                if self.d < 2 {
                    return Err(Error::config("d", "Rosenbrock needs d >= 2"));
                }
                nonempty_positive("u_max", &self.u_max)?;
                if methods.iter().any(|m| !m.is_distributed()) && !matches!(self.n, Some(n) if n > 0) {
                    return Err(Error::config("n", "centralized methods need n >= 1"));
                }
                if methods.iter().any(|m| m.is_distributed()) && !matches!(self.n0, Some(n) if n > 0) {
                    return Err(Error::config("n0", "distributed methods need n0 >= 1"));
                }
                if let Some(x0) = &self.x0 {
                    if x0.len() != self.d {
                        return Err(Error::config("x0", format!("expected {} entries, got {}", self.d, x0.len())));
                    }
                }
            }
            ProblemKind::Logistic => {
                if self.csv_path.is_none() {
                    return Err(Error::config("csv_path", "logistic problems read their data from a CSV file"));
                }
            }
        }
        Ok(())
    }
}

fn nonempty_positive(key: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(key, "grid is empty"));
    }
    if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::config(key, format!("{x} is not a positive finite number")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_scaling() {
        let c = preset("rosenbrock_central", 0.2).unwrap();
        assert_eq!((c.n, c.epochs, c.d), (Some(200), 30, 5));
        assert_eq!(c.u_max, vec![10.0, 20.0, 30.0]);
        assert_eq!(c.gamma0, LEARNING_RATE_GRID.to_vec());
        assert_eq!(c.betas, MOMENTUM_GRID.to_vec());
        let full = preset("rosenbrock_central", 1.0).unwrap();
        assert_eq!((full.n, full.epochs), (Some(1000), 150));

        let d = preset("rosenbrock_dist", 1.0).unwrap();
        assert_eq!((d.n0, d.workers.clone(), d.smoothing_window), (Some(1000), vec![10, 20, 30], 7));
        assert_eq!(d.u_max, vec![10.0]);
        assert!(preset("mnist", 1.0).is_err());
        assert!(preset("rosenbrock_dist", 0.0).is_err());
    }

    #[test]
    fn overrides_and_key_errors() {
        let c = preset("rosenbrock_central", 0.2).unwrap();
        let (k, v) = parse_override("u_max=10").unwrap();
        let c = c.set(&k, v).unwrap();
        assert_eq!(c.u_max, vec![10.0]);
        let (k, v) = parse_override("algorithms=signrr,signrvr").unwrap();
        let c = c.set(&k, v).unwrap();
        assert_eq!(c.algorithms, vec!["signrr", "signrvr"]);

        match c.clone().set("epochz", Value::from(3)) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epochz"),
            other => panic!("{other:?}"),
        }
        match c.clone().set("epochs", Value::from("many")) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epochs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_names_keys() {
        let mut c = preset("rosenbrock_central", 0.2).unwrap();
        c.algorithms.clear();
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "algorithms"));
        let mut c = preset("rosenbrock_central", 0.2).unwrap();
        c.seeds = vec![1, 1];
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "seeds"));
        let mut c = preset("rosenbrock_central", 0.2).unwrap();
        c.gamma0.clear();
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "gamma0"));
        let mut c = preset("logistic_central", 1.0).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "csv_path"));
        c.csv_path = Some("data.csv".into());
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let c = preset("rosenbrock_dist", 0.2).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), c);
        let scalar = ExperimentConfig::from_json_str(r#"{"gamma0": 0.01, "algorithms": ["signrr"]}"#).unwrap();
        assert_eq!(scalar.gamma0, vec![0.01]);
    }

    #[test]
    fn method_names() {
        for s in ["signrr", "adam", "dist_signrvr", "dist_signrvm", "signsgd_mv", "signum_mv"] {
            assert_eq!(s.parse::<Method>().unwrap().name(), s);
        }
        assert!("ssdm".parse::<Method>().is_err());
        assert_eq!(Method::DistSignRvm.default_shift(), Shift::Epoch);
    }
}
