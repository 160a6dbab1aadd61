//! Finite-sum objectives `f(x) = (1/n) Σ f_i(x)` with exact component gradients,
//! plus the finite-difference oracle and the coordinate-smoothness estimator
//! used by the lemma checks.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};

/// A finite-sum objective.
///
/// Implementations must be pure: evaluating a component never mutates the
/// problem, so a problem can be shared between simulated workers.
pub trait FiniteSumProblem: Send + Sync {
    /// Number of components `n`.
    fn num_components(&self) -> usize;

    /// Dimension of the parameter vector.
    fn dim(&self) -> usize;

    /// `f_i(x)`. Panics if `i` is out of range.
    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out` (overwriting it). Panics if `i` is out of range.
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// Full objective. The default averages the components.
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        let sum: f64 = (0..n).map(|i| self.component_value(i, x)).sum();
        sum / n as f64
    }

    /// Full gradient. The default averages the component gradients.
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_components();
        let mut buf = vec![0.0; self.dim()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            self.component_grad_into(i, x, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += g;
            }
        }
        let inv = n as f64;
        out.iter_mut().for_each(|o| *o /= inv);
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(x, &mut out);
        out
    }
}

fn check_point(p: &dyn FiniteSumProblem, x: &[f64]) -> Result<()> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Checked `∇f_i(x)`.
pub fn component_grad(p: &dyn FiniteSumProblem, i: usize, x: &[f64]) -> Result<Vec<f64>> {
    if i >= p.num_components() {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: p.num_components(),
        });
    }
    check_point(p, x)?;
    let mut out = vec![0.0; p.dim()];
    p.component_grad_into(i, x, &mut out);
    Ok(out)
}

/// Checked `f_i(x)`.
pub fn component_value(p: &dyn FiniteSumProblem, i: usize, x: &[f64]) -> Result<f64> {
    if i >= p.num_components() {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: p.num_components(),
        });
    }
    check_point(p, x)?;
    Ok(p.component_value(i, x))
}

// ---------------------------------------------------------------------------
// Rosenbrock finite sum

/// `f_i(x) = Σ_{j<d-1} [ b_i (x_{j+1} − x_j²)² + (1 − x_j)² ]`.
#[derive(Debug, Clone)]
pub struct RosenbrockSum {
    scales: Vec<f64>,
    mean_scale: f64,
    dim: usize,
    u_max: f64,
    seed: u64,
}

impl RosenbrockSum {
    /// Draws `b_i ~ Uniform[0, u_max]` from the problem stream of `seed`.
    pub fn new(n: usize, d: usize, u_max: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "u_max must be positive and finite, got {u_max}"
            )));
        }
        let mut rng = stream(seed, StreamTag::Problem, 0, 0);
        let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=u_max)).collect();
        let mut p = Self::from_scales(scales, d)?;
        p.u_max = u_max;
        p.seed = seed;
        Ok(p)
    }

    /// Builds the sum from explicit scales (every `b_i` must be finite and ≥ 0).
    pub fn from_scales(scales: Vec<f64>, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "Rosenbrock sum needs d >= 2, got {d}"
            )));
        }
        if scales.is_empty() {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if let Some(b) = scales.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "scale {b} is not a finite nonnegative number"
            )));
        }
        let mean_scale = scales.iter().sum::<f64>() / scales.len() as f64;
        let u_max = scales.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            scales,
            mean_scale,
            dim: d,
            u_max,
            seed: 0,
        })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Splits into `m` contiguous shards of equal size (one per worker).
    pub fn partition(&self, m: usize) -> Result<Vec<RosenbrockSum>> {
        let n = self.scales.len();
        if m == 0 || !n.is_multiple_of(m) {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n} components evenly over {m} workers"
            )));
        }
        self.scales
            .chunks(n / m)
            .map(|c| {
                let mut p = Self::from_scales(c.to_vec(), self.dim)?;
                p.seed = self.seed;
                p.u_max = self.u_max;
                Ok(p)
            })
            .collect()
    }

    fn value_with(&self, b: f64, x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| {
                let r = w[1] - w[0] * w[0];
                let s = 1.0 - w[0];
                b * r * r + s * s
            })
            .sum()
    }

    fn grad_with(&self, b: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.dim - 1 {
            let r = x[j + 1] - x[j] * x[j];
            out[j] += -4.0 * b * x[j] * r - 2.0 * (1.0 - x[j]);
            out[j + 1] += 2.0 * b * r;
        }
    }
}

impl FiniteSumProblem for RosenbrockSum {
    fn num_components(&self) -> usize {
        self.scales.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.value_with(self.scales[i], x)
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.grad_with(self.scales[i], x, out)
    }

    // Every component is affine in b_i, so the mean objective is the
    // component evaluated at the mean scale. O(d) instead of O(nd).
    fn value(&self, x: &[f64]) -> f64 {
        self.value_with(self.mean_scale, x)
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.grad_with(self.mean_scale, x, out)
    }
}

// ---------------------------------------------------------------------------
// Separable quadratic

/// `f_i(x) = ½ Σ_j a_j (x_j − c_{i,j})²`.
#[derive(Debug, Clone)]
pub struct SeparableQuadratic {
    curvature: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl SeparableQuadratic {
    pub fn new(curvature: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if curvature.is_empty() || centers.is_empty() {
            return Err(Error::InvalidArgument(
                "quadratic needs at least one component and one dimension".into(),
            ));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != curvature.len()) {
            return Err(Error::DimensionMismatch {
                expected: curvature.len(),
                got: c.len(),
            });
        }
        Ok(Self { curvature, centers })
    }
}

impl FiniteSumProblem for SeparableQuadratic {
    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.centers[i];
        (0..x.len())
            .map(|j| 0.5 * self.curvature[j] * (x[j] - c[j]) * (x[j] - c[j]))
            .sum()
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.centers[i];
        for j in 0..x.len() {
            out[j] = self.curvature[j] * (x[j] - c[j]);
        }
    }
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression

/// Softmax regression over one linear layer. Parameters are the `C × p`
/// weight matrix flattened class-major: `w[c * p + k]`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl LogisticProblem {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("logistic problem needs at least one sample".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let num_features = features[0].len();
        if num_features == 0 {
            return Err(Error::InvalidArgument("samples have no features".into()));
        }
        if let Some(row) = features.iter().find(|r| r.len() != num_features) {
            return Err(Error::DimensionMismatch {
                expected: num_features,
                got: row.len(),
            });
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    /// Reads one sample per row: features then an integer label in the last
    /// column. The class count defaults to `max(label) + 1`.
    pub fn from_csv(path: &Path, has_header: bool, num_classes: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            if record.len() < 2 {
                return Err(Error::csv(path, format!("row {row}: need features and a label")));
            }
            let last = record.len() - 1;
            let feats = record
                .iter()
                .take(last)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::csv(path, format!("row {row}: {e}")))?;
            let label = record[last]
                .parse::<usize>()
                .map_err(|e| Error::csv(path, format!("row {row}: label: {e}")))?;
            features.push(feats);
            labels.push(label);
        }
        let classes = match num_classes {
            Some(c) => c,
            None => labels.iter().max().map_or(0, |m| m + 1).max(2),
        };
        Self::new(features, labels, classes)
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// The first `k` samples.
    pub fn head(&self, k: usize) -> Result<LogisticProblem> {
        let k = k.min(self.labels.len());
        Self::new(self.features[..k].to_vec(), self.labels[..k].to_vec(), self.num_classes)
    }

    /// Splits rows into `m` contiguous shards of equal size.
    pub fn partition(&self, m: usize) -> Result<Vec<LogisticProblem>> {
        let n = self.labels.len();
        if m == 0 || !n.is_multiple_of(m) {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n} samples evenly over {m} workers"
            )));
        }
        let k = n / m;
        (0..m)
            .map(|w| {
                Self::new(
                    self.features[w * k..(w + 1) * k].to_vec(),
                    self.labels[w * k..(w + 1) * k].to_vec(),
                    self.num_classes,
                )
            })
            .collect()
    }

    /// Fraction of samples whose arg-max class equals the label.
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let mut scores = vec![0.0; self.num_classes];
        let correct = (0..self.labels.len())
            .filter(|&i| {
                self.scores(i, w, &mut scores);
                let best = scores
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (c, s)| if *s > acc.1 { (c, *s) } else { acc })
                    .0;
                best == self.labels[i]
            })
            .count();
        correct as f64 / self.labels.len() as f64
    }

    fn scores(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let x = &self.features[i];
        let p = self.num_features;
        for (c, s) in out.iter_mut().enumerate() {
            *s = w[c * p..(c + 1) * p].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

impl FiniteSumProblem for LogisticProblem {
    fn num_components(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.num_features * self.num_classes
    }

    fn component_value(&self, i: usize, w: &[f64]) -> f64 {
        let mut s = vec![0.0; self.num_classes];
        self.scores(i, w, &mut s);
        // log-sum-exp ≥ every score, so the loss is nonnegative up to rounding.
        (log_sum_exp(&s) - s[self.labels[i]]).max(0.0)
    }

    fn component_grad_into(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let mut s = vec![0.0; self.num_classes];
        self.scores(i, w, &mut s);
        let lse = log_sum_exp(&s);
        let x = &self.features[i];
        let p = self.num_features;
        for c in 0..self.num_classes {
            let mut coef = (s[c] - lse).exp();
            if c == self.labels[i] {
                coef -= 1.0;
            }
            for k in 0..p {
                out[c * p + k] = coef * x[k];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Oracles

/// Maximum relative error between central differences and analytic component
/// gradients.
///
/// Checks up to 16 evenly spaced components and up to 64 evenly spaced
/// coordinates. The error for a pair is `|fd − g| / max(1, |g|)`.
pub fn finite_diff_check(p: &dyn FiniteSumProblem, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    check_point(p, x)?;
    let components = evenly_spaced(p.num_components(), 16);
    let coords = evenly_spaced(p.dim(), 64);
    let mut grad = vec![0.0; p.dim()];
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for &i in &components {
        p.component_grad_into(i, x, &mut grad);
        for &j in &coords {
            probe[j] = x[j] + h;
            let up = p.component_value(i, &probe);
            probe[j] = x[j] - h;
            let down = p.component_value(i, &probe);
            probe[j] = x[j];
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn evenly_spaced(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|k| k * n / cap).collect()
    }
}

/// Axis-aligned box `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.lower.iter().zip(&self.upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("region must have lower < upper in every coordinate".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_SMOOTHNESS_SAFETY: f64 = 1.5;

const SECANT_FRACTION: f64 = 1e-4;

/// Per-coordinate gradient-Lipschitz estimate `L̂_j`.
///
/// Each sample draws a component `i`, a point `x` in the region, and a second
/// point `y` that differs from `x` only in coordinate `j` (by a short step
/// inside the region); `L̂_j` is the largest observed
/// `|∂_j f_i(x) − ∂_j f_i(y)| / |x_j − y_j|` times `safety`.
pub fn estimate_coordinate_smoothness(
    p: &dyn FiniteSumProblem,
    region: &Region,
    samples: usize,
    seed: u64,
    safety: f64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let d = p.dim();
    region.validate(d)?;
    let mut rng = stream(seed, StreamTag::Smoothness, 0, 0);
    let mut x = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut lhat = vec![0.0_f64; d];
    for _ in 0..samples {
        for j in 0..d {
            let i = rng.random_range(0..p.num_components());
            for k in 0..d {
                x[k] = rng.random_range(region.lower[k]..=region.upper[k]);
            }
            let xj = x[j];
            // Short secant: its slope approaches the local curvature, and
            // any long secant is an average of these.
            let step = SECANT_FRACTION * (region.upper[j] - region.lower[j]);
            let mut yj = if rng.random::<bool>() { xj + step } else { xj - step };
            if yj > region.upper[j] || yj < region.lower[j] {
                yj = 2.0 * xj - yj;
            }
            p.component_grad_into(i, &x, &mut gx);
            x[j] = yj;
            p.component_grad_into(i, &x, &mut gy);
            let ratio = (gx[j] - gy[j]).abs() / (xj - yj).abs();
            lhat[j] = lhat[j].max(ratio);
        }
    }
    Ok(lhat.into_iter().map(|l| l * safety).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_point(seed: u64, d: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut rng = stream(seed, StreamTag::Init, 99, 0);
        (0..d).map(|_| rng.random_range(lo..hi)).collect()
    }

    #[test]
    fn rosenbrock_rejects_small_dimension() {
        assert!(RosenbrockSum::new(10, 1, 10.0, 1).is_err());
        assert!(RosenbrockSum::new(0, 5, 10.0, 1).is_err());
        assert!(RosenbrockSum::new(10, 5, 0.0, 1).is_err());
    }

    #[test]
    fn rosenbrock_default_size_and_scale_range() {
        let p = RosenbrockSum::new(1000, 5, 10.0, 3).unwrap();
        assert_eq!(p.num_components(), 1000);
        assert_eq!(p.dim(), 5);
        assert!(p.scales().iter().all(|b| (0.0..=10.0).contains(b)));
        let q = RosenbrockSum::new(1000, 5, 10.0, 3).unwrap();
        assert_eq!(p.scales(), q.scales());
    }

    #[test]
    fn zero_scale_degenerates_to_quadratic() {
        let p = RosenbrockSum::from_scales(vec![0.0], 2).unwrap();
        let x = [0.3, -1.7];
        assert_eq!(p.component_value(0, &x), (1.0 - 0.3) * (1.0 - 0.3));
        assert_eq!(component_grad(&p, 0, &x).unwrap(), vec![-2.0 * (1.0 - 0.3), 0.0]);
    }

    #[test]
    fn rosenbrock_gradient_at_origin_with_b10() {
        let p = RosenbrockSum::from_scales(vec![10.0], 2).unwrap();
        assert_eq!(component_grad(&p, 0, &[0.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
    }

    #[test]
    fn ones_is_stationary_for_every_component() {
        let p = RosenbrockSum::new(50, 6, 30.0, 11).unwrap();
        let ones = vec![1.0; 6];
        for i in 0..50 {
            assert!(component_grad(&p, i, &ones).unwrap().iter().all(|g| *g == 0.0));
        }
        let l1: f64 = p.grad(&ones).iter().map(|g| g.abs()).sum();
        assert_eq!(l1, 0.0);
    }

    #[test]
    fn closed_form_mean_matches_component_average() {
        // Hand expansion for n=3, d=3 at the origin: each component has
        // gradient (-2, -2, 0) since every r_j = 0 and (1 - x_j) = 1.
        let p = RosenbrockSum::new(3, 3, 10.0, 7).unwrap();
        let g = p.grad(&[0.0, 0.0, 0.0]);
        assert_eq!(g, vec![-2.0, -2.0, 0.0]);
        for k in 0..100 {
            let x = random_point(k, 3, -2.0, 2.0);
            let mut avg = [0.0; 3];
            let mut buf = vec![0.0; 3];
            let mut fsum = 0.0;
            for i in 0..3 {
                p.component_grad_into(i, &x, &mut buf);
                avg.iter_mut().zip(&buf).for_each(|(a, b)| *a += b / 3.0);
                fsum += p.component_value(i, &x);
            }
            let f = p.value(&x);
            assert!((f - fsum / 3.0).abs() <= 1e-10 * f.abs().max(1.0));
            for (a, b) in avg.iter().zip(p.grad(&x)) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn component_grad_checks_index_and_length() {
        let p = RosenbrockSum::new(4, 3, 10.0, 1).unwrap();
        assert!(matches!(
            component_grad(&p, 4, &[0.0; 3]),
            Err(Error::IndexOutOfRange { index: 4, n: 4 })
        ));
        assert!(matches!(
            component_grad(&p, 0, &[0.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn finite_differences_exact_on_quadratic() {
        let q = SeparableQuadratic::new(vec![2.0, 2.0], vec![vec![0.0, 0.0]]).unwrap();
        let err = finite_diff_check(&q, &[0.7, -1.3], 1e-3).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn finite_differences_rosenbrock() {
        let p = RosenbrockSum::new(40, 5, 10.0, 5).unwrap();
        for k in 0..20 {
            let x = random_point(k, 5, -2.0, 2.0);
            let err = finite_diff_check(&p, &x, 1e-5).unwrap();
            assert!(err < 1e-5, "point {k}: {err}");
        }
    }

    #[test]
    fn finite_differences_rejects_nonpositive_step() {
        let p = RosenbrockSum::new(4, 3, 10.0, 1).unwrap();
        assert!(finite_diff_check(&p, &[0.0; 3], 0.0).is_err());
        assert!(finite_diff_check(&p, &[0.0; 3], -1.0).is_err());
    }

    #[test]
    fn smoothness_of_unit_quadratic_is_safety_factor() {
        let q = SeparableQuadratic::new(vec![1.0; 3], vec![vec![0.0; 3]; 4]).unwrap();
        let l = estimate_coordinate_smoothness(&q, &Region::cube(3, -1.0, 1.0), 20, 3, 1.5).unwrap();
        for v in l {
            assert_relative_eq!(v, 1.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn smoothness_single_sample_and_stability_across_seeds() {
        let p = RosenbrockSum::new(200, 5, 10.0, 1).unwrap();
        let region = Region::cube(5, -2.0, 2.0);
        let one = estimate_coordinate_smoothness(&p, &region, 1, 1, 1.5).unwrap();
        assert!(one.iter().all(|l| l.is_finite() && *l >= 0.0));
        let a = estimate_coordinate_smoothness(&p, &region, 2000, 1, 1.5).unwrap();
        let b = estimate_coordinate_smoothness(&p, &region, 2000, 2, 1.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x > 0.0 && *y > 0.0);
            assert!((x - y).abs() / x.max(*y) < 0.2, "{x} vs {y}");
        }
        assert!(estimate_coordinate_smoothness(&p, &region, 0, 1, 1.5).is_err());
    }

    #[test]
    fn logistic_loss_nonnegative_and_gradient_matches() {
        let feats = vec![vec![1.0, 0.5, -0.3], vec![-0.2, 1.5, 0.7], vec![0.0, -1.0, 2.0], vec![0.4, 0.4, 0.4]];
        let p = LogisticProblem::new(feats, vec![0, 2, 1, 2], 3).unwrap();
        assert_eq!(p.dim(), 9);
        for k in 0..20 {
            let w = random_point(k, 9, -1.0, 1.0);
            for i in 0..4 {
                assert!(p.component_value(i, &w) >= 0.0);
            }
            assert!(finite_diff_check(&p, &w, 1e-5).unwrap() < 1e-4);
        }
    }

    #[test]
    fn logistic_csv_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n-1.0,0.5,1\n0.0,0.0,2\n").unwrap();
        let p = LogisticProblem::from_csv(&path, true, None).unwrap();
        assert_eq!(p.num_components(), 3);
        assert_eq!(p.num_classes(), 3);
        assert_eq!(p.dim(), 6);
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "1.0,x,0\n").unwrap();
        assert!(LogisticProblem::from_csv(&bad, false, None).is_err());
    }

    #[test]
    fn partition_preserves_components() {
        let p = RosenbrockSum::new(12, 3, 10.0, 4).unwrap();
        let parts = p.partition(3).unwrap();
        let joined: Vec<f64> = parts.iter().flat_map(|q| q.scales().to_vec()).collect();
        assert_eq!(joined, p.scales());
        assert!(p.partition(5).is_err());
    }
}
