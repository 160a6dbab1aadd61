//! Norms, series post-processing, and the trace CSV format.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{StepDiagnostics, Trace, TraceRecord};

fn first_nan(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| x.is_nan())
}

pub fn l1_norm(v: &[f64]) -> Result<f64> {
    if let Some(j) = first_nan(v) {
        return Err(Error::NaN { coordinate: j });
    }
    Ok(v.iter().map(|x| x.abs()).sum())
}

pub fn l2_norm(v: &[f64]) -> Result<f64> {
    if let Some(j) = first_nan(v) {
        return Err(Error::NaN { coordinate: j });
    }
    Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    Log10,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSeries {
    pub raw: Vec<f64>,
    pub window: usize,
    pub transform: Transform,
    pub smoothed: Vec<f64>,
}

impl ProcessedSeries {
    /// Applies `transform` then a trailing moving average of `window`.
    pub fn new(raw: Vec<f64>, window: usize, transform: Transform) -> Result<Self> {
        let transformed = match transform {
            Transform::Identity => raw.clone(),
            Transform::Log10 => log10_series(&raw)?,
        };
        let smoothed = moving_average(&transformed, window)?;
        Ok(Self {
            raw,
            window,
            transform,
            smoothed,
        })
    }

    pub fn last(&self) -> Option<f64> {
        self.smoothed.last().copied()
    }
}

/// Trailing mean over `window` values; the first `window − 1` entries average
/// over the shorter prefix available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("moving-average window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    for k in 0..series.len() {
        let start = (k + 1).saturating_sub(window);
        let slice = &series[start..=k];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

/// Elementwise `log10`. Zero, negative, and NaN inputs are errors.
pub fn log10_series(series: &[f64]) -> Result<Vec<f64>> {
    series
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if *v > 0.0 {
                Ok(v.log10())
            } else {
                Err(Error::InvalidArgument(format!(
                    "log10 transform needs strictly positive values; entry {k} is {v}"
                )))
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV

pub const CSV_HEADER: [&str; 8] = ["t", "i", "f", "grad_l1", "grad_l2", "applied", "gamma", "d_threshold"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// Append the per-step diagnostic vectors after the base columns.
    pub diagnostics: bool,
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // `inf`, `-inf`, `NaN` all parse back with `str::parse::<f64>`.
        format!("{v}")
    }
}

const VECTOR_GROUPS: [&str; 6] = ["x", "anchor", "est", "mom", "dir", "grad"];

/// Writes one row per record with the fixed header
/// `t,i,f,grad_l1,grad_l2,applied,gamma,d_threshold`. Floats use 17
/// significant digits so the file round-trips exactly.
pub fn emit_csv(trace: &Trace, path: &Path, options: CsvOptions) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dim = trace
        .records
        .iter()
        .find_map(|r| r.diag.as_ref().map(|d| d.x.len()))
        .unwrap_or(0);
    let diagnostics = options.diagnostics && dim > 0;

    let mut header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
    if diagnostics {
        header.push("f_next".into());
        for g in VECTOR_GROUPS {
            header.extend((0..dim).map(|j| format!("{g}_{j}")));
        }
    }
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;

    for r in &trace.records {
        let mut row = vec![
            r.t.to_string(),
            r.i.to_string(),
            fmt_f64(r.f),
            fmt_f64(r.grad_l1),
            fmt_f64(r.grad_l2),
            u8::from(r.applied).to_string(),
            fmt_f64(r.gamma),
            fmt_f64(r.d_threshold),
        ];
        if diagnostics {
            match &r.diag {
                Some(d) => {
                    row.push(fmt_f64(d.f_next));
                    let groups: [Option<&Vec<f64>>; 6] = [
                        Some(&d.x),
                        d.anchor.as_ref(),
                        Some(&d.estimator),
                        d.momentum.as_ref(),
                        Some(&d.direction),
                        Some(&d.grad),
                    ];
                    for g in groups {
                        match g {
                            Some(v) => row.extend(v.iter().map(|x| fmt_f64(*x))),
                            None => row.extend(std::iter::repeat_n(String::new(), dim)),
                        }
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 1 + 6 * dim)),
            }
        }
        writeln!(w, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`emit_csv`], including diagnostic columns when
/// present.
pub fn parse_csv(path: &Path) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(Error::csv(path, "unexpected header"));
    }
    let extra = header.len() - CSV_HEADER.len();
    let dim = if extra == 0 {
        0
    } else if extra >= 1 && (extra - 1).is_multiple_of(6) && header.get(8) == Some("f_next") {
        (extra - 1) / 6
    } else {
        return Err(Error::csv(path, "malformed diagnostic columns"));
    };

    let mut trace = Trace::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let float = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| Error::csv(path, format!("row {row} column {}: {e}", &header[k])))
        };
        let int = |k: usize| -> Result<usize> {
            rec[k]
                .parse::<usize>()
                .map_err(|e| Error::csv(path, format!("row {row} column {}: {e}", &header[k])))
        };
        let applied = match &rec[5] {
            "1" => true,
            "0" => false,
            other => return Err(Error::csv(path, format!("row {row}: applied must be 0 or 1, got {other}"))),
        };
        let diag = if dim > 0 && !rec[8].is_empty() {
            let group = |g: usize| -> Result<Option<Vec<f64>>> {
                let start = 9 + g * dim;
                if rec[start].is_empty() {
                    return Ok(None);
                }
                (start..start + dim).map(float).collect::<Result<Vec<_>>>().map(Some)
            };
            let need = |v: Option<Vec<f64>>, name: &str| {
                v.ok_or_else(|| Error::csv(path, format!("row {row}: missing {name} columns")))
            };
            Some(StepDiagnostics {
                f_next: float(8)?,
                x: need(group(0)?, "x")?,
                anchor: group(1)?,
                estimator: need(group(2)?, "est")?,
                momentum: group(3)?,
                direction: need(group(4)?, "dir")?,
                grad: need(group(5)?, "grad")?,
            })
        } else {
            None
        };
        trace.records.push(TraceRecord {
            t: int(0)?,
            i: int(1)?,
            f: float(2)?,
            grad_l1: float(3)?,
            grad_l2: float(4)?,
            applied,
            gamma: float(6)?,
            d_threshold: float(7)?,
            diag,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norms() {
        assert_eq!(l1_norm(&[1.0, -2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(l2_norm(&[1.0, -2.0, 3.0]).unwrap(), 14f64.sqrt());
        assert_eq!(l1_norm(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(l2_norm(&[]).unwrap(), 0.0);
        assert!(matches!(l1_norm(&[1.0, f64::NAN]), Err(Error::NaN { coordinate: 1 })));
        assert!(l2_norm(&[f64::NAN]).is_err());
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 3.0], 2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 4).unwrap(),
            vec![1.0, 1.5, 2.0, 2.5]
        );
        let s = [0.3, -1.0, 7.5];
        assert_eq!(moving_average(&s, 1).unwrap(), s.to_vec());
        assert!(moving_average(&[], 3).unwrap().is_empty());
        assert!(moving_average(&s, 0).is_err());
    }

    #[test]
    fn log_transform_rejects_nonpositive() {
        assert!(log10_series(&[1.0, 0.0]).is_err());
        assert!(log10_series(&[-1.0]).is_err());
        assert_eq!(log10_series(&[100.0]).unwrap(), vec![2.0]);
        let p = ProcessedSeries::new(vec![10.0, 1000.0], 2, Transform::Log10).unwrap();
        assert_eq!(p.smoothed, vec![1.0, 2.0]);
        assert!(ProcessedSeries::new(vec![1.0, 0.0], 2, Transform::Log10).is_err());
    }

    proptest! {
        #[test]
        fn l1_dominates_l2(v in prop::collection::vec(-1e6f64..1e6, 0..40)) {
            prop_assert!(l1_norm(&v).unwrap() >= l2_norm(&v).unwrap() * (1.0 - 1e-12));
        }

        #[test]
        fn moving_average_is_linear(
            v in prop::collection::vec(-1e3f64..1e3, 0..50),
            a in -10f64..10.0,
            w in 1usize..12,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| a * x).collect();
            let lhs = moving_average(&scaled, w).unwrap();
            let rhs = moving_average(&v, w).unwrap();
            prop_assert_eq!(lhs.len(), v.len());
            for (l, r) in lhs.iter().zip(rhs) {
                prop_assert!((l - a * r).abs() <= 1e-9 * (1.0 + l.abs()));
            }
        }
    }
}
