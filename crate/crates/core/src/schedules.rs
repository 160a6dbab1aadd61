//! Stepsize and freeze-threshold rules.
//!
//! The same functional forms serve both the stepsize `γ_t^i` and the threshold
//! `D_t^i`, so a single [`Schedule`] type covers both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the inverse-square-root schedule starts counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shift {
    /// `c0 / √(n·t + i + 1)`
    None,
    /// `c0 / √(n·(t+1) + i + 1)`, used by the momentum variants.
    Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    InverseSqrt { c0: f64, shift: Shift },
}

impl Schedule {
    pub fn constant(c: f64) -> Result<Self> {
        Self::check(c)?;
        Ok(Schedule::Constant(c))
    }

    pub fn inverse_sqrt(c0: f64, shift: Shift) -> Result<Self> {
        Self::check(c0)?;
        Ok(Schedule::InverseSqrt { c0, shift })
    }

    fn check(c: f64) -> Result<()> {
        if c > 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "schedule constant must be positive and finite, got {c}"
            )))
        }
    }

    /// Value at epoch `t`, inner index `i`, with `n` inner iterations per epoch.
    #[inline]
    pub fn value_at(&self, t: usize, i: usize, n: usize) -> f64 {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::InverseSqrt { c0, shift } => {
                let epochs = match shift {
                    Shift::None => t as u64,
                    Shift::Epoch => t as u64 + 1,
                };
                let k = n as u64 * epochs + i as u64 + 1;
                scaled_inv_sqrt(c0, k as f64)
            }
        }
    }

    /// Scale constant (`c` or `c0`).
    pub fn base(&self) -> f64 {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::InverseSqrt { c0, .. } => c0,
        }
    }
}

/// `c0 / √k` with one fma correction each for the root and the quotient, so
/// the result stays within an ulp of the exact value (plain `c0 / k.sqrt()`
/// rounds twice and can land 1.5 ulp away).
fn scaled_inv_sqrt(c0: f64, k: f64) -> f64 {
    let s = k.sqrt();
    let s_lo = (-s).mul_add(s, k) / (2.0 * s);
    let q = c0 / s;
    let r = (-q).mul_add(s, c0) - q * s_lo;
    q + r / s
}

/// Config-level choice between constant and adaptive (inverse square root).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Constant,
    Adaptive,
}

impl ScheduleKind {
    pub fn build(self, c0: f64, shift: Shift) -> Result<Schedule> {
        match self {
            ScheduleKind::Constant => Schedule::constant(c0),
            ScheduleKind::Adaptive => Schedule::inverse_sqrt(c0, shift),
        }
    }
}
