//! Complex-envelope fields on a uniform time grid.
//!
//! The optical carrier is never sampled. A field is its slowly varying
//! envelope `A(t)`; delaying the physical field `Re{A(t) e^{iω₀t}}` by `τ`
//! gives the envelope `A(t − τ) e^{−iω₀τ}`, which [`apply_delay`] computes
//! with a single spectral multiply.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

/// Samples whose magnitude falls below this fraction of the peak are not
/// counted as content when checking a shift against the guard bands.
pub const SUPPORT_FLOOR: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid stack configuration: {0}")]
    InvalidConfig(String),
    #[error("window of {grid_len} samples is too small; grid_len must be at least {min_grid_len}")]
    WindowTooSmall { grid_len: usize, min_grid_len: usize },
    #[error("delay of {tau} ps would push field content into the guard band")]
    OutOfWindow { tau: f64 },
    #[error("delay must be finite, got {0}")]
    NonFiniteDelay(f64),
    #[error("expected {expected} delays, got {got}")]
    DelayCount { expected: usize, got: usize },
    #[error("stage {stage} cannot be applied after {done} of {n_stages} stages")]
    StageOrder { stage: usize, done: usize, n_stages: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub samples: Vec<Complex64>,
    /// Time of the first sample (ps).
    pub t0: f64,
    /// Sample spacing (ps).
    pub dt: f64,
    /// Carrier angular frequency ω₀ (rad/ps).
    pub carrier_freq: f64,
    /// Samples at each edge that delayed content must stay out of.
    pub guard_len: usize,
}

impl FieldGrid {
    pub fn zeros(len: usize, t0: f64, dt: f64, carrier_freq: f64, guard_len: usize) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            t0,
            dt,
            carrier_freq,
            guard_len,
        }
    }

    pub fn zeros_like(other: &FieldGrid) -> Self {
        Self::zeros(other.len(), other.t0, other.dt, other.carrier_freq, other.guard_len)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite())
    }

    /// Index range `[first, last]` of samples above [`SUPPORT_FLOOR`] × peak,
    /// or `None` for an all-zero field.
    pub fn support(&self) -> Option<(usize, usize)> {
        let peak = self.peak_amplitude();
        if peak == 0.0 {
            return None;
        }
        let floor = SUPPORT_FLOOR * peak;
        let first = self.samples.iter().position(|s| s.norm() > floor)?;
        let last = self.samples.iter().rposition(|s| s.norm() > floor)?;
        Some((first, last))
    }

    /// `self += scale * other`. Both fields must share a grid.
    pub fn add_scaled(&mut self, other: &FieldGrid, scale: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b * scale;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.samples {
            *s *= factor;
        }
    }
}

/// Total energy Σ|A|²·dt.
pub fn pulse_energy(field: &FieldGrid) -> f64 {
    field.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * field.dt
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

/// Delay `field` by `tau` ps: translate the envelope by `tau` and rotate
/// the carrier phase by `−ω₀·tau`.
///
/// The translation is a linear spectral phase, so shifts compose exactly and
/// need not be a whole number of samples. Shifts that would move content
/// into either guard band are rejected instead of wrapping around.
pub fn apply_delay(field: &FieldGrid, tau: f64) -> Result<FieldGrid, FieldError> {
    if !tau.is_finite() {
        return Err(FieldError::NonFiniteDelay(tau));
    }
    let Some((first, last)) = field.support() else {
        return Ok(field.clone());
    };
    let n = field.len();
    let shift = tau / field.dt;
    let lo = field.guard_len as f64;
    let hi = (n - 1 - field.guard_len.min(n - 1)) as f64;
    if first as f64 + shift < lo || last as f64 + shift > hi {
        return Err(FieldError::OutOfWindow { tau });
    }
    if tau == 0.0 {
        return Ok(field.clone());
    }

    let (forward, inverse) = plans(n);
    let mut buf = field.samples.clone();
    forward.process(&mut buf);
    let d_omega = 2.0 * PI / (n as f64 * field.dt);
    let norm = 1.0 / n as f64;
    let positive = n.div_ceil(2);
    for (k, x) in buf.iter_mut().enumerate() {
        let signed = if k < positive { k as f64 } else { k as f64 - n as f64 };
        let phase = -(signed * d_omega + field.carrier_freq) * tau;
        *x *= Complex64::from_polar(norm, phase);
    }
    inverse.process(&mut buf);
    Ok(FieldGrid {
        samples: buf,
        t0: field.t0,
        dt: field.dt,
        carrier_freq: field.carrier_freq,
        guard_len: field.guard_len,
    })
}
