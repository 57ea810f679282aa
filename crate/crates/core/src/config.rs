//! Physical and numerical parameters of an N-stage stacker.
//!
//! All times are in picoseconds and lengths in micrometres. The simulation
//! window is laid out so that pulse `p` of the input train is centred at
//! `p * period`, with a guard band of `GUARD_FWHM_MULTIPLE * pulse_fwhm` at
//! each edge of the grid that delayed content is never allowed to enter.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::field::FieldError;

/// Speed of light in µm/ps.
pub const SPEED_OF_LIGHT: f64 = 299.792_458;

/// Width of each edge guard band, in units of the pulse FWHM.
pub const GUARD_FWHM_MULTIPLE: f64 = 4.0;

pub const DEFAULT_PERIOD: f64 = 10.0;
pub const DEFAULT_PULSE_FWHM: f64 = 0.5;
pub const DEFAULT_WAVELENGTH: f64 = 1.03;
pub const DEFAULT_GRID_DT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub n_stages: usize,
    /// Repetition period of the input train (ps).
    pub period: f64,
    /// Intensity FWHM of a single pulse (ps).
    pub pulse_fwhm: f64,
    /// Carrier wavelength (µm).
    pub carrier_wavelength: f64,
    /// Sample spacing (ps).
    pub grid_dt: f64,
    /// Number of samples in the window.
    pub grid_len: usize,
    /// Fraction of energy lost at each combiner, in `[0, 1]`.
    #[serde(default)]
    pub combiner_loss: f64,
}

impl StackConfig {
    /// Default parameters for `n_stages` with a window sized by
    /// [`StackConfig::default_grid_len`].
    pub fn new(n_stages: usize) -> Self {
        let mut cfg = Self {
            n_stages,
            period: DEFAULT_PERIOD,
            pulse_fwhm: DEFAULT_PULSE_FWHM,
            carrier_wavelength: DEFAULT_WAVELENGTH,
            grid_dt: DEFAULT_GRID_DT,
            grid_len: 0,
            combiner_loss: 0.0,
        };
        cfg.grid_len = cfg.default_grid_len();
        cfg
    }

    pub fn with_combiner_loss(mut self, loss: f64) -> Self {
        self.combiner_loss = loss;
        self
    }

    pub fn pulse_count(&self) -> usize {
        1usize << self.n_stages
    }

    /// One interference fringe in delay, λ/c (ps).
    pub fn fringe_period(&self) -> f64 {
        self.carrier_wavelength / SPEED_OF_LIGHT
    }

    /// Carrier angular frequency ω₀ = 2πc/λ (rad/ps).
    pub fn carrier_freq(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.carrier_wavelength
    }

    pub fn guard_band(&self) -> f64 {
        GUARD_FWHM_MULTIPLE * self.pulse_fwhm
    }

    pub fn guard_len(&self) -> usize {
        (self.guard_band() / self.grid_dt).ceil() as usize
    }

    /// Time of the first grid sample.
    pub fn t0(&self) -> f64 {
        -0.5 * self.period - self.guard_len() as f64 * self.grid_dt
    }

    /// Centre of the slot all pulses land in when perfectly stacked.
    pub fn output_slot(&self) -> f64 {
        (self.pulse_count() - 1) as f64 * self.period
    }

    /// Smallest window holding the undelayed train (one period per pulse)
    /// between the two guard bands. Every delay vector at or below the
    /// optimum fits in such a window; anything longer is delay headroom.
    pub fn min_grid_len(&self) -> usize {
        let train = self.pulse_count() as f64 * self.period / self.grid_dt;
        train.ceil() as usize + 2 * self.guard_len()
    }

    /// Minimal window plus one period of headroom per stage, rounded up to a
    /// power of two.
    pub fn default_grid_len(&self) -> usize {
        let headroom = (self.n_stages as f64 * self.period / self.grid_dt).ceil() as usize;
        (self.min_grid_len() + headroom).next_power_of_two()
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |msg: String| Err(FieldError::InvalidConfig(msg));
        if self.n_stages < 1 {
            return bad("n_stages must be at least 1".into());
        }
        if self.n_stages > 20 {
            return bad(format!("n_stages = {} is too large", self.n_stages));
        }
        for (name, v) in [
            ("period", self.period),
            ("pulse_fwhm", self.pulse_fwhm),
            ("carrier_wavelength", self.carrier_wavelength),
            ("grid_dt", self.grid_dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.pulse_fwhm >= self.period {
            return bad(format!(
                "pulse_fwhm ({}) must be smaller than period ({})",
                self.pulse_fwhm, self.period
            ));
        }
        if !(0.0..=1.0).contains(&self.combiner_loss) {
            return bad(format!("combiner_loss must lie in [0, 1], got {}", self.combiner_loss));
        }
        let min = self.min_grid_len();
        if self.grid_len < min {
            return Err(FieldError::WindowTooSmall {
                grid_len: self.grid_len,
                min_grid_len: min,
            });
        }
        Ok(())
    }
}
