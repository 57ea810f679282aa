//! Delay-line noise: fast Gaussian vibration around a slow piecewise-linear
//! thermal drift.
//!
//! `e_t = µ_t + σ·z`, with `z` an independent standard normal per stage and
//! `µ_t` interpolated from a knot schedule indexed by environment step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("sigma must be finite and non-negative, got {0}")]
    Sigma(f64),
    #[error("drift knot steps must be strictly increasing (knot {index})")]
    KnotOrder { index: usize },
    #[error("drift knot {index} has {got} values; expected 1 or {expected}")]
    KnotWidth { index: usize, got: usize, expected: usize },
    #[error("drift knot {index} has a non-finite value")]
    KnotValue { index: usize },
}

/// One point of the drift schedule. `mu` holds either one value shared by
/// every stage or one value per stage (ps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftKnot {
    pub step: u64,
    pub mu: Vec<f64>,
}

impl DriftKnot {
    pub fn shared(step: u64, mu: f64) -> Self {
        Self { step, mu: vec![mu] }
    }

    fn value(&self, stage: usize, shared: bool) -> f64 {
        if shared || self.mu.len() == 1 {
            self.mu[0]
        } else {
            self.mu[stage]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the fast component per stage (ps).
    pub sigma: f64,
    #[serde(default)]
    pub drift_knots: Vec<DriftKnot>,
    #[serde(default)]
    pub seed: u64,
    /// Use the first stage's schedule for every stage.
    #[serde(default)]
    pub shared_drift: bool,
}

impl NoiseConfig {
    pub fn quiet() -> Self {
        Self::gaussian(0.0)
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            sigma,
            drift_knots: Vec::new(),
            seed: 0,
            shared_drift: false,
        }
    }

    pub fn with_knots(mut self, knots: Vec<DriftKnot>) -> Self {
        self.drift_knots = knots;
        self
    }

    pub fn validate(&self, n_stages: usize) -> Result<(), NoiseError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(NoiseError::Sigma(self.sigma));
        }
        for (index, knot) in self.drift_knots.iter().enumerate() {
            if index > 0 && knot.step <= self.drift_knots[index - 1].step {
                return Err(NoiseError::KnotOrder { index });
            }
            let width = knot.mu.len();
            if width != 1 && width != n_stages && !(self.shared_drift && width > 0) {
                return Err(NoiseError::KnotWidth {
                    index,
                    got: width,
                    expected: n_stages,
                });
            }
            if knot.mu.iter().any(|m| !m.is_finite()) {
                return Err(NoiseError::KnotValue { index });
            }
        }
        Ok(())
    }
}

/// Drift mean µ at `step` for each of `n_stages` stages: linear between
/// the surrounding knots, held constant outside the knot range, zero when
/// there are no knots.
pub fn drift_mean(config: &NoiseConfig, step: u64, n_stages: usize) -> Vec<f64> {
    let knots = &config.drift_knots;
    let shared = config.shared_drift;
    let (Some(first), Some(last)) = (knots.first(), knots.last()) else {
        return vec![0.0; n_stages];
    };
    let at = |knot: &DriftKnot| (0..n_stages).map(|k| knot.value(k, shared)).collect();
    if step <= first.step {
        return at(first);
    }
    if step >= last.step {
        return at(last);
    }
    let right = knots.partition_point(|k| k.step <= step);
    let (a, b) = (&knots[right - 1], &knots[right]);
    let frac = (step - a.step) as f64 / (b.step - a.step) as f64;
    (0..n_stages)
        .map(|k| {
            let (va, vb) = (a.value(k, shared), b.value(k, shared));
            va + (vb - va) * frac
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    /// Per-stage delay perturbation e_t (ps).
    pub e: Vec<f64>,
    /// Drift mean µ_t used for this draw (ps).
    pub mean_used: Vec<f64>,
}

/// Draws `e_t` for `step`, advancing `rng` by exactly `n_stages` normals.
pub fn sample_noise<R: Rng + ?Sized>(
    config: &NoiseConfig,
    n_stages: usize,
    step: u64,
    rng: &mut R,
) -> NoiseDraw {
    let mean_used = drift_mean(config, step, n_stages);
    let e = mean_used
        .iter()
        .map(|mu| {
            let z: f64 = StandardNormal.sample(rng);
            mu + config.sigma * z
        })
        .collect();
    NoiseDraw { e, mean_used }
}

/// Key word separating noise streams from other consumers of the same seed.
pub const NOISE_DOMAIN: u64 = 0x6e6f_6973_65;

/// Builds a ChaCha generator keyed by up to four words and selected by
/// `stream`, so environment instances never share a sequence.
pub fn keyed_rng(key_words: &[u64], stream: u64) -> ChaCha8Rng {
    assert!(key_words.len() <= 4, "at most four key words");
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip(key_words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// A noise source owning its RNG state.
#[derive(Clone, Debug)]
pub struct NoiseProcess {
    config: NoiseConfig,
    n_stages: usize,
    rng: ChaCha8Rng,
}

impl NoiseProcess {
    pub fn new(
        config: NoiseConfig,
        n_stages: usize,
        env_seed: u64,
        instance: u64,
    ) -> Result<Self, NoiseError> {
        config.validate(n_stages)?;
        let rng = keyed_rng(&[NOISE_DOMAIN, env_seed, config.seed], instance);
        Ok(Self {
            config,
            n_stages,
            rng,
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn sample(&mut self, step: u64) -> NoiseDraw {
        sample_noise(&self.config, self.n_stages, step, &mut self.rng)
    }
}
