//! Episodic control environment around the stacker.
//!
//! The agent commands additive delay increments. Each step the active noise
//! process perturbs the commanded delays, the perturbed delays drive the
//! stacker, and the agent observes the output pulse picture together with a
//! reward derived from the output energy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use thiserror::Error;

use crate::config::StackConfig;
use crate::field::{pulse_energy, FieldError, FieldGrid};
use crate::noise::{keyed_rng, DriftKnot, NoiseConfig, NoiseError, NoiseProcess};
use crate::stacking::{
    make_pulse_train, optimal_delays, reference_energies, stack_groups, DelayVector, PulseGroups,
    ReferenceEnergies,
};

pub const DEFAULT_MAX_STEPS: usize = 200;
/// Default fast-noise σ, in fringes (λ/c).
pub const DEFAULT_SIGMA_FRINGES: f64 = 0.02;
/// Default delay increment per unit action, in fringes.
pub const DEFAULT_ACTION_FRINGES: f64 = 0.5;
/// Step index of the far knot of the default hard-mode drift schedules.
pub const DRIFT_HORIZON: u64 = 10_000;
/// Random-start half width for medium and hard modes, in pulse FWHMs.
pub const RANDOM_START_FWHMS: f64 = 2.0;
/// Relative tolerance within which an energy outside `[P_min, P_max]` is
/// clamped rather than rejected.
pub const REWARD_CLAMP_TOL: f64 = 1e-6;

const INIT_DOMAIN: u64 = 0x696e_6974;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Easy,
    Medium,
    Hard,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Easy, Mode::Medium, Mode::Hard];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Easy => "easy",
            Mode::Medium => "medium",
            Mode::Hard => "hard",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Mode::Easy),
            "medium" => Ok(Mode::Medium),
            "hard" => Ok(Mode::Hard),
            other => Err(format!("unknown mode `{other}` (expected easy, medium or hard)")),
        }
    }
}

/// What the observation vector carries per bin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    #[default]
    Amplitude,
    Intensity,
}

/// Which noise process an instance runs against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub stack: StackConfig,
    pub noise_train: NoiseConfig,
    pub noise_test: NoiseConfig,
    pub mode: Mode,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Delay increment (ps) for a unit action.
    pub action_scale: f64,
    pub obs_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub observation: ObservationKind,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl EnvConfig {
    /// Default configuration for a mode and stage count.
    pub fn preset(mode: Mode, n_stages: usize) -> Self {
        let stack = StackConfig::new(n_stages);
        let fringe = stack.fringe_period();
        let sigma = DEFAULT_SIGMA_FRINGES * fringe;
        let (noise_train, noise_test) = match mode {
            Mode::Easy | Mode::Medium => (NoiseConfig::gaussian(sigma), NoiseConfig::gaussian(sigma)),
            Mode::Hard => (
                NoiseConfig::gaussian(sigma).with_knots(vec![
                    DriftKnot::shared(0, 0.0),
                    DriftKnot::shared(DRIFT_HORIZON, 0.3 * fringe),
                ]),
                NoiseConfig::gaussian(sigma).with_knots(vec![
                    DriftKnot::shared(0, 0.1 * fringe),
                    DriftKnot::shared(DRIFT_HORIZON, -0.2 * fringe),
                ]),
            ),
        };
        let obs_len = default_obs_len(&stack);
        Self {
            stack,
            noise_train,
            noise_test,
            mode,
            max_steps: DEFAULT_MAX_STEPS,
            action_scale: DEFAULT_ACTION_FRINGES * fringe,
            obs_len,
            seed: 0,
            observation: ObservationKind::Amplitude,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sets σ of both noise processes.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.noise_train.sigma = sigma;
        self.noise_test.sigma = sigma;
        self
    }

    pub fn noise(&self, split: Split) -> &NoiseConfig {
        match split {
            Split::Train => &self.noise_train,
            Split::Test => &self.noise_test,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.stack.validate()?;
        let n = self.stack.n_stages;
        self.noise_train.validate(n)?;
        self.noise_test.validate(n)?;
        if self.mode == Mode::Medium
            && !(self.noise_train.drift_knots.is_empty() && self.noise_test.drift_knots.is_empty())
        {
            return Err(EnvError::Config(
                "medium mode requires time-independent noise (empty drift_knots)".into(),
            ));
        }
        if self.max_steps < 1 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        if !(self.action_scale.is_finite() && self.action_scale > 0.0) {
            return Err(EnvError::Config(format!(
                "action_scale must be positive, got {}",
                self.action_scale
            )));
        }
        if self.obs_len < 1 {
            return Err(EnvError::Config("obs_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Two grid samples per observation bin across the window interior.
pub fn default_obs_len(stack: &StackConfig) -> usize {
    observed_samples(stack).div_ceil(2)
}

fn observed_samples(stack: &StackConfig) -> usize {
    stack.grid_len.saturating_sub(2 * stack.guard_len())
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("initial delays {0:?} leave the simulation window")]
    InitOutOfRange(DelayVector),
    #[error("step called before reset")]
    NotReset,
    #[error("step called on a finished episode; call reset")]
    EpisodeDone,
    #[error("action has {got} components; expected {expected}")]
    ActionShape { expected: usize, got: usize },
    #[error("action components must be finite")]
    NonFiniteAction,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("reference energies must satisfy P_min < P_max (got {p_min}, {p_max})")]
    Reference { p_min: f64, p_max: f64 },
    #[error("energy {p} lies outside [{p_min}, {p_max}] beyond tolerance")]
    OutOfRange { p: f64, p_min: f64, p_max: f64 },
}

/// `r = −(P − P_max)² / (P_min − P_max)²`, in `[−1, 0]`.
pub fn compute_reward(p: f64, p_max: f64, p_min: f64) -> Result<f64, RewardError> {
    if !(p_min.is_finite() && p_max.is_finite() && p_min < p_max) {
        return Err(RewardError::Reference { p_min, p_max });
    }
    let span = p_max - p_min;
    let tol = REWARD_CLAMP_TOL * span;
    if !p.is_finite() || p < p_min - tol || p > p_max + tol {
        return Err(RewardError::OutOfRange { p, p_min, p_max });
    }
    let clamped = p.clamp(p_min, p_max);
    if clamped != p {
        log::warn!("energy {p} clamped into [{p_min}, {p_max}]");
    }
    let d = clamped - p_max;
    Ok(-(d * d) / (span * span))
}

/// Initial delays for a new episode: within a quarter fringe of the optimum
/// in easy mode, within ±2 pulse widths in medium and hard mode.
pub fn init_delays<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> DelayVector {
    let stack = &config.stack;
    let radius = match config.mode {
        Mode::Easy => stack.fringe_period() / 4.0,
        Mode::Medium | Mode::Hard => RANDOM_START_FWHMS * stack.pulse_fwhm,
    };
    DelayVector(
        optimal_delays(stack)
            .0
            .into_iter()
            .map(|tau| tau + rng.random_range(-radius..=radius))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub energy: f64,
    pub normalized_return: f64,
    pub taus: DelayVector,
    pub taus_real: DelayVector,
    pub step: usize,
    pub delay_out_of_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderFrame {
    pub t_ps: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub energy: f64,
    pub normalized_return: f64,
    pub step: usize,
}

impl RenderFrame {
    /// CSV with header `t_ps,amplitude`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_ps,amplitude")?;
        for (t, a) in self.t_ps.iter().zip(&self.amplitude) {
            writeln!(out, "{t},{a}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    pub shape: Vec<usize>,
    pub low: f64,
    pub high: f64,
}

/// Detector model: bins of equal width tile the window interior and each
/// reports the mean intensity of the grid cells it overlaps (area
/// weighted), so the binned energy equals the field energy.
#[derive(Clone, Debug)]
struct ObservationWindow {
    start: usize,
    native: usize,
    bins: usize,
    dt: f64,
    t_first: f64,
}

impl ObservationWindow {
    fn new(stack: &StackConfig, bins: usize) -> Self {
        let start = stack.guard_len();
        Self {
            start,
            native: observed_samples(stack),
            bins,
            dt: stack.grid_dt,
            t_first: stack.t0() + start as f64 * stack.grid_dt,
        }
    }

    fn bin_width(&self) -> f64 {
        self.native as f64 / self.bins as f64
    }

    /// Bin-centre times (ps).
    fn time_axis(&self) -> Vec<f64> {
        let h = self.bin_width();
        (0..self.bins)
            .map(|b| self.t_first - 0.5 * self.dt + (b as f64 + 0.5) * h * self.dt)
            .collect()
    }

    fn mean_intensity(&self, field: &FieldGrid) -> Vec<f64> {
        let h = self.bin_width();
        let mut acc = vec![0.0; self.bins];
        for j in 0..self.native {
            let intensity = field.samples[self.start + j].norm_sqr();
            let (lo, hi) = (j as f64, j as f64 + 1.0);
            let mut b = ((lo / h).floor() as usize).min(self.bins - 1);
            loop {
                let b_lo = b as f64 * h;
                let b_hi = if b + 1 == self.bins { self.native as f64 } else { b_lo + h };
                let overlap = hi.min(b_hi) - lo.max(b_lo);
                if overlap > 0.0 {
                    acc[b] += overlap * intensity;
                }
                if b_hi >= hi || b + 1 == self.bins {
                    break;
                }
                b += 1;
            }
        }
        acc.iter_mut().for_each(|v| *v /= h);
        acc
    }

    fn bin_dt(&self) -> f64 {
        self.bin_width() * self.dt
    }
}

#[derive(Clone, Debug)]
struct EpisodeState {
    taus: DelayVector,
    taus_real: DelayVector,
    step: usize,
    done: bool,
    energy: f64,
    out_of_range: bool,
    amplitude: Vec<f64>,
    observation: Observation,
}

/// One environment instance. Single-owner: calls must be serialised, but
/// any number of instances may run side by side.
#[derive(Clone, Debug)]
pub struct OpsEnv {
    config: EnvConfig,
    split: Split,
    instance: u64,
    groups: PulseGroups,
    reference: ReferenceEnergies,
    window: ObservationWindow,
    init_rng: ChaCha8Rng,
    noise: NoiseProcess,
    global_step: u64,
    episodes: u64,
    state: Option<EpisodeState>,
}

impl OpsEnv {
    /// Builds instance `instance` of the environment. RNG streams derive from
    /// `(config.seed, instance)`; train and test instances share init and
    /// fast-noise streams and differ only in their noise configuration.
    pub fn new(config: EnvConfig, split: Split, instance: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.stack.n_stages;
        let train = make_pulse_train(&config.stack)?;
        let groups = PulseGroups::split_train(&train, &config.stack);
        let reference = reference_energies(&config.stack)?;
        let window = ObservationWindow::new(&config.stack, config.obs_len);
        let init_rng = keyed_rng(&[INIT_DOMAIN, config.seed], instance);
        let noise = NoiseProcess::new(config.noise(split).clone(), n, config.seed, instance)?;
        Ok(Self {
            config,
            split,
            instance,
            groups,
            reference,
            window,
            init_rng,
            noise,
            global_step: 0,
            episodes: 0,
            state: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn instance(&self) -> u64 {
        self.instance
    }

    pub fn n_stages(&self) -> usize {
        self.config.stack.n_stages
    }

    pub fn reference(&self) -> ReferenceEnergies {
        self.reference
    }

    /// Number of `reset` calls so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Steps taken across all episodes; the drift schedule is indexed by it.
    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn observation_space(&self) -> BoxSpace {
        BoxSpace {
            shape: vec![self.config.obs_len],
            low: 0.0,
            high: f64::INFINITY,
        }
    }

    pub fn action_space(&self) -> BoxSpace {
        BoxSpace {
            shape: vec![self.n_stages()],
            low: -1.0,
            high: 1.0,
        }
    }

    /// Starts a new episode and returns its first observation.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.episodes += 1;
        let taus = init_delays(&self.config, &mut self.init_rng);
        let state = self.evaluate(taus, 0)?;
        if state.out_of_range {
            return Err(EnvError::InitOutOfRange(state.taus_real));
        }
        let obs = state.observation.clone();
        self.state = Some(state);
        Ok(obs)
    }

    /// Overrides the commanded delays of the running episode. Takes effect
    /// on the next `step`; no noise is drawn.
    pub fn set_delays(&mut self, taus: DelayVector) -> Result<(), EnvError> {
        let n = self.n_stages();
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if taus.len() != n {
            return Err(FieldError::DelayCount {
                expected: n,
                got: taus.len(),
            }
            .into());
        }
        state.taus = taus;
        Ok(())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        let n = self.n_stages();
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        if state.done {
            return Err(EnvError::EpisodeDone);
        }
        if action.len() != n {
            return Err(EnvError::ActionShape {
                expected: n,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let scale = self.config.action_scale;
        let taus = DelayVector(
            state
                .taus
                .0
                .iter()
                .zip(action)
                .map(|(tau, a)| tau + scale * a.clamp(-1.0, 1.0))
                .collect(),
        );
        let step = state.step + 1;
        let mut next = self.evaluate(taus, step)?;
        self.global_step += 1;
        next.done = next.out_of_range || step >= self.config.max_steps;
        self.state = Some(next);
        self.current()
    }

    /// Draws noise for the current global step and evaluates `taus`.
    fn evaluate(&mut self, taus: DelayVector, step: usize) -> Result<EpisodeState, EnvError> {
        let draw = self.noise.sample(self.global_step);
        let taus_real = DelayVector(taus.0.iter().zip(&draw.e).map(|(t, e)| t + e).collect());
        let (energy, amplitude, out_of_range) =
            match stack_groups(&self.groups, &taus_real, &self.config.stack) {
                Ok(field) => {
                    let intensity = self.window.mean_intensity(&field);
                    let amplitude: Vec<f64> = intensity.iter().map(|i| i.sqrt()).collect();
                    (pulse_energy(&field), amplitude, false)
                }
                Err(FieldError::OutOfWindow { .. }) => (0.0, vec![0.0; self.window.bins], true),
                Err(e) => return Err(e.into()),
            };
        let values = match self.config.observation {
            ObservationKind::Amplitude => amplitude.clone(),
            ObservationKind::Intensity => amplitude.iter().map(|a| a * a).collect(),
        };
        Ok(EpisodeState {
            taus,
            taus_real,
            step,
            done: false,
            energy,
            out_of_range,
            amplitude,
            observation: Observation { values },
        })
    }

    /// The transition describing the current state.
    pub fn current(&self) -> Result<Transition, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let reward = compute_reward(state.energy, self.reference.p_max, self.reference.p_min)?;
        Ok(Transition {
            observation: state.observation.clone(),
            reward,
            done: state.done,
            info: self.info_of(state),
        })
    }

    fn info_of(&self, state: &EpisodeState) -> StepInfo {
        StepInfo {
            energy: state.energy,
            normalized_return: state.energy / self.reference.p_max,
            taus: state.taus.clone(),
            taus_real: state.taus_real.clone(),
            step: state.step,
            delay_out_of_range: state.out_of_range,
        }
    }

    pub fn info(&self) -> Result<StepInfo, EnvError> {
        self.state
            .as_ref()
            .map(|s| self.info_of(s))
            .ok_or(EnvError::NotReset)
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_some_and(|s| s.done)
    }

    /// Width of one observation bin (ps).
    pub fn observation_dt(&self) -> f64 {
        self.window.bin_dt()
    }

    /// Plot-ready snapshot of the current output amplitude. Pure read.
    pub fn render(&self) -> Result<RenderFrame, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        Ok(RenderFrame {
            t_ps: self.window.time_axis(),
            amplitude: state.amplitude.clone(),
            energy: state.energy,
            normalized_return: state.energy / self.reference.p_max,
            step: state.step,
        })
    }
}
