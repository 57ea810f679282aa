//! Reference controllers and exhaustive ground-truth search.
//!
//! SPGD here is the two-sided variant: probe `τ ± u` with `u ∈ {−δ, +δ}^N`
//! and move by `γ·(J(τ+u) − J(τ−u))·u`. Against the environment each probe
//! costs one step; against [`Objective`] probes are free evaluations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

use crate::config::StackConfig;
use crate::env::{EnvError, OpsEnv, StepInfo};
use crate::field::{pulse_energy, FieldError};
use crate::noise::keyed_rng;
use crate::stacking::{
    make_pulse_train, optimal_delays, stack_groups, DelayVector, PulseGroups,
};
use crate::trajectory::{convergence_step, EpisodeOutcome, TrajectoryRecord, CONVERGENCE_LEVEL};

/// Largest grid the oracle evaluates unless told otherwise.
pub const DEFAULT_ORACLE_BUDGET: usize = 1_000_000;
/// Default SPGD probe amplitude as carrier phase (rad), i.e. `ω₀·δ`.
pub const DEFAULT_PROBE_PHASE: f64 = 0.15;
/// Default SPGD gain on the normalized return (P_N / P_max).
pub const DEFAULT_SPGD_GAIN: f64 = 8.0;

/// Relative energy difference below which oracle points tie.
pub const TIE_TOL: f64 = 1e-12;

const CONTROLLER_DOMAIN: u64 = 0x6374_726c;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("grid oracle supports at most 2 stages, config has {0}")]
    TooManyStages(usize),
    #[error("grid of {points} points exceeds the evaluation budget of {budget}")]
    Budget { points: usize, budget: usize },
    #[error("invalid scan window: {0}")]
    Window(String),
    #[error("invalid SPGD configuration: {0}")]
    Spgd(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Noiseless objective `τ ↦ P_N(τ)` with the input train split once.
#[derive(Clone, Debug)]
pub struct Objective {
    config: StackConfig,
    groups: PulseGroups,
    p_max: f64,
}

impl Objective {
    pub fn new(config: &StackConfig) -> Result<Self, FieldError> {
        let train = make_pulse_train(config)?;
        let groups = PulseGroups::split_train(&train, config);
        let p_max = pulse_energy(&stack_groups(&groups, &optimal_delays(config), config)?);
        Ok(Self {
            config: config.clone(),
            groups,
            p_max,
        })
    }

    pub fn config(&self) -> &StackConfig {
        &self.config
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn energy(&self, taus: &DelayVector) -> Result<f64, FieldError> {
        stack_groups(&self.groups, taus, &self.config).map(|f| pulse_energy(&f))
    }

    pub fn normalized(&self, taus: &DelayVector) -> Result<f64, FieldError> {
        self.energy(taus).map(|e| e / self.p_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpgdConfig {
    /// Gain γ applied to the measured objective difference.
    pub gain: f64,
    /// Probe amplitude δ (ps).
    pub perturb: f64,
    /// Iterations for free-evaluation runs.
    pub iters: usize,
}

impl SpgdConfig {
    /// Calibrated defaults for the normalized-return objective: probes of
    /// [`DEFAULT_PROBE_PHASE`] rad of carrier phase and gain
    /// [`DEFAULT_SPGD_GAIN`]. A small single-stage phase error shrinks by
    /// `γ·(ω₀δ)²`, about 18%, per iteration; larger gains go unstable at
    /// five stages once the probe cross-talk between stages adds up.
    pub fn for_stack(stack: &StackConfig) -> Self {
        Self {
            gain: DEFAULT_SPGD_GAIN,
            perturb: DEFAULT_PROBE_PHASE / stack.carrier_freq(),
            iters: 200,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !self.gain.is_finite() {
            return Err(BaselineError::Spgd(format!("gain must be finite, got {}", self.gain)));
        }
        if !(self.perturb.is_finite() && self.perturb >= 0.0) {
            return Err(BaselineError::Spgd(format!(
                "perturb must be non-negative, got {}",
                self.perturb
            )));
        }
        if self.iters < 1 {
            return Err(BaselineError::Spgd("iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn draw_probe<R: Rng + ?Sized>(n: usize, perturb: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<bool>() { perturb } else { -perturb })
        .collect()
}

fn offset(taus: &[f64], u: &[f64], sign: f64) -> DelayVector {
    DelayVector(taus.iter().zip(u).map(|(t, d)| t + sign * d).collect())
}

/// One two-sided SPGD update on a freely evaluable objective. A probe that
/// leaves the simulation window is redrawn once before the error is
/// returned.
pub fn spgd_step<F, R>(
    mut objective: F,
    taus: &DelayVector,
    cfg: &SpgdConfig,
    rng: &mut R,
) -> Result<DelayVector, BaselineError>
where
    F: FnMut(&DelayVector) -> Result<f64, FieldError>,
    R: Rng + ?Sized,
{
    let mut retried = false;
    loop {
        let u = draw_probe(taus.len(), cfg.perturb, rng);
        let measured = objective(&offset(&taus.0, &u, 1.0))
            .and_then(|plus| objective(&offset(&taus.0, &u, -1.0)).map(|minus| plus - minus));
        match measured {
            Ok(diff) => return Ok(offset(&taus.0, &u, cfg.gain * diff)),
            Err(FieldError::OutOfWindow { .. }) if !retried => retried = true,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Runs `cfg.iters` SPGD updates from `start`, returning every iterate
/// including the start.
pub fn spgd_optimize<F, R>(
    mut objective: F,
    start: DelayVector,
    cfg: &SpgdConfig,
    rng: &mut R,
) -> Result<Vec<DelayVector>, BaselineError>
where
    F: FnMut(&DelayVector) -> Result<f64, FieldError>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut path = vec![start];
    for _ in 0..cfg.iters {
        let next = spgd_step(&mut objective, path.last().expect("non-empty"), cfg, rng)?;
        path.push(next);
    }
    Ok(path)
}

/// Closed-loop policy driven by the environment's per-step info.
pub trait Controller {
    fn name(&self) -> &str;

    fn begin_episode(&mut self, _info: &StepInfo) {}

    /// Next normalized action. `steps_left` counts this step.
    fn act(&mut self, info: &StepInfo, steps_left: usize) -> Vec<f64>;
}

pub struct ZeroController {
    n_stages: usize,
}

impl ZeroController {
    pub fn new(n_stages: usize) -> Self {
        Self { n_stages }
    }
}

impl Controller for ZeroController {
    fn name(&self) -> &str {
        "zero"
    }

    fn act(&mut self, _info: &StepInfo, _steps_left: usize) -> Vec<f64> {
        vec![0.0; self.n_stages]
    }
}

/// Uniform actions in `[−1, 1]^N`.
pub struct RandomController {
    n_stages: usize,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(n_stages: usize, seed: u64) -> Self {
        Self {
            n_stages,
            rng: keyed_rng(&[CONTROLLER_DOMAIN, seed, 1], 0),
        }
    }
}

impl Controller for RandomController {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, _info: &StepInfo, _steps_left: usize) -> Vec<f64> {
        (0..self.n_stages)
            .map(|_| self.rng.random_range(-1.0..=1.0))
            .collect()
    }
}

#[derive(Clone, Debug)]
enum Probe {
    Idle,
    Plus { u: Vec<f64> },
    Minus { u: Vec<f64>, plus: f64 },
}

/// SPGD running against the environment: every probe is an environment
/// step, the measured quantity is the normalized return, and the last step
/// of an episode returns to the current estimate instead of probing.
pub struct SpgdController {
    cfg: SpgdConfig,
    action_scale: f64,
    rng: ChaCha8Rng,
    centre: Vec<f64>,
    probe: Probe,
}

impl SpgdController {
    pub fn new(cfg: SpgdConfig, action_scale: f64, seed: u64) -> Self {
        Self {
            cfg,
            action_scale,
            rng: keyed_rng(&[CONTROLLER_DOMAIN, seed, 2], 0),
            centre: Vec::new(),
            probe: Probe::Idle,
        }
    }

    pub fn estimate(&self) -> &[f64] {
        &self.centre
    }

    fn towards(&self, target: &DelayVector, info: &StepInfo) -> Vec<f64> {
        target
            .0
            .iter()
            .zip(&info.taus.0)
            .map(|(t, c)| (t - c) / self.action_scale)
            .collect()
    }
}

impl Controller for SpgdController {
    fn name(&self) -> &str {
        "spgd"
    }

    fn begin_episode(&mut self, info: &StepInfo) {
        self.centre = info.taus.0.clone();
        self.probe = Probe::Idle;
    }

    fn act(&mut self, info: &StepInfo, steps_left: usize) -> Vec<f64> {
        let measured = info.normalized_return;
        match std::mem::replace(&mut self.probe, Probe::Idle) {
            Probe::Idle => {}
            Probe::Plus { u } if steps_left > 1 => {
                let target = offset(&self.centre, &u, -1.0);
                self.probe = Probe::Minus { u, plus: measured };
                return self.towards(&target, info);
            }
            Probe::Plus { .. } => {}
            Probe::Minus { u, plus } => {
                let step = self.cfg.gain * (plus - measured);
                self.centre = offset(&self.centre, &u, step).0;
            }
        }
        if steps_left <= 1 {
            return self.towards(&DelayVector(self.centre.clone()), info);
        }
        let u = draw_probe(self.centre.len(), self.cfg.perturb, &mut self.rng);
        let target = offset(&self.centre, &u, 1.0);
        self.probe = Probe::Plus { u };
        self.towards(&target, info)
    }
}

/// Resets `env`, runs `controller` until the episode ends and appends one
/// record per step to `log`.
pub fn run_episode(
    env: &mut OpsEnv,
    controller: &mut dyn Controller,
    episode: u64,
    log: &mut Vec<TrajectoryRecord>,
) -> Result<EpisodeOutcome, EnvError> {
    env.reset()?;
    let mut info = env.info()?;
    let initial_return = info.normalized_return;
    controller.begin_episode(&info);
    let max_steps = env.config().max_steps;
    let mut returns = Vec::with_capacity(max_steps);
    loop {
        let steps_left = max_steps - info.step;
        let action = controller.act(&info, steps_left);
        let t = env.step(&action)?;
        returns.push((t.info.step, t.info.normalized_return));
        log.push(TrajectoryRecord {
            episode,
            step: t.info.step,
            action,
            taus: t.info.taus.clone(),
            taus_real: t.info.taus_real.clone(),
            energy: t.info.energy,
            normalized_return: t.info.normalized_return,
            reward: t.reward,
            done: t.done,
        });
        info = t.info;
        if t.done {
            break;
        }
    }
    Ok(EpisodeOutcome {
        episode,
        initial_return,
        final_return: info.normalized_return,
        convergence_step: convergence_step(&returns, CONVERGENCE_LEVEL),
        steps: info.step,
        truncated: info.delay_out_of_range,
    })
}

/// Runs `episodes` episodes of uniformly random actions.
pub fn random_agent(
    env: &mut OpsEnv,
    episodes: u64,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>, EnvError> {
    let mut controller = RandomController::new(env.n_stages(), seed);
    let mut log = Vec::new();
    for episode in 0..episodes {
        run_episode(env, &mut controller, episode, &mut log)?;
    }
    Ok(log)
}

/// Exhaustive scan of the noiseless objective on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridScan {
    /// Grid coordinates along each stage's delay (ps).
    pub axes: Vec<Vec<f64>>,
    /// Energies in row-major order, first stage outermost.
    pub energies: Vec<f64>,
    pub argmax: DelayVector,
    pub max_energy: f64,
}

impl GridScan {
    pub fn points(&self) -> usize {
        self.energies.len()
    }

    fn point(&self, mut index: usize) -> DelayVector {
        let mut taus = vec![0.0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            taus[d] = axis[index % axis.len()];
            index /= axis.len();
        }
        DelayVector(taus)
    }

    /// CSV `tau1_ps[,tau2_ps],energy`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.axes.len()).map(|k| format!("tau{k}_ps")).collect();
        writeln!(out, "{},energy", header.join(","))?;
        for (i, e) in self.energies.iter().enumerate() {
            let p = self.point(i);
            let coords: Vec<String> = p.0.iter().map(|t| t.to_string()).collect();
            writeln!(out, "{},{}", coords.join(","), e)?;
        }
        Ok(())
    }
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

/// Scans `P_N` over the grid `lo + i·step ≤ hi` in every stage (N ≤ 2) and
/// returns the best point. Energies within a relative [`TIE_TOL`] of each
/// other count as ties, which go to the lexicographically smallest delay
/// vector.
pub fn grid_oracle(
    config: &StackConfig,
    lo: &DelayVector,
    hi: &DelayVector,
    step: f64,
    budget: usize,
) -> Result<GridScan, BaselineError> {
    let n = config.n_stages;
    if n > 2 {
        return Err(BaselineError::TooManyStages(n));
    }
    if lo.len() != n || hi.len() != n {
        return Err(BaselineError::Window(format!("bounds must have {n} components")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(BaselineError::Window(format!("step must be positive, got {step}")));
    }
    if lo.0.iter().zip(&hi.0).any(|(l, h)| !(l < h)) {
        return Err(BaselineError::Window("lo must be below hi in every stage".into()));
    }
    let axes: Vec<Vec<f64>> = lo.0.iter().zip(&hi.0).map(|(&l, &h)| axis(l, h, step)).collect();
    let points = axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
        .unwrap_or(usize::MAX);
    if points > budget {
        return Err(BaselineError::Budget { points, budget });
    }
    let objective = Objective::new(config)?;
    let mut scan = GridScan {
        axes,
        energies: Vec::new(),
        argmax: DelayVector(Vec::new()),
        max_energy: f64::NEG_INFINITY,
    };
    scan.energies = (0..points)
        .into_par_iter()
        .map(|i| objective.energy(&scan.point(i)))
        .collect::<Result<Vec<f64>, FieldError>>()?;
    let mut best = 0;
    for (i, &e) in scan.energies.iter().enumerate() {
        if e > scan.energies[best] + TIE_TOL * scan.energies[best].abs() {
            best = i;
        }
    }
    scan.argmax = scan.point(best);
    scan.max_energy = scan.energies[best];
    Ok(scan)
}

/// Indices of strict interior local maxima.
pub fn strict_local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .collect()
}
