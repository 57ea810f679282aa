use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ops_core::baselines::{grid_oracle, run_episode, Controller, RandomController, SpgdConfig, SpgdController, ZeroController};
use ops_core::trajectory::{mean_std, write_jsonl, EpisodeOutcome, RunSummary};
use ops_core::{optimal_delays, DelayVector, EnvConfig, Mode, Objective, OpsEnv, Split, StackConfig};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{BenchmarkArgs, CommonArgs, ControllerKind, PresetArgs, ScanArgs, SimulateArgs, SplitArg};

const DEFAULT_MODE: Mode = Mode::Medium;
const DEFAULT_STAGES: usize = 2;
const DEFAULT_SCAN_FRINGES: f64 = 5.0;
const DEFAULT_SCAN_STEPS_PER_FRINGE: f64 = 20.0;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn prepare_out(common: &CommonArgs) -> Result<(), CliError> {
    fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out.display().to_string(), e))
}

/// Config from `--config`, or the preset for `--mode`/`--stages`. Flags
/// that contradict a config file are rejected rather than silently applied.
fn env_config(common: &CommonArgs) -> Result<EnvConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg: EnvConfig = read_json(path)?;
            if common.mode.is_some_and(|m| m != cfg.mode) {
                return Err(CliError::Config(format!("--mode contradicts mode {} in the config", cfg.mode)));
            }
            if common.stages.is_some_and(|n| n != cfg.stack.n_stages) {
                return Err(CliError::Config(format!(
                    "--stages contradicts n_stages {} in the config",
                    cfg.stack.n_stages
                )));
            }
            cfg
        }
        None => EnvConfig::preset(
            common.mode.unwrap_or(DEFAULT_MODE),
            common.stages.unwrap_or(DEFAULT_STAGES),
        ),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn controller(kind: ControllerKind, cfg: &EnvConfig, spgd: &SpgdConfig, seed: u64) -> Box<dyn Controller> {
    let n = cfg.stack.n_stages;
    match kind {
        ControllerKind::Random => Box::new(RandomController::new(n, seed)),
        ControllerKind::Spgd => Box::new(SpgdController::new(spgd.clone(), cfg.action_scale, seed)),
        ControllerKind::Zero => Box::new(ZeroController::new(n)),
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    mode: Mode,
    n_stages: usize,
    seed: u64,
    split: &'a str,
    #[serde(flatten)]
    run: RunSummary,
    truncated_episodes: usize,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = env_config(&args.common)?;
    let spgd = match &args.spgd_config {
        Some(path) => read_json(path)?,
        None => SpgdConfig::for_stack(&cfg.stack),
    };
    spgd.validate()?;
    prepare_out(&args.common)?;
    let (split, split_name) = match args.split {
        SplitArg::Train => (Split::Train, "train"),
        SplitArg::Test => (Split::Test, "test"),
    };
    let mut env = OpsEnv::new(cfg.clone(), split, 0)?;
    let mut ctrl = controller(args.controller, &cfg, &spgd, cfg.seed);
    let mut log = Vec::new();
    let mut outcomes = Vec::new();
    for episode in 0..args.episodes {
        outcomes.push(run_episode(&mut env, ctrl.as_mut(), episode, &mut log)?);
    }

    let out = &args.common.out;
    let mut w = create(&out.join("trajectory.jsonl"))?;
    write_jsonl(&log, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io("trajectory.jsonl", e))?;
    let summary = SimulateSummary {
        mode: cfg.mode,
        n_stages: cfg.stack.n_stages,
        seed: cfg.seed,
        split: split_name,
        run: RunSummary::from_outcomes(ctrl.name(), &outcomes),
        truncated_episodes: outcomes.iter().filter(|o| o.truncated).count(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("config.json"), &cfg)?;
    if args.controller == ControllerKind::Spgd {
        write_json(&out.join("spgd.json"), &spgd)?;
    }
    let mut w = create(&out.join("final_frame.csv"))?;
    env.render()?
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io("final_frame.csv", e))?;
    println!(
        "{} episodes of {}: mean final return {:.6} (std {:.6})",
        outcomes.len(),
        summary.run.controller,
        summary.run.mean_final_return,
        summary.run.std_final_return
    );
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    n_stages: usize,
    lo: DelayVector,
    hi: DelayVector,
    step: f64,
    points: usize,
    argmax: DelayVector,
    max_energy: f64,
    p_max: f64,
    max_normalized: f64,
    optimal_delays: DelayVector,
}

pub fn scan(args: &ScanArgs, write_surface: bool) -> Result<(), CliError> {
    let common = &args.common;
    if !(1..=2).contains(&args.dims) {
        return Err(CliError::Config(format!("--dims must be 1 or 2, got {}", args.dims)));
    }
    if common.stages.is_some_and(|n| n != args.dims) {
        return Err(CliError::Config("--stages must equal --dims for a scan".into()));
    }
    let stack = match &common.config {
        Some(path) => {
            let cfg: EnvConfig = read_json(path)?;
            if cfg.stack.n_stages != args.dims {
                return Err(CliError::Config(format!(
                    "config has {} stages but --dims is {}",
                    cfg.stack.n_stages, args.dims
                )));
            }
            cfg.stack
        }
        None => StackConfig::new(args.dims),
    };
    stack.validate()?;
    let fringe = stack.fringe_period();
    let window = args.window.unwrap_or(DEFAULT_SCAN_FRINGES * fringe);
    let step = args.step.unwrap_or(fringe / DEFAULT_SCAN_STEPS_PER_FRINGE);
    if !(window.is_finite() && window > 0.0) {
        return Err(CliError::Config(format!("--window must be positive, got {window}")));
    }
    let star = optimal_delays(&stack);
    let lo = DelayVector(star.0.iter().map(|t| t - window).collect());
    let hi = DelayVector(star.0.iter().map(|t| t + window).collect());
    let result = grid_oracle(&stack, &lo, &hi, step, args.budget)?;
    prepare_out(common)?;
    if write_surface {
        let mut w = create(&common.out.join("scan.csv"))?;
        result
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io("scan.csv", e))?;
    }
    let p_max = Objective::new(&stack)?.p_max();
    let report = OracleReport {
        n_stages: stack.n_stages,
        lo,
        hi,
        step,
        points: result.points(),
        argmax: result.argmax.clone(),
        max_energy: result.max_energy,
        p_max,
        max_normalized: result.max_energy / p_max,
        optimal_delays: star,
    };
    write_json(&common.out.join("oracle.json"), &report)?;
    println!(
        "argmax {:?} ps, max energy {} ({:.6} of P_max) over {} points",
        report.argmax.0, report.max_energy, report.max_normalized, report.points
    );
    Ok(())
}

/// Benchmark grid read from `--config`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub modes: Vec<Mode>,
    pub stages: Vec<usize>,
    pub controllers: Vec<ControllerKind>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default)]
    pub seed: u64,
    /// SPGD settings; defaults to the calibrated values for each stack.
    #[serde(default)]
    pub spgd: Option<SpgdConfig>,
}

fn default_seeds() -> u64 {
    10
}

fn default_episodes() -> u64 {
    1
}

impl BenchmarkConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.modes.is_empty() || self.stages.is_empty() || self.controllers.is_empty() {
            return Err(CliError::Config("modes, stages and controllers must be non-empty".into()));
        }
        if self.seeds == 0 || self.episodes == 0 {
            return Err(CliError::Config("seeds and episodes must be at least 1".into()));
        }
        if let Some(spgd) = &self.spgd {
            spgd.validate()?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct BenchmarkCell {
    mode: Mode,
    n_stages: usize,
    controller: &'static str,
    mean_final_return: f64,
    std_final_return: f64,
    final_returns: Vec<f64>,
    seeds: Vec<u64>,
}

fn benchmark_config(args: &BenchmarkArgs) -> Result<BenchmarkConfig, CliError> {
    let common = &args.common;
    let mut cfg = match &common.config {
        Some(path) => read_json(path)?,
        None => BenchmarkConfig {
            modes: common.mode.map_or_else(|| Mode::ALL.to_vec(), |m| vec![m]),
            stages: vec![common.stages.unwrap_or(DEFAULT_STAGES)],
            controllers: vec![args.controller],
            seeds: default_seeds(),
            episodes: args.episodes,
            seed: 0,
            spgd: None,
        },
    };
    if let Some(mode) = common.mode {
        cfg.modes = vec![mode];
    }
    if let Some(n) = common.stages {
        cfg.stages = vec![n];
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<(), CliError> {
    let bench = benchmark_config(args)?;
    let mut cells = Vec::new();
    for &mode in &bench.modes {
        for &n in &bench.stages {
            let probe = EnvConfig::preset(mode, n);
            probe.validate()?;
            for &kind in &bench.controllers {
                cells.push((mode, n, kind));
            }
        }
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..bench.seeds).map(move |i| (c, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, i)| {
            let (mode, n, kind) = cells[c];
            let seed = bench.seed.wrapping_add(i);
            let cfg = EnvConfig::preset(mode, n).with_seed(seed);
            let spgd = bench.spgd.clone().unwrap_or_else(|| SpgdConfig::for_stack(&cfg.stack));
            let mut env = OpsEnv::new(cfg.clone(), Split::Test, 0)?;
            let mut ctrl = controller(kind, &cfg, &spgd, seed);
            let mut log = Vec::new();
            (0..bench.episodes)
                .map(|e| run_episode(&mut env, ctrl.as_mut(), e, &mut log))
                .collect::<Result<Vec<EpisodeOutcome>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::with_capacity(cells.len());
    for (c, &(mode, n, kind)) in cells.iter().enumerate() {
        let per_seed = &results[c * bench.seeds as usize..(c + 1) * bench.seeds as usize];
        let final_returns: Vec<f64> = per_seed.iter().flatten().map(|o| o.final_return).collect();
        let (mean, std) = mean_std(&final_returns);
        rows.push(BenchmarkCell {
            mode,
            n_stages: n,
            controller: kind.name(),
            mean_final_return: mean,
            std_final_return: std,
            final_returns,
            seeds: (0..bench.seeds).map(|i| bench.seed.wrapping_add(i)).collect(),
        });
    }

    prepare_out(&args.common)?;
    let out = &args.common.out;
    let mut w = create(&out.join("benchmark.csv"))?;
    let table = (|| {
        writeln!(w, "mode,n_stages,controller,mean_final_return,std_final_return")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.mode, r.n_stages, r.controller, r.mean_final_return, r.std_final_return)?;
        }
        w.flush()
    })();
    table.map_err(|e| CliError::io("benchmark.csv", e))?;
    write_json(&out.join("benchmark.json"), &rows)?;
    write_json(&out.join("config.json"), &bench)?;
    for r in &rows {
        println!(
            "{:<6} N={} {:<6} {:.4} ± {:.4}",
            r.mode, r.n_stages, r.controller, r.mean_final_return, r.std_final_return
        );
    }
    Ok(())
}

pub fn preset(args: &PresetArgs) -> Result<(), CliError> {
    let cfg = EnvConfig::preset(args.mode, args.stages);
    cfg.validate()?;
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}
