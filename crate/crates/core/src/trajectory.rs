//! Per-step trajectory records (JSON lines) and run summaries.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::stacking::DelayVector;

/// Normalized return an episode must reach, and hold to the end, to count
/// as converged.
pub const CONVERGENCE_LEVEL: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: u64,
    pub step: usize,
    pub action: Vec<f64>,
    pub taus: DelayVector,
    pub taus_real: DelayVector,
    pub energy: f64,
    pub normalized_return: f64,
    pub reward: f64,
    pub done: bool,
}

pub fn write_jsonl<W: Write>(records: &[TrajectoryRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode: u64,
    pub initial_return: f64,
    pub final_return: f64,
    /// First step from which the normalized return stayed at or above
    /// [`CONVERGENCE_LEVEL`] until the end of the episode.
    pub convergence_step: Option<usize>,
    pub steps: usize,
    pub truncated: bool,
}

/// First step index from which every later return is at least `level`.
pub fn convergence_step(returns: &[(usize, f64)], level: f64) -> Option<usize> {
    let mut first = None;
    for &(step, r) in returns.iter().rev() {
        if r >= level {
            first = Some(step);
        } else {
            break;
        }
    }
    first
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub controller: String,
    pub episodes: usize,
    pub mean_final_return: f64,
    /// Population standard deviation over episodes.
    pub std_final_return: f64,
    pub mean_initial_return: f64,
    pub final_returns: Vec<f64>,
    pub initial_returns: Vec<f64>,
    pub convergence_steps: Vec<Option<usize>>,
    pub mean_convergence_step: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunSummary {
    pub fn from_outcomes(controller: &str, outcomes: &[EpisodeOutcome]) -> Self {
        let final_returns: Vec<f64> = outcomes.iter().map(|o| o.final_return).collect();
        let initial_returns: Vec<f64> = outcomes.iter().map(|o| o.initial_return).collect();
        let (mean_final_return, std_final_return) = mean_std(&final_returns);
        let (mean_initial_return, _) = mean_std(&initial_returns);
        let convergence_steps: Vec<Option<usize>> =
            outcomes.iter().map(|o| o.convergence_step).collect();
        let converged: Vec<f64> = convergence_steps.iter().flatten().map(|&s| s as f64).collect();
        let mean_convergence_step = (!converged.is_empty()).then(|| mean_std(&converged).0);
        Self {
            controller: controller.to_string(),
            episodes: outcomes.len(),
            mean_final_return,
            std_final_return,
            mean_initial_return,
            final_returns,
            initial_returns,
            convergence_steps,
            mean_convergence_step,
        }
    }
}
