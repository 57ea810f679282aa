//! Handle-based surface for foreign-language wrappers.
//!
//! Everything crosses as flat `f64` buffers plus plain values; the wrapper
//! side holds no simulation state of its own.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::env::{BoxSpace, EnvConfig, EnvError, Mode, OpsEnv, RenderFrame, Split, StepInfo};

/// Registration id of the environment.
pub const ENV_ID: &str = "OPS-v0";
/// Mode used when the overrides do not name one.
pub const DEFAULT_MODE: Mode = Mode::Medium;
/// Stage count used when the overrides do not name one.
pub const DEFAULT_STAGES: usize = 2;

#[derive(Debug, Error)]
pub enum BindingError {
    #[error("unknown environment id {0:?}; expected {ENV_ID:?}")]
    UnknownId(String),
    #[error("invalid override: {0}")]
    Override(String),
    #[error("environment handle is closed")]
    Closed,
    #[error("{what} must have length {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

fn merge(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Builds the config for `id` from keyword overrides shaped like
/// [`EnvConfig`]. The preset is chosen from `mode` and `stack.n_stages` when
/// given, then every override is merged on top; unknown keys are rejected.
pub fn config_from_overrides(id: &str, overrides: &Map<String, Value>) -> Result<EnvConfig, BindingError> {
    if id != ENV_ID {
        return Err(BindingError::UnknownId(id.to_string()));
    }
    let mode = match overrides.get("mode") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| BindingError::Override(e.to_string()))?,
        None => DEFAULT_MODE,
    };
    let stages = match overrides.get("stack").and_then(|s| s.get("n_stages")) {
        Some(v) => v
            .as_u64()
            .filter(|&n| n >= 1)
            .ok_or_else(|| BindingError::Override(format!("stack.n_stages must be a positive integer, got {v}")))?
            as usize,
        None => DEFAULT_STAGES,
    };
    let preset = EnvConfig::preset(mode, stages);
    let mut value = serde_json::to_value(&preset).map_err(|e| BindingError::Override(e.to_string()))?;
    merge(&mut value, &Value::Object(overrides.clone()));
    let config: EnvConfig = serde_json::from_value(value).map_err(|e| BindingError::Override(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// One step's output in wrapper-friendly form.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Owning handle around one environment instance.
pub struct EnvHandle {
    env: Option<OpsEnv>,
    observation_space: BoxSpace,
    action_space: BoxSpace,
}

impl EnvHandle {
    pub fn new(config: EnvConfig, split: Split, instance: u64) -> Result<Self, BindingError> {
        let env = OpsEnv::new(config, split, instance)?;
        Ok(Self {
            observation_space: env.observation_space(),
            action_space: env.action_space(),
            env: Some(env),
        })
    }

    pub fn observation_space(&self) -> &BoxSpace {
        &self.observation_space
    }

    pub fn action_space(&self) -> &BoxSpace {
        &self.action_space
    }

    pub fn is_closed(&self) -> bool {
        self.env.is_none()
    }

    fn env(&mut self) -> Result<&mut OpsEnv, BindingError> {
        self.env.as_mut().ok_or(BindingError::Closed)
    }

    pub fn reset(&mut self) -> Result<Vec<f64>, BindingError> {
        Ok(self.env()?.reset()?.values)
    }

    /// Resets and writes the observation into `out`, which must hold
    /// exactly `obs_len` values.
    pub fn reset_into(&mut self, out: &mut [f64]) -> Result<(), BindingError> {
        let expected = self.observation_space.shape[0];
        if out.len() != expected {
            return Err(BindingError::Shape {
                what: "observation buffer",
                expected,
                got: out.len(),
            });
        }
        let obs = self.env()?.reset()?;
        out.copy_from_slice(&obs.values);
        Ok(())
    }

    /// Steps with a flat action. The length is checked before the
    /// environment is touched.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutput, BindingError> {
        let env = self.env.as_mut().ok_or(BindingError::Closed)?;
        let expected = self.action_space.shape[0];
        if action.len() != expected {
            return Err(BindingError::Shape {
                what: "action",
                expected,
                got: action.len(),
            });
        }
        let t = env.step(action)?;
        Ok(StepOutput {
            observation: t.observation.values,
            reward: t.reward,
            done: t.done,
            info: t.info,
        })
    }

    pub fn render(&mut self) -> Result<RenderFrame, BindingError> {
        Ok(self.env()?.render()?)
    }

    /// Releases the environment. Closing twice is an error.
    pub fn close(&mut self) -> Result<(), BindingError> {
        self.env.take().map(drop).ok_or(BindingError::Closed)
    }
}

/// `make("OPS-v0", overrides)`: a handle on the test-split instance 0 of the
/// configured environment.
pub fn make(id: &str, overrides: &Map<String, Value>) -> Result<EnvHandle, BindingError> {
    let config = config_from_overrides(id, overrides)?;
    EnvHandle::new(config, Split::Test, 0)
}
