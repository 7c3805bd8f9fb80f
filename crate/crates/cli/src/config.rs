//! Experiment configuration files and their resolution against a model.

use std::fs;
use std::path::{Path, PathBuf};

use frodest_core::io::{parse_model, WeightSpec};
use frodest_core::simulator::gen_bounded_noise;
use frodest_core::{EstimatorConfig, FodnModel, NoiseBounds, VApprox};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub b_w: f64,
    pub b_v: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { b_w: 0.05, b_v: 0.1 }
    }
}

/// Prior estimate: `"zero"`, the leading block `x̂[0]`, or the full lifted vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Named(String),
    Values(Vec<f64>),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Named("zero".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(rename = "Q", default = "unit_weight")]
    pub q: WeightSpec,
    #[serde(rename = "R", default = "unit_weight")]
    pub r: WeightSpec,
    #[serde(rename = "P0", default = "unit_weight")]
    pub p0: WeightSpec,
    #[serde(default)]
    pub x0_hat: PriorSpec,
}

fn unit_weight() -> WeightSpec {
    WeightSpec::Scalar(1.0)
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            q: unit_weight(),
            r: unit_weight(),
            p0: unit_weight(),
            x0_hat: PriorSpec::default(),
        }
    }
}

/// Known input `u[k]` fed to the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    #[default]
    Zero,
    /// `amplitude · sin(2πk / period)` on every input channel.
    Sine { amplitude: f64, period: f64 },
    /// Explicit `u[0..N]`, one row per step.
    Values(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_path: PathBuf,
    #[serde(default = "default_v")]
    pub v: usize,
    #[serde(rename = "N", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub input: InputSpec,
    /// Initial state; drawn uniformly from `[-1, 1]ⁿ` with the seed when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Largest window searched for the controllability and observability margins.
    #[serde(default = "default_window_cap")]
    pub window_cap: usize,
}

fn default_v() -> usize {
    2
}

fn default_horizon() -> usize {
    100
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_window_cap() -> usize {
    50
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub v: Option<usize>,
    pub horizon: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A validated configuration together with its model.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: FodnModel,
    pub model_bytes: Vec<u8>,
}

impl ExperimentConfig {
    /// Reads a configuration file; `model_path` is taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if cfg.model_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.model_path = dir.join(&cfg.model_path);
            }
        }
        Ok(cfg)
    }

    fn from_overrides(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(path) => Self::load(path)?,
            None => {
                let model_path = o
                    .model
                    .clone()
                    .ok_or_else(|| CliError::Config("either --config or --model is required".into()))?;
                serde_json::from_value(serde_json::json!({ "model_path": model_path }))
                    .expect("defaults fill every other field")
            }
        };
        if let Some(m) = &o.model {
            cfg.model_path = m.clone();
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(v) = o.v {
            cfg.v = v;
        }
        if let Some(n) = o.horizon {
            cfg.horizon = n;
        }
        if let Some(out) = &o.out {
            cfg.outputs = out.clone();
        }
        Ok(cfg)
    }
}

impl Experiment {
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let config = ExperimentConfig::from_overrides(o)?;
        if config.v < 1 {
            return Err(CliError::Config("v must be at least 1".into()));
        }
        if config.horizon < 1 {
            return Err(CliError::Config("N must be at least 1".into()));
        }
        if config.window_cap < 1 {
            return Err(CliError::Config("window_cap must be at least 1".into()));
        }
        NoiseBounds::new(config.noise.b_w, config.noise.b_v).map_err(|e| CliError::Config(e.to_string()))?;
        let path = &config.model_path;
        let model_bytes = fs::read(path)
            .map_err(|e| CliError::Model(format!("cannot read model file {}: {e}", path.display())))?;
        let text = String::from_utf8(model_bytes.clone())
            .map_err(|_| CliError::Model(format!("model file {} is not UTF-8", path.display())))?;
        let model = parse_model(&text).map_err(|e| CliError::Model(format!("model file {}: {e}", path.display())))?;
        let exp = Experiment { config, model, model_bytes };
        exp.check_signals()?;
        Ok(exp)
    }

    fn check_signals(&self) -> Result<(), CliError> {
        let dims = self.model.dims();
        if let Some(x0) = &self.config.x0 {
            if x0.len() != dims.n {
                return Err(CliError::Config(format!("x0 has {} entries, the model has n = {}", x0.len(), dims.n)));
            }
        }
        if let InputSpec::Values(rows) = &self.config.input {
            if rows.len() < self.config.horizon {
                return Err(CliError::Config(format!(
                    "input lists {} steps, N = {}",
                    rows.len(),
                    self.config.horizon
                )));
            }
            if let Some(i) = rows.iter().position(|r| r.len() != dims.m) {
                return Err(CliError::Config(format!("input row {i} has {} entries, m = {}", rows[i].len(), dims.m)));
            }
        }
        Ok(())
    }

    pub fn noise_bounds(&self) -> NoiseBounds {
        NoiseBounds::new(self.config.noise.b_w, self.config.noise.b_v).expect("validated in resolve")
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        let m = self.model.dims().m;
        (0..self.config.horizon)
            .map(|k| match &self.config.input {
                InputSpec::Zero => DVector::zeros(m),
                InputSpec::Sine { amplitude, period } => {
                    DVector::from_element(m, amplitude * (2.0 * std::f64::consts::PI * k as f64 / period).sin())
                }
                InputSpec::Values(rows) => DVector::from_row_slice(&rows[k]),
            })
            .collect()
    }

    /// Initial state and the `(w, v')` noise realization, all derived from the seed.
    pub fn initial_state_and_noise(&self) -> (DVector<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        use rand::{Rng, SeedableRng};
        let dims = self.model.dims();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.config.seed);
        let drawn = DVector::from_fn(dims.n, |_, _| rng.random_range(-1.0..1.0));
        let x0 = self.config.x0.as_ref().map_or(drawn, |x| DVector::from_row_slice(x));
        let noise_seed: u64 = rng.random();
        let (w, v) = gen_bounded_noise(self.noise_bounds(), dims.p, dims.q, self.config.horizon, noise_seed);
        (x0, w, v)
    }

    pub fn estimator_config(&self, vapprox: &VApprox) -> Result<EstimatorConfig, CliError> {
        let spec = &self.config.estimator;
        let (n, q, d) = (vapprox.layout().n, vapprox.output_dim(), vapprox.dim());
        let cfg_err = |e: frodest_core::Error| CliError::Config(format!("estimator weights: {e}"));
        let qs = spec.q.to_schedule("Q", n, 0).map_err(cfg_err)?;
        let rs = spec.r.to_schedule("R", q, 1).map_err(cfg_err)?;
        let p0: DMatrix<f64> = spec.p0.to_matrix("P0", d).map_err(cfg_err)?;
        let x0_hat = match &spec.x0_hat {
            PriorSpec::Named(name) if name == "zero" => DVector::zeros(d),
            PriorSpec::Named(other) => {
                return Err(CliError::Config(format!("unknown prior {other:?}; use \"zero\" or a vector")));
            }
            PriorSpec::Values(vals) if vals.len() == n => {
                vapprox.initial_state(&DVector::from_row_slice(vals)).map_err(cfg_err)?
            }
            PriorSpec::Values(vals) if vals.len() == d => DVector::from_row_slice(vals),
            PriorSpec::Values(vals) => {
                return Err(CliError::Config(format!(
                    "x0_hat has {} entries, expected n = {n} or the lifted dimension {d}",
                    vals.len()
                )));
            }
        };
        let cfg = EstimatorConfig::new(qs, rs, p0, x0_hat).map_err(cfg_err)?;
        cfg.validate_for(vapprox).map_err(cfg_err)?;
        Ok(cfg)
    }
}
