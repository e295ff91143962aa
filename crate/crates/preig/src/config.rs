//! Run configuration (JSON, strictly validated).

use std::path::{Path, PathBuf};

use preig_core::dataset::DEFAULT_MAX_LAG;
use preig_core::denoise::{Criterion, DEFAULT_MAX_ORDER};
use preig_core::loss::{LossWeights, PhysicsScope};
use preig_core::optim::{LbfgsConfig, NadamConfig};
use preig_core::pbt::PopulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV; relative paths are taken from the config file's directory.
    pub data: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub denoise: DenoiseConfig,
    #[serde(default)]
    pub lags: LagConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub pbt: PbtConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CriterionName {
    #[default]
    Aic,
    Bic,
    Cv,
}

impl From<CriterionName> for Criterion {
    fn from(c: CriterionName) -> Self {
        match c {
            CriterionName::Aic => Criterion::Aic,
            CriterionName::Bic => Criterion::Bic,
            CriterionName::Cv => Criterion::Cv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub enabled: bool,
    pub criterion: CriterionName,
    pub max_order: usize,
    pub apply_to_target: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { enabled: true, criterion: CriterionName::Aic, max_order: DEFAULT_MAX_ORDER, apply_to_target: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LagSource {
    #[default]
    Denoised,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagConfig {
    pub max_lag: usize,
    /// Which version of the series the correlations are computed on.
    pub select_on: LagSource,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self { max_lag: DEFAULT_MAX_LAG, select_on: LagSource::Denoised }
    }
}

/// End of the training range: a raw row index (exclusive) or the date label
/// of the last training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainEnd {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// When absent, the first `train_fraction` of rows are used for training.
    pub train_end: Option<TrainEnd>,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_end: None, train_fraction: 0.8, val_fraction: 0.1 }
    }
}

impl SplitConfig {
    /// Resolve to an exclusive raw index given the table's date labels.
    pub fn train_end(&self, labels: &[String]) -> Result<usize> {
        match &self.train_end {
            Some(TrainEnd::Index(i)) if *i <= labels.len() => Ok(*i),
            Some(TrainEnd::Index(i)) => {
                Err(Error::Config(format!("split.train_end {i} is beyond the {} data rows", labels.len())))
            }
            Some(TrainEnd::Label(l)) => labels
                .iter()
                .position(|x| x == l)
                .map(|p| p + 1)
                .ok_or_else(|| Error::Config(format!("split.train_end '{l}' is not a date in the data"))),
            None => Ok((labels.len() as f64 * self.train_fraction).floor() as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Master seed for initialization and population training.
    pub seed: u64,
    /// Train on the min-max normalized target and denormalize predictions.
    pub normalize_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 8, seed: 0, normalize_target: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScopeName {
    SameStep,
    #[default]
    AllLags,
}

impl From<ScopeName> for PhysicsScope {
    fn from(s: ScopeName) -> Self {
        match s {
            ScopeName::SameStep => PhysicsScope::SameStep,
            ScopeName::AllLags => PhysicsScope::AllLags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda1: f64,
    pub physics_scope: ScopeName,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda1: 1.0, physics_scope: ScopeName::AllLags }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PbtConfig {
    pub population: usize,
    pub generations: usize,
    pub nadam_steps: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_grad_tol: f64,
    pub epsilon: f64,
    pub eta_range: (f64, f64),
    pub lambda2_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub beta1: f64,
    pub beta2: f64,
    pub nadam_eps: f64,
    pub lbfgs_memory: usize,
}

impl Default for PbtConfig {
    fn default() -> Self {
        let p = PopulationConfig::default();
        Self {
            population: p.population,
            generations: p.generations,
            nadam_steps: p.inner_nadam_steps,
            lbfgs_iters: p.inner_lbfgs_iters,
            lbfgs_grad_tol: p.lbfgs_grad_tol,
            epsilon: p.epsilon,
            eta_range: p.eta_range,
            lambda2_range: p.lambda2_range,
            scale_range: p.scale_range,
            beta1: p.nadam.beta1,
            beta2: p.nadam.beta2,
            nadam_eps: p.nadam.eps,
            lbfgs_memory: p.lbfgs.memory,
        }
    }
}

impl RunConfig {
    /// Parse and validate `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.schema, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("data", &self.data), ("schema", &self.schema)] {
            if !p.is_file() {
                return Err(Error::Config(format!("{what} file not found: {}", p.display())));
            }
        }
        if self.model.hidden == 0 {
            return Err(Error::Config("model.hidden must be at least 1".into()));
        }
        if !(self.split.val_fraction > 0.0 && self.split.val_fraction < 1.0) {
            return Err(Error::Config("split.val_fraction must lie in (0, 1)".into()));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        if !(self.loss.lambda1 >= 0.0 && self.loss.lambda1.is_finite()) {
            return Err(Error::Config("loss.lambda1 must be finite and non-negative".into()));
        }
        if self.pbt.lbfgs_memory == 0 {
            return Err(Error::Config("pbt.lbfgs_memory must be at least 1".into()));
        }
        self.population().validate().map_err(|e| Error::Config(format!("pbt: {e}")))
    }

    pub fn population(&self) -> PopulationConfig {
        let p = &self.pbt;
        PopulationConfig {
            population: p.population,
            generations: p.generations,
            hidden: self.model.hidden,
            inner_nadam_steps: p.nadam_steps,
            inner_lbfgs_iters: p.lbfgs_iters,
            lbfgs_grad_tol: p.lbfgs_grad_tol,
            epsilon: p.epsilon,
            scale_range: p.scale_range,
            eta_range: p.eta_range,
            lambda2_range: p.lambda2_range,
            master_seed: self.model.seed,
            nadam: NadamConfig { beta1: p.beta1, beta2: p.beta2, eps: p.nadam_eps, ..Default::default() },
            lbfgs: LbfgsConfig { memory: p.lbfgs_memory, ..Default::default() },
        }
    }

    /// `lambda1` and scope; `lambda2` is evolved per candidate.
    pub fn loss_weights(&self, lambda2: f64) -> LossWeights {
        LossWeights { lambda1: self.loss.lambda1, lambda2, scope: self.loss.physics_scope.into() }
    }
}
