//! TOML run configuration for the `fdht` commands.
//!
//! ```toml
//! [model]
//! input_size = 256
//! n_shape = [4, 4, 4, 5]
//! m_shape = [2, 2, 2, 2]
//! leaf_rank = 4
//! internal_rank = 4
//! mode = "full"
//!
//! [train]
//! lr = 0.001
//! epochs = 50
//!
//! [paths]
//! metrics = "metrics.csv"
//! ```
//!
//! Every section and key is optional; missing values take their defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::{sweep_reference_spec, FactorizationSpec};
use crate::error::{Error, Result};
use crate::ht::DEFAULT_ORACLE_CAP;
use crate::lstm::{make_cell, CellMode, Classifier, Head, LstmCell};
use crate::train::{SyntheticTask, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Frame length `N_x`.
    pub input_size: usize,
    pub n_shape: Vec<usize>,
    /// Output modes; `H = ∏m`.
    pub m_shape: Vec<usize>,
    pub leaf_rank: usize,
    pub internal_rank: usize,
    pub mode: CellMode,
    /// Initialization seed for the cell and head.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            n_shape: vec![4, 4, 4, 5],
            m_shape: vec![2, 2, 2, 2],
            leaf_rank: 4,
            internal_rank: 4,
            mode: CellMode::Full,
            seed: 11,
        }
    }
}

impl ModelConfig {
    pub fn hidden_size(&self) -> usize {
        self.m_shape.iter().product()
    }

    pub fn build_cell(&self) -> Result<LstmCell> {
        match self.mode {
            CellMode::Dense => LstmCell::dense(self.input_size, self.hidden_size(), self.seed),
            mode => make_cell(
                self.input_size,
                &self.n_shape,
                &self.m_shape,
                self.leaf_rank,
                self.internal_rank,
                mode,
                self.seed,
            ),
        }
    }

    pub fn build_classifier(&self, classes: usize) -> Result<Classifier> {
        let cell = self.build_cell()?;
        let head = Head::init(classes, cell.hidden_size(), self.seed.wrapping_add(1))?;
        Classifier::new(cell, head)
    }

    fn validate(&self) -> Result<()> {
        if self.n_shape.len() < 2 || self.n_shape.len() != self.m_shape.len() {
            return Err(Error::Config(
                "model.n_shape and model.m_shape must have equal length >= 2".into(),
            ));
        }
        if self.n_shape.iter().chain(&self.m_shape).any(|&v| v == 0) {
            return Err(Error::Config("model mode lengths must be >= 1".into()));
        }
        if self.leaf_rank == 0 || self.internal_rank == 0 {
            return Err(Error::Config("model ranks must be >= 1".into()));
        }
        let columns: usize = self.n_shape.iter().product();
        let needed = match self.mode {
            CellMode::Full => self.input_size + self.hidden_size(),
            CellMode::InputOnly => self.input_size,
            CellMode::Dense => 0,
        };
        if self.input_size == 0 || columns < needed {
            return Err(Error::Config(format!(
                "model.n_shape product {columns} is too small: needs at least {needed}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub m_shape: Vec<usize>,
    pub n_shape: Vec<usize>,
    pub rank_min: usize,
    pub rank_max: usize,
    pub bt_cp_rank: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        let spec = sweep_reference_spec();
        Self {
            m_shape: spec.m_shape,
            n_shape: spec.n_shape,
            rank_min: 1,
            rank_max: 16,
            bt_cp_rank: 1,
        }
    }
}

impl CompareConfig {
    pub fn spec(&self) -> Result<FactorizationSpec> {
        let mut spec = FactorizationSpec::new(self.m_shape.clone(), self.n_shape.clone(), 1)?;
        if self.bt_cp_rank == 0 {
            return Err(Error::Config("compare.bt_cp_rank must be >= 1".into()));
        }
        spec.bt_cp_rank = self.bt_cp_rank;
        Ok(spec)
    }
}

/// Settings of the `gradcheck` and `verify` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub grad_tolerance: f64,
    pub verify_tolerance: f64,
    /// Largest dense matrix (in entries) the oracle may build.
    pub oracle_cap: u64,
    /// Number of random inputs in `verify` and sequences in `gradcheck`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            grad_tolerance: 1e-4,
            verify_tolerance: 1e-10,
            oracle_cap: DEFAULT_ORACLE_CAP as u64,
            samples: 3,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: SyntheticTask,
    pub compare: CompareConfig,
    pub check: CheckConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.task.validate()?;
        if self.model.input_size != self.task.frame_len {
            return Err(Error::Config(format!(
                "model.input_size {} differs from task.frame_len {}",
                self.model.input_size, self.task.frame_len
            )));
        }
        self.compare.spec()?;
        if self.compare.rank_min == 0 || self.compare.rank_min > self.compare.rank_max {
            return Err(Error::Config("compare ranks need 1 <= rank_min <= rank_max".into()));
        }
        let c = &self.check;
        if !(c.step > 0.0 && c.grad_tolerance > 0.0 && c.verify_tolerance > 0.0) {
            return Err(Error::Config("check.step and tolerances must be positive".into()));
        }
        if c.samples == 0 {
            return Err(Error::Config("check.samples must be >= 1".into()));
        }
        Ok(())
    }

    /// Replaces the model and training seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
    }
}

fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    let message = err.message().replace('\n', " ");
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {column}: {message}")
        }
        None => message,
    }
}
