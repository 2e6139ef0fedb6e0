//! TOML run configuration shared by the CLI subcommands.
//!
//! ```toml
//! [data]
//! path = "train.csv"        # relative to the config file
//! format = "csv"            # csv | libsvm
//! grouping = "class"        # class | singleton | subcategory | column:NAME
//! standardize = false
//! subcategory_task = false
//!
//! [model]
//! objective = "structural_aerm"
//! divergence = "kl"
//! delta = 0.5
//! loss = "softmax_ce"
//! lambda = 0.01
//!
//! [experiment]
//! objectives = ["erm", "aerm", "structural_aerm"]
//! lambda_grid = [1.0, 0.1, 0.01, 0.001, 0.0001]
//! folds = 5
//! split = 0.8
//! repeats = 10
//! seed = 0
//! ```
//!
//! A `[synthetic]` section may replace `[data]`; it draws train and test sets
//! from Gaussian groups whose priors differ between the two.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adversary::KlOptions;
use crate::data::{self, apply_grouping, make_subcategory_task, synth_prior_shift, Dataset, Format, GroupGenerator, GroupingSpec, Standardizer};
use crate::divergences::{DivergenceKind, FDivergenceSpec};
use crate::error::{Error, Result};
use crate::linear_model::ModelParams;
use crate::trainer::{Objective, TrainConfig};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_grouping")]
    pub grouping: String,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub subcategory_task: bool,
}

fn default_format() -> String {
    "csv".into()
}

fn default_grouping() -> String {
    "class".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub label: usize,
    pub mean: Vec<f64>,
    #[serde(default = "one")]
    pub std: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub groups: Vec<SynthGroup>,
    pub train_priors: Vec<f64>,
    pub test_priors: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

impl SyntheticSection {
    pub fn generators(&self) -> Vec<GroupGenerator> {
        self.groups
            .iter()
            .map(|g| GroupGenerator::single(g.label, g.mean.clone(), g.std))
            .collect()
    }

    pub fn draw(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        synth_prior_shift(
            seed,
            &self.generators(),
            &self.train_priors,
            &self.test_priors,
            self.n_train,
            self.n_test,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub objective: String,
    pub divergence: String,
    pub delta: f64,
    pub loss: String,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub kl_tol: f64,
    pub kl_max_iters: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let kl = KlOptions::default();
        Self {
            objective: "structural_aerm".into(),
            divergence: "kl".into(),
            delta: 0.5,
            loss: "softmax_ce".into(),
            lambda: 0.01,
            learning_rate: 1.0,
            max_epochs: 500,
            grad_tol: 1e-6,
            kl_tol: kl.tol,
            kl_max_iters: kl.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub objectives: Vec<String>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub split: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            objectives: vec!["erm".into(), "aerm".into(), "structural_aerm".into()],
            lambda_grid: vec![1.0, 0.1, 0.01, 0.001, 0.0001],
            folds: 5,
            split: 0.8,
            repeats: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<DataSection>,
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (None, None) => return Err(Error::config("config needs a [data] or [synthetic] section")),
            (Some(_), Some(_)) => return Err(Error::config("[data] and [synthetic] are mutually exclusive")),
            _ => {}
        }
        if let Some(d) = &self.data {
            d.format.parse::<Format>()?;
            d.grouping.parse::<GroupingSpec>()?;
        }
        self.train_config()?.validate()?;
        let e = &self.experiment;
        if !(e.split > 0.0 && e.split < 1.0) {
            return Err(Error::config(format!("split must be in (0, 1), got {}", e.split)));
        }
        if e.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if e.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if e.lambda_grid.is_empty() || e.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::config("lambda_grid must be a nonempty list of values >= 0"));
        }
        self.objectives()?;
        Ok(())
    }

    pub fn objectives(&self) -> Result<Vec<Objective>> {
        if self.experiment.objectives.is_empty() {
            return Err(Error::config("objective list is empty"));
        }
        self.experiment.objectives.iter().map(|s| s.parse()).collect()
    }

    pub fn divergence(&self) -> Result<FDivergenceSpec> {
        let kind: DivergenceKind = self.model.divergence.parse()?;
        FDivergenceSpec::new(kind, self.model.delta)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let m = &self.model;
        let mut cfg = TrainConfig::new(m.objective.parse()?, self.divergence()?, m.loss.parse()?, m.lambda);
        cfg.learning_rate = m.learning_rate;
        cfg.max_epochs = m.max_epochs;
        cfg.grad_tol = m.grad_tol;
        cfg.seed = self.experiment.seed;
        cfg.kl = KlOptions {
            tol: m.kl_tol,
            max_iters: m.kl_max_iters,
        };
        Ok(cfg)
    }

    pub fn data_path(&self) -> Option<PathBuf> {
        self.data.as_ref().map(|d| self.base_dir.join(&d.path))
    }

    /// Loads the configured dataset and applies the sub-category collapse and
    /// grouping. Synthetic configs return their training draw for `seed`.
    pub fn load_dataset(&self, seed: u64) -> Result<Dataset> {
        match (&self.data, &self.synthetic) {
            (Some(d), _) => {
                let raw = data::load(&self.base_dir.join(&d.path), d.format.parse()?)?;
                prepare(raw, d)
            }
            (None, Some(s)) => Ok(s.draw(seed)?.0),
            (None, None) => Err(Error::config("config has no data source")),
        }
    }

    pub fn standardize(&self) -> bool {
        self.data.as_ref().is_some_and(|d| d.standardize)
    }
}

fn prepare(raw: Dataset, d: &DataSection) -> Result<Dataset> {
    let ds = if d.subcategory_task {
        make_subcategory_task(&raw)?
    } else {
        raw
    };
    let grouping: GroupingSpec = d.grouping.parse()?;
    if d.subcategory_task && grouping == GroupingSpec::ByClass {
        return Ok(ds);
    }
    apply_grouping(&ds, &grouping)
}

/// Rewrites a model trained on standardized features so that it applies to
/// the raw features directly.
pub fn fold_standardizer(params: &ModelParams, st: &Standardizer) -> ModelParams {
    let mut out = params.clone();
    let d = params.dim;
    for k in 0..params.outputs() {
        let mut shift = 0.0;
        for j in 0..d {
            let w = params.weights[k * d + j] / st.stds[j];
            out.weights[k * d + j] = w;
            shift += w * st.means[j];
        }
        out.biases[k] -= shift;
    }
    out
}
