//! Full-batch training of ERM, per-sample adversarial ERM and structural
//! (group-level) adversarial ERM.
//!
//! All three objectives have the form
//!
//! ```text
//! J(θ) = max_w (1/N) Σ_i c_i(w) ℓ_i(θ) + λ·½‖W‖²
//! ```
//!
//! with `c_i = 1` for ERM, `c_i = r_i` (per-sample weights) for AERM and
//! `c_i = w_{z_i}` (group weights) for structural AERM. The inner maximum is
//! solved exactly at each θ and, by Danskin's theorem, the gradient is the
//! weighted loss gradient at the maximizing weights.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{per_sample_weights, solve_weights, GroupStats, GroupWeights, KlOptions};
use crate::data::{kfold_split, Dataset};
use crate::divergences::FDivergenceSpec;
use crate::error::{Error, Result};
use crate::linear_model::ModelParams;
use crate::losses::LossKind;
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Erm,
    Aerm,
    StructuralAerm,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::Aerm => "aerm",
            Objective::StructuralAerm => "structural_aerm",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Objective::Erm),
            "aerm" => Ok(Objective::Aerm),
            "structural_aerm" => Ok(Objective::StructuralAerm),
            other => Err(Error::config(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub divergence: FDivergenceSpec,
    pub loss: LossKind,
    /// L2 coefficient on the weight matrix (biases are not penalized).
    pub lambda: f64,
    /// Initial step of each backtracking line search.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the largest gradient entry is at most this.
    pub grad_tol: f64,
    /// Recorded in the report; full-batch descent draws no randomness.
    pub seed: u64,
    pub kl: KlOptions,
}

impl TrainConfig {
    pub fn new(objective: Objective, divergence: FDivergenceSpec, loss: LossKind, lambda: f64) -> Self {
        Self {
            objective,
            divergence,
            loss,
            lambda,
            learning_rate: 1.0,
            max_epochs: 500,
            grad_tol: 1e-6,
            seed: 0,
            kl: KlOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::config("grad_tol must be positive"));
        }
        if !self.loss.is_differentiable() {
            return Err(Error::config(format!("cannot train with the {} loss", self.loss)));
        }
        Ok(())
    }
}

/// Objective value, its gradient and the inner weights that achieved it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: ModelParams,
    pub weights: Option<GroupWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Objective,
    pub params: ModelParams,
    /// Objective at the initial point followed by its value after every epoch.
    pub objective_trace: Vec<f64>,
    pub final_weights: Option<GroupWeights>,
    pub converged: bool,
    pub epochs_run: usize,
    pub final_grad_max: f64,
    pub seed: u64,
}

/// Regularized minimax objective and its Danskin gradient at `params`.
pub fn objective_and_gradient(config: &TrainConfig, params: &ModelParams, ds: &Dataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::config("training data is empty"));
    }
    if params.dim != ds.dim() {
        return Err(Error::config(format!(
            "model expects {} features, data has {}",
            params.dim,
            ds.dim()
        )));
    }
    params.check_loss(config.loss)?;

    let n = ds.len();
    let k = params.outputs();
    let mut losses = Vec::with_capacity(n);
    let mut score_grads = vec![0.0; n * k];
    let mut scores = vec![0.0; k];
    for i in 0..n {
        params.scores_into(ds.row(i), &mut scores);
        let l = config
            .loss
            .value_and_gradient_into(&scores, ds.labels()[i], &mut score_grads[i * k..(i + 1) * k])?;
        losses.push(l);
    }

    let (coef, weights) = sample_coefficients(config, &losses, ds)?;

    let mut value = 0.0;
    let mut grad = params.zeros_like();
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let c = coef.as_ref().map_or(1.0, |c| c[i]);
        value += c * losses[i];
        grad.add_outer(c * inv_n, &score_grads[i * k..(i + 1) * k], ds.row(i));
    }
    value *= inv_n;

    if config.lambda > 0.0 {
        value += 0.5 * config.lambda * params.weights.iter().map(|w| w * w).sum::<f64>();
        for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
            *g += config.lambda * w;
        }
    }
    Ok(Evaluation { value, grad, weights })
}

/// Per-sample multipliers `c_i` from the solved inner weights; `None` means
/// all ones (ERM).
fn sample_coefficients(
    config: &TrainConfig,
    losses: &[f64],
    ds: &Dataset,
) -> Result<(Option<Vec<f64>>, Option<GroupWeights>)> {
    match config.objective {
        Objective::Erm => Ok((None, None)),
        Objective::Aerm => {
            let w = per_sample_weights(losses, &config.divergence, &config.kl)?;
            Ok((Some(w.weights.clone()), Some(w)))
        }
        Objective::StructuralAerm => {
            let groups = ds
                .groups()
                .ok_or_else(|| Error::config("structural AERM needs group labels"))?;
            let stats = GroupStats::from_samples(losses, groups, ds.num_groups())?;
            let w = solve_weights(&stats, &config.divergence, &config.kl)?;
            let coef = groups.iter().map(|&z| w.weights[z]).collect();
            Ok((Some(coef), Some(w)))
        }
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Gradient descent with backtracking from θ = 0.
pub fn train(config: &TrainConfig, ds: &Dataset) -> Result<TrainReport> {
    config.validate()?;
    let params = ModelParams::zeros_for_loss(config.loss, ds.num_classes(), ds.dim())?;
    train_from(config, ds, params)
}

/// Gradient descent with backtracking from the given parameters.
pub fn train_from(config: &TrainConfig, ds: &Dataset, mut params: ModelParams) -> Result<TrainReport> {
    config.validate()?;
    let mut eval = objective_and_gradient(config, &params, ds)?;
    if !eval.value.is_finite() {
        return Err(Error::NonFinite { epoch: 0 });
    }
    let mut trace = vec![eval.value];
    let mut converged = false;
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        if eval.grad.max_abs() <= config.grad_tol {
            converged = true;
            break;
        }
        let g2 = eval.grad.norm().powi(2);
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = params.clone();
            cand.axpy(-step, &eval.grad);
            let next = objective_and_gradient(config, &cand, ds)?;
            if next.value.is_finite() && next.value <= eval.value - ARMIJO * step * g2 {
                accepted = Some((cand, next));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, next)) = accepted else {
            log::debug!("line search stalled at epoch {epoch}");
            break;
        };
        if !cand.is_finite() || !next.grad.is_finite() {
            return Err(Error::NonFinite { epoch });
        }
        params = cand;
        eval = next;
        trace.push(eval.value);
        epochs_run = epoch;
    }
    if !converged && eval.grad.max_abs() <= config.grad_tol {
        converged = true;
    }
    log::debug!(
        "{} training: {epochs_run} epochs, objective {:.6}, converged {converged}",
        config.objective,
        eval.value
    );
    Ok(TrainReport {
        objective: config.objective,
        final_grad_max: eval.grad.max_abs(),
        params,
        objective_trace: trace,
        final_weights: eval.weights,
        converged,
        epochs_run,
        seed: config.seed,
    })
}

/// Held-out score used to compare regularization strengths: 0-1 risk for
/// ERM, group-reweighted 0-1 risk for structural AERM and the per-sample
/// reweighted surrogate risk for AERM.
pub fn validation_score(config: &TrainConfig, params: &ModelParams, valid: &Dataset) -> Result<f64> {
    match config.objective {
        Objective::Erm => metrics::ordinary_risk(params, valid),
        Objective::StructuralAerm => metrics::structural_risk_01(params, valid, &config.divergence),
        Objective::Aerm => {
            let losses = metrics::surrogate_losses(params, valid, config.loss)?;
            Ok(per_sample_weights(&losses, &config.divergence, &config.kl)?.objective)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub chosen_lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Chooses λ from `grid` by stratified k-fold cross validation. Ties (within
/// 1e-12) go to the larger λ.
pub fn cross_validate(
    template: &TrainConfig,
    ds: &Dataset,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    let splits = kfold_split(ds, folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|l| (0..splits.len()).map(move |f| (l, f)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(l, f)| {
            let config = TrainConfig {
                lambda: grid[l],
                ..*template
            };
            let (train_idx, valid_idx) = &splits[f];
            let report = train(&config, &ds.subset(train_idx))?;
            validation_score(&config, &report.params, &ds.subset(valid_idx))
        })
        .collect();

    let mut scores: Vec<LambdaScore> = grid
        .iter()
        .map(|&lambda| LambdaScore {
            lambda,
            mean_score: 0.0,
            fold_scores: Vec::with_capacity(splits.len()),
        })
        .collect();
    for (&(l, _), r) in jobs.iter().zip(results) {
        scores[l].fold_scores.push(r?);
    }
    for s in &mut scores {
        s.mean_score = s.fold_scores.iter().sum::<f64>() / s.fold_scores.len() as f64;
    }

    let mut best = &scores[0];
    for s in &scores[1..] {
        let better = s.mean_score < best.mean_score - 1e-12;
        let tie = (s.mean_score - best.mean_score).abs() <= 1e-12;
        if better || (tie && s.lambda > best.lambda) {
            best = s;
        }
    }
    Ok(CvResult {
        chosen_lambda: best.lambda,
        scores,
    })
}
