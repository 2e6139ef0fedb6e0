//! Held-out risks under distribution shift.
//!
//! For a fixed classifier the report carries the ordinary 0-1 risk, the
//! worst-case 0-1 risk over per-sample reweightings, and the worst-case risk
//! over group-level reweightings. For the Pearson divergence, while no group
//! weight hits zero, the group-level risk splits into the ordinary risk plus
//! `sqrt(δ)` times the spread of per-group risks (the *sensitivity*):
//!
//! ```text
//! R_s-adv = R + sqrt(δ) · sqrt( Σ_z p(z) (R_z − R)² )
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adversary::{adversarial01_risk, solve_weights, solve_weights_pe, GroupStats, GroupWeights, KlOptions, SolvePath};
use crate::data::Dataset;
use crate::divergences::FDivergenceSpec;
use crate::error::{Error, Result};
use crate::linear_model::ModelParams;
use crate::losses::LossKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub samples: usize,
    pub divergence: FDivergenceSpec,
    pub ordinary_risk: f64,
    pub adversarial_01_risk: f64,
    pub structural_adv_risk_01: f64,
    pub structural_adv_risk_surrogate: Option<f64>,
    pub group_counts: Vec<usize>,
    pub per_group_risks: Vec<f64>,
    pub sensitivity: f64,
    pub weights_certificate: GroupWeights,
}

impl RobustnessReport {
    /// `key = value` lines, one per scalar, vectors space separated.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "divergence = {}", self.divergence.kind);
        let _ = writeln!(s, "delta = {}", self.divergence.delta);
        let _ = writeln!(s, "ordinary_risk = {:.10}", self.ordinary_risk);
        let _ = writeln!(s, "adversarial_01_risk = {:.10}", self.adversarial_01_risk);
        let _ = writeln!(s, "structural_adv_risk_01 = {:.10}", self.structural_adv_risk_01);
        if let Some(v) = self.structural_adv_risk_surrogate {
            let _ = writeln!(s, "structural_adv_risk_surrogate = {v:.10}");
        }
        let _ = writeln!(s, "sensitivity = {:.10}", self.sensitivity);
        let counts: Vec<String> = self.group_counts.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "group_counts = {}", counts.join(" "));
        let _ = writeln!(s, "per_group_risks = {}", join(&self.per_group_risks));
        let _ = writeln!(s, "group_weights = {}", join(&self.weights_certificate.weights));
        s
    }
}

/// Per-sample 0-1 losses.
pub fn zero_one_losses(params: &ModelParams, ds: &Dataset) -> Result<Vec<f64>> {
    check_shape(params, ds)?;
    let mut scores = vec![0.0; params.outputs()];
    Ok((0..ds.len())
        .map(|i| {
            params.scores_into(ds.row(i), &mut scores);
            f64::from(u8::from(params.predict_from_scores(&scores) != ds.labels()[i]))
        })
        .collect())
}

/// Per-sample values of a differentiable loss.
pub fn surrogate_losses(params: &ModelParams, ds: &Dataset, loss: LossKind) -> Result<Vec<f64>> {
    check_shape(params, ds)?;
    params.check_loss(loss)?;
    let mut scores = vec![0.0; params.outputs()];
    (0..ds.len())
        .map(|i| {
            params.scores_into(ds.row(i), &mut scores);
            loss.value(&scores, ds.labels()[i])
        })
        .collect()
}

fn check_shape(params: &ModelParams, ds: &Dataset) -> Result<()> {
    if params.dim != ds.dim() {
        return Err(Error::config(format!(
            "model expects {} features, data has {}",
            params.dim,
            ds.dim()
        )));
    }
    if ds.labels().iter().any(|&y| y >= params.num_classes) {
        return Err(Error::config(format!(
            "data has labels outside the model's {} classes",
            params.num_classes
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Ordinary 0-1 risk (misclassification rate).
pub fn ordinary_risk(params: &ModelParams, ds: &Dataset) -> Result<f64> {
    Ok(mean(&zero_one_losses(params, ds)?))
}

fn group_stats(losses: &[f64], ds: &Dataset) -> Result<GroupStats> {
    let groups = ds
        .groups()
        .ok_or_else(|| Error::config("data has no group labels"))?;
    GroupStats::from_samples(losses, groups, ds.num_groups())
}

/// Worst-case group-reweighted 0-1 risk.
pub fn structural_risk_01(params: &ModelParams, ds: &Dataset, spec: &FDivergenceSpec) -> Result<f64> {
    let stats = group_stats(&zero_one_losses(params, ds)?, ds)?;
    Ok(solve_weights(&stats, spec, &KlOptions::default())?.objective)
}

/// `sqrt(Σ (n_z/N)(R_z − R)²)`.
pub fn sensitivity(stats: &GroupStats) -> f64 {
    let r = stats.grand_mean();
    stats
        .priors()
        .iter()
        .zip(stats.mean_losses())
        .map(|(&p, &rz)| p * (rz - r) * (rz - r))
        .sum::<f64>()
        .sqrt()
}

/// Evaluates a classifier on grouped test data. The surrogate structural risk
/// is reported when `loss` is differentiable.
pub fn evaluate(
    params: &ModelParams,
    test: &Dataset,
    spec: &FDivergenceSpec,
    loss: LossKind,
) -> Result<RobustnessReport> {
    if test.is_empty() {
        return Err(Error::config("test data is empty"));
    }
    let zo = zero_one_losses(params, test)?;
    let stats = group_stats(&zo, test)?;
    let kl = KlOptions::default();
    let certificate = solve_weights(&stats, spec, &kl)?;
    let ordinary = mean(&zo);
    let adversarial = adversarial01_risk(ordinary, spec)?;
    let surrogate = if loss.is_differentiable() {
        let sl = surrogate_losses(params, test, loss)?;
        Some(solve_weights(&group_stats(&sl, test)?, spec, &kl)?.objective)
    } else {
        None
    };
    Ok(RobustnessReport {
        samples: test.len(),
        divergence: *spec,
        ordinary_risk: ordinary,
        adversarial_01_risk: adversarial,
        structural_adv_risk_01: certificate.objective,
        structural_adv_risk_surrogate: surrogate,
        group_counts: stats.counts().to_vec(),
        per_group_risks: stats.mean_losses().to_vec(),
        sensitivity: sensitivity(&stats),
        weights_certificate: certificate,
    })
}

/// Both sides of the Pearson risk/sensitivity decomposition: the solver's
/// structural risk and `R + sqrt(δ)·sensitivity`. Fails when the solver had to
/// zero some group, where the decomposition does not hold.
pub fn decomposition_check(per_group_risks: &[f64], counts: &[usize], delta: f64) -> Result<(f64, f64)> {
    let stats = GroupStats::new(counts.to_vec(), per_group_risks.to_vec())?;
    let w = solve_weights_pe(&stats, delta)?;
    if let SolvePath::ActiveSet { clamped_groups } = w.path {
        return Err(Error::Unsupported(format!(
            "decomposition inapplicable: radius {delta} forces {clamped_groups} group weight(s) to zero"
        )));
    }
    let rhs = stats.grand_mean() + delta.sqrt() * sensitivity(&stats);
    Ok((w.objective, rhs))
}
