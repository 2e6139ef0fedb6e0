//! Classification losses and their score derivatives.
//!
//! Two settings are supported. The multi-class setting feeds a K-vector of
//! scores and a class index to [`LossKind::SoftmaxCrossEntropy`] or
//! [`LossKind::ZeroOne`]. The binary margin setting feeds a single score `ŷ`
//! and a class in `{0, 1}`, read as the signed label `y = -1` or `y = +1`;
//! the logistic, hinge and exponential losses are functions of `y·ŷ` alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    Logistic,
    Hinge,
    Exponential,
    ZeroOne,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::SoftmaxCrossEntropy => "softmax_ce",
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
            LossKind::Exponential => "exponential",
            LossKind::ZeroOne => "zero_one",
        }
    }

    /// Whether the loss takes a single margin score rather than K scores.
    pub fn is_margin(self) -> bool {
        matches!(self, LossKind::Logistic | LossKind::Hinge | LossKind::Exponential)
    }

    pub fn is_differentiable(self) -> bool {
        self != LossKind::ZeroOne
    }

    /// Loss value from scores and a class index.
    pub fn value(self, scores: &[f64], y: usize) -> Result<f64> {
        match self {
            LossKind::SoftmaxCrossEntropy => {
                check_multiclass(scores, y)?;
                Ok(log_sum_exp(scores) - scores[y])
            }
            LossKind::ZeroOne => {
                if scores.len() == 1 {
                    margin_sign(y)?;
                    Ok(if predict_margin(scores[0]) == y { 0.0 } else { 1.0 })
                } else {
                    check_multiclass(scores, y)?;
                    Ok(if argmax(scores) == y { 0.0 } else { 1.0 })
                }
            }
            margin => {
                let sign = check_margin(scores, y)?;
                Ok(margin_value(margin, sign * scores[0]))
            }
        }
    }

    /// Derivative of the loss with respect to the scores.
    pub fn score_gradient(self, scores: &[f64], y: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; scores.len()];
        self.value_and_gradient_into(scores, y, &mut out)?;
        Ok(out)
    }

    /// Writes the score derivative into `out` and returns the loss value.
    pub fn value_and_gradient_into(self, scores: &[f64], y: usize, out: &mut [f64]) -> Result<f64> {
        match self {
            LossKind::SoftmaxCrossEntropy => {
                check_multiclass(scores, y)?;
                let lse = log_sum_exp(scores);
                for (o, &s) in out.iter_mut().zip(scores) {
                    *o = (s - lse).exp();
                }
                out[y] -= 1.0;
                Ok(lse - scores[y])
            }
            LossKind::ZeroOne => Err(Error::Unsupported(
                "the 0-1 loss has no gradient".to_string(),
            )),
            margin => {
                let sign = check_margin(scores, y)?;
                let m = sign * scores[0];
                out[0] = sign * margin_derivative(margin, m);
                Ok(margin_value(margin, m))
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "softmax_ce" => LossKind::SoftmaxCrossEntropy,
            "logistic" => LossKind::Logistic,
            "hinge" => LossKind::Hinge,
            "exponential" => LossKind::Exponential,
            "zero_one" => LossKind::ZeroOne,
            other => return Err(Error::config(format!("unknown loss {other:?}"))),
        })
    }
}

/// Margin loss as a function of `m = y·ŷ`.
pub fn margin_value(kind: LossKind, m: f64) -> f64 {
    match kind {
        // ln(1 + e^{-m}), stable for both signs
        LossKind::Logistic => {
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        }
        LossKind::Hinge => (1.0 - m).max(0.0),
        LossKind::Exponential => (-m).exp(),
        _ => unreachable!("not a margin loss"),
    }
}

/// d/dm of [`margin_value`]. The hinge kink at `m = 1` gets 0.
pub fn margin_derivative(kind: LossKind, m: f64) -> f64 {
    match kind {
        LossKind::Logistic => -sigmoid(-m),
        LossKind::Hinge => {
            if m < 1.0 {
                -1.0
            } else {
                0.0
            }
        }
        LossKind::Exponential => -(-m).exp(),
        _ => unreachable!("not a margin loss"),
    }
}

/// Signed label for a binary class index: class 1 is `+1`, class 0 is `-1`.
pub fn margin_sign(y: usize) -> Result<f64> {
    match y {
        0 => Ok(-1.0),
        1 => Ok(1.0),
        _ => Err(Error::domain(format!("binary label must be 0 or 1, got {y}"))),
    }
}

/// Class predicted by a margin score; `ŷ = 0` goes to class 0, matching the
/// two-score argmax tie-break on `(0, ŷ)`.
pub fn predict_margin(score: f64) -> usize {
    usize::from(score > 0.0)
}

/// Index of the largest score, smallest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|&s| (s - lse).exp()).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_multiclass(scores: &[f64], y: usize) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::domain(format!(
            "multi-class loss needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if y >= scores.len() {
        return Err(Error::domain(format!(
            "class {y} out of range for {} scores",
            scores.len()
        )));
    }
    Ok(())
}

fn check_margin(scores: &[f64], y: usize) -> Result<f64> {
    if scores.len() != 1 {
        return Err(Error::domain(format!(
            "margin loss needs a single score, got {}",
            scores.len()
        )));
    }
    margin_sign(y)
}
