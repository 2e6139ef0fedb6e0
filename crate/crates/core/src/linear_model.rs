//! Linear score model `g(x) = W·x + b`.
//!
//! A multi-class head has one output row per class and is trained with the
//! softmax cross-entropy. A binary margin head has a single output row whose
//! score `ŷ` feeds the logistic, hinge or exponential loss.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{argmax, predict_margin, LossKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Row-major `outputs × dim` matrix.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
}

impl ModelParams {
    /// All-zero parameters with one output row per class.
    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::zeros_with_outputs(num_classes, num_classes, dim)
    }

    /// All-zero binary model with a single margin output.
    pub fn zeros_margin(dim: usize) -> Result<Self> {
        Self::zeros_with_outputs(2, 1, dim)
    }

    /// Zero parameters shaped for `loss`: a margin head for margin losses,
    /// a K-output head otherwise.
    pub fn zeros_for_loss(loss: LossKind, num_classes: usize, dim: usize) -> Result<Self> {
        if loss.is_margin() {
            if num_classes != 2 {
                return Err(Error::config(format!(
                    "{loss} loss needs a binary task, data has {num_classes} classes"
                )));
            }
            Self::zeros_margin(dim)
        } else {
            Self::zeros(num_classes, dim)
        }
    }

    fn zeros_with_outputs(num_classes: usize, outputs: usize, dim: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::domain(format!("need at least 2 classes, got {num_classes}")));
        }
        if dim == 0 {
            return Err(Error::domain("feature dimension must be at least 1"));
        }
        Ok(Self {
            weights: vec![0.0; outputs * dim],
            biases: vec![0.0; outputs],
            num_classes,
            dim,
        })
    }

    /// Number of score outputs (K, or 1 for the margin head).
    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    pub fn is_margin(&self) -> bool {
        self.outputs() == 1
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    /// `W·x + b`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.outputs()];
        self.scores_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.biases[k] + dot(self.row(k), x);
        }
    }

    /// Predicted class: argmax of the scores (smallest index on ties), or the
    /// sign rule for a margin head.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.scores(x)?;
        Ok(self.predict_from_scores(&s))
    }

    pub(crate) fn predict_from_scores(&self, scores: &[f64]) -> usize {
        if self.is_margin() {
            predict_margin(scores[0])
        } else {
            argmax(scores)
        }
    }

    /// Loss of one sample and its gradient with respect to all parameters.
    pub fn sample_loss_and_grad(&self, x: &[f64], y: usize, loss: LossKind) -> Result<(f64, ModelParams)> {
        self.check_loss(loss)?;
        let scores = self.scores(x)?;
        let mut g = vec![0.0; scores.len()];
        let value = loss.value_and_gradient_into(&scores, y, &mut g)?;
        let mut grad = self.zeros_like();
        grad.add_outer(1.0, &g, x);
        Ok((value, grad))
    }

    pub(crate) fn check_loss(&self, loss: LossKind) -> Result<()> {
        if loss.is_margin() != self.is_margin() && loss != LossKind::ZeroOne {
            return Err(Error::config(format!(
                "{loss} loss does not match a model with {} outputs",
                self.outputs()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::domain(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.biases.len()],
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    /// `self += scale · (g ⊗ x, g)`.
    pub(crate) fn add_outer(&mut self, scale: f64, g: &[f64], x: &[f64]) {
        for (k, &gk) in g.iter().enumerate() {
            let c = scale * gk;
            if c == 0.0 {
                continue;
            }
            let row = &mut self.weights[k * self.dim..(k + 1) * self.dim];
            for (w, &xj) in row.iter_mut().zip(x) {
                *w += c * xj;
            }
            self.biases[k] += c;
        }
    }

    /// `self += scale · other`.
    pub fn axpy(&mut self, scale: f64, other: &ModelParams) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += scale * b;
        }
    }

    /// Largest absolute entry over weights and biases.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm over weights and biases.
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Flat view (weights, then biases).
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).copied().collect()
    }

    pub fn with_flat(&self, flat: &[f64]) -> ModelParams {
        let nw = self.weights.len();
        ModelParams {
            weights: flat[..nw].to_vec(),
            biases: flat[nw..].to_vec(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }

    /// Text form: `drobust-model v1 <outputs> <dim>`, then one line per weight
    /// row, then the bias line, every number with 17 significant digits.
    /// A single-output model is the binary margin head.
    pub fn to_text(&self) -> String {
        let mut s = format!("drobust-model v1 {} {}\n", self.outputs(), self.dim);
        for k in 0..self.outputs() {
            push_row(&mut s, self.row(k));
        }
        push_row(&mut s, &self.biases);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            path: "<model>".into(),
            line,
            message: msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty model file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "drobust-model" || parts[1] != "v1" {
            return Err(bad(1, format!("bad header {header:?}")));
        }
        let outputs: usize = parts[2].parse().map_err(|_| bad(1, "bad output count".into()))?;
        let dim: usize = parts[3].parse().map_err(|_| bad(1, "bad dimension".into()))?;
        if outputs == 0 || dim == 0 {
            return Err(bad(1, "model shape must be positive".into()));
        }
        let mut values = Vec::with_capacity(outputs * (dim + 1));
        for (i, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| bad(i + 2, format!("not a number: {tok:?}")))?;
                values.push(v);
            }
        }
        if values.len() != outputs * (dim + 1) {
            return Err(bad(
                0,
                format!("expected {} numbers, found {}", outputs * (dim + 1), values.len()),
            ));
        }
        let biases = values.split_off(outputs * dim);
        let num_classes = if outputs == 1 { 2 } else { outputs };
        let params = ModelParams {
            weights: values,
            biases,
            num_classes,
            dim,
        };
        if !params.is_finite() {
            return Err(bad(0, "model contains non-finite values".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}

fn push_row(s: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s.push('\n');
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_examples() {
        let p = ModelParams::zeros(3, 4).unwrap();
        assert_eq!(p.scores(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);

        let mut p = ModelParams::zeros(2, 2).unwrap();
        p.weights = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(p.scores(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);

        let mut p = ModelParams::zeros_margin(2).unwrap();
        p.weights = vec![1.0, 2.0];
        p.biases = vec![0.5];
        assert_eq!(p.scores(&[1.0, 1.0]).unwrap(), vec![3.5]);
        assert!(p.scores(&[1.0]).is_err());
    }

    #[test]
    fn predict_tie_break_and_argmax() {
        let p = ModelParams::zeros(3, 1).unwrap();
        assert_eq!(p.predict(&[5.0]).unwrap(), 0);
        let mut p = ModelParams::zeros(3, 1).unwrap();
        p.biases = vec![0.1, 3.0, -1.0];
        assert_eq!(p.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn margin_head_agrees_with_two_score_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut m = ModelParams::zeros_margin(2).unwrap();
            m.weights = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            m.biases = vec![rng.random_range(-1.0..1.0)];
            // two-score encoding (0, ŷ)
            let mut k = ModelParams::zeros(2, 2).unwrap();
            k.weights[2..].copy_from_slice(&m.weights);
            k.biases[1] = m.biases[0];
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert_eq!(m.predict(&x).unwrap(), k.predict(&x).unwrap());
        }
        let m = ModelParams::zeros_margin(1).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), 0);
    }

    #[test]
    fn zero_params_softmax_loss_is_ln2() {
        let p = ModelParams::zeros(2, 3).unwrap();
        let (l, _) = p
            .sample_loss_and_grad(&[0.3, -1.0, 2.0], 1, LossKind::SoftmaxCrossEntropy)
            .unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gradient() {
        let mut p = ModelParams::zeros(3, 2).unwrap();
        p.biases = vec![0.2, -0.4, 1.0];
        let (_, g) = p
            .sample_loss_and_grad(&[0.0, 0.0], 2, LossKind::SoftmaxCrossEntropy)
            .unwrap();
        assert!(g.weights.iter().all(|&w| w == 0.0));
        let sg = LossKind::SoftmaxCrossEntropy
            .score_gradient(&[0.2, -0.4, 1.0], 2)
            .unwrap();
        assert_eq!(g.biases, sg);
    }

    #[test]
    fn zero_one_has_no_gradient() {
        let p = ModelParams::zeros(2, 1).unwrap();
        assert!(matches!(
            p.sample_loss_and_grad(&[1.0], 0, LossKind::ZeroOne),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn head_mismatch_rejected() {
        let p = ModelParams::zeros(2, 1).unwrap();
        assert!(p.sample_loss_and_grad(&[1.0], 0, LossKind::Logistic).is_err());
        assert!(ModelParams::zeros_for_loss(LossKind::Hinge, 3, 2).is_err());
        assert!(ModelParams::zeros(1, 2).is_err());
    }

    fn random_params(rng: &mut ChaCha8Rng, outputs: usize, dim: usize) -> ModelParams {
        let mut p = if outputs == 1 {
            ModelParams::zeros_margin(dim).unwrap()
        } else {
            ModelParams::zeros(outputs, dim).unwrap()
        };
        for w in p.weights.iter_mut().chain(p.biases.iter_mut()) {
            *w = rng.random_range(-1.5..1.5);
        }
        p
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for draw in 0..50 {
            let (loss, outputs) = match draw % 4 {
                0 | 1 => (LossKind::SoftmaxCrossEntropy, 3),
                2 => (LossKind::Logistic, 1),
                _ => (LossKind::Exponential, 1),
            };
            let dim = 3;
            let p = random_params(&mut rng, outputs, dim);
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(0..p.num_classes);
            let (_, g) = p.sample_loss_and_grad(&x, y, loss).unwrap();
            let flat = p.to_flat();
            let gflat = g.to_flat();
            let h = 1e-6;
            for i in 0..flat.len() {
                let mut a = flat.clone();
                let mut b = flat.clone();
                a[i] += h;
                b[i] -= h;
                let fa = loss.value(&p.with_flat(&a).scores(&x).unwrap(), y).unwrap();
                let fb = loss.value(&p.with_flat(&b).scores(&x).unwrap(), y).unwrap();
                let fd = (fa - fb) / (2.0 * h);
                let err = (fd - gflat[i]).abs() / fd.abs().max(gflat[i].abs()).max(1e-2);
                assert!(err <= 1e-5, "draw {draw} coord {i}: fd {fd} vs {}", gflat[i]);
            }
        }
    }

    #[test]
    fn bias_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_params(&mut rng, 4, 3);
            let mut q = p.clone();
            for b in &mut q.biases {
                *b += 7.25;
            }
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(0..4);
            assert_eq!(p.predict(&x).unwrap(), q.predict(&x).unwrap());
            let lp = LossKind::SoftmaxCrossEntropy.value(&p.scores(&x).unwrap(), y).unwrap();
            let lq = LossKind::SoftmaxCrossEntropy.value(&q.scores(&x).unwrap(), y).unwrap();
            assert!((lp - lq).abs() <= 1e-12);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for outputs in [1, 3] {
            let p = random_params(&mut rng, outputs, 2);
            let text = p.to_text();
            assert!(text.starts_with(&format!("drobust-model v1 {outputs} 2\n")));
            assert_eq!(ModelParams::from_text(&text).unwrap(), p);
        }
        assert!(ModelParams::from_text("drobust-model v2 2 1\n0 0\n0 0\n").is_err());
        assert!(ModelParams::from_text("drobust-model v1 2 1\n0\n0 0\n").is_err());
        assert!(ModelParams::from_text("").is_err());
    }
}
