//! f-divergence generators.
//!
//! An f-divergence between a reweighted distribution `q = w·p` and `p` is
//! `E_p[f(w)]` for a convex `f` with `f(1) = 0`. Every uncertainty set in this
//! crate is a ball `E_p[f(w)] ≤ δ` under one of the two generators below.
//!
//! | kind      | f(t)       | f(0) | f'(t)     |
//! |-----------|------------|------|-----------|
//! | `kl`      | t·ln t     | 0    | 1 + ln t  |
//! | `pearson` | (t − 1)²   | 1    | 2(t − 1)  |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    /// Kullback-Leibler, `f(t) = t ln t`.
    Kl,
    /// Pearson chi-squared, `f(t) = (t - 1)^2`.
    Pearson,
}

impl DivergenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceKind::Kl => "kl",
            DivergenceKind::Pearson => "pearson",
        }
    }

    /// `f(t)` without the domain check. `t` must be nonnegative.
    #[inline]
    pub(crate) fn f(self, t: f64) -> f64 {
        match self {
            DivergenceKind::Kl => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            DivergenceKind::Pearson => (t - 1.0) * (t - 1.0),
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(DivergenceKind::Kl),
            "pearson" => Ok(DivergenceKind::Pearson),
            other => Err(Error::config(format!(
                "unknown divergence {other:?} (expected \"kl\" or \"pearson\")"
            ))),
        }
    }
}

/// A divergence together with the radius `δ` of its uncertainty ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDivergenceSpec {
    pub kind: DivergenceKind,
    pub delta: f64,
}

impl FDivergenceSpec {
    pub fn new(kind: DivergenceKind, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::domain(format!(
                "uncertainty radius must be finite and nonnegative, got {delta}"
            )));
        }
        Ok(Self { kind, delta })
    }

    pub fn kl(delta: f64) -> Result<Self> {
        Self::new(DivergenceKind::Kl, delta)
    }

    pub fn pearson(delta: f64) -> Result<Self> {
        Self::new(DivergenceKind::Pearson, delta)
    }

    /// `f(t)`; the KL generator is extended to `t = 0` by its limit.
    pub fn f_value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("f-divergence argument must be >= 0, got {t}")));
        }
        Ok(self.kind.f(t))
    }

    pub fn f_derivative(&self, t: f64) -> Result<f64> {
        match self.kind {
            DivergenceKind::Kl => {
                if !(t > 0.0) {
                    return Err(Error::domain(format!("KL derivative needs t > 0, got {t}")));
                }
                Ok(1.0 + t.ln())
            }
            DivergenceKind::Pearson => {
                if !(t >= 0.0) {
                    return Err(Error::domain(format!("derivative needs t >= 0, got {t}")));
                }
                Ok(2.0 * (t - 1.0))
            }
        }
    }

    /// `(1/N) Σ n_s f(w_s)` for group weights `w` with group sizes `n`.
    pub fn weighted_divergence(&self, counts: &[usize], weights: &[f64]) -> f64 {
        let total: usize = counts.iter().sum();
        let sum: f64 = counts
            .iter()
            .zip(weights)
            .map(|(&n, &w)| n as f64 * self.kind.f(w.max(0.0)))
            .sum();
        sum / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn generator_values() {
        let kl = FDivergenceSpec::kl(0.5).unwrap();
        let pe = FDivergenceSpec::pearson(0.5).unwrap();
        assert_eq!(kl.f_value(1.0).unwrap(), 0.0);
        assert_eq!(pe.f_value(1.0).unwrap(), 0.0);
        assert_eq!(pe.f_value(3.0).unwrap(), 4.0);
        assert_eq!(kl.f_value(0.0).unwrap(), 0.0);
        assert_eq!(pe.f_value(0.0).unwrap(), 1.0);
        assert!(kl.f_value(-0.1).is_err());
        assert!(pe.f_value(-1e-300).is_err());
    }

    #[test]
    fn derivatives() {
        let kl = FDivergenceSpec::kl(0.0).unwrap();
        let pe = FDivergenceSpec::pearson(0.0).unwrap();
        assert_eq!(kl.f_derivative(1.0).unwrap(), 1.0);
        assert_eq!(pe.f_derivative(1.0).unwrap(), 0.0);
        assert_eq!(pe.f_derivative(2.5).unwrap(), 3.0);
        assert!(kl.f_derivative(0.0).is_err());
    }

    #[test]
    fn negative_delta_rejected() {
        assert!(FDivergenceSpec::kl(-0.01).is_err());
        assert!(FDivergenceSpec::pearson(f64::NAN).is_err());
    }

    #[test]
    fn parses_config_names() {
        assert_eq!("kl".parse::<DivergenceKind>().unwrap(), DivergenceKind::Kl);
        assert_eq!("pearson".parse::<DivergenceKind>().unwrap(), DivergenceKind::Pearson);
        assert!("KL".parse::<DivergenceKind>().is_err());
        assert!("hellinger".parse::<DivergenceKind>().is_err());
    }

    #[test]
    fn supporting_line_at_one() {
        for spec in [FDivergenceSpec::kl(0.0).unwrap(), FDivergenceSpec::pearson(0.0).unwrap()] {
            let slope = spec.f_derivative(1.0).unwrap();
            for i in 0..=50 {
                let t = i as f64 * 0.1;
                let line = spec.f_value(1.0).unwrap() + slope * (t - 1.0);
                assert!(spec.f_value(t).unwrap() >= line - 1e-15, "{spec:?} at t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn midpoint_convexity(a in 0.0f64..20.0, b in 0.0f64..20.0, pearson in any::<bool>()) {
            let spec = if pearson { FDivergenceSpec::pearson(0.0) } else { FDivergenceSpec::kl(0.0) }.unwrap();
            let mid = spec.f_value(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (spec.f_value(a).unwrap() + spec.f_value(b).unwrap());
            prop_assert!(mid <= avg + 1e-12);
        }
    }
}
