//! Distributionally robust linear classification.
//!
//! Trains linear classifiers under ordinary empirical risk minimization
//! (ERM), adversarial ERM over per-sample f-divergence reweightings (AERM),
//! and structural AERM, where the adversary may only reweight whole groups
//! (latent categories) of samples. Trained or external classifiers can then
//! be scored under the matching worst-case risks.
//!
//! ```
//! use drobust::{FDivergenceSpec, GroupStats, solve_weights, KlOptions};
//!
//! let stats = GroupStats::new(vec![50, 50], vec![0.2, 0.4]).unwrap();
//! let w = solve_weights(&stats, &FDivergenceSpec::pearson(0.02).unwrap(), &KlOptions::default()).unwrap();
//! assert!((w.weights[0] - 0.858_578_643_762_690_5).abs() < 1e-12);
//! ```

// `!(x >= 0.0)` rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod cli;
pub mod config;
pub mod data;
pub mod divergences;
pub mod error;
pub mod linear_model;
pub mod losses;
pub mod metrics;
pub mod trainer;

pub use adversary::{
    adversarial01_risk, per_sample_weights, solve_weights, solve_weights_kl, solve_weights_oracle, solve_weights_pe,
    GroupStats, GroupWeights, KlOptions, SolvePath,
};
pub use data::{Dataset, Format, GroupingSpec};
pub use divergences::{DivergenceKind, FDivergenceSpec};
pub use error::{Error, Result};
pub use linear_model::ModelParams;
pub use losses::LossKind;
pub use metrics::{decomposition_check, evaluate, RobustnessReport};
pub use trainer::{cross_validate, objective_and_gradient, train, Objective, TrainConfig, TrainReport};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/uncertainty-sets.md")]
    mod uncertainty_sets {}
    #[doc = include_str!("../../../book/src/inner-problem.md")]
    mod inner_problem {}
    #[doc = include_str!("../../../book/src/zero-one.md")]
    mod zero_one {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
