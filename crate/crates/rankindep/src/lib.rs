//! Ranking-based nonparametric tests of independence.
//!
//! The library tests whether two multivariate random vectors X and Y are
//! independent. A split/shuffle construction turns the question into a
//! bipartite ranking problem between the joint law and the product of the
//! marginals; a scorer learned on one half of the data reduces the other
//! half to univariate scores, where a distribution-free two-sample linear
//! rank statistic with exact null quantiles decides the test. Baselines
//! (HSIC, distance correlation), synthetic dependence models, ROC tools,
//! theoretical-constant evaluators and an experiment harness round out the
//! crate; the `rankindep` binary exposes everything on the command line.

pub mod baselines;
pub mod bounds;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod nulldist;
pub mod ranking;
pub mod rankstats;
pub mod rng;
pub mod roc;
pub mod scoregen;
pub mod split;
pub mod testproc;

pub use dataset::PairedDataset;
pub use error::{Error, Result};
pub use rng::{draw_uniform_permutation, Permutation, RngStream};
