//! The end-to-end independence test: split-shuffle, fit, score, rank,
//! compare to the exact null quantile; repeated over `k_p` permutation
//! replicates.
//!
//! Each replicate draws a fresh block assignment and fresh (σ, σ′), refits
//! the scorer on the learning half, and evaluates the normalized rank
//! statistic of the scored testing half against the `(1−α)`-quantile of the
//! null law for `(n′_-, n′_+, φ)`. Per-replicate rejection is
//! `statistic > threshold`; the top-level decision takes the median
//! replicate p-value. Thresholds never depend on the data, so the type-I
//! error is exact for any scorer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::nulldist::{binomial_capped, NullMode, NullStore};
use crate::ranking::{
    fit_ranking_forest_with_map, fit_ranking_tree, FeatureMap, ForestConfig, ScoringModel,
};
use crate::rankstats::{auc_from_ranks, compute_ranks, normalized_statistic};
use crate::rng::RngStream;
use crate::scoregen::ScoreGenFn;
use crate::split::{split_shuffle, SplitConfig, SplitCounts};

const SALT_SPLIT: u64 = 0x53;
const SALT_FIT: u64 = 0x46;
const SALT_TIES: u64 = 0x54;
const SALT_TRAIN_TIES: u64 = 0x55;
const SALT_NULL: u64 = 0x4e;

/// Exhaustive tabulation is selected automatically below this subset count.
const AUTO_EXHAUSTIVE_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerChoice {
    Forest(ForestConfig),
    Tree(ForestConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullCalibration {
    /// Exhaustive when the subset count is small, Monte Carlo otherwise.
    Auto,
    Exhaustive,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub split: SplitConfig,
    pub phi: ScoreGenFn,
    pub ranker: RankerChoice,
    pub alpha: f64,
    /// Inner shuffle-replicate count K_p.
    pub k_p: usize,
    pub null_mode: NullCalibration,
    pub mc_null_draws: usize,
}

impl TestConfig {
    /// Defaults matching the experimental protocol: balanced classes,
    /// learning half `n = ⌊4N/5⌋`, MWW weight, default forest, `K_p = 10`.
    pub fn defaults(total_n: usize) -> Self {
        TestConfig {
            split: SplitConfig::balanced_fraction(total_n, 0.8),
            phi: crate::scoregen::phi_mww(),
            ranker: RankerChoice::Forest(ForestConfig::default()),
            alpha: 0.05,
            k_p: 10,
            null_mode: NullCalibration::Auto,
            mc_null_draws: 100_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0,1)"));
        }
        if self.k_p == 0 {
            return Err(Error::invalid("k_p must be >= 1"));
        }
        Ok(())
    }

    fn resolve_null_mode(&self, counts: &SplitCounts) -> NullMode {
        match self.null_mode {
            NullCalibration::Exhaustive => NullMode::Exhaustive,
            NullCalibration::MonteCarlo => NullMode::MonteCarlo,
            NullCalibration::Auto => {
                let c = binomial_capped(counts.n_prime, counts.np_plus, AUTO_EXHAUSTIVE_BUDGET);
                if c <= AUTO_EXHAUSTIVE_BUDGET {
                    NullMode::Exhaustive
                } else {
                    NullMode::MonteCarlo
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    /// AUC of the fitted scorer on its own training sample (diagnostic;
    /// absent for permutation baselines).
    pub train_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub phi: Option<String>,
    /// Split sizes (rank tests only; permutation baselines keep the full
    /// sample).
    pub counts: Option<SplitCounts>,
    pub master_seed: u64,
    pub stream_id: u64,
    pub k_p: usize,
    pub null_mode: Option<NullMode>,
    pub n_permutations: Option<usize>,
    pub mean_train_auc: Option<f64>,
}

/// The full outcome: the median replicate summary at top level with every
/// per-replicate triple preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub per_replicate: Vec<ReplicateOutcome>,
    pub diagnostics: Diagnostics,
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
    }
}

fn run_replicate(
    data: &PairedDataset,
    cfg: &TestConfig,
    oracle: Option<&ScoringModel>,
    store: &NullStore,
    rep_stream: RngStream,
) -> Result<ReplicateOutcome> {
    let split = split_shuffle(data, &cfg.split, rep_stream.child(SALT_SPLIT))?;
    let (neg_train, pos_train) = split.train_features(data);

    let fitted;
    let scorer: &ScoringModel = match oracle {
        Some(model) => model,
        None => {
            let fit_stream = rep_stream.child(SALT_FIT);
            fitted = match &cfg.ranker {
                RankerChoice::Forest(fc) => {
                    let map = if fc.interactions {
                        FeatureMap::quadratic_for(data.dim_x(), data.dim_y())
                    } else {
                        FeatureMap::Raw
                    };
                    fit_ranking_forest_with_map(&neg_train, &pos_train, map, fc, fit_stream)?
                }
                RankerChoice::Tree(fc) => fit_ranking_tree(&neg_train, &pos_train, fc, fit_stream)?,
            };
            &fitted
        }
    };

    let train_auc = {
        let rv = compute_ranks(
            &scorer.score_all(&neg_train),
            &scorer.score_all(&pos_train),
            rep_stream.child(SALT_TRAIN_TIES),
        )?;
        auc_from_ranks(&rv, neg_train.len(), pos_train.len())?
    };

    let (neg_test, pos_test) = split.test_features(data);
    let ranks = compute_ranks(
        &scorer.score_all(&neg_test),
        &scorer.score_all(&pos_test),
        rep_stream.child(SALT_TIES),
    )?;

    let counts = split.counts;
    let mode = cfg.resolve_null_mode(&counts);
    let null = store.get(counts.np_minus, counts.np_plus, &cfg.phi, mode, cfg.mc_null_draws)?;
    debug_assert!(null.matches(counts.np_minus, counts.np_plus, &cfg.phi));

    let statistic = normalized_statistic(&ranks, &cfg.phi);
    let threshold = null.quantile(cfg.alpha);
    let p_value = null.p_value(statistic);
    Ok(ReplicateOutcome {
        statistic,
        threshold,
        p_value,
        reject: statistic > threshold,
        train_auc: Some(train_auc),
    })
}

fn run_impl(
    data: &PairedDataset,
    cfg: &TestConfig,
    oracle: Option<&ScoringModel>,
    store: &NullStore,
    stream: RngStream,
) -> Result<TestOutcome> {
    cfg.validate()?;
    let counts = cfg.split.counts(data.n())?;
    if let Some(model) = oracle {
        if let Some(d) = model.expected_dim() {
            if d != data.dim() {
                return Err(Error::invalid(format!(
                    "oracle expects dimension {d} but the data has {}",
                    data.dim()
                )));
            }
        }
    }

    // Build (or load) the shared null table once before fanning out.
    let mode = cfg.resolve_null_mode(&counts);
    store.get(counts.np_minus, counts.np_plus, &cfg.phi, mode, cfg.mc_null_draws)?;

    let per_replicate: Result<Vec<ReplicateOutcome>> = (0..cfg.k_p)
        .into_par_iter()
        .map(|rep| run_replicate(data, cfg, oracle, store, stream.child(rep as u64)))
        .collect();
    let per_replicate = per_replicate?;

    let mut p_values: Vec<f64> = per_replicate.iter().map(|r| r.p_value).collect();
    p_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut statistics: Vec<f64> = per_replicate.iter().map(|r| r.statistic).collect();
    statistics.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let p_value = median(&p_values);
    let statistic = median(&statistics);
    let threshold = per_replicate[0].threshold;
    let mean_train_auc = per_replicate
        .iter()
        .filter_map(|r| r.train_auc)
        .sum::<f64>()
        / per_replicate.len() as f64;

    Ok(TestOutcome {
        statistic,
        threshold,
        p_value,
        reject: p_value < cfg.alpha,
        per_replicate,
        diagnostics: Diagnostics {
            method: match (&cfg.ranker, oracle) {
                (_, Some(_)) => "rank-oracle".to_string(),
                (RankerChoice::Forest(_), None) => "rank-forest".to_string(),
                (RankerChoice::Tree(_), None) => "rank-tree".to_string(),
            },
            phi: Some(cfg.phi.label()),
            counts: Some(counts),
            master_seed: stream.master_seed(),
            stream_id: stream.stream_id(),
            k_p: cfg.k_p,
            null_mode: Some(mode),
            n_permutations: None,
            mean_train_auc: Some(mean_train_auc),
        },
    })
}

/// Run the ranking-based test with a scorer learned per replicate.
pub fn run_test(data: &PairedDataset, cfg: &TestConfig, stream: RngStream) -> Result<TestOutcome> {
    let store = NullStore::new(stream.child(SALT_NULL));
    run_impl(data, cfg, None, &store, stream)
}

/// As [`run_test`], reusing a shared null-table store across calls.
pub fn run_test_cached(
    data: &PairedDataset,
    cfg: &TestConfig,
    store: &NullStore,
    stream: RngStream,
) -> Result<TestOutcome> {
    run_impl(data, cfg, None, store, stream)
}

/// Run the test with a fixed scorer, skipping the learning step. The level
/// guarantee holds for any scorer, informative or not.
pub fn run_test_with_oracle(
    data: &PairedDataset,
    cfg: &TestConfig,
    oracle: &ScoringModel,
    stream: RngStream,
) -> Result<TestOutcome> {
    let store = NullStore::new(stream.child(SALT_NULL));
    run_impl(data, cfg, Some(oracle), &store, stream)
}

/// As [`run_test_with_oracle`], reusing a shared null-table store.
pub fn run_test_with_oracle_cached(
    data: &PairedDataset,
    cfg: &TestConfig,
    oracle: &ScoringModel,
    store: &NullStore,
    stream: RngStream,
) -> Result<TestOutcome> {
    run_impl(data, cfg, Some(oracle), store, stream)
}
