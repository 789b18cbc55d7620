//! Evaluators for the explicit theoretical constants of the error bounds.
//!
//! Only the first (rank-statistic) term of the type-II bound is computable:
//! the learning-stage constants depend on unexposed VC parameters and are
//! deliberately not invented. Reports are informational and never gate a
//! test.

use serde::{Deserialize, Serialize};

use crate::datagen::ModelSpec;
use crate::error::{Error, Result};
use crate::rankstats::{compute_ranks, normalized_statistic};
use crate::rng::{draw_uniform_permutation, RngStream};
use crate::scoregen::ScoreGenFn;

/// The level constant
/// `C = 8⁻¹ · min(p/‖φ‖²_∞, (p‖φ′‖²_∞)⁻¹, ((1−p)‖φ′‖²_∞)⁻¹)`.
pub fn level_constant(p: f64, phi: &ScoreGenFn) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0,1), got {p}")));
    }
    let sup_phi = phi.sup_phi();
    let sup_phi_prime = phi
        .sup_phi_prime()
        .ok_or_else(|| Error::UnsupportedPhi(phi.label()))?;
    let a = p / (sup_phi * sup_phi);
    let b = 1.0 / (p * sup_phi_prime * sup_phi_prime);
    let c = 1.0 / ((1.0 - p) * sup_phi_prime * sup_phi_prime);
    Ok(a.min(b).min(c) / 8.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub c_constant: f64,
    pub kappa_p: f64,
    /// `18·exp(−C·n′·(ε−δ)²/16)`, the rank-statistic term of the type-II
    /// bound. Often vacuous (> 1) at desk scale; reported as-is.
    pub first_term: f64,
    /// Whether `n' ≥ 4·log(18/α)/(C(ε−δ)²)`; `None` when α was not supplied.
    pub n_prime_condition: Option<bool>,
    /// The learning-half condition needs the unexposed constant C₁ and is
    /// never evaluated.
    pub n_condition: Option<bool>,
    pub n_prime: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub phi: String,
}

/// Evaluate the first term of the type-II bound at departure ε and bias δ.
pub fn type2_first_term(
    n_prime: usize,
    p: f64,
    phi: &ScoreGenFn,
    epsilon: f64,
    delta: f64,
    alpha: Option<f64>,
) -> Result<BoundReport> {
    if !(epsilon > delta && delta >= 0.0) {
        return Err(Error::invalid(format!(
            "need ε > δ ≥ 0, got ε = {epsilon}, δ = {delta}"
        )));
    }
    if n_prime == 0 {
        return Err(Error::invalid("n' must be >= 1"));
    }
    let c = level_constant(p, phi)?;
    let gap = epsilon - delta;
    let first_term = 18.0 * (-c * n_prime as f64 * gap * gap / 16.0).exp();
    let n_prime_condition = match alpha {
        Some(a) => {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid("alpha must lie in (0,1)"));
            }
            Some(n_prime as f64 >= 4.0 * (18.0 / a).ln() / (c * gap * gap))
        }
        None => None,
    };
    Ok(BoundReport {
        c_constant: c,
        kappa_p: p.min(1.0 - p),
        first_term,
        n_prime_condition,
        n_condition: None,
        n_prime,
        p,
        epsilon,
        delta,
        alpha,
        phi: phi.label(),
    })
}

/// Monte Carlo estimate of the departure `ε = W*_φ − ∫₀¹φ(u)du` for a model
/// with an analytic oracle scorer: score `m` joint draws (positives) and `m`
/// block-shuffled draws (negatives) with the oracle and evaluate the
/// normalized rank statistic.
pub fn epsilon_for_model(
    model: &ModelSpec,
    phi: &ScoreGenFn,
    m: usize,
    stream: RngStream,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid("need m >= 2 draws"));
    }
    let oracle = model.oracle_scorer()?;
    let pos_ds = model.sample(m, stream.child(1))?;
    let neg_ds = model.sample(m, stream.child(2))?;
    let perm = draw_uniform_permutation(m, stream.child(3))?;
    let pos_scores: Vec<f64> = (0..m)
        .map(|i| oracle.score(&pos_ds.pair_features(i, i)))
        .collect();
    let neg_scores: Vec<f64> = (0..m)
        .map(|i| oracle.score(&neg_ds.pair_features(i, perm.apply(i))))
        .collect();
    let ranks = compute_ranks(&neg_scores, &pos_scores, stream.child(4))?;
    Ok(normalized_statistic(&ranks, phi))
}
