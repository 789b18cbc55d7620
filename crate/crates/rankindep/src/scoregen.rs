//! Catalog of score-generating functions φ.
//!
//! Each entry carries its analytic integral `∫₀¹ φ(u) du` and sup-norms, used
//! by the normalized statistic and the theoretical constants. The RTB family
//! is discontinuous at `u0`: it is admitted for the exact finite-sample test
//! but carries no derivative bound, so the constant evaluators reject it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhiKind {
    /// φ(u) = u (Mann–Whitney–Wilcoxon).
    Mww,
    /// φ(u) = u·1{u ≥ u0} (ranking-the-best, weight on the top ranks).
    Rtb { u0: f64 },
    /// φ(u) = u^q with q > 1.
    Power { q: f64 },
}

/// A nondecreasing score-generating function with its analytic summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreGenFn {
    kind: PhiKind,
}

/// The MWW weight φ(u) = u; recovers the classical rank-sum statistic.
pub fn phi_mww() -> ScoreGenFn {
    ScoreGenFn { kind: PhiKind::Mww }
}

/// The RTB weight φ(u) = u·1{u ≥ u0}, `u0 ∈ (0,1)`.
pub fn phi_rtb(u0: f64) -> Result<ScoreGenFn> {
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(Error::invalid(format!("rtb cutoff u0 must lie in (0,1), got {u0}")));
    }
    Ok(ScoreGenFn {
        kind: PhiKind::Rtb { u0 },
    })
}

/// The power weight φ(u) = u^q, `q > 1`.
pub fn phi_power(q: f64) -> Result<ScoreGenFn> {
    if !(q > 1.0) {
        return Err(Error::invalid(format!("power exponent q must exceed 1, got {q}")));
    }
    Ok(ScoreGenFn {
        kind: PhiKind::Power { q },
    })
}

impl ScoreGenFn {
    pub fn kind(&self) -> PhiKind {
        self.kind
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            PhiKind::Mww => u,
            PhiKind::Rtb { u0 } => {
                if u >= u0 {
                    u
                } else {
                    0.0
                }
            }
            PhiKind::Power { q } => u.powf(q),
        }
    }

    /// Analytic `∫₀¹ φ(u) du`.
    pub fn integral(&self) -> f64 {
        match self.kind {
            PhiKind::Mww => 0.5,
            PhiKind::Rtb { u0 } => (1.0 - u0 * u0) / 2.0,
            PhiKind::Power { q } => 1.0 / (q + 1.0),
        }
    }

    /// `‖φ‖_∞` on [0,1].
    pub fn sup_phi(&self) -> f64 {
        1.0
    }

    /// `‖φ′‖_∞` where φ is a.e. differentiable; `None` for RTB, whose jump
    /// admits no finite derivative bound.
    pub fn sup_phi_prime(&self) -> Option<f64> {
        match self.kind {
            PhiKind::Mww => Some(1.0),
            PhiKind::Rtb { .. } => None,
            PhiKind::Power { q } => Some(q),
        }
    }

    /// Whether φ satisfies the smoothness assumption behind the theoretical
    /// constants (nondecreasing and C²-smooth on [0,1]).
    pub fn is_smooth(&self) -> bool {
        self.sup_phi_prime().is_some()
    }

    /// Stable identifier, also used as the null-table cache key component.
    pub fn label(&self) -> String {
        match self.kind {
            PhiKind::Mww => "mww".to_string(),
            PhiKind::Rtb { u0 } => format!("rtb:{u0}"),
            PhiKind::Power { q } => format!("pow:{q}"),
        }
    }

    /// Parse a label of the form `mww`, `rtb:<u0>` or `pow:<q>`.
    pub fn parse(label: &str) -> Result<ScoreGenFn> {
        let label = label.trim();
        if label.eq_ignore_ascii_case("mww") {
            return Ok(phi_mww());
        }
        if let Some(rest) = label.strip_prefix("rtb:") {
            let u0: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("cannot parse rtb cutoff '{rest}'")))?;
            return phi_rtb(u0);
        }
        if let Some(rest) = label.strip_prefix("pow:") {
            let q: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("cannot parse power exponent '{rest}'")))?;
            return phi_power(q);
        }
        Err(Error::invalid(format!(
            "unknown phi '{label}' (expected mww, rtb:<u0> or pow:<q>)"
        )))
    }
}
