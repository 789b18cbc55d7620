//! Empirical ROC curves, their AUC, and Monte Carlo oracle curves.

use serde::{Deserialize, Serialize};

use crate::datagen::ModelSpec;
use crate::error::{Error, Result};
use crate::ranking::ScoringModel;
use crate::rng::{draw_uniform_permutation, RngStream};

/// A PP-plot of two score distributions: vertices from (0,0) to (1,1),
/// nondecreasing in both coordinates, with jumps connected by segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Curve value at abscissa `u` by linear interpolation.
    pub fn value_at(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let mut prev = self.points[0];
        for &(x, y) in &self.points[1..] {
            if u <= x {
                if x == prev.0 {
                    return y.max(prev.1);
                }
                let t = (u - prev.0) / (x - prev.0);
                return prev.1 + t * (y - prev.1);
            }
            prev = (x, y);
        }
        prev.1
    }

    /// `sup_u |ROC(u) − u|`; attained at a vertex for a piecewise-linear
    /// curve.
    pub fn sup_distance_to_diagonal(&self) -> f64 {
        self.points
            .iter()
            .map(|&(x, y)| (y - x).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1)
    }

    /// Resample onto a uniform grid of `k` abscissae (plot export).
    pub fn grid(&self, k: usize) -> Vec<(f64, f64)> {
        (0..=k)
            .map(|i| {
                let u = i as f64 / k as f64;
                (u, self.value_at(u))
            })
            .collect()
    }

    fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// The empirical ROC curve of the two score samples: the PP-plot of their
/// empirical CDFs, sweeping thresholds from high to low and grouping tied
/// scores (which yields the connecting segments).
pub fn empirical_roc(neg_scores: &[f64], pos_scores: &[f64]) -> Result<RocCurve> {
    if neg_scores.is_empty() || pos_scores.is_empty() {
        return Err(Error::invalid("both score samples must be nonempty"));
    }
    if neg_scores.iter().chain(pos_scores.iter()).any(|v| v.is_nan()) {
        return Err(Error::invalid("scores must not contain NaN"));
    }
    let mut pooled: Vec<(f64, bool)> = neg_scores
        .iter()
        .map(|&s| (s, false))
        .chain(pos_scores.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let n_neg = neg_scores.len() as f64;
    let n_pos = pos_scores.len() as f64;
    let mut points = Vec::with_capacity(pooled.len() + 2);
    points.push((0.0, 0.0));
    let mut fp = 0.0;
    let mut tp = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let score = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == score {
            if pooled[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
    }
    debug_assert_eq!(points.last(), Some(&(1.0, 1.0)));
    let auc = RocCurve::trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

/// Monte Carlo estimate of the ROC curve of `scorer` for the bipartite pair
/// (product of marginals, joint law): `m` joint draws are the positives; an
/// independent joint sample with its Y block uniformly permuted provides
/// exact product-law negatives.
pub fn oracle_roc_monte_carlo(
    model: &ModelSpec,
    scorer: &ScoringModel,
    m: usize,
    stream: RngStream,
) -> Result<RocCurve> {
    if m < 2 {
        return Err(Error::invalid("need m >= 2 draws"));
    }
    if let Some(d) = scorer.expected_dim() {
        if d != model.d() {
            return Err(Error::invalid(format!(
                "scorer expects dimension {d} but the model has {}",
                model.d()
            )));
        }
    }
    let pos_ds = model.sample(m, stream.child(1))?;
    let neg_ds = model.sample(m, stream.child(2))?;
    let perm = draw_uniform_permutation(m, stream.child(3))?;
    let pos_scores: Vec<f64> = (0..m)
        .map(|i| scorer.score(&pos_ds.pair_features(i, i)))
        .collect();
    let neg_scores: Vec<f64> = (0..m)
        .map(|i| scorer.score(&neg_ds.pair_features(i, perm.apply(i))))
        .collect();
    empirical_roc(&neg_scores, &pos_scores)
}

/// Both sides of the AUC/total-variation identity for the bilinear family:
/// `lhs` is the Monte Carlo oracle AUC minus 1/2, `rhs` the 2-D quadrature
/// of `|ρ(2x−1)(2y−1)|` over the unit square (which equals `|ρ|/4`). The
/// two are reported without asserting equality; their ratio documents the
/// empirical constant.
pub fn check_eq4_gumbel(rho: f64, m: usize, stream: RngStream) -> Result<(f64, f64)> {
    let model = ModelSpec::gumbel(rho)?;
    let scorer = model.oracle_scorer()?;
    let curve = oracle_roc_monte_carlo(&model, &scorer, m, stream)?;
    let lhs = curve.auc - 0.5;

    // Midpoint quadrature on a 512×512 grid.
    let k = 512;
    let h = 1.0 / k as f64;
    let mut rhs = 0.0;
    for i in 0..k {
        let x = (i as f64 + 0.5) * h;
        for j in 0..k {
            let y = (j as f64 + 0.5) * h;
            rhs += (rho * (2.0 * x - 1.0) * (2.0 * y - 1.0)).abs() * h * h;
        }
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankstats::{auc_from_ranks, compute_ranks};
    use crate::rng::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed)
    }

    #[test]
    fn two_by_two_case() {
        let curve = empirical_roc(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert!((curve.auc - 0.75).abs() < 1e-12);
        assert!((curve.value_at(0.5) - 0.5).abs() < 1e-12);
        assert!(curve.is_monotone());
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
        assert!(empirical_roc(&[], &[1.0]).is_err());
    }

    #[test]
    fn identical_multisets_give_diagonal() {
        let scores = [0.3, 0.7, 0.7, 1.5, 2.0];
        let curve = empirical_roc(&scores, &scores).unwrap();
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            assert!((curve.value_at(u) - u).abs() < 1e-12);
        }
        assert!((curve.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stochastically_larger_positives_dominate_diagonal() {
        let mut rng = stream(1).rng();
        let m = 10_000;
        let neg: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let pos: Vec<f64> = (0..m)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + 1.0)
            .collect();
        let curve = empirical_roc(&neg, &pos).unwrap();
        for &(x, y) in &curve.points {
            assert!(y >= x - 0.02, "curve dips below diagonal at ({x}, {y})");
        }
    }

    // AUC consistency with the rank identity on tie-free inputs.
    #[test]
    fn auc_matches_rank_identity() {
        let mut rng = stream(2).rng();
        for round in 0..50 {
            let n1 = 5 + (round % 17);
            let n2 = 3 + (round % 11);
            let mut vals: Vec<f64> = Vec::new();
            while vals.len() < n1 + n2 {
                let v: f64 = rng.random();
                if !vals.contains(&v) {
                    vals.push(v);
                }
            }
            let (neg, pos) = vals.split_at(n1);
            let curve = empirical_roc(neg, pos).unwrap();
            let rv = compute_ranks(neg, pos, stream(3).child(round as u64)).unwrap();
            let auc = auc_from_ranks(&rv, n1, n2).unwrap();
            assert!((curve.auc - auc).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut rng = stream(4).rng();
        let neg: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let pos: Vec<f64> = (0..150).map(|_| rng.random::<f64>() + 0.2).collect();
        let base = empirical_roc(&neg, &pos).unwrap();
        for map in [|v: f64| v.exp(), |v: f64| 2.0 * v - 5.0] {
            let neg_t: Vec<f64> = neg.iter().map(|&v| map(v)).collect();
            let pos_t: Vec<f64> = pos.iter().map(|&v| map(v)).collect();
            let mapped = empirical_roc(&neg_t, &pos_t).unwrap();
            assert_eq!(base.points, mapped.points);
        }
    }

    // Splitting one sample at random: the empirical ROC converges to the
    // diagonal at the DKW rate.
    #[test]
    fn same_law_split_gives_diagonal() {
        let mut rng = stream(5).rng();
        let m = 20_000;
        let scores: Vec<f64> = (0..2 * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (a, b) = scores.split_at(m);
        let curve = empirical_roc(a, b).unwrap();
        let bound = 2.0 * ((2.0f64 / 0.01).ln() / m as f64).sqrt();
        assert!(curve.sup_distance_to_diagonal() <= bound);
    }

    #[test]
    fn eq4_rhs_is_rho_over_four() {
        let (_, rhs) = check_eq4_gumbel(0.8, 1000, stream(6)).unwrap();
        assert!((rhs - 0.2).abs() < 1e-6);
        let (lhs0, rhs0) = check_eq4_gumbel(0.0, 5000, stream(7)).unwrap();
        assert_eq!(rhs0, 0.0);
        assert!(lhs0.abs() < 0.02);
    }

    #[test]
    fn grid_export_is_uniform() {
        let curve = empirical_roc(&[1.0, 2.0], &[1.5, 3.0]).unwrap();
        let g = curve.grid(512);
        assert_eq!(g.len(), 513);
        assert_eq!(g[0].0, 0.0);
        assert!((g[512].0 - 1.0).abs() < 1e-12 && (g[512].1 - 1.0).abs() < 1e-12);
        // Grid values are nondecreasing and match value_at.
        assert!(g.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(g[256].1, curve.value_at(0.5));
    }
}
