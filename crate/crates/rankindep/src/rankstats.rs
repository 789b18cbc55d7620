//! Two-sample linear rank statistics on pooled scores.
//!
//! Ranks are exact integers until the final φ evaluation. Exact score ties
//! are broken by a uniformly random ordering, which preserves the
//! distribution-freeness of the null law even when a scorer emits equal
//! scores (a constant scorer degenerates to the pure null law).

use crate::error::{Error, Result};
use crate::rng::{shuffle_with, RngStream};
use crate::scoregen::ScoreGenFn;

/// Pooled ranks of the positive scores among `n = n_- + n_+` scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector {
    pos_ranks: Vec<usize>,
    n: usize,
    ties_broken: bool,
}

impl RankVector {
    /// Ranks (1-based, distinct) of the positive scores in the pooled sample.
    pub fn pos_ranks(&self) -> &[usize] {
        &self.pos_ranks
    }

    /// Pooled sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_plus(&self) -> usize {
        self.pos_ranks.len()
    }

    pub fn n_minus(&self) -> usize {
        self.n - self.pos_ranks.len()
    }

    /// Whether any exact tie was resolved randomly.
    pub fn ties_broken(&self) -> bool {
        self.ties_broken
    }

    /// Build directly from ranks (test and enumeration helper).
    pub fn from_ranks(pos_ranks: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        if pos_ranks.is_empty() || pos_ranks.len() > n {
            return Err(Error::invalid("rank count must lie in 1..=n"));
        }
        for &r in &pos_ranks {
            if r < 1 || r > n || seen[r] {
                return Err(Error::invalid("ranks must be distinct values in 1..=n"));
            }
            seen[r] = true;
        }
        Ok(RankVector {
            pos_ranks,
            n,
            ties_broken: false,
        })
    }
}

/// Pooled ascending ranks of both score samples, exact ties broken by a
/// uniformly random ordering drawn from `tie_stream` (each tied group gets a
/// random permutation of its rank slots).
pub fn compute_ranks(
    neg_scores: &[f64],
    pos_scores: &[f64],
    tie_stream: RngStream,
) -> Result<RankVector> {
    if neg_scores.is_empty() || pos_scores.is_empty() {
        return Err(Error::invalid("both score samples must be nonempty"));
    }
    if neg_scores.iter().chain(pos_scores.iter()).any(|v| v.is_nan()) {
        return Err(Error::invalid("scores must not contain NaN"));
    }
    let n_neg = neg_scores.len();
    let n = n_neg + pos_scores.len();

    // Secondary sort key: a uniform permutation of 0..n. Within any tied
    // score group the relative order of these keys is uniform, which is
    // exactly the required tie policy.
    let mut rng = tie_stream.rng();
    let secondary = shuffle_with(n, &mut rng);

    let score_at = |i: usize| -> f64 {
        if i < n_neg {
            neg_scores[i]
        } else {
            pos_scores[i - n_neg]
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        score_at(a)
            .partial_cmp(&score_at(b))
            .expect("NaN excluded above")
            .then_with(|| secondary.apply(a).cmp(&secondary.apply(b)))
    });

    let mut ties_broken = false;
    for w in order.windows(2) {
        if score_at(w[0]) == score_at(w[1]) {
            ties_broken = true;
            break;
        }
    }

    let mut pos_ranks = Vec::with_capacity(pos_scores.len());
    for (rank0, &item) in order.iter().enumerate() {
        if item >= n_neg {
            pos_ranks.push(rank0 + 1);
        }
    }
    Ok(RankVector {
        pos_ranks,
        n,
        ties_broken,
    })
}

/// The linear rank statistic `Ŵ^φ = Σ_i φ(R_i / (n+1))` over positive ranks.
pub fn w_phi(ranks: &RankVector, phi: &ScoreGenFn) -> f64 {
    let denom = (ranks.n + 1) as f64;
    ranks
        .pos_ranks
        .iter()
        .map(|&r| phi.eval(r as f64 / denom))
        .sum()
}

/// Normalized statistic `(1/n_+)·Ŵ^φ − ∫₀¹φ(u)du`, the quantity compared
/// against the null quantile.
pub fn normalized_statistic(ranks: &RankVector, phi: &ScoreGenFn) -> f64 {
    w_phi(ranks, phi) / ranks.n_plus() as f64 - phi.integral()
}

/// Empirical AUC from the rank-sum identity
/// `AUC = (Σ pos_ranks − n_+(n_+ + 1)/2) / (n_- n_+)`.
pub fn auc_from_ranks(ranks: &RankVector, n_minus: usize, n_plus: usize) -> Result<f64> {
    if n_minus == 0 || n_plus == 0 {
        return Err(Error::invalid("both sample sizes must be positive"));
    }
    if n_minus + n_plus != ranks.n || n_plus != ranks.n_plus() {
        return Err(Error::invalid(format!(
            "sizes ({n_minus}, {n_plus}) do not match the rank vector (n = {}, n_+ = {})",
            ranks.n,
            ranks.n_plus()
        )));
    }
    let rank_sum: usize = ranks.pos_ranks.iter().sum();
    let numerator = rank_sum as f64 - (n_plus * (n_plus + 1)) as f64 / 2.0;
    Ok(numerator / (n_minus as f64 * n_plus as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoregen::{phi_mww, phi_rtb};
    use proptest::prelude::*;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed)
    }

    #[test]
    fn ranks_without_ties() {
        let rv = compute_ranks(&[1.0, 3.0], &[2.0, 4.0], stream(0)).unwrap();
        assert_eq!(rv.pos_ranks(), &[2, 4]);
        assert!(!rv.ties_broken());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(compute_ranks(&[5.0, 6.0, 7.0], &[], stream(0)).is_err());
        assert!(compute_ranks(&[], &[1.0], stream(0)).is_err());
        assert!(compute_ranks(&[f64::NAN], &[1.0], stream(0)).is_err());
    }

    // With one tied pair the positive rank is 1 or 2, each with probability
    // 1/2 over tie streams (enumeration over the 2 tie orderings).
    #[test]
    fn tie_resolution_is_fair() {
        let draws = 4000;
        let mut count_rank1 = 0;
        for s in 0..draws {
            let rv = compute_ranks(&[0.0], &[0.0], stream(1000).child(s)).unwrap();
            assert!(rv.ties_broken());
            match rv.pos_ranks()[0] {
                1 => count_rank1 += 1,
                2 => {}
                r => panic!("unexpected rank {r}"),
            }
        }
        let freq = count_rank1 as f64 / draws as f64;
        let se = (0.25f64 / draws as f64).sqrt();
        assert!(
            (freq - 0.5).abs() < 4.0 * se,
            "tie frequency {freq} outside 4 SE of 1/2"
        );
    }

    #[test]
    fn w_phi_direct_arithmetic() {
        let rv = RankVector::from_ranks(vec![3, 4], 4).unwrap();
        let w = w_phi(&rv, &phi_mww());
        assert!((w - 1.4).abs() < 1e-12); // 3/5 + 4/5

        let rtb = phi_rtb(0.9).unwrap();
        let low = RankVector::from_ranks(vec![1, 2], 4).unwrap();
        assert_eq!(w_phi(&low, &rtb), 0.0);

        let rtb75 = phi_rtb(0.75).unwrap();
        let top = RankVector::from_ranks(vec![4], 4).unwrap();
        assert!((w_phi(&top, &rtb75) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalized_statistic_values() {
        let rv = RankVector::from_ranks(vec![3, 4], 4).unwrap();
        let s = normalized_statistic(&rv, &phi_mww());
        assert!((s - 0.2).abs() < 1e-12);
    }

    // Perfectly separated samples of size m each: statistic equals
    // (1/m)·Σ_{k=m+1}^{2m} k/(2m+1) − 1/2, approaching 1/4.
    #[test]
    fn separated_samples_closed_form() {
        let m = 50usize;
        let neg: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let pos: Vec<f64> = (0..m).map(|i| (m + i) as f64).collect();
        let rv = compute_ranks(&neg, &pos, stream(3)).unwrap();
        let s = normalized_statistic(&rv, &phi_mww());
        let rank_sum: usize = (m + 1..=2 * m).sum();
        let expected = rank_sum as f64 / (m as f64 * (2 * m + 1) as f64) - 0.5;
        assert!((s - expected).abs() < 1e-12);
        assert!((expected - 0.25).abs() < 0.005);
    }

    // Exhaustive enumeration of C(6,3) = 20 subsets: the null mean of the
    // normalized statistic is zero up to the O(1/n) discretization bound.
    #[test]
    fn exhaustive_null_mean_bound() {
        let n = 6usize;
        let phi = phi_mww();
        let mut total = 0.0;
        let mut count = 0usize;
        for a in 1..=n {
            for b in (a + 1)..=n {
                for c in (b + 1)..=n {
                    let rv = RankVector::from_ranks(vec![a, b, c], n).unwrap();
                    total += normalized_statistic(&rv, &phi);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 20);
        let mean = total / count as f64;
        assert!(mean.abs() <= 1.0 / (n as f64 + 1.0));
        assert!(mean.abs() < 1e-12); // exact for MWW
    }

    #[test]
    fn auc_small_case() {
        let rv = compute_ranks(&[1.0, 3.0], &[2.0, 4.0], stream(0)).unwrap();
        let auc = auc_from_ranks(&rv, 2, 2).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
        assert!(auc_from_ranks(&rv, 0, 4).is_err());
    }

    // Identical samples under random tie-breaking: expected AUC 1/2.
    #[test]
    fn tied_auc_is_half_on_average() {
        let draws = 2000;
        let x = vec![1.0, 1.0, 1.0];
        let mut total = 0.0;
        for s in 0..draws {
            let rv = compute_ranks(&x, &x, stream(77).child(s)).unwrap();
            total += auc_from_ranks(&rv, 3, 3).unwrap();
        }
        let mean = total / draws as f64;
        assert!((mean - 0.5).abs() < 0.02);
    }

    fn brute_force_auc(neg: &[f64], pos: &[f64]) -> f64 {
        let mut concordant = 0.0;
        for p in pos {
            for q in neg {
                if p > q {
                    concordant += 1.0;
                } else if p == q {
                    concordant += 0.5;
                }
            }
        }
        concordant / (neg.len() * pos.len()) as f64
    }

    #[test]
    fn auc_matches_pair_counting_fixed_case() {
        let mut rng = stream(11).rng();
        use rand::Rng;
        let neg: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let pos: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let rv = compute_ranks(&neg, &pos, stream(12)).unwrap();
        let auc = auc_from_ranks(&rv, 20, 20).unwrap();
        assert_eq!(auc, brute_force_auc(&neg, &pos));
    }

    proptest! {
        // Rank identity on tie-free inputs: the rank-based AUC equals O(n²)
        // pair counting exactly.
        #[test]
        fn prop_auc_identity(seed in 0u64..1000, n_neg in 1usize..30, n_pos in 1usize..30) {
            let mut rng = stream(seed).rng();
            use rand::Rng;
            let mut values: Vec<f64> = Vec::new();
            while values.len() < n_neg + n_pos {
                let v: f64 = rng.random();
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            let (neg, pos) = values.split_at(n_neg);
            let rv = compute_ranks(neg, pos, stream(seed).child(1)).unwrap();
            let auc = auc_from_ranks(&rv, n_neg, n_pos).unwrap();
            prop_assert_eq!(auc, brute_force_auc(neg, pos));
        }

        // Monotone invariance: any strictly increasing map of the scores
        // leaves the rank vector unchanged.
        #[test]
        fn prop_monotone_invariance(seed in 0u64..1000) {
            let mut rng = stream(seed).rng();
            use rand::Rng;
            let neg: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
            let pos: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let tie = stream(seed).child(9);
            let base = compute_ranks(&neg, &pos, tie).unwrap();
            for map in [|v: f64| v.exp(), |v: f64| 3.0 * v + 7.0] {
                let neg_t: Vec<f64> = neg.iter().map(|&v| map(v)).collect();
                let pos_t: Vec<f64> = pos.iter().map(|&v| map(v)).collect();
                let mapped = compute_ranks(&neg_t, &pos_t, tie).unwrap();
                prop_assert_eq!(mapped.pos_ranks(), base.pos_ranks());
            }
        }

        // Label swap maps AUC to 1 − AUC on tie-free inputs.
        #[test]
        fn prop_label_swap(seed in 0u64..1000) {
            let mut rng = stream(seed).rng();
            use rand::Rng;
            let neg: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let pos: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let a = auc_from_ranks(&compute_ranks(&neg, &pos, stream(1).child(seed)).unwrap(), 12, 9).unwrap();
            let b = auc_from_ranks(&compute_ranks(&pos, &neg, stream(2).child(seed)).unwrap(), 9, 12).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
