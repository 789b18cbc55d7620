//! Splitting and shuffling: build the four positive/negative subsamples.
//!
//! The learning half keeps pairs `(X_i, Y_i)` for the positive block and
//! pairs `(X_i, Y_{σ(i)})` for the negative block, with σ uniform on the
//! symmetric group of the negative index block; likewise for the testing
//! half with an independent σ′. Shuffling only ever moves Y rows within
//! their own index block, so each X row and each Y row is used exactly once.

use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::rng::{derangement_with, shuffle_with, Permutation, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Learning-half size `n`; the testing half has `n' = N − n` pairs.
    pub n_learn: usize,
    /// Positive-class proportion `p ∈ (0,1)`; `n_+ = ⌊p·n⌋`.
    pub p: f64,
    /// Randomize the assignment of rows to blocks. Defaults on: harmless for
    /// i.i.d. draws and protects ingested files that arrive sorted.
    pub pre_shuffle: bool,
    /// Draw σ, σ′ from derangements instead of the full symmetric group.
    /// Off by default: the construction is stated for uniform draws; the
    /// variant exists for sensitivity studies only.
    pub derangements: bool,
}

impl SplitConfig {
    pub fn new(n_learn: usize, p: f64) -> Self {
        SplitConfig {
            n_learn,
            p,
            pre_shuffle: true,
            derangements: false,
        }
    }

    /// Balanced classes (`p = 1/2`) with `n = ⌊frac·N⌋` learning pairs.
    pub fn balanced_fraction(total_n: usize, frac: f64) -> Self {
        SplitConfig::new(((total_n as f64) * frac).floor() as usize, 0.5)
    }

    pub fn counts(&self, total_n: usize) -> Result<SplitCounts> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0,1), got {}", self.p)));
        }
        let n = self.n_learn;
        if n == 0 || n >= total_n {
            return Err(Error::invalid(format!(
                "need 0 < n < N (n = {n}, N = {total_n})"
            )));
        }
        let n_prime = total_n - n;
        let inv_p = 1.0 / self.p;
        if (n as f64) < inv_p || (n_prime as f64) < inv_p {
            return Err(Error::invalid(format!(
                "need n ∧ n' ≥ 1/p: n = {n}, n' = {n_prime}, 1/p = {inv_p}"
            )));
        }
        let n_plus = (self.p * n as f64).floor() as usize;
        let n_minus = n - n_plus;
        let np_plus = (self.p * n_prime as f64).floor() as usize;
        let np_minus = n_prime - np_plus;
        // 1/p ≤ n guarantees n_+ ≥ 1; p < 1 guarantees n_- ≥ 1.
        debug_assert!(n_plus >= 1 && n_minus >= 1 && np_plus >= 1 && np_minus >= 1);
        Ok(SplitCounts {
            n,
            n_prime,
            n_plus,
            n_minus,
            np_plus,
            np_minus,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub n: usize,
    pub n_prime: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub np_plus: usize,
    pub np_minus: usize,
}

/// The four subsamples as `(x_row, y_row)` index pairs into the original
/// dataset, plus the permutations and the block assignment used.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitShuffleResult {
    pub neg_train: Vec<(usize, usize)>,
    pub pos_train: Vec<(usize, usize)>,
    pub neg_test: Vec<(usize, usize)>,
    pub pos_test: Vec<(usize, usize)>,
    pub sigma: Permutation,
    pub sigma_prime: Permutation,
    /// Row order after the optional pre-shuffle (identity when off).
    pub assignment: Vec<usize>,
    pub counts: SplitCounts,
}

impl SplitShuffleResult {
    fn materialize(&self, data: &PairedDataset, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
        pairs
            .iter()
            .map(|&(ix, iy)| data.pair_features(ix, iy))
            .collect()
    }

    /// Feature vectors of the learning half: `(negatives, positives)`.
    pub fn train_features(&self, data: &PairedDataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.materialize(data, &self.neg_train),
            self.materialize(data, &self.pos_train),
        )
    }

    /// Feature vectors of the testing half: `(negatives, positives)`.
    pub fn test_features(&self, data: &PairedDataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.materialize(data, &self.neg_test),
            self.materialize(data, &self.pos_test),
        )
    }
}

/// Draw σ, σ′ and build the four subsamples.
pub fn split_shuffle(
    data: &PairedDataset,
    cfg: &SplitConfig,
    stream: RngStream,
) -> Result<SplitShuffleResult> {
    let counts = cfg.counts(data.n())?;
    let mut rng = stream.rng();

    let assignment: Vec<usize> = if cfg.pre_shuffle {
        shuffle_with(data.n(), &mut rng).as_slice().to_vec()
    } else {
        (0..data.n()).collect()
    };

    let draw = |m: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Permutation {
        if cfg.derangements && m >= 2 {
            derangement_with(m, rng)
        } else {
            shuffle_with(m, rng)
        }
    };
    let sigma = draw(counts.n_minus, &mut rng);
    let sigma_prime = draw(counts.np_minus, &mut rng);

    let row = |block_pos: usize| assignment[block_pos];

    let neg_train: Vec<(usize, usize)> = (0..counts.n_minus)
        .map(|i| (row(i), row(sigma.apply(i))))
        .collect();
    let pos_train: Vec<(usize, usize)> = (counts.n_minus..counts.n)
        .map(|i| (row(i), row(i)))
        .collect();
    let neg_test: Vec<(usize, usize)> = (0..counts.np_minus)
        .map(|j| (row(counts.n + j), row(counts.n + sigma_prime.apply(j))))
        .collect();
    let pos_test: Vec<(usize, usize)> = (counts.n + counts.np_minus..data.n())
        .map(|i| (row(i), row(i)))
        .collect();

    Ok(SplitShuffleResult {
        neg_train,
        pos_train,
        neg_test,
        pos_test,
        sigma,
        sigma_prime,
        assignment,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::sample_gl;
    use crate::rankstats::{compute_ranks, normalized_statistic};
    use crate::scoregen::phi_mww;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed)
    }

    #[test]
    fn precondition_arithmetic() {
        // N = 5, n = 4, p = 1/2: n' = 1 < 1/p, invalid.
        let cfg = SplitConfig::new(4, 0.5);
        assert!(cfg.counts(5).is_err());

        // The paper's protocol: N = 500, n = 400, p = 1/2.
        let cfg = SplitConfig::new(400, 0.5);
        let c = cfg.counts(500).unwrap();
        assert_eq!((c.n_plus, c.n_minus, c.np_plus, c.np_minus), (200, 200, 50, 50));

        assert!(SplitConfig::new(0, 0.5).counts(10).is_err());
        assert!(SplitConfig::new(10, 0.5).counts(10).is_err());
        assert!(SplitConfig::new(5, 0.0).counts(10).is_err());
    }

    #[test]
    fn blocks_partition_rows_exactly() {
        let data = sample_gl(40, 4, 0.0, true, stream(1)).unwrap();
        for pre_shuffle in [false, true] {
            let mut cfg = SplitConfig::new(30, 0.5);
            cfg.pre_shuffle = pre_shuffle;
            let res = split_shuffle(&data, &cfg, stream(2)).unwrap();

            let mut x_rows: Vec<usize> = Vec::new();
            let mut y_rows: Vec<usize> = Vec::new();
            for block in [&res.neg_train, &res.pos_train, &res.neg_test, &res.pos_test] {
                for &(ix, iy) in block.iter() {
                    x_rows.push(ix);
                    y_rows.push(iy);
                }
            }
            x_rows.sort_unstable();
            y_rows.sort_unstable();
            let expected: Vec<usize> = (0..40).collect();
            assert_eq!(x_rows, expected, "X rows not used exactly once");
            assert_eq!(y_rows, expected, "Y rows not used exactly once");
        }
    }

    #[test]
    fn shuffling_stays_within_blocks() {
        let data = sample_gl(40, 4, 0.0, true, stream(3)).unwrap();
        let mut cfg = SplitConfig::new(30, 0.5);
        cfg.pre_shuffle = false;
        let res = split_shuffle(&data, &cfg, stream(4)).unwrap();
        // Without pre-shuffle the blocks are contiguous index ranges.
        for &(ix, iy) in &res.neg_train {
            assert!(ix < 15 && iy < 15);
        }
        for &(ix, iy) in &res.pos_train {
            assert_eq!(ix, iy);
            assert!((15..30).contains(&ix));
        }
        for &(ix, iy) in &res.neg_test {
            assert!((30..35).contains(&ix) && (30..35).contains(&iy));
        }
        for &(ix, iy) in &res.pos_test {
            assert_eq!(ix, iy);
            assert!((35..40).contains(&ix));
        }
        assert_eq!(res.counts.np_minus, 5);
    }

    #[test]
    fn x_component_keeps_its_row() {
        let data = sample_gl(24, 4, 0.3, true, stream(5)).unwrap();
        let res = split_shuffle(&data, &SplitConfig::new(16, 0.5), stream(6)).unwrap();
        let (neg, pos) = res.train_features(&data);
        assert_eq!(neg.len(), res.counts.n_minus);
        assert_eq!(pos.len(), res.counts.n_plus);
        for (k, &(ix, iy)) in res.neg_train.iter().enumerate() {
            assert_eq!(&neg[k][..2], data.x_row(ix));
            assert_eq!(&neg[k][2..], data.y_row(iy));
        }
    }

    #[test]
    fn derangement_flag_removes_fixed_points() {
        let data = sample_gl(60, 4, 0.0, true, stream(7)).unwrap();
        let mut cfg = SplitConfig::new(40, 0.5);
        cfg.derangements = true;
        let res = split_shuffle(&data, &cfg, stream(8)).unwrap();
        assert!(!res.sigma.has_fixed_point());
        assert!(!res.sigma_prime.has_fixed_point());
    }

    // Under H₀ with a fixed scorer, pooled positive ranks of the scored test
    // sample are uniform over size-n'_+ subsets: with n' = 4 and n'_± = 2,
    // each of the C(4,2) = 6 subsets appears with frequency 1/6.
    #[test]
    fn h0_positive_ranks_uniform_over_subsets() {
        let n_draws = 6000;
        let mut counts = std::collections::HashMap::<Vec<usize>, usize>::new();
        let scorer = |z: &[f64]| z.iter().sum::<f64>(); // fixed scorer
        for s in 0..n_draws {
            let data = sample_gl(24, 4, 0.0, true, stream(100).child(s)).unwrap();
            let res = split_shuffle(&data, &SplitConfig::new(20, 0.5), stream(200).child(s)).unwrap();
            let (neg, pos) = res.test_features(&data);
            let neg_scores: Vec<f64> = neg.iter().map(|z| scorer(z)).collect();
            let pos_scores: Vec<f64> = pos.iter().map(|z| scorer(z)).collect();
            let rv = compute_ranks(&neg_scores, &pos_scores, stream(300).child(s)).unwrap();
            *counts.entry(rv.pos_ranks().to_vec()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6, "not all rank subsets observed");
        let p0 = 1.0 / 6.0;
        let se = (p0 * (1.0 - p0) / n_draws as f64).sqrt();
        for (subset, c) in counts {
            let freq = c as f64 / n_draws as f64;
            assert!(
                (freq - p0).abs() < 4.0 * se,
                "subset {subset:?} frequency {freq:.4} outside 4 SE of 1/6"
            );
        }
    }

    // Exchangeability of the two training blocks under H₀: an MWW test
    // between scored neg/pos training samples rejects at ~level.
    #[test]
    fn h0_train_blocks_exchangeable() {
        let replicates = 500;
        let alpha = 0.05;
        let phi = phi_mww();
        let null = crate::nulldist::build_null(
            10,
            10,
            &phi,
            crate::nulldist::NullMode::Exhaustive,
            0,
            stream(0),
        )
        .unwrap();
        let q = null.quantile(alpha);
        let scorer = |z: &[f64]| z[0] - 0.5 * z[3];
        let mut rejections = 0;
        for s in 0..replicates {
            let data = sample_gl(50, 4, 0.0, true, stream(400).child(s)).unwrap();
            let res = split_shuffle(&data, &SplitConfig::new(20, 0.5), stream(500).child(s)).unwrap();
            let (neg, pos) = res.train_features(&data);
            let neg_scores: Vec<f64> = neg.iter().map(|z| scorer(z)).collect();
            let pos_scores: Vec<f64> = pos.iter().map(|z| scorer(z)).collect();
            let rv = compute_ranks(&neg_scores, &pos_scores, stream(600).child(s)).unwrap();
            if normalized_statistic(&rv, &phi) > q {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / replicates as f64;
        let band = alpha + 3.0 * (alpha * (1.0 - alpha) / replicates as f64).sqrt();
        assert!(rate <= band, "rejection rate {rate} above {band}");
    }

    #[test]
    fn deterministic_given_stream() {
        let data = sample_gl(30, 4, 0.2, true, stream(9)).unwrap();
        let a = split_shuffle(&data, &SplitConfig::new(20, 0.5), stream(10)).unwrap();
        let b = split_shuffle(&data, &SplitConfig::new(20, 0.5), stream(10)).unwrap();
        assert_eq!(a, b);
    }
}
