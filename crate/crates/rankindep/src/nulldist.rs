//! The exact null law of the normalized rank statistic.
//!
//! Under the null the positive ranks are a uniform size-`n_+` subset of
//! `{1..n}`, so the law of the statistic depends only on `(n_-, n_+, φ)`.
//! Exhaustive mode enumerates every subset; Monte Carlo mode samples uniform
//! subsets. Quantiles follow the right-continuous convention (smallest
//! support value with right tail ≤ α), which makes the level guarantee exact
//! for the discrete law.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bounds::level_constant;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scoregen::ScoreGenFn;

/// Largest number of subsets enumerated exhaustively.
pub const EXHAUSTIVE_BUDGET: u128 = 10_000_000;

/// Environment variable selecting the on-disk table cache directory.
pub const CACHE_DIR_ENV: &str = "RANKINDEP_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    Exhaustive,
    MonteCarlo,
}

impl NullMode {
    fn tag(&self) -> &'static str {
        match self {
            NullMode::Exhaustive => "exhaustive",
            NullMode::MonteCarlo => "monte_carlo",
        }
    }
}

/// The tabulated null law: ascending distinct support values with exact
/// integer weights out of `total` equally likely outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    n_minus: usize,
    n_plus: usize,
    phi_label: String,
    mode: NullMode,
    m_draws: usize,
    support: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

/// Number of size-`k` subsets of `n`, saturating above the budget.
pub fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap {
            return cap + 1;
        }
    }
    acc
}

/// Tabulate the null law of the normalized statistic for sizes
/// `(n_minus, n_plus)` and weight φ.
pub fn build_null(
    n_minus: usize,
    n_plus: usize,
    phi: &ScoreGenFn,
    mode: NullMode,
    m_draws: usize,
    stream: RngStream,
) -> Result<NullDistribution> {
    if n_minus == 0 || n_plus == 0 {
        return Err(Error::invalid("both sample sizes must be >= 1"));
    }
    let n = n_minus + n_plus;
    // φ values at every attainable rank, computed once.
    let table: Vec<f64> = (1..=n)
        .map(|r| phi.eval(r as f64 / (n + 1) as f64))
        .collect();
    let integral = phi.integral();
    let stat_of = |subset: &[usize]| -> f64 {
        let sum: f64 = subset.iter().map(|&r| table[r - 1]).sum();
        sum / n_plus as f64 - integral
    };

    let (values, total, m_draws) = match mode {
        NullMode::Exhaustive => {
            let count = binomial_capped(n, n_plus, EXHAUSTIVE_BUDGET);
            if count > EXHAUSTIVE_BUDGET {
                return Err(Error::NullBudgetExceeded {
                    n,
                    k: n_plus,
                    count,
                    budget: EXHAUSTIVE_BUDGET,
                });
            }
            let mut values = Vec::with_capacity(count as usize);
            // Lexicographic enumeration of all size-n_plus subsets of 1..=n.
            let mut comb: Vec<usize> = (1..=n_plus).collect();
            loop {
                values.push(stat_of(&comb));
                let mut i = n_plus;
                while i > 0 && comb[i - 1] == n - n_plus + i {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                comb[i - 1] += 1;
                for j in i..n_plus {
                    comb[j] = comb[j - 1] + 1;
                }
            }
            debug_assert_eq!(values.len() as u128, count);
            (values, count as u64, 0)
        }
        NullMode::MonteCarlo => {
            if m_draws < 1_000 {
                return Err(Error::invalid(format!(
                    "monte carlo mode needs at least 1000 draws, got {m_draws}"
                )));
            }
            let mut rng = stream.rng();
            let mut pool: Vec<usize> = (1..=n).collect();
            let mut subset = vec![0usize; n_plus];
            let mut values = Vec::with_capacity(m_draws);
            use rand::Rng;
            for _ in 0..m_draws {
                // Partial Fisher–Yates: the first n_plus slots become a
                // uniform subset.
                for i in 0..n_plus {
                    let j = rng.random_range(i..n);
                    pool.swap(i, j);
                    subset[i] = pool[i];
                }
                // Summation order must match the exhaustive enumeration so
                // equal subsets produce bitwise-equal statistics.
                subset.sort_unstable();
                values.push(stat_of(&subset));
            }
            (values, m_draws as u64, m_draws)
        }
    };

    let (support, counts) = compress(values);
    Ok(NullDistribution {
        n_minus,
        n_plus,
        phi_label: phi.label(),
        mode,
        m_draws,
        support,
        counts,
        total,
    })
}

fn compress(mut values: Vec<f64>) -> (Vec<f64>, Vec<u64>) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut support = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for v in values {
        match support.last() {
            Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
            _ => {
                support.push(v);
                counts.push(1);
            }
        }
    }
    (support, counts)
}

impl NullDistribution {
    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn phi_label(&self) -> &str {
        &self.phi_label
    }

    pub fn mode(&self) -> NullMode {
        self.mode
    }

    pub fn m_draws(&self) -> usize {
        self.m_draws
    }

    /// Ascending distinct support values.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Probability of each support value.
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    pub fn matches(&self, n_minus: usize, n_plus: usize, phi: &ScoreGenFn) -> bool {
        self.n_minus == n_minus && self.n_plus == n_plus && self.phi_label == phi.label()
    }

    /// `P(S > t)` under the tabulated law.
    pub fn tail_above(&self, t: f64) -> f64 {
        let count: u64 = self
            .support
            .iter()
            .zip(&self.counts)
            .filter(|(v, _)| **v > t)
            .map(|(_, c)| *c)
            .sum();
        count as f64 / self.total as f64
    }

    /// The (1−α)-quantile: smallest support value `t` with `P(S > t) ≤ α`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
        // Suffix weights: tail(i) = P(S > support[i]).
        let mut tail: u64 = 0;
        let mut best = *self.support.last().expect("nonempty support");
        for i in (0..self.support.len()).rev() {
            if (tail as f64 / self.total as f64) <= alpha {
                best = self.support[i];
            } else {
                break;
            }
            tail += self.counts[i];
        }
        best
    }

    /// Right-tail p-value `P(S ≥ observed)`. Monte Carlo tables use the
    /// add-one estimator `(1 + #{draws ≥ observed}) / (M + 1)` so the
    /// randomized calibration stays level-α.
    pub fn p_value(&self, observed: f64) -> f64 {
        let at_least: u64 = self
            .support
            .iter()
            .zip(&self.counts)
            .filter(|(v, _)| **v >= observed)
            .map(|(_, c)| *c)
            .sum();
        match self.mode {
            NullMode::Exhaustive => at_least as f64 / self.total as f64,
            NullMode::MonteCarlo => (1 + at_least) as f64 / (self.total + 1) as f64,
        }
    }

    /// Checks the tabulation invariants (weights sum to the total, support
    /// within the attainable statistic range).
    pub fn validate(&self, phi: &ScoreGenFn) -> Result<()> {
        let sum: u64 = self.counts.iter().sum();
        if sum != self.total {
            return Err(Error::invalid("support weights do not sum to the total"));
        }
        let prob_sum: f64 = self.probabilities().iter().sum();
        if (prob_sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("probabilities do not sum to 1"));
        }
        let lo = -phi.integral() - 1e-12;
        let hi = phi.sup_phi() - phi.integral() + 1e-12;
        if self.support.iter().any(|&v| v < lo || v > hi) {
            return Err(Error::invalid("support value outside the statistic range"));
        }
        Ok(())
    }

    /// Write the table as CSV with a JSON header line (`#`-prefixed) that
    /// records the cache key.
    pub fn write_csv<W: Write>(&self, mut w: W, key_seed: (u64, u64)) -> Result<()> {
        let header = CacheHeader {
            n_minus: self.n_minus,
            n_plus: self.n_plus,
            phi: self.phi_label.clone(),
            mode: self.mode,
            m_draws: self.m_draws,
            master_seed: key_seed.0,
            stream_id: key_seed.1,
            total: self.total,
        };
        writeln!(w, "#{}", serde_json::to_string(&header)?)?;
        writeln!(w, "value,count")?;
        for (v, c) in self.support.iter().zip(&self.counts) {
            writeln!(w, "{v:.17e},{c}")?;
        }
        Ok(())
    }

    fn read_csv(content: &str) -> Result<(CacheHeader, NullDistribution)> {
        let mut lines = content.lines();
        let head = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::invalid("missing cache header line"))?;
        let header: CacheHeader = serde_json::from_str(head)?;
        let mut support = Vec::new();
        let mut counts = Vec::new();
        for line in lines.skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (v, c) = line
                .split_once(',')
                .ok_or_else(|| Error::invalid("malformed cache row"))?;
            support.push(
                v.parse::<f64>()
                    .map_err(|_| Error::invalid("malformed cache value"))?,
            );
            counts.push(
                c.parse::<u64>()
                    .map_err(|_| Error::invalid("malformed cache count"))?,
            );
        }
        let dist = NullDistribution {
            n_minus: header.n_minus,
            n_plus: header.n_plus,
            phi_label: header.phi.clone(),
            mode: header.mode,
            m_draws: header.m_draws,
            support,
            counts,
            total: header.total,
        };
        Ok((header, dist))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheHeader {
    n_minus: usize,
    n_plus: usize,
    phi: String,
    mode: NullMode,
    m_draws: usize,
    master_seed: u64,
    stream_id: u64,
    total: u64,
}

/// Closed-form upper bound on the (1−α)-quantile of the normalized
/// statistic, `√(log(18/α) / (C n))` with the level constant `C`.
/// Rejects φ without a derivative bound (RTB).
pub fn quantile_upper_bound(alpha: f64, n: usize, p: f64, phi: &ScoreGenFn) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0,1)"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p must lie in (0,1)"));
    }
    if (n as f64) < 1.0 / p {
        return Err(Error::invalid(format!("need n >= 1/p (n = {n}, 1/p = {})", 1.0 / p)));
    }
    let c = level_constant(p, phi)?;
    Ok(((18.0 / alpha).ln() / (c * n as f64)).sqrt())
}

/// Cache key for a tabulated null law.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NullKey {
    pub n_minus: usize,
    pub n_plus: usize,
    pub phi_label: String,
    pub mode: NullMode,
    pub m_draws: usize,
}

impl NullKey {
    fn file_name(&self, master_seed: u64) -> String {
        let phi = self.phi_label.replace(':', "-").replace('.', "_");
        format!(
            "null_{}_{}_{}_{}_{}_{}.csv",
            self.n_minus,
            self.n_plus,
            phi,
            self.mode.tag(),
            self.m_draws,
            master_seed
        )
    }

    // Deterministic stream salt (FNV-1a over the rendered key).
    fn salt(&self) -> u64 {
        let repr = format!(
            "{}|{}|{}|{}|{}",
            self.n_minus,
            self.n_plus,
            self.phi_label,
            self.mode.tag(),
            self.m_draws
        );
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in repr.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        hash
    }
}

/// Shared table store: in-memory memoization plus an optional on-disk cache
/// (`RANKINDEP_CACHE_DIR`). Tables for distinct keys may be built in
/// parallel; files are written atomically (temp + rename).
pub struct NullStore {
    mem: Mutex<HashMap<NullKey, Arc<NullDistribution>>>,
    disk_dir: Option<PathBuf>,
    stream: RngStream,
}

impl NullStore {
    /// Store rooted at `stream`, with the disk cache taken from the
    /// environment when set.
    pub fn new(stream: RngStream) -> Self {
        let disk_dir = std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from);
        Self::with_dir(stream, disk_dir)
    }

    pub fn with_dir(stream: RngStream, disk_dir: Option<PathBuf>) -> Self {
        NullStore {
            mem: Mutex::new(HashMap::new()),
            disk_dir,
            stream,
        }
    }

    pub fn get(
        &self,
        n_minus: usize,
        n_plus: usize,
        phi: &ScoreGenFn,
        mode: NullMode,
        m_draws: usize,
    ) -> Result<Arc<NullDistribution>> {
        let key = NullKey {
            n_minus,
            n_plus,
            phi_label: phi.label(),
            mode,
            m_draws: if mode == NullMode::Exhaustive { 0 } else { m_draws },
        };
        if let Some(hit) = self.mem.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        if let Some(dist) = self.load_disk(&key)? {
            let arc = Arc::new(dist);
            self.mem.lock().unwrap().insert(key, Arc::clone(&arc));
            return Ok(arc);
        }
        let build_stream = self.stream.child(key.salt());
        let dist = build_null(n_minus, n_plus, phi, mode, key.m_draws, build_stream)?;
        self.store_disk(&key, &dist, build_stream)?;
        let arc = Arc::new(dist);
        self.mem.lock().unwrap().insert(key, Arc::clone(&arc));
        Ok(arc)
    }

    fn load_disk(&self, key: &NullKey) -> Result<Option<NullDistribution>> {
        let Some(dir) = &self.disk_dir else {
            return Ok(None);
        };
        let path = dir.join(key.file_name(self.stream.master_seed()));
        if !path.exists() {
            return Ok(None);
        }
        let content = fs::read_to_string(&path)?;
        let (header, dist) = NullDistribution::read_csv(&content)?;
        // A stale or foreign file is ignored rather than trusted.
        let fits = header.n_minus == key.n_minus
            && header.n_plus == key.n_plus
            && header.phi == key.phi_label
            && header.mode == key.mode
            && header.m_draws == key.m_draws
            && header.master_seed == self.stream.master_seed();
        Ok(if fits { Some(dist) } else { None })
    }

    fn store_disk(
        &self,
        key: &NullKey,
        dist: &NullDistribution,
        build_stream: RngStream,
    ) -> Result<()> {
        let Some(dir) = &self.disk_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let path = dir.join(key.file_name(self.stream.master_seed()));
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        {
            let mut file = fs::File::create(&tmp)?;
            dist.write_csv(
                &mut file,
                (build_stream.master_seed(), build_stream.stream_id()),
            )?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Convenience for tests and the CLI: cache-less single build.
pub fn write_null_table(dist: &NullDistribution, path: &Path, seed: (u64, u64)) -> Result<()> {
    let mut file = fs::File::create(path)?;
    dist.write_csv(&mut file, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoregen::{phi_mww, phi_rtb};

    fn stream() -> RngStream {
        RngStream::new(99)
    }

    #[test]
    fn two_point_law() {
        let dist = build_null(1, 1, &phi_mww(), NullMode::Exhaustive, 0, stream()).unwrap();
        dist.validate(&phi_mww()).unwrap();
        assert_eq!(dist.support().len(), 2);
        assert!((dist.support()[0] + 1.0 / 6.0).abs() < 1e-15);
        assert!((dist.support()[1] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(dist.probabilities(), vec![0.5, 0.5]);

        // Quantiles per the right-continuous convention.
        assert!((dist.quantile(0.05) - 1.0 / 6.0).abs() < 1e-15);
        assert!((dist.quantile(0.6) + 1.0 / 6.0).abs() < 1e-15);
        assert!((dist.quantile(0.999) + 1.0 / 6.0).abs() < 1e-15); // min support
    }

    #[test]
    fn six_subset_law() {
        let dist = build_null(2, 2, &phi_mww(), NullMode::Exhaustive, 0, stream()).unwrap();
        dist.validate(&phi_mww()).unwrap();
        // Six subsets of {1..4}: statistics {−0.2, −0.1, 0, 0, 0.1, 0.2}.
        // Probed through tail probabilities so the check does not depend on
        // whether the two zero-valued subsets merged bitwise.
        assert_eq!(dist.total, 6);
        for (t, tail) in [
            (-0.25, 6.0 / 6.0),
            (-0.15, 5.0 / 6.0),
            (-0.05, 4.0 / 6.0),
            (0.05, 2.0 / 6.0),
            (0.15, 1.0 / 6.0),
            (0.25, 0.0),
        ] {
            assert!(
                (dist.tail_above(t) - tail).abs() < 1e-15,
                "tail above {t} is {} not {tail}",
                dist.tail_above(t)
            );
        }
        let mean: f64 = dist
            .support()
            .iter()
            .zip(dist.probabilities())
            .map(|(v, p)| v * p)
            .sum();
        assert!(mean.abs() < 1e-12);

        // p-values from the enumeration.
        assert!((dist.p_value(0.15) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(dist.p_value(f64::NEG_INFINITY), 1.0);
        assert_eq!(dist.p_value(0.3), 0.0);
    }

    #[test]
    fn mc_p_value_add_one() {
        let dist = build_null(3, 3, &phi_mww(), NullMode::MonteCarlo, 2000, stream()).unwrap();
        let above_max = dist.support().last().unwrap() + 1.0;
        assert!((dist.p_value(above_max) - 1.0 / 2001.0).abs() < 1e-15);
        assert_eq!(dist.p_value(f64::NEG_INFINITY), 1.0);
    }

    #[test]
    fn budget_and_argument_errors() {
        let err = build_null(30, 30, &phi_mww(), NullMode::Exhaustive, 0, stream());
        assert!(matches!(err, Err(Error::NullBudgetExceeded { .. })));
        assert!(build_null(3, 3, &phi_mww(), NullMode::MonteCarlo, 10, stream()).is_err());
        assert!(build_null(0, 3, &phi_mww(), NullMode::Exhaustive, 0, stream()).is_err());
    }

    // MC empirical CDF must sit inside the DKW band around the exhaustive
    // CDF built at the same sizes.
    #[test]
    fn mc_matches_exhaustive_within_dkw() {
        let phi = phi_mww();
        let exact = build_null(8, 8, &phi, NullMode::Exhaustive, 0, stream()).unwrap();
        let m = 100_000;
        let mc = build_null(8, 8, &phi, NullMode::MonteCarlo, m, stream().child(1)).unwrap();
        let band = ((2.0f64 / 0.01).ln() / (2.0 * m as f64)).sqrt();
        // Compare CDFs at every exact support point.
        let mut worst: f64 = 0.0;
        for &t in exact.support() {
            let exact_cdf = 1.0 - exact.tail_above(t);
            let mc_cdf = 1.0 - mc.tail_above(t);
            worst = worst.max((exact_cdf - mc_cdf).abs());
        }
        assert!(worst <= band, "sup CDF gap {worst} exceeds DKW band {band}");
    }

    // Level guarantee: P(S > quantile(α)) ≤ α exactly, over the φ catalog
    // and all balanced and unbalanced sizes up to n = 12.
    #[test]
    fn exhaustive_level_guarantee() {
        let catalog = [phi_mww(), phi_rtb(0.9).unwrap(), crate::scoregen::phi_power(2.0).unwrap()];
        for phi in &catalog {
            for n_minus in 1..=8usize {
                for n_plus in 1..=(12 - n_minus).min(8) {
                    let dist =
                        build_null(n_minus, n_plus, phi, NullMode::Exhaustive, 0, stream()).unwrap();
                    for alpha in [0.01, 0.05, 0.1, 0.5] {
                        let q = dist.quantile(alpha);
                        assert!(
                            dist.tail_above(q) <= alpha + 1e-15,
                            "level violated at ({n_minus},{n_plus},{},{alpha})",
                            phi.label()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn prop3_bound_values_and_rtb_rejection() {
        let phi = phi_mww();
        let b = quantile_upper_bound(0.05, 1000, 0.5, &phi).unwrap();
        let expected = (16.0 * (18.0f64 / 0.05).ln() / 1000.0).sqrt();
        assert!((b - expected).abs() < 1e-12);
        assert!((b - 0.3069).abs() < 5e-4);

        assert!(matches!(
            quantile_upper_bound(0.05, 1000, 0.5, &phi_rtb(0.9).unwrap()),
            Err(Error::UnsupportedPhi(_))
        ));

        // Monotone in α: smaller α, larger bound; positive in the α→1 limit.
        let b99 = quantile_upper_bound(0.99, 1000, 0.5, &phi).unwrap();
        assert!(b99 < b && b99 > 0.0);
    }

    // Prop-3 domination: the exact quantile never exceeds the closed-form
    // bound on a small grid where exhaustive tables are available.
    #[test]
    fn prop3_dominates_exact_quantiles() {
        let phi = phi_mww();
        for n_half in [3usize, 5, 6] {
            let dist = build_null(n_half, n_half, &phi, NullMode::Exhaustive, 0, stream()).unwrap();
            for alpha in [0.01, 0.05, 0.1] {
                let q = dist.quantile(alpha);
                let bound = quantile_upper_bound(alpha, 2 * n_half, 0.5, &phi).unwrap();
                assert!(q <= bound, "quantile {q} above bound {bound} at n={}", 2 * n_half);
            }
        }
    }

    #[test]
    fn store_roundtrip_with_disk_cache() {
        let dir = tempfile::tempdir().unwrap();
        let phi = phi_mww();
        let store = NullStore::with_dir(stream(), Some(dir.path().to_path_buf()));
        let a = store.get(4, 4, &phi, NullMode::Exhaustive, 0).unwrap();
        // A fresh store must reload the persisted table identically.
        let store2 = NullStore::with_dir(stream(), Some(dir.path().to_path_buf()));
        let b = store2.get(4, 4, &phi, NullMode::Exhaustive, 0).unwrap();
        assert_eq!(*a, *b);
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn mc_tables_deterministic_per_store_seed() {
        let phi = phi_mww();
        let a = NullStore::with_dir(stream(), None)
            .get(10, 10, &phi, NullMode::MonteCarlo, 5000)
            .unwrap();
        let b = NullStore::with_dir(stream(), None)
            .get(10, 10, &phi, NullMode::MonteCarlo, 5000)
            .unwrap();
        assert_eq!(*a, *b);
    }
}
