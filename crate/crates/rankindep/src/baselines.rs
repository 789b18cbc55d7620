//! Comparison tests: unbiased HSIC with Gaussian kernels and median-heuristic
//! bandwidths, and distance correlation with L1/L2 metrics, both calibrated
//! by a full-sample permutation procedure.
//!
//! Kernel and distance matrices are materialized once (O(N²) memory, N
//! capped at 4000); each permutation re-evaluates the statistic by index
//! permutation of the Y-side matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::rng::{shuffle_with, RngStream};
use crate::testproc::{Diagnostics, ReplicateOutcome, TestOutcome};

/// Guard on the O(N²) matrix footprint.
pub const MAX_PERMUTATION_N: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Hsic,
    DcorL1,
    DcorL2,
}

impl BaselineMethod {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineMethod::Hsic => "hsic",
            BaselineMethod::DcorL1 => "dcor-l1",
            BaselineMethod::DcorL2 => "dcor-l2",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "hsic" => Ok(BaselineMethod::Hsic),
            "dcor-l1" | "dcor_l1" => Ok(BaselineMethod::DcorL1),
            "dcor-l2" | "dcor_l2" => Ok(BaselineMethod::DcorL2),
            other => Err(Error::invalid(format!("unknown baseline method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Permutation count K₀ for null calibration.
    pub k0: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            method: BaselineMethod::Hsic,
            k0: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
}

fn metric_dist(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Median of pairwise Euclidean distances over distinct pairs of the
/// row-major points; exact for N ≤ 2000, otherwise computed on an
/// evenly-strided 2000-point subsample.
pub fn median_heuristic(points: &[f64], n: usize, dim: usize) -> Result<f64> {
    if n < 2 || points.len() != n * dim || dim == 0 {
        return Err(Error::invalid("need at least 2 points of equal dimension"));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let idx: Vec<usize> = if n <= 2000 {
        (0..n).collect()
    } else {
        let stride = n.div_ceil(2000);
        (0..n).step_by(stride).collect()
    };
    let m = idx.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            dists.push(metric_dist(row(idx[a]), row(idx[b]), Metric::L2));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        (dists[k / 2 - 1] + dists[k / 2]) / 2.0
    };
    if median <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// Median-heuristic bandwidths for the two blocks of a dataset.
pub fn median_bandwidths(data: &PairedDataset) -> Result<(f64, f64)> {
    let bx = median_heuristic(data.x_flat(), data.n(), data.dim_x())?;
    let by = median_heuristic(data.y_flat(), data.n(), data.dim_y())?;
    Ok((bx, by))
}

// Gaussian kernel matrix with zeroed diagonal, flattened row-major.
fn gram_zero_diag(flat: &[f64], n: usize, dim: usize, bandwidth: f64) -> Vec<f64> {
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];
    let denom = 2.0 * bandwidth * bandwidth;
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = row(i)
                .iter()
                .zip(row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-sq / denom).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

struct HsicParts {
    k: Vec<f64>,
    l: Vec<f64>,
    k_rowsums: Vec<f64>,
    l_rowsums: Vec<f64>,
    k_total: f64,
    l_total: f64,
    n: usize,
}

impl HsicParts {
    fn build(data: &PairedDataset, bandwidths: (f64, f64)) -> Result<Self> {
        let n = data.n();
        if n < 4 {
            return Err(Error::invalid(format!(
                "the unbiased estimator needs N >= 4, got {n}"
            )));
        }
        if !(bandwidths.0 > 0.0 && bandwidths.1 > 0.0) {
            return Err(Error::invalid("bandwidths must be positive"));
        }
        let k = gram_zero_diag(data.x_flat(), n, data.dim_x(), bandwidths.0);
        let l = gram_zero_diag(data.y_flat(), n, data.dim_y(), bandwidths.1);
        let rowsums = |m: &[f64]| -> Vec<f64> {
            (0..n).map(|i| m[i * n..(i + 1) * n].iter().sum()).collect()
        };
        let k_rowsums = rowsums(&k);
        let l_rowsums = rowsums(&l);
        let k_total = k_rowsums.iter().sum();
        let l_total = l_rowsums.iter().sum();
        Ok(HsicParts {
            k,
            l,
            k_rowsums,
            l_rowsums,
            k_total,
            l_total,
            n,
        })
    }

    // The unbiased estimator evaluated with Y rows permuted by `perm`
    // (identity slice for the observed pairing).
    fn statistic(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let mut trace = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let ki = &self.k[i * n..(i + 1) * n];
            let li = &self.l[perm[i] * n..(perm[i] + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += ki[j] * li[perm[j]];
            }
            trace += acc;
            cross += self.k_rowsums[i] * self.l_rowsums[perm[i]];
        }
        (trace + self.k_total * self.l_total / ((nf - 1.0) * (nf - 2.0))
            - 2.0 * cross / (nf - 2.0))
            / (nf * (nf - 3.0))
    }
}

/// The unbiased HSIC U-statistic with Gaussian kernels
/// `k(x, x′) = exp(−‖x−x′‖²/(2b²))` on each block.
pub fn hsic_unbiased(data: &PairedDataset, bandwidths: (f64, f64)) -> Result<f64> {
    let parts = HsicParts::build(data, bandwidths)?;
    let identity: Vec<usize> = (0..data.n()).collect();
    Ok(parts.statistic(&identity))
}

struct DcorParts {
    a: Vec<f64>, // double-centered X distances
    b: Vec<f64>, // double-centered Y distances
    var_a: f64,
    var_b: f64,
    n: usize,
}

fn double_center(mut m: Vec<f64>, n: usize) -> Vec<f64> {
    let mut row_means = vec![0.0f64; n];
    for i in 0..n {
        row_means[i] = m[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
    }
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    m
}

impl DcorParts {
    fn build(data: &PairedDataset, metric: Metric) -> Result<Self> {
        let n = data.n();
        let dist_matrix = |flat: &[f64], dim: usize| -> Vec<f64> {
            let row = |i: usize| &flat[i * dim..(i + 1) * dim];
            let mut m = vec![0.0f64; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = metric_dist(row(i), row(j), metric);
                    m[i * n + j] = d;
                    m[j * n + i] = d;
                }
            }
            m
        };
        let a = double_center(dist_matrix(data.x_flat(), data.dim_x()), n);
        let b = double_center(dist_matrix(data.y_flat(), data.dim_y()), n);
        let var_a = a.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
        let var_b = b.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
        if var_a <= 0.0 {
            return Err(Error::DegenerateDistanceVariance("X".into()));
        }
        if var_b <= 0.0 {
            return Err(Error::DegenerateDistanceVariance("Y".into()));
        }
        Ok(DcorParts { a, b, var_a, var_b, n })
    }

    fn statistic(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut cov = 0.0;
        for i in 0..n {
            let ai = &self.a[i * n..(i + 1) * n];
            let bi = &self.b[perm[i] * n..(perm[i] + 1) * n];
            for j in 0..n {
                cov += ai[j] * bi[perm[j]];
            }
        }
        cov /= (n * n) as f64;
        (cov.max(0.0) / (self.var_a * self.var_b).sqrt()).sqrt()
    }
}

/// Distance correlation: double-centered distance covariance normalized by
/// the geometric mean of the distance variances; lies in [0, 1].
pub fn distance_correlation(data: &PairedDataset, metric: Metric) -> Result<f64> {
    let parts = DcorParts::build(data, metric)?;
    let identity: Vec<usize> = (0..data.n()).collect();
    Ok(parts.statistic(&identity))
}

/// Full-sample permutation test: the observed statistic against K₀
/// statistics computed on `(X_i, Y_{π_k(i)})` with uniform π_k, with the
/// add-one p-value `(1 + #{perm ≥ observed}) / (K₀ + 1)`.
pub fn permutation_test(
    data: &PairedDataset,
    cfg: &BaselineConfig,
    alpha: f64,
    stream: RngStream,
) -> Result<TestOutcome> {
    if cfg.k0 == 0 {
        return Err(Error::invalid("k0 must be >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0,1)"));
    }
    if data.n() > MAX_PERMUTATION_N {
        return Err(Error::invalid(format!(
            "permutation baselines are capped at N = {MAX_PERMUTATION_N} (got {})",
            data.n()
        )));
    }

    enum Parts {
        Hsic(HsicParts),
        Dcor(DcorParts),
    }
    let parts = match cfg.method {
        BaselineMethod::Hsic => Parts::Hsic(HsicParts::build(data, median_bandwidths(data)?)?),
        BaselineMethod::DcorL1 => Parts::Dcor(DcorParts::build(data, Metric::L1)?),
        BaselineMethod::DcorL2 => Parts::Dcor(DcorParts::build(data, Metric::L2)?),
    };
    let stat_of = |perm: &[usize]| match &parts {
        Parts::Hsic(p) => p.statistic(perm),
        Parts::Dcor(p) => p.statistic(perm),
    };

    let identity: Vec<usize> = (0..data.n()).collect();
    let observed = stat_of(&identity);
    let perm_stats: Vec<f64> = (0..cfg.k0)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.child(k as u64).rng();
            let perm = shuffle_with(data.n(), &mut rng);
            stat_of(perm.as_slice())
        })
        .collect();

    let exceed = perm_stats.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceed) as f64 / (cfg.k0 + 1) as f64;

    // Add-one-consistent threshold: the m-th largest permutation statistic,
    // so that `observed > threshold ⇔ p ≤ α`.
    let m = (alpha * (cfg.k0 + 1) as f64).floor() as usize;
    let threshold = if m == 0 {
        f64::INFINITY
    } else {
        let mut sorted = perm_stats.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sorted[m - 1]
    };
    let replicate = ReplicateOutcome {
        statistic: observed,
        threshold,
        p_value,
        reject: observed > threshold,
        train_auc: None,
    };
    Ok(TestOutcome {
        statistic: observed,
        threshold,
        p_value,
        reject: p_value <= alpha,
        per_replicate: vec![replicate],
        diagnostics: Diagnostics {
            method: cfg.method.label().to_string(),
            phi: None,
            counts: None,
            master_seed: stream.master_seed(),
            stream_id: stream.stream_id(),
            k_p: 1,
            null_mode: None,
            n_permutations: Some(cfg.k0),
            mean_train_auc: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_gl, sample_gumbel};
    use crate::rng::RngStream;
    use rand::Rng;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed)
    }

    fn gaussian_kernel_full(data: &PairedDataset, bw: (f64, f64)) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = data.n();
        let kern = |a: &[f64], b: &[f64], bwv: f64| {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-sq / (2.0 * bwv * bwv)).exp()
        };
        let mut k = vec![vec![0.0; n]; n];
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    k[i][j] = kern(data.x_row(i), data.x_row(j), bw.0);
                    l[i][j] = kern(data.y_row(i), data.y_row(j), bw.1);
                }
            }
        }
        (k, l)
    }

    // Independent oracle: the unbiased estimator as an explicit sum over all
    // ordered 4-tuples of distinct indices.
    fn hsic_brute_force(data: &PairedDataset, bw: (f64, f64)) -> f64 {
        let n = data.n();
        let (k, l) = gaussian_kernel_full(data, bw);
        let mut total = 0.0;
        let mut tuples = 0.0;
        for s in 0..n {
            for t in 0..n {
                if t == s {
                    continue;
                }
                for u in 0..n {
                    if u == s || u == t {
                        continue;
                    }
                    for v in 0..n {
                        if v == s || v == t || v == u {
                            continue;
                        }
                        total += k[s][t] * (l[s][t] + l[u][v] - 2.0 * l[s][u]);
                        tuples += 1.0;
                    }
                }
            }
        }
        total / tuples
    }

    // Independent oracle: literal double-centering loops.
    fn dcor_brute_force(data: &PairedDataset, metric: Metric) -> f64 {
        let n = data.n();
        let dist = |a: &[f64], b: &[f64]| metric_dist(a, b, metric);
        let mut a = vec![vec![0.0f64; n]; n];
        let mut b = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = dist(data.x_row(i), data.x_row(j));
                b[i][j] = dist(data.y_row(i), data.y_row(j));
            }
        }
        let center = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let row_mean: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let col_mean: Vec<f64> = (0..n)
                .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / n as f64)
                .collect();
            let grand: f64 = row_mean.iter().sum::<f64>() / n as f64;
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| m[i][j] - row_mean[i] - col_mean[j] + grand)
                        .collect()
                })
                .collect()
        };
        let ac = center(&a);
        let bc = center(&b);
        let mean_prod = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += x[i][j] * y[i][j];
                }
            }
            s / (n * n) as f64
        };
        let cov = mean_prod(&ac, &bc);
        let vx = mean_prod(&ac, &ac);
        let vy = mean_prod(&bc, &bc);
        (cov.max(0.0) / (vx * vy).sqrt()).sqrt()
    }

    #[test]
    fn median_heuristic_small_cases() {
        assert!((median_heuristic(&[0.0, 3.0], 2, 1).unwrap() - 3.0).abs() < 1e-15);
        // {0,1,2}: pairwise distances {1, 2, 1}, median 1.
        assert!((median_heuristic(&[0.0, 1.0, 2.0], 3, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            median_heuristic(&[5.0, 5.0, 5.0], 3, 1),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn median_heuristic_subsample_is_stable() {
        let n = 100_000usize;
        let mut rng = stream(1).rng();
        let points: Vec<f64> = (0..n * 4)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let strided = median_heuristic(&points, n, 4).unwrap();
        // Independent random 2000-point subsample, exact median.
        let pick = shuffle_with(n, &mut rng);
        let mut sub = Vec::with_capacity(2000 * 4);
        for &i in pick.as_slice().iter().take(2000) {
            sub.extend_from_slice(&points[i * 4..(i + 1) * 4]);
        }
        let exact = median_heuristic(&sub, 2000, 4).unwrap();
        assert!(
            (strided - exact).abs() / exact < 0.02,
            "strided {strided} vs independent-subsample {exact}"
        );
    }

    #[test]
    fn hsic_matches_brute_force_on_hand_datasets() {
        for (seed, n) in [(10u64, 4usize), (11, 5), (12, 7)] {
            let mut rng = stream(seed).rng();
            let rows_x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
            let rows_y: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random()]).collect();
            let data = PairedDataset::from_rows(&rows_x, &rows_y).unwrap();
            let bw = (0.7, 0.9);
            let fast = hsic_unbiased(&data, bw).unwrap();
            let brute = hsic_brute_force(&data, bw);
            assert!(
                (fast - brute).abs() < 1e-10,
                "n={n}: {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn hsic_requires_four_points() {
        let data = PairedDataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0]],
            &[vec![0.0], vec![1.0], vec![2.0]],
        )
        .unwrap();
        assert!(hsic_unbiased(&data, (1.0, 1.0)).is_err());
    }

    #[test]
    fn hsic_unbiased_under_independence() {
        // Mean over independent datasets is near zero relative to the
        // spread of the per-dataset estimates.
        let r = 60;
        let mut values = Vec::with_capacity(r);
        for s in 0..r {
            let data = sample_gl(100, 4, 0.0, true, stream(100).child(s as u64)).unwrap();
            let bw = median_bandwidths(&data).unwrap();
            values.push(hsic_unbiased(&data, bw).unwrap());
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64)
            .sqrt();
        assert!(
            mean.abs() < 4.0 * sd / (r as f64).sqrt(),
            "mean {mean} vs standard error {}",
            sd / (r as f64).sqrt()
        );
    }

    #[test]
    fn hsic_detects_exact_copy() {
        let mut rng = stream(2).rng();
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
        let data = PairedDataset::from_rows(&rows, &rows).unwrap();
        let bw = median_bandwidths(&data).unwrap();
        let parts = HsicParts::build(&data, bw).unwrap();
        let identity: Vec<usize> = (0..200).collect();
        let observed = parts.statistic(&identity);
        let perm_stats: Vec<f64> = (0..100)
            .map(|k| {
                let mut prng = stream(3).child(k).rng();
                let perm = shuffle_with(200, &mut prng);
                parts.statistic(perm.as_slice())
            })
            .collect();
        let mean = perm_stats.iter().sum::<f64>() / perm_stats.len() as f64;
        let sd = (perm_stats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (perm_stats.len() - 1) as f64)
            .sqrt();
        assert!(
            observed > mean + 20.0 * sd,
            "copy signal {observed} not separated from the permutation null ({mean} ± {sd})"
        );
    }

    #[test]
    fn dcor_affine_relationship_is_one() {
        let mut rng = stream(4).rng();
        let xs: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random::<f64>()]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|r| vec![2.0 * r[0] + 1.0]).collect();
        let data = PairedDataset::from_rows(&xs, &ys).unwrap();
        let r = distance_correlation(&data, Metric::L2).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "dcor of affine pair is {r}");
    }

    #[test]
    fn dcor_matches_brute_force_on_hand_datasets() {
        for metric in [Metric::L1, Metric::L2] {
            for (seed, n) in [(20u64, 5usize), (21, 8)] {
                let mut rng = stream(seed).rng();
                let xs: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
                let ys: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random()]).collect();
                let data = PairedDataset::from_rows(&xs, &ys).unwrap();
                let fast = distance_correlation(&data, metric).unwrap();
                let brute = dcor_brute_force(&data, metric);
                assert!((fast - brute).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dcor_degenerate_block_rejected() {
        let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![1.0]).collect();
        let ys: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let data = PairedDataset::from_rows(&xs, &ys).unwrap();
        assert!(matches!(
            distance_correlation(&data, Metric::L2),
            Err(Error::DegenerateDistanceVariance(_))
        ));
    }

    #[test]
    fn statistics_symmetric_in_the_two_blocks() {
        let data = sample_gl(80, 4, 0.4, true, stream(5)).unwrap();
        let swapped = data.swap_blocks();
        let bw = median_bandwidths(&data).unwrap();
        let bw_sw = (bw.1, bw.0);
        let h1 = hsic_unbiased(&data, bw).unwrap();
        let h2 = hsic_unbiased(&swapped, bw_sw).unwrap();
        assert!((h1 - h2).abs() < 1e-12);
        for metric in [Metric::L1, Metric::L2] {
            let d1 = distance_correlation(&data, metric).unwrap();
            let d2 = distance_correlation(&swapped, metric).unwrap();
            assert!((d1 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_p_values_super_uniform_under_h0() {
        let replicates = 400;
        let cfg = BaselineConfig {
            method: BaselineMethod::DcorL2,
            k0: 99,
        };
        let mut p_values = Vec::with_capacity(replicates);
        for s in 0..replicates {
            let data = sample_gumbel(40, 0.0, stream(700).child(s as u64)).unwrap();
            let out = permutation_test(&data, &cfg, 0.05, stream(800).child(s as u64)).unwrap();
            p_values.push(out.p_value);
        }
        for t in [0.01, 0.05, 0.1, 0.25, 0.5] {
            let frac = p_values.iter().filter(|&&p| p <= t).count() as f64 / replicates as f64;
            let band = t + 3.0 * (t * (1.0 - t) / replicates as f64).sqrt();
            assert!(frac <= band, "P(p <= {t}) = {frac} above {band}");
        }
    }

    #[test]
    fn permutation_test_outcome_consistency() {
        let data = sample_gl(100, 4, 0.6, true, stream(6)).unwrap();
        for method in [BaselineMethod::Hsic, BaselineMethod::DcorL1, BaselineMethod::DcorL2] {
            let cfg = BaselineConfig { method, k0: 199 };
            let out = permutation_test(&data, &cfg, 0.05, stream(7)).unwrap();
            assert_eq!(out.reject, out.p_value <= 0.05);
            assert_eq!(out.reject, out.statistic > out.threshold);
            // Determinism.
            let again = permutation_test(&data, &cfg, 0.05, stream(7)).unwrap();
            assert_eq!(out, again);
        }
    }
}
