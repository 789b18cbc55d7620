//! Experiment orchestration: B Monte Carlo data draws × methods × models,
//! rejection-rate tables and curves, CSV ingestion for real data.
//!
//! Every task derives its stream from (master seed, cell, draw), so a plan
//! re-run reproduces `results.csv` byte for byte. Runtimes are recorded in
//! the manifest, which is the one deliberately non-deterministic output.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{permutation_test, BaselineConfig, BaselineMethod};
use crate::datagen::ModelSpec;
use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::nulldist::NullStore;
use crate::ranking::ForestConfig;
use crate::rng::{shuffle_with, RngStream};
use crate::scoregen::ScoreGenFn;
use crate::split::SplitConfig;
use crate::testproc::{
    run_test_cached, run_test_with_oracle_cached, NullCalibration, RankerChoice, TestConfig,
};

const SALT_DATA: u64 = 0xda7a;
const SALT_TEST: u64 = 0x7e57;
const SALT_NULL: u64 = 0x4e55;

fn default_k0() -> usize {
    200
}

fn default_kp() -> usize {
    10
}

fn default_phi() -> String {
    "mww".to_string()
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_p() -> f64 {
    0.5
}

fn default_mc_draws() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodSpec {
    /// The ranking-based test with a forest scorer.
    Rank {
        #[serde(default = "default_phi")]
        phi: String,
        #[serde(default = "default_kp")]
        k_p: usize,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default)]
        forest: ForestConfig,
        #[serde(default = "default_mc_draws")]
        mc_null_draws: usize,
    },
    /// The ranking-based test with the model's analytic oracle scorer.
    RankOracle {
        #[serde(default = "default_phi")]
        phi: String,
        #[serde(default = "default_kp")]
        k_p: usize,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_mc_draws")]
        mc_null_draws: usize,
    },
    Hsic {
        #[serde(default = "default_k0")]
        k0: usize,
    },
    DcorL1 {
        #[serde(default = "default_k0")]
        k0: usize,
    },
    DcorL2 {
        #[serde(default = "default_k0")]
        k0: usize,
    },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Rank { phi, .. } => format!("rforest-{phi}"),
            MethodSpec::RankOracle { phi, .. } => format!("oracle-{phi}"),
            MethodSpec::Hsic { .. } => "hsic".to_string(),
            MethodSpec::DcorL1 { .. } => "dcor-l1".to_string(),
            MethodSpec::DcorL2 { .. } => "dcor-l2".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub model: ModelSpec,
    pub n_total: usize,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!(
            "{}_d{}_rho{}_N{}",
            self.model.label(),
            self.model.d(),
            self.model.rho,
            self.n_total
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub cells: Vec<CellSpec>,
    pub methods: Vec<MethodSpec>,
    /// Monte Carlo data draws per cell.
    pub b: usize,
    /// Strictly increasing significance levels in (0,1).
    pub alphas: Vec<f64>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentPlan {
    fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::invalid("b must be >= 1"));
        }
        if self.cells.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("plan needs at least one cell and one method"));
        }
        if self.alphas.is_empty()
            || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0))
            || self.alphas.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(
                "alphas must be strictly increasing values in (0,1)",
            ));
        }
        Ok(())
    }
}

/// One aggregated table row (one cell × method × α).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub d: usize,
    pub n_total: usize,
    pub rho: f64,
    pub method: String,
    pub alpha: f64,
    /// Share of the B draws rejected under the median-p aggregation rule.
    pub rejection_rate: f64,
    /// Share of all B·K_p per-replicate decisions that rejected.
    pub rejection_rate_replicates: f64,
    /// Normal-approximation half width `1.96·√(r(1−r)/B)`.
    pub ci_half_width: f64,
    /// Bernoulli standard deviation `√(r(1−r))` (the tables' ± column).
    pub std_bernoulli: f64,
    pub b: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellMethodStatus {
    pub cell: String,
    pub method: String,
    pub status: String,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub plan: ExperimentPlan,
    pub crate_version: String,
    pub statuses: Vec<CellMethodStatus>,
}

struct DrawResult {
    /// Aggregated p-value of the draw (median over K_p for rank tests).
    p_value: f64,
    /// Per-replicate p-values (length K_p; length 1 for baselines).
    replicate_p: Vec<f64>,
    /// Rank tests reject at `median p < α`; baselines at `p ≤ α`.
    strict: bool,
}

fn run_cell_method(
    cell: &CellSpec,
    cell_idx: usize,
    method: &MethodSpec,
    plan: &ExperimentPlan,
    store: &NullStore,
) -> Result<Vec<DrawResult>> {
    let master = RngStream::new(plan.master_seed);
    (0..plan.b)
        .into_par_iter()
        .map(|draw| {
            // Data draws are keyed by (cell, draw) only, so every method
            // sees the same B datasets.
            let data_stream = master
                .child(SALT_DATA)
                .child(cell_idx as u64)
                .child(draw as u64);
            let data = cell.model.sample(cell.n_total, data_stream)?;
            let test_stream = master
                .child(SALT_TEST)
                .child(cell_idx as u64)
                .child(draw as u64);
            match method {
                MethodSpec::Rank {
                    phi,
                    k_p,
                    train_fraction,
                    p,
                    forest,
                    mc_null_draws,
                } => {
                    let cfg = TestConfig {
                        split: SplitConfig {
                            n_learn: ((cell.n_total as f64) * train_fraction).floor() as usize,
                            p: *p,
                            pre_shuffle: true,
                            derangements: false,
                        },
                        phi: ScoreGenFn::parse(phi)?,
                        ranker: RankerChoice::Forest(*forest),
                        alpha: plan.alphas[0],
                        k_p: *k_p,
                        null_mode: NullCalibration::Auto,
                        mc_null_draws: *mc_null_draws,
                    };
                    let out = run_test_cached(&data, &cfg, store, test_stream)?;
                    Ok(DrawResult {
                        p_value: out.p_value,
                        replicate_p: out.per_replicate.iter().map(|r| r.p_value).collect(),
                        strict: true,
                    })
                }
                MethodSpec::RankOracle {
                    phi,
                    k_p,
                    train_fraction,
                    p,
                    mc_null_draws,
                } => {
                    let cfg = TestConfig {
                        split: SplitConfig {
                            n_learn: ((cell.n_total as f64) * train_fraction).floor() as usize,
                            p: *p,
                            pre_shuffle: true,
                            derangements: false,
                        },
                        phi: ScoreGenFn::parse(phi)?,
                        ranker: RankerChoice::Forest(ForestConfig::default()),
                        alpha: plan.alphas[0],
                        k_p: *k_p,
                        null_mode: NullCalibration::Auto,
                        mc_null_draws: *mc_null_draws,
                    };
                    let oracle = cell.model.oracle_scorer()?;
                    let out = run_test_with_oracle_cached(&data, &cfg, &oracle, store, test_stream)?;
                    Ok(DrawResult {
                        p_value: out.p_value,
                        replicate_p: out.per_replicate.iter().map(|r| r.p_value).collect(),
                        strict: true,
                    })
                }
                MethodSpec::Hsic { k0 } | MethodSpec::DcorL1 { k0 } | MethodSpec::DcorL2 { k0 } => {
                    let cfg = BaselineConfig {
                        method: match method {
                            MethodSpec::Hsic { .. } => BaselineMethod::Hsic,
                            MethodSpec::DcorL1 { .. } => BaselineMethod::DcorL1,
                            _ => BaselineMethod::DcorL2,
                        },
                        k0: *k0,
                    };
                    let out = permutation_test(&data, &cfg, plan.alphas[0], test_stream)?;
                    Ok(DrawResult {
                        p_value: out.p_value,
                        replicate_p: vec![out.p_value],
                        strict: false,
                    })
                }
            }
        })
        .collect()
}

fn aggregate_rows(
    cell: &CellSpec,
    method: &MethodSpec,
    plan: &ExperimentPlan,
    draws: &[DrawResult],
) -> Vec<ResultRow> {
    plan.alphas
        .iter()
        .map(|&alpha| {
            let rejected = draws
                .iter()
                .filter(|d| {
                    if d.strict {
                        d.p_value < alpha
                    } else {
                        d.p_value <= alpha
                    }
                })
                .count();
            let mut rep_total = 0usize;
            let mut rep_rejected = 0usize;
            for d in draws {
                for &p in &d.replicate_p {
                    rep_total += 1;
                    if p <= alpha {
                        rep_rejected += 1;
                    }
                }
            }
            let r = rejected as f64 / plan.b as f64;
            ResultRow {
                model: cell.model.label(),
                d: cell.model.d(),
                n_total: cell.n_total,
                rho: cell.model.rho,
                method: method.label(),
                alpha,
                rejection_rate: r,
                rejection_rate_replicates: rep_rejected as f64 / rep_total as f64,
                ci_half_width: 1.96 * (r * (1.0 - r) / plan.b as f64).sqrt(),
                std_bernoulli: (r * (1.0 - r)).sqrt(),
                b: plan.b,
                seed: plan.master_seed,
            }
        })
        .collect()
}

fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "model,d,n_total,rho,method,alpha,rejection_rate,rejection_rate_replicates,\
         ci_half_width,std_bernoulli,b,seed\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.d,
            r.n_total,
            r.rho,
            r.method,
            r.alpha,
            r.rejection_rate,
            r.rejection_rate_replicates,
            r.ci_half_width,
            r.std_bernoulli,
            r.b,
            r.seed
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

const SVG_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Render labeled polylines over the unit square with a dashed diagonal
/// reference and write the SVG to `path` (shared by the power curves and the
/// ROC overlays).
pub fn write_unit_square_svg(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 50.0);
    let px = |a: f64| ml + a * (w - ml - mr);
    let py = |r: f64| h - mb - r * (h - mt - mb);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        px(0.0),
        py(0.0),
        px(1.0),
        py(0.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        px(0.0),
        py(0.0),
        px(0.0),
        py(1.0)
    ));
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t}</text>\n",
            px(t),
            py(0.0) + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{t}</text>\n",
            px(0.0) - 6.0,
            py(t) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (px(0.0) + px(1.0)) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    ));
    for (i, (label, points)) in series.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>\n",
            px(0.02),
            mt + 16.0 * (i as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Rejection-rate-vs-α plot for one cell, with the diagonal reference.
fn write_power_svg(path: &Path, title: &str, alphas: &[f64], series: &[(String, Vec<f64>)]) -> Result<()> {
    let xy: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(label, values)| {
            (
                label.clone(),
                alphas.iter().copied().zip(values.iter().copied()).collect(),
            )
        })
        .collect();
    write_unit_square_svg(path, title, "significance level", &xy)
}

/// Execute the plan: writes `results.csv`, one `power_<cell>.svg` per cell,
/// and `manifest.json`; returns the aggregated rows. A failing cell×method
/// is recorded in the manifest and skipped.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)?;
    let store = NullStore::new(RngStream::new(plan.master_seed).child(SALT_NULL));

    let body = || -> Result<Vec<ResultRow>> {
        let mut rows: Vec<ResultRow> = Vec::new();
        let mut statuses: Vec<CellMethodStatus> = Vec::new();
        let mut curves: HashMap<usize, Vec<(String, Vec<f64>)>> = HashMap::new();

        for (ci, cell) in plan.cells.iter().enumerate() {
            for method in &plan.methods {
                let started = Instant::now();
                match run_cell_method(cell, ci, method, plan, &store) {
                    Ok(draws) => {
                        let cell_rows = aggregate_rows(cell, method, plan, &draws);
                        curves.entry(ci).or_default().push((
                            method.label(),
                            cell_rows.iter().map(|r| r.rejection_rate).collect(),
                        ));
                        rows.extend(cell_rows);
                        statuses.push(CellMethodStatus {
                            cell: cell.label(),
                            method: method.label(),
                            status: "ok".to_string(),
                            runtime_seconds: started.elapsed().as_secs_f64(),
                        });
                    }
                    Err(err) => {
                        statuses.push(CellMethodStatus {
                            cell: cell.label(),
                            method: method.label(),
                            status: format!("error: {err}"),
                            runtime_seconds: started.elapsed().as_secs_f64(),
                        });
                    }
                }
            }
        }

        write_results_csv(&plan.output_dir.join("results.csv"), &rows)?;
        for (ci, series) in &curves {
            let cell = &plan.cells[*ci];
            write_power_svg(
                &plan.output_dir.join(format!("power_{}.svg", cell.label())),
                &cell.label(),
                &plan.alphas,
                series,
            )?;
        }
        let manifest = Manifest {
            plan: plan.clone(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            statuses,
        };
        let mut file = fs::File::create(plan.output_dir.join("manifest.json"))?;
        writeln!(file, "{}", serde_json::to_string_pretty(&manifest)?)?;
        Ok(rows)
    };

    match plan.jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

/// Write a dataset as CSV with header `x1..xq,y1..yl`.
pub fn write_dataset_csv<W: Write>(data: &PairedDataset, mut w: W) -> Result<()> {
    let header: Vec<String> = data
        .x_names()
        .iter()
        .chain(data.y_names().iter())
        .cloned()
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = Vec::with_capacity(data.dim());
        fields.extend(data.x_row(i).iter().map(|v| v.to_string()));
        fields.extend(data.y_row(i).iter().map(|v| v.to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub data: PairedDataset,
    /// Rows dropped because a selected cell was missing or non-numeric.
    pub dropped_rows: usize,
    /// Values of the stratification column, aligned with the kept rows.
    pub strata: Option<Vec<String>>,
}

/// Read the named numeric columns from a CSV file into a dataset. Rows with
/// a missing or non-numeric value in any selected column are dropped (and
/// counted).
pub fn ingest_csv(path: &Path, x_columns: &[String], y_columns: &[String]) -> Result<IngestReport> {
    ingest_csv_with_strata(path, x_columns, y_columns, None)
}

pub fn ingest_csv_with_strata(
    path: &Path,
    x_columns: &[String],
    y_columns: &[String],
    strata_column: Option<&str>,
) -> Result<IngestReport> {
    if x_columns.is_empty() || y_columns.is_empty() {
        return Err(Error::invalid("need at least one X column and one Y column"));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let x_idx: Vec<usize> = x_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let y_idx: Vec<usize> = y_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let strata_idx = strata_column.map(|c| find(c)).transpose()?;

    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut strata: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let parse_all = |idx: &[usize]| -> Option<Vec<f64>> {
            idx.iter()
                .map(|&i| {
                    record
                        .get(i)
                        .and_then(|s| s.trim().parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                })
                .collect()
        };
        match (parse_all(&x_idx), parse_all(&y_idx)) {
            (Some(xs), Some(ys)) => {
                if let Some(si) = strata_idx {
                    strata.push(record.get(si).unwrap_or("").to_string());
                }
                x_rows.push(xs);
                y_rows.push(ys);
            }
            _ => dropped += 1,
        }
    }
    if x_rows.len() < 2 {
        return Err(Error::EmptyData);
    }
    let data = PairedDataset::from_rows(&x_rows, &y_rows)?
        .with_names(x_columns.to_vec(), y_columns.to_vec())?;
    Ok(IngestReport {
        data,
        dropped_rows: dropped,
        strata: strata_idx.map(|_| strata),
    })
}

/// Subsample `n` rows without replacement; with `strata` given, per-stratum
/// proportions are preserved (largest-remainder rounding).
pub fn subsample(
    data: &PairedDataset,
    n: usize,
    strata: Option<&[String]>,
    stream: RngStream,
) -> Result<PairedDataset> {
    if n < 2 || n > data.n() {
        return Err(Error::invalid(format!(
            "subsample size must lie in 2..=N (n = {n}, N = {})",
            data.n()
        )));
    }
    let mut rng = stream.rng();
    let rows: Vec<usize> = match strata {
        None => {
            let perm = shuffle_with(data.n(), &mut rng);
            let mut rows: Vec<usize> = perm.as_slice()[..n].to_vec();
            rows.sort_unstable();
            rows
        }
        Some(labels) => {
            if labels.len() != data.n() {
                return Err(Error::invalid("strata labels must align with the rows"));
            }
            // Group rows per stratum in first-appearance order.
            let mut order: Vec<&String> = Vec::new();
            let mut groups: HashMap<&String, Vec<usize>> = HashMap::new();
            for (i, label) in labels.iter().enumerate() {
                groups.entry(label).or_insert_with(|| {
                    order.push(label);
                    Vec::new()
                });
                groups.get_mut(label).unwrap().push(i);
            }
            // Largest-remainder apportionment of n across strata.
            let mut targets: Vec<(usize, f64)> = order
                .iter()
                .map(|label| {
                    let share = n as f64 * groups[label].len() as f64 / data.n() as f64;
                    (share.floor() as usize, share - share.floor())
                })
                .collect();
            let mut assigned: usize = targets.iter().map(|(t, _)| t).sum();
            let mut by_remainder: Vec<usize> = (0..targets.len()).collect();
            by_remainder.sort_by(|&a, &b| targets[b].1.partial_cmp(&targets[a].1).unwrap());
            let mut cursor = 0;
            while assigned < n {
                let slot = by_remainder[cursor % by_remainder.len()];
                targets[slot].0 += 1;
                assigned += 1;
                cursor += 1;
            }
            let mut rows = Vec::with_capacity(n);
            for (label, (take, _)) in order.iter().zip(&targets) {
                let group = &groups[*label];
                let take = (*take).min(group.len());
                let perm = shuffle_with(group.len(), &mut rng);
                for &k in perm.as_slice().iter().take(take) {
                    rows.push(group[k]);
                }
            }
            rows.sort_unstable();
            rows
        }
    };
    data.select_rows(&rows)
}
