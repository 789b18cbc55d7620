//! Command-line front end: synthetic data generation, independence tests on
//! CSV files, experiment plans, null tables, ROC curves and bound reports.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankindep::baselines::{permutation_test, BaselineConfig, BaselineMethod};
use rankindep::bounds::{epsilon_for_model, type2_first_term};
use rankindep::datagen::{M1Variant, ModelSpec};
use rankindep::error::{Error, Result};
use rankindep::harness::{
    ingest_csv_with_strata, run_experiment, subsample, write_dataset_csv, write_unit_square_svg,
    ExperimentPlan,
};
use rankindep::nulldist::{build_null, NullMode};
use rankindep::ranking::ForestConfig;
use rankindep::rng::RngStream;
use rankindep::roc::{check_eq4_gumbel, oracle_roc_monte_carlo};
use rankindep::scoregen::ScoreGenFn;
use rankindep::split::SplitConfig;
use rankindep::testproc::{run_test, NullCalibration, RankerChoice, TestConfig};

#[derive(Parser)]
#[command(
    name = "rankindep",
    version,
    about = "Ranking-based nonparametric independence testing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dependence model and emit CSV (header x1..xq,y1..yl)
    Generate(GenerateArgs),
    /// Test independence between column blocks of a CSV file
    Test(TestArgs),
    /// Run an experiment plan (JSON) and write tables, curves and a manifest
    Experiment(ExperimentArgs),
    /// Tabulate the null distribution of the rank statistic
    NullTable(NullTableArgs),
    /// Monte Carlo oracle ROC curves and the AUC identity report
    Roc(RocArgs),
    /// Evaluate the explicit theoretical constants
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model: gl, gl+, m1, m1s, m1d or gumbel
    #[arg(long)]
    model: String,
    /// Pair dimension d = q + l (even; ignored for gumbel)
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Dependence parameter
    #[arg(long)]
    rho: f64,
    /// GL+ cross-covariance row u (1-based X coordinate)
    #[arg(long, default_value_t = 1)]
    u: usize,
    /// Use the unscaled Γ_ρ covariance instead of (1/√d)·Γ_ρ (GL/GL+ only)
    #[arg(long)]
    unscaled: bool,
}

impl ModelArgs {
    fn build(&self) -> Result<ModelSpec> {
        let scaled = !self.unscaled;
        match self.model.to_ascii_lowercase().as_str() {
            "gl" => ModelSpec::gl(self.d, self.rho, scaled),
            "gl+" | "glplus" => ModelSpec::gl_plus(self.d, self.rho, self.u, scaled),
            "m1" => ModelSpec::m1(self.d, self.rho, M1Variant::M1),
            "m1s" => ModelSpec::m1(self.d, self.rho, M1Variant::M1s),
            "m1d" => ModelSpec::m1(self.d, self.rho, M1Variant::M1d),
            "gumbel" => ModelSpec::gumbel(self.rho),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of pairs to draw
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV file
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated X column names
    #[arg(long, value_delimiter = ',')]
    xcols: Vec<String>,
    /// Comma-separated Y column names
    #[arg(long, value_delimiter = ',')]
    ycols: Vec<String>,
    /// Method: rank, hsic, dcor-l1 or dcor-l2
    #[arg(long, default_value = "rank")]
    method: String,
    /// Score-generating function: mww, rtb:<u0> or pow:<q>
    #[arg(long, default_value = "mww")]
    phi: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Shuffle-replicate count K_p (rank method)
    #[arg(long, default_value_t = 10)]
    kp: usize,
    /// Positive-class proportion p
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Learning-half fraction n/N
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    /// Candidate features per split (default ⌈√dim⌉ of the tree feature space)
    #[arg(long)]
    feature_subsample: Option<usize>,
    #[arg(long)]
    no_bootstrap: bool,
    /// Split on raw coordinates only (no squares / cross-products)
    #[arg(long)]
    no_interactions: bool,
    /// Permutation count K₀ (baseline methods)
    #[arg(long, default_value_t = 200)]
    k0: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subsample the rows to this size before testing
    #[arg(long)]
    subsample: Option<usize>,
    /// Preserve the proportions of this column's values when subsampling
    #[arg(long)]
    stratify_col: Option<String>,
    /// Write the JSON result here (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-replicate rows (statistic, p_value, reject) as CSV
    #[arg(long)]
    replicates_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Plan file (JSON)
    #[arg(long)]
    plan: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct NullTableArgs {
    #[arg(long)]
    n_minus: usize,
    #[arg(long)]
    n_plus: usize,
    #[arg(long, default_value = "mww")]
    phi: String,
    /// exhaustive or monte-carlo
    #[arg(long, default_value = "exhaustive")]
    mode: String,
    /// Monte Carlo draw count
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    /// Model: gl, gl+ or gumbel (models with an oracle scorer)
    #[arg(long, default_value = "gl")]
    model: String,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Comma-separated dependence parameters, one curve each
    #[arg(long, value_delimiter = ',')]
    rhos: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    u: usize,
    #[arg(long)]
    unscaled: bool,
    /// Monte Carlo draws per curve
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for curve CSVs and the overlay SVG
    #[arg(long, default_value = "roc_out")]
    out_dir: PathBuf,
    /// Also report both sides of the AUC identity (gumbel only)
    #[arg(long)]
    check_eq4: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Testing-half size n'
    #[arg(long, default_value_t = 1000)]
    n_prime: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value = "mww")]
    phi: String,
    /// Departure ε (omit to estimate it from --model/--rho)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    alpha: Option<f64>,
    /// Model for the ε estimate (gl, gl+ or gumbel)
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long)]
    rho: Option<f64>,
    /// Monte Carlo draws for the ε estimate
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_or_stdout(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = args.model.build()?;
    let data = spec.sample(args.n, RngStream::new(args.seed))?;
    let mut buffer = Vec::new();
    write_dataset_csv(&data, &mut buffer)?;
    write_or_stdout(&args.out, &String::from_utf8_lossy(&buffer))
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let report = ingest_csv_with_strata(
        &args.input,
        &args.xcols,
        &args.ycols,
        args.stratify_col.as_deref(),
    )?;
    if report.dropped_rows > 0 {
        eprintln!(
            "warning: dropped {} row(s) with missing or non-numeric values",
            report.dropped_rows
        );
    }
    let stream = RngStream::new(args.seed);
    let data = match args.subsample {
        Some(n) => subsample(&report.data, n, report.strata.as_deref(), stream.child(1))?,
        None => report.data,
    };

    let outcome = match args.method.to_ascii_lowercase().as_str() {
        "rank" => {
            let cfg = TestConfig {
                split: SplitConfig {
                    n_learn: ((data.n() as f64) * args.train_frac).floor() as usize,
                    p: args.p,
                    pre_shuffle: true,
                    derangements: false,
                },
                phi: ScoreGenFn::parse(&args.phi)?,
                ranker: RankerChoice::Forest(ForestConfig {
                    n_trees: args.trees,
                    max_depth: args.depth,
                    min_leaf: args.min_leaf,
                    feature_subsample: args.feature_subsample,
                    bootstrap: !args.no_bootstrap,
                    interactions: !args.no_interactions,
                }),
                alpha: args.alpha,
                k_p: args.kp,
                null_mode: NullCalibration::Auto,
                mc_null_draws: 100_000,
            };
            run_test(&data, &cfg, stream.child(2))?
        }
        other => {
            let cfg = BaselineConfig {
                method: BaselineMethod::parse(other)?,
                k0: args.k0,
            };
            permutation_test(&data, &cfg, args.alpha, stream.child(2))?
        }
    };

    if let Some(path) = &args.replicates_out {
        let mut csv = String::from("replicate,statistic,threshold,p_value,reject\n");
        for (i, rep) in outcome.per_replicate.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                i, rep.statistic, rep.threshold, rep.p_value, rep.reject
            ));
        }
        fs::write(path, csv)?;
    }
    let json = serde_json::to_string_pretty(&outcome)?;
    write_or_stdout(&args.out, &format!("{json}\n"))
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let mut plan: ExperimentPlan = serde_json::from_str(&fs::read_to_string(&args.plan)?)?;
    if args.jobs.is_some() {
        plan.jobs = args.jobs;
    }
    let rows = run_experiment(&plan)?;
    println!(
        "wrote {} result rows to {}",
        rows.len(),
        plan.output_dir.join("results.csv").display()
    );
    Ok(())
}

fn cmd_null_table(args: &NullTableArgs) -> Result<()> {
    let phi = ScoreGenFn::parse(&args.phi)?;
    let mode = match args.mode.to_ascii_lowercase().as_str() {
        "exhaustive" => NullMode::Exhaustive,
        "monte-carlo" | "monte_carlo" | "mc" => NullMode::MonteCarlo,
        other => return Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
    };
    let stream = RngStream::new(args.seed);
    let dist = build_null(args.n_minus, args.n_plus, &phi, mode, args.draws, stream)?;
    let mut buffer = Vec::new();
    dist.write_csv(&mut buffer, (stream.master_seed(), stream.stream_id()))?;
    write_or_stdout(&args.out, &String::from_utf8_lossy(&buffer))
}

fn cmd_roc(args: &RocArgs) -> Result<()> {
    if args.rhos.is_empty() {
        return Err(Error::InvalidArgument("need at least one --rhos value".into()));
    }
    fs::create_dir_all(&args.out_dir)?;
    let mut overlay: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (i, &rho) in args.rhos.iter().enumerate() {
        let spec = ModelArgs {
            model: args.model.clone(),
            d: args.d,
            rho,
            u: args.u,
            unscaled: args.unscaled,
        }
        .build()?;
        let scorer = spec.oracle_scorer()?;
        let stream = RngStream::new(args.seed).child(i as u64);
        let curve = oracle_roc_monte_carlo(&spec, &scorer, args.m, stream)?;
        let grid = curve.grid(512);
        let mut csv = String::from("fpr,tpr\n");
        for &(x, y) in &grid {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let path = args.out_dir.join(format!("roc_{}_rho{}.csv", spec.label(), rho));
        fs::write(&path, csv)?;
        println!("rho = {rho}: AUC = {:.4} -> {}", curve.auc, path.display());
        overlay.push((format!("rho = {rho}"), grid));

        if args.check_eq4 {
            let (lhs, rhs) = check_eq4_gumbel(rho, args.m, stream.child(99))?;
            let ratio = if rhs != 0.0 { lhs / rhs } else { f64::NAN };
            println!(
                "  identity report: auc_excess = {lhs:.5}, density_integral = {rhs:.5}, ratio = {ratio:.4}"
            );
        }
    }
    let svg_path = args.out_dir.join("roc_overlay.svg");
    write_unit_square_svg(
        &svg_path,
        &format!("{} oracle ROC", args.model),
        "false positive rate",
        &overlay,
    )?;
    println!("overlay -> {}", svg_path.display());
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let phi = ScoreGenFn::parse(&args.phi)?;
    let epsilon = match (args.epsilon, &args.model, args.rho) {
        (Some(e), _, _) => e,
        (None, Some(model), Some(rho)) => {
            let spec = ModelArgs {
                model: model.clone(),
                d: args.d,
                rho,
                u: 1,
                unscaled: false,
            }
            .build()?;
            let eps = epsilon_for_model(&spec, &phi, args.m, RngStream::new(args.seed))?;
            eprintln!("estimated epsilon = {eps:.6} ({} draws)", args.m);
            eps
        }
        _ => {
            return Err(Error::InvalidArgument(
                "provide --epsilon, or --model and --rho to estimate it".into(),
            ))
        }
    };
    let report = type2_first_term(args.n_prime, args.p, &phi, epsilon, args.delta, args.alpha)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Test(args) => cmd_test(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::NullTable(args) => cmd_null_table(args),
        Command::Roc(args) => cmd_roc(args),
        Command::Bounds(args) => cmd_bounds(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
