// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cpdbench_core::analysis::{cd_diagram, compare, rank_scores, ZeroMethod};
use cpdbench_core::annosim::{agreement_pvalue, estimate_eta, reports_markdown, SimConfig};
use cpdbench_core::data::{load_dataset_dir, save_dataset};
use cpdbench_core::detect::DetectorKind;
use cpdbench_core::experiments::{
    aggregate, read_records, run_experiment, score_records, summary_markdown, write_records, ExperimentPlan, Mode,
    ScoreMatrix,
};
use cpdbench_core::metrics::{Metric, MetricConfig};
use cpdbench_core::{synth, AnnotationDb, IndexBase};
use cpdbench_service::{Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "cpdbench", version, about = "Change point detection benchmark toolkit")]
struct Cli {
    /// Seed for every random choice made by the subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run detectors over a dataset directory and write detection records.
    Run(RunArgs),
    /// Score detection records against annotations.
    Evaluate(EvaluateArgs),
    /// Rank methods and test for significant differences.
    Analyze(AnalyzeArgs),
    /// Compare annotator agreement with a random-annotator null model.
    SimulateAgreement(SimulateArgs),
    /// Write synthetic series from the built-in catalog.
    Synth(SynthArgs),
    /// Serve the annotation collection API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Base {
    Zero,
    One,
}

impl From<Base> for IndexBase {
    fn from(b: Base) -> Self {
        match b {
            Base::Zero => IndexBase::Zero,
            Base::One => IndexBase::One,
        }
    }
}

#[derive(Debug, Args)]
struct AnnotationArgs {
    /// Annotation file: series -> annotator -> change points.
    #[arg(long)]
    annotations: PathBuf,
    /// Index base of the locations in the annotation file.
    #[arg(long, value_enum, default_value = "one")]
    index_base: Base,
}

impl AnnotationArgs {
    fn load(&self) -> Result<AnnotationDb> {
        AnnotationDb::load(&self.annotations, self.index_base.into())
            .with_context(|| format!("loading {}", self.annotations.display()))
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Optional annotations, checked against the series lengths before running.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "one")]
    index_base: Base,
    #[arg(long, default_value = "default")]
    mode: Mode,
    /// Comma-separated detectors; defaults to all benchmark methods.
    #[arg(long, value_delimiter = ',')]
    detectors: Vec<DetectorKind>,
    /// Per-configuration time limit in seconds (oracle default: 1800).
    #[arg(long)]
    timeout: Option<f64>,
    /// Leave runtimes out of the records so reruns are byte-identical.
    #[arg(long)]
    no_runtime: bool,
    #[arg(long, default_value = "records.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    annotations: AnnotationArgs,
    #[arg(long, default_value_t = 5)]
    margin: usize,
    /// Comma-separated metrics to write.
    #[arg(long, value_delimiter = ',', default_value = "cover,f1")]
    metrics: Vec<Metric>,
    #[arg(long, default_value = "scores.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Zeros {
    Wilcox,
    Pratt,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Metric to analyze when the score file holds several.
    #[arg(long, default_value = "f1")]
    metric: Metric,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Keep quality-control series in the analysis.
    #[arg(long)]
    include_quality_control: bool,
    #[arg(long, value_enum, default_value = "wilcox")]
    zero_method: Zeros,
    #[arg(long, default_value = "report.json")]
    out_report: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// Per-dataset ranks as CSV.
    #[arg(long)]
    out_ranks: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    annotations: AnnotationArgs,
    /// Directory with the series, used for their lengths.
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Expected change points per simulated annotator, or `auto` to use
    /// the mean of the annotation file.
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    #[arg(long, value_delimiter = ',', default_value = "cover,f1")]
    metrics: Vec<Metric>,
    /// Reports as JSON; a markdown table is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Catalog series to generate; `all` writes the whole catalog.
    #[arg(long, value_delimiter = ',', required = true)]
    name: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write the true change points as an annotation file.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Series to collect annotations for.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Directory for the event log; state is kept in memory without it.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Static files served outside `/api`.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Bearer token for the export endpoint.
    #[arg(long, env = "CPDBENCH_ADMIN_TOKEN")]
    admin_token: Option<String>,
    #[arg(long, default_value_t = 5)]
    annotators_per_series: usize,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs, seed: u64) -> Result<()> {
    let series = load_dataset_dir(&args.dataset_dir)
        .with_context(|| format!("loading {}", args.dataset_dir.display()))?;
    if let Some(path) = &args.annotations {
        let db = AnnotationDb::load(path, args.index_base.into())?;
        for s in &series {
            db.validate_series(s.name(), s.len())?;
        }
    }
    let detectors = if args.detectors.is_empty() {
        DetectorKind::BENCHMARK.to_vec()
    } else {
        args.detectors
    };
    let mut plan = ExperimentPlan::new(args.mode, &detectors).with_runtime(!args.no_runtime);
    if args.timeout.is_some() {
        plan = plan.with_timeout(args.timeout);
    }
    plan.seed = seed;
    log::info!(
        "running {} configurations on {} series",
        plan.cardinality(series.len()),
        series.len()
    );
    let records = run_experiment(&plan, &series);
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_records(BufWriter::new(file), &records)?;
    eprintln!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let file = fs::File::open(&args.records).with_context(|| format!("opening {}", args.records.display()))?;
    let records = read_records(BufReader::new(file))?;
    let db = args.annotations.load()?;
    let cfg = MetricConfig::new(args.margin, 1.0)?;
    let matrices: Vec<ScoreMatrix> = score_records(&records, &db, &cfg)?
        .into_iter()
        .filter(|m| args.metrics.contains(&m.metric))
        .collect();
    write_file(&args.out, &ScoreMatrix::to_csv(&matrices)?)?;
    for m in &matrices {
        let (bench, _) = m.split_quality_control();
        // Quality-control series are left out of the means unless nothing else is scored.
        let means = aggregate(if bench.series.is_empty() { m } else { &bench })?;
        println!("{}:", m.metric);
        for (method, v) in means {
            println!("  {method:<10} {v:.3}");
        }
    }
    let columns: Vec<(&str, &ScoreMatrix)> = matrices.iter().map(|m| (m.metric.as_str(), m)).collect();
    log::debug!("\n{}", summary_markdown(&columns)?);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        bail!("--alpha must be in (0, 1)");
    }
    let text = fs::read_to_string(&args.scores).with_context(|| format!("reading {}", args.scores.display()))?;
    let all = ScoreMatrix::from_csv(&text)?;
    let Some(mut sm) = all.into_iter().find(|m| m.metric == args.metric) else {
        bail!("{} holds no {} scores", args.scores.display(), args.metric);
    };
    if !args.include_quality_control {
        sm = sm.split_quality_control().0;
    }
    if !args.methods.is_empty() {
        let names: Vec<&str> = args.methods.iter().map(String::as_str).collect();
        sm = sm.select_methods(&names)?;
    }
    let zeros = match args.zero_method {
        Zeros::Wilcox => ZeroMethod::Wilcox,
        Zeros::Pratt => ZeroMethod::Pratt,
    };
    let report = compare(&sm, args.alpha, zeros)?;
    write_file(&args.out_report, &report.to_json())?;
    if let Some(path) = &args.out_svg {
        write_file(path, &cd_diagram(&report))?;
    }
    if let Some(path) = &args.out_ranks {
        write_file(path, &rank_scores(&sm.complete_rows())?.to_csv())?;
    }
    println!(
        "{} datasets, Friedman chi2 = {:.4} (df {}), p = {:.4}",
        report.datasets, report.friedman.statistic, report.friedman.dof, report.friedman.p_value
    );
    for (m, r) in report.methods.iter().zip(&report.mean_ranks) {
        println!("  {m:<10} {r:.3}");
    }
    Ok(())
}

fn simulate(args: SimulateArgs, seed: u64) -> Result<()> {
    let db = args.annotations.load()?;
    let eta = if args.eta == "auto" {
        estimate_eta(&db)?
    } else {
        args.eta
            .parse::<f64>()
            .with_context(|| format!("--eta must be `auto` or a number, got {:?}", args.eta))?
    };
    log::info!("eta = {eta:.4}");
    let series = load_dataset_dir(&args.dataset_dir)?;
    let mut reports = Vec::new();
    for s in &series {
        let Some(anns) = db.annotations(s.name()) else {
            log::warn!("{} has no annotations; skipped", s.name());
            continue;
        };
        db.validate_series(s.name(), s.len())?;
        for &metric in &args.metrics {
            let cfg = SimConfig::new(eta, args.iters, metric, seed);
            reports.push(agreement_pvalue(s.name(), &anns, s.len(), &cfg)?);
        }
    }
    print!("{}", reports_markdown(&reports));
    if let Some(path) = &args.out {
        write_file(path, &serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(())
}

fn synth_cmd(args: SynthArgs, seed: u64) -> Result<()> {
    let names: Vec<String> = if args.name.iter().any(|n| n == "all") {
        synth::catalog().iter().map(|s| s.name.to_owned()).collect()
    } else {
        args.name
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut truth = AnnotationDb::new();
    for name in &names {
        let g = synth::generate(name, seed)?;
        let path = args.out.join(format!("{name}.json"));
        save_dataset(&g.series, &path)?;
        truth.merge(g.truth_annotations());
        eprintln!("wrote {}", path.display());
    }
    if let Some(path) = &args.truth {
        truth.save(path)?;
    }
    Ok(())
}

fn serve(args: ServeArgs, seed: u64) -> Result<()> {
    let series = match &args.dataset_dir {
        Some(dir) => load_dataset_dir(dir)?,
        None => Vec::new(),
    };
    if series.is_empty() {
        log::warn!("no series to annotate; only the introduction is available");
    }
    let service = Service::open(ServiceConfig {
        series,
        annotators_per_series: args.annotators_per_series,
        admin_token: args.admin_token,
        store_dir: args.store,
        seed,
        ..ServiceConfig::default()
    })?;
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(cpdbench_service::serve(addr, service, args.assets))?;
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors exit with status 2 from inside `parse`.
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::Run(a) => run(a, cli.seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Analyze(a) => analyze(a),
        Command::SimulateAgreement(a) => simulate(a, cli.seed),
        Command::Synth(a) => synth_cmd(a, cli.seed),
        Command::Serve(a) => serve(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
