//! The `fip` command line: synthetic data generation, labeling, prediction,
//! evaluation, parameter sweeps, pattern inspection and the HTTP service.
//!
//! Configuration resolves as defaults, then the `--config` TOML file, then
//! `--set key=value` overrides, then dedicated flags such as `--k`. The
//! resolved configuration is logged on every run and embedded in every output
//! artifact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fip_core::baselines::PredictorKind;
use fip_core::config::RunConfig;
use fip_core::domain::{CustomerHistory, Day};
use fip_core::engine::{render_prediction, ModelStore, PredictRequest};
use fip_core::eval::{evaluate, sweep, write_report_csv, CellOutcome, SweepCell, SweepGrid};
use fip_core::ingest::{
    filter_customers, generate_synthetic, parse_transactions, write_sidecar, write_transactions,
};
use fip_core::labeler::{label_forgotten, labeling_stats, InstanceRecord};
use fip_core::tars::{mine_history, TarsPattern};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fip",
    version,
    about = "Interpretable forgotten-item prediction"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set xmt.temporal_boost=2.0`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic transaction CSV, its planted-event sidecar and a manifest.
    Generate(GenerateArgs),
    /// Label forgotten-item instances as JSON lines.
    Label(LabelArgs),
    /// Predict forgotten items for one customer and basket.
    Predict(PredictArgs),
    /// Evaluate one method with the split-based protocol.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of methods, k, horizons and splits.
    Sweep(SweepArgs),
    /// Inspect mined recurring-sequence patterns.
    #[command(subcommand)]
    Tars(TarsCommand),
    /// Build the per-customer profile store used by `predict` and `serve`.
    Profile(ProfileArgs),
    /// Serve the prediction API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum TarsCommand {
    /// Dump one customer's patterns as JSON.
    Dump(TarsDumpArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output CSV; the sidecar and manifest are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub customers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// JSONL output (stdout when absent); statistics go to `<out>.stats.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Horizon in days.
    #[arg(long)]
    pub h: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Transaction CSV or profile store JSON.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub customer: String,
    /// Comma-separated item tokens.
    #[arg(long, value_delimiter = ',', required = true)]
    pub basket: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub method: Option<PredictorKind>,
    /// Include score breakdowns and explanation lines.
    #[arg(long)]
    pub explain: bool,
    /// Profile reference day for CSV input (default: the day after each customer's last basket).
    #[arg(long)]
    pub as_of: Option<Day>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Report file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time per report; outputs are then no longer byte-stable.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(long)]
    pub method: Option<PredictorKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub h: Option<u32>,
    /// Training fraction.
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    /// Methods (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<PredictorKind>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 15, 20])]
    pub ks: Vec<usize>,
    /// Horizons in days (default: the configured horizon).
    #[arg(long, value_delimiter = ',')]
    pub hs: Vec<u32>,
    /// Training fractions (default: the configured split).
    #[arg(long, value_delimiter = ',')]
    pub splits: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TarsDumpArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub customer: String,
    /// JSON output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Store JSON output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub as_of: Option<Day>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Transaction CSV or profile store JSON.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Allowed CORS origin (default: any).
    #[arg(long)]
    pub origin: Option<String>,
    #[arg(long)]
    pub as_of: Option<Day>,
}

pub fn run(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides)?;
    apply_flags(&cli.command, &mut config);
    config.validate()?;
    log::info!("resolved config:\n{}", config.to_toml()?);

    match cli.command {
        Command::Generate(args) => generate(&args, &config),
        Command::Label(args) => label(&args, &config),
        Command::Predict(args) => predict(&args, config),
        Command::Evaluate(args) => evaluate_cmd(&args, &config),
        Command::Sweep(args) => sweep_cmd(&args, &config),
        Command::Tars(TarsCommand::Dump(args)) => tars_dump(&args, &config),
        Command::Profile(args) => profile(&args, config),
        Command::Serve(args) => serve(&args, config),
    }
}

/// Dedicated flags take precedence over the file and `--set`.
fn apply_flags(command: &Command, config: &mut RunConfig<f64>) {
    match command {
        Command::Generate(a) => {
            if let Some(seed) = a.seed {
                config.synthetic.seed = seed;
            }
            if let Some(n) = a.customers {
                config.synthetic.n_customers = n;
            }
        }
        Command::Label(a) => {
            if let Some(h) = a.h {
                config.labeler.horizon_days = h;
            }
        }
        Command::Predict(a) => {
            if let Some(k) = a.k {
                config.xmt.k = k;
            }
            if let Some(m) = a.method {
                config.method = m;
            }
        }
        Command::Evaluate(a) => {
            if let Some(m) = a.method {
                config.method = m;
            }
            if let Some(k) = a.k {
                config.xmt.k = k;
            }
            if let Some(h) = a.h {
                config.labeler.horizon_days = h;
            }
            if let Some(s) = a.split {
                config.split.train_fraction = s;
            }
        }
        _ => {}
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Write to `path`, or stdout when absent.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parse a transaction CSV and apply the configured filters.
pub fn load_histories(path: &Path, config: &RunConfig<f64>) -> Result<Vec<CustomerHistory>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed = parse_transactions(BufReader::with_capacity(1 << 20, file))
        .with_context(|| format!("reading {}", path.display()))?;
    let n_parsed = parsed.len();
    let kept = filter_customers(parsed, &config.filter);
    log::info!(
        "loaded {} customers ({} after filtering)",
        n_parsed,
        kept.len()
    );
    Ok(kept)
}

/// A profile store from a store JSON file, or built from a transaction CSV.
pub fn load_store(
    path: &Path,
    config: RunConfig<f64>,
    as_of: Option<Day>,
) -> Result<ModelStore<f64>> {
    if path.extension().is_some_and(|e| e == "json") {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let store = ModelStore::from_json(&text)?;
        log::info!(
            "loaded store with {} customers; its embedded config applies",
            store.len()
        );
        return Ok(store);
    }
    let histories = load_histories(path, &config)?;
    Ok(ModelStore::build(&histories, as_of, config)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig<f64>,
    transactions: String,
    sidecar: String,
    customers: usize,
    baskets: usize,
    rows: usize,
    planted_events: usize,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn generate(args: &GenerateArgs, config: &RunConfig<f64>) -> Result<()> {
    let data = generate_synthetic(&config.synthetic)?;
    let mut w = create(&args.out)?;
    write_transactions(&data.histories, &mut w)?;
    w.flush()?;

    let sidecar = sibling(&args.out, "planted.jsonl");
    let mut w = create(&sidecar)?;
    write_sidecar(&data.planted, &mut w)?;
    w.flush()?;

    let manifest = Manifest {
        config,
        transactions: file_name(&args.out),
        sidecar: file_name(&sidecar),
        customers: data.histories.len(),
        baskets: data.histories.iter().map(|h| h.len()).sum(),
        rows: data
            .histories
            .iter()
            .flat_map(|h| h.baskets())
            .map(|b| b.len())
            .sum(),
        planted_events: data.planted.len(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    emit(Some(&sibling(&args.out, "manifest.json")), text.as_bytes())?;
    log::info!(
        "wrote {} rows for {} customers, {} planted events",
        manifest.rows,
        manifest.customers,
        manifest.planted_events
    );
    Ok(())
}

#[derive(Serialize)]
struct LabelSummary<'a> {
    config: &'a RunConfig<f64>,
    #[serde(flatten)]
    stats: fip_core::labeler::LabelingStats,
}

fn label(args: &LabelArgs, config: &RunConfig<f64>) -> Result<()> {
    let histories = load_histories(&args.data, config)?;
    let mut lines = Vec::new();
    for h in &histories {
        for instance in label_forgotten(h, &config.labeler) {
            serde_json::to_writer(&mut lines, &InstanceRecord::from(&instance))?;
            lines.push(b'\n');
        }
    }
    emit(args.out.as_deref(), &lines)?;
    let stats = labeling_stats(&histories, &config.labeler);
    log::info!(
        "{} instances over {} baskets ({:.4})",
        stats.instances,
        stats.baskets,
        stats.forgotten_fraction
    );
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&LabelSummary { config, stats })?;
        text.push('\n');
        emit(Some(&sibling(out, "stats.json")), text.as_bytes())?;
    }
    Ok(())
}

fn predict(args: &PredictArgs, config: RunConfig<f64>) -> Result<()> {
    let request = PredictRequest {
        customer_id: args.customer.clone(),
        basket: args.basket.clone(),
        k: args.k,
        method: args.method,
        explain: args.explain,
    };
    let store = load_store(&args.data, config, args.as_of)?;
    let mut text = render_prediction(&store.predict(&request)?)?;
    text.push('\n');
    emit(None, text.as_bytes())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a RunConfig<f64>,
    reports: &'a [SweepCell],
}

fn write_report(
    args: &ReportArgs,
    config: &RunConfig<f64>,
    mut cells: Vec<SweepCell>,
) -> Result<()> {
    if !args.timing {
        for cell in &mut cells {
            if let CellOutcome::Report(r) = &mut cell.outcome {
                r.wall_time_s = None;
            }
        }
    }
    let bytes = match args.format {
        ReportFormat::Csv => {
            let mut out = format!("# config={}\n", serde_json::to_string(config)?).into_bytes();
            write_report_csv(&cells, &mut out)?;
            out
        }
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&JsonReport {
                config,
                reports: &cells,
            })?;
            text.push('\n');
            text.into_bytes()
        }
    };
    emit(args.out.as_deref(), &bytes)
}

fn evaluate_cmd(args: &EvaluateArgs, config: &RunConfig<f64>) -> Result<()> {
    let histories = load_histories(&args.report.data, config)?;
    let report = evaluate(&histories, config.method, &config.eval_settings())?;
    if let Some(t) = report.wall_time_s {
        log::info!(
            "{} evaluated {} customers in {t:.2}s",
            report.method,
            report.n_customers
        );
    }
    write_report(&args.report, config, vec![SweepCell::from(report)])
}

fn sweep_cmd(args: &SweepArgs, config: &RunConfig<f64>) -> Result<()> {
    let histories = load_histories(&args.report.data, config)?;
    let or = |given: &[_], default| {
        if given.is_empty() {
            vec![default]
        } else {
            given.to_vec()
        }
    };
    let grid = SweepGrid {
        methods: if args.methods.is_empty() {
            PredictorKind::ALL.to_vec()
        } else {
            args.methods.clone()
        },
        ks: args.ks.clone(),
        horizons: or(&args.hs, config.labeler.horizon_days),
        splits: if args.splits.is_empty() {
            vec![config.split.train_fraction]
        } else {
            args.splits.clone()
        },
    };
    if grid.ks.contains(&0) {
        bail!("k must be at least 1");
    }
    let cells = sweep(&histories, &grid, &config.eval_settings());
    write_report(&args.report, config, cells)
}

#[derive(Serialize)]
struct PatternDump<'a> {
    config: &'a fip_core::tars::TarsConfig,
    customer_id: &'a str,
    baskets: usize,
    patterns: Vec<TarsPattern>,
}

fn tars_dump(args: &TarsDumpArgs, config: &RunConfig<f64>) -> Result<()> {
    let histories = load_histories(&args.data, config)?;
    let Some(history) = histories
        .iter()
        .find(|h| h.customer().as_str() == args.customer)
    else {
        bail!("unknown customer {}", args.customer);
    };
    let dump = PatternDump {
        config: &config.tars,
        customer_id: &args.customer,
        baskets: history.len(),
        patterns: mine_history(history, &config.tars),
    };
    log::info!("{} patterns", dump.patterns.len());
    let mut text = serde_json::to_string_pretty(&dump)?;
    text.push('\n');
    emit(args.out.as_deref(), text.as_bytes())
}

fn profile(args: &ProfileArgs, config: RunConfig<f64>) -> Result<()> {
    let histories = load_histories(&args.data, &config)?;
    let store = ModelStore::build(&histories, args.as_of, config)?;
    emit(Some(&args.out), store.to_json()?.as_bytes())?;
    log::info!("stored {} customer profiles", store.len());
    Ok(())
}

fn serve(args: &ServeArgs, config: RunConfig<f64>) -> Result<()> {
    let store = Arc::new(load_store(&args.data, config, args.as_of)?);
    let origin = args
        .origin
        .as_deref()
        .map(|o| o.parse().with_context(|| format!("invalid origin {o}")))
        .transpose()?;
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(fip_service::serve(store, addr, origin))?;
    Ok(())
}
