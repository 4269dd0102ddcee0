use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use txscope_cli::commands;
use txscope_cli::config::{ConfigError, RunConfig};
use txscope_cli::{analyze, exit_status, CliError};
use txscope_core::ingest::Format;
use txscope_core::synth::SynthConfig;

#[derive(Parser)]
#[command(
    name = "txscope",
    version,
    about = "Temporal analytics over blockchain transaction graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Parse and classify a transaction file, reporting counts and rejects.
    IngestCheck {
        #[arg(long)]
        tx: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        contracts: Option<PathBuf>,
        /// Write rejected lines here as `line,reason`.
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Generate a synthetic transaction stream with ground truth.
    Synth(SynthArgs),
    /// Run the analytics and write a report bundle.
    Analyze(AnalyzeArgs),
    /// Correlate per-window sizes from a bundle with a price series.
    Correlate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, value_delimiter = ',')]
        metric: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
    },
    /// Verify a bundle against its manifest and print its summary.
    Report {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// JSON generator config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the demo config with planted burstiness classes.
    #[arg(long)]
    demo: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    accounts: Option<usize>,
    #[arg(long)]
    transactions: Option<usize>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    tally_days: Option<u32>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tx: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    prices: Option<String>,
    #[arg(long)]
    credits: Option<String>,
    #[arg(long)]
    contracts: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    width_days: Option<String>,
    #[arg(long)]
    stride_days: Option<String>,
    #[arg(long)]
    initial_days: Option<String>,
    #[arg(long)]
    step_days: Option<String>,
    /// Window origin as YYYY-MM-DD or epoch seconds.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    kinds: Option<String>,
    /// Comma list of sizes,degrees,weights,txcounts,motifs,burstiness,gini,ppmcc,lifecycle,balances,prices or `all`.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    min_value: Option<String>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// `both` (sent and received) or `sent`.
    #[arg(long)]
    timeline: Option<String>,
    #[arg(long)]
    mb_sample: Option<String>,
    #[arg(long)]
    lag: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    /// `eoa` or `all`.
    #[arg(long)]
    balance_scope: Option<String>,
    /// Add wall-clock runtime to summary.json (makes bundles differ run to run).
    #[arg(long)]
    record_runtime: bool,
}

impl AnalyzeArgs {
    fn into_config(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let strict = self.strict.then(|| "true".to_string());
        let runtime = self.record_runtime.then(|| "true".to_string());
        let pairs = [
            ("tx", self.tx),
            ("format", self.format),
            ("labels", self.labels),
            ("prices", self.prices),
            ("credits", self.credits),
            ("contracts", self.contracts),
            ("scheme", self.scheme),
            ("width-days", self.width_days),
            ("stride-days", self.stride_days),
            ("initial-days", self.initial_days),
            ("step-days", self.step_days),
            ("start", self.start),
            ("kinds", self.kinds),
            ("metrics", self.metrics),
            ("min-value", self.min_value),
            ("strict", strict),
            ("seed", self.seed),
            ("workers", self.workers),
            ("out", self.out),
            ("timeline", self.timeline),
            ("mb-sample", self.mb_sample),
            ("lag", self.lag),
            ("top-k", self.top_k),
            ("balance-scope", self.balance_scope),
            ("record-runtime", runtime),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn parse_format(s: &str) -> Result<Format, CliError> {
    s.parse().map_err(|e: txscope_core::ingest::IngestError| {
        ConfigError::BadValue {
            key: "format".into(),
            value: s.into(),
            reason: e.to_string(),
        }
        .into()
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable")
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::IngestCheck {
            tx,
            format,
            strict,
            contracts,
            rejects,
        } => {
            let report = commands::ingest_check(
                &tx,
                parse_format(&format)?,
                strict,
                contracts.as_deref(),
                rejects.as_deref(),
            )?;
            println!("{}", to_json(&report));
            Ok(0)
        }
        Command::Synth(args) => {
            let mut cfg = match (&args.config, args.demo) {
                (Some(p), _) => commands::load_synth_config(p)?,
                (None, true) => SynthConfig::demo(),
                (None, false) => SynthConfig::default(),
            };
            if let Some(v) = args.seed {
                cfg.seed = v;
            }
            if let Some(v) = args.accounts {
                cfg.n_accounts = v;
            }
            if let Some(v) = args.transactions {
                cfg.n_transactions = v;
            }
            if let Some(v) = args.days {
                cfg.duration_days = v;
            }
            if let Some(v) = args.tally_days {
                cfg.tally_window_days = v;
            }
            let files = commands::synth(&cfg, parse_format(&args.format)?, &args.out)?;
            println!("wrote {}", files.transactions.display());
            println!("wrote {}", files.ground_truth.display());
            println!("wrote {}", files.credits.display());
            println!("wrote {}", files.labels.display());
            println!("wrote {}", files.prices.display());
            Ok(0)
        }
        Command::Analyze(args) => {
            let cfg = args.into_config()?;
            let manifest = analyze(&cfg)?;
            for (metric, reason) in &manifest.partial_metrics {
                eprintln!("warning: {metric} incomplete: {reason}");
            }
            println!(
                "bundle written to {} ({} files, config {})",
                cfg.out.as_deref().expect("validated").display(),
                manifest.files.len() + 1,
                &manifest.config_hash[..12]
            );
            Ok(exit_status(&manifest))
        }
        Command::Correlate {
            bundle,
            prices,
            metric,
            kinds,
            scheme,
        } => {
            let rows = commands::correlate_bundle(&bundle, &prices, &metric, &kinds, &scheme)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["scheme", "kind", "metric", "n_windows", "ppmcc", "error"])
                .map_err(std::io::Error::other)?;
            for r in &rows {
                w.write_record([
                    r.scheme.clone(),
                    r.kind.clone(),
                    r.metric.clone(),
                    r.n_windows.map(|n| n.to_string()).unwrap_or_default(),
                    r.ppmcc.map(|p| p.to_string()).unwrap_or_default(),
                    r.error.clone().unwrap_or_default(),
                ])
                .map_err(std::io::Error::other)?;
            }
            w.flush()?;
            Ok(if rows.iter().all(|r| r.error.is_none()) {
                0
            } else {
                3
            })
        }
        Command::Report { bundle } => {
            let (manifest, summary, broken) = commands::report(&bundle)?;
            println!("config hash: {}", manifest.config_hash);
            println!("complete: {}", manifest.complete);
            println!("metrics: {}", manifest.metrics.join(","));
            for (m, why) in &manifest.skipped_metrics {
                println!("skipped {m}: {why}");
            }
            for (m, why) in &manifest.partial_metrics {
                println!("partial {m}: {why}");
            }
            println!("{}", to_json(&summary));
            if !broken.is_empty() {
                eprintln!("digest mismatch: {}", broken.join(", "));
                return Ok(2);
            }
            Ok(exit_status(&manifest))
        }
    }
}

fn main() -> ExitCode {
    // usage errors are configuration errors (exit 1), not clap's default 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
