use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use compjp::config::SimConfig;
use compjp::results::{emit_results, write_drop_rows, write_results, ResultsRow};
use compjp::sim::{run_experiment_with, RunOptions};
use compjp::Error;

/// Downlink CoMP joint-processing Monte-Carlo simulator.
///
/// Settings come from the defaults, then `--config`, then `--set`, then the
/// dedicated flags; later sources win.
#[derive(Parser, Debug)]
#[command(name = "compjp", version)]
struct Cli {
    /// scp, isc, sc or dc.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    drops: Option<String>,
    /// Blocks per drop (even).
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    ue_antennas: Option<String>,
    #[arg(long)]
    bs_antennas: Option<String>,
    #[arg(long)]
    jmax: Option<String>,
    /// Integer or `unbounded`.
    #[arg(long)]
    lmax: Option<String>,
    /// perfect or estimated.
    #[arg(long)]
    csi: Option<String>,
    /// epa, etu or custom.
    #[arg(long)]
    channel: Option<String>,
    /// Pilot length in resource elements.
    #[arg(long)]
    nt: Option<String>,
    /// Pilot length as a fraction of the block.
    #[arg(long)]
    nt_ratio: Option<String>,
    /// UE-side antenna correlation.
    #[arg(long)]
    beta: Option<String>,
    /// PF forgetting factor.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key, e.g. `--set noise-dbm=-100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Results file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-block plan dumps.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-drop metrics.
    #[arg(long)]
    per_drop: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl Cli {
    fn config(&self) -> compjp::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?,
            None => SimConfig::default(),
        };
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        let flags = [
            ("scheme", &self.scheme),
            ("drops", &self.drops),
            ("blocks", &self.blocks),
            ("ue-antennas", &self.ue_antennas),
            ("bs-antennas", &self.bs_antennas),
            ("jmax", &self.jmax),
            ("lmax", &self.lmax),
            ("csi", &self.csi),
            ("channel", &self.channel),
            ("nt", &self.nt),
            ("nt-ratio", &self.nt_ratio),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("seed", &self.seed),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> compjp::Result<()> {
    let cfg = cli.config()?;
    if cli.print_config {
        cfg.validate()?;
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let result = run_experiment_with(&cfg, &RunOptions { trace: cli.trace.is_some() })?;
    let rows = [ResultsRow::from_run(&result)];
    match &cli.out {
        Some(p) => emit_results(&rows, p)?,
        None => write_results(&rows, std::io::stdout().lock())?,
    }
    if let Some(p) = &cli.trace {
        std::fs::write(p, result.trace()).map_err(|e| Error::Io { path: p.clone(), source: e })?;
    }
    if let Some(p) = &cli.per_drop {
        let f = std::fs::File::create(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        write_drop_rows(&result, std::io::BufWriter::new(f))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
