use clap::{Parser, Subcommand, ValueEnum};
use iqsense::detection::DetectorMode;
use iqsense::experiments::{
    cmd_analytic, cmd_figure, cmd_frame, cmd_outage, cmd_sense, cmd_sweep, ExperimentConfig, FigureId, OutputFormat,
};
use iqsense::montecarlo::with_workers;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Spectrum sensing under I/Q imbalance: closed forms and Monte Carlo.
#[derive(Debug, Parser)]
#[command(name = "iqsense", version)]
struct Cli {
    /// JSON configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per hypothesis per evaluated point.
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// False-alarm target for `--mode two-cfar`.
    #[arg(long, global = true, default_value_t = 0.1)]
    target_pfa: f64,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Four,
    TwoBayes,
    TwoCfar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Variances, thresholds and closed-form probabilities.
    Analytic,
    /// Monte Carlo run at one scenario.
    Sense {
        /// Exit with status 1 unless every conditional frequency is within
        /// three standard errors of its exact value.
        #[arg(long)]
        verify: bool,
    },
    /// Sweep one scenario parameter for every configured detector.
    Sweep,
    /// Regenerate the data behind figure 3, 4, 5 or 6.
    Figure { id: u32 },
    /// Sense every subcarrier of one OFDMA frame.
    Frame,
    /// Primary-link outage at the configured IRR.
    Outage,
}

fn configure(cli: &Cli) -> iqsense::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(mode) = cli.mode {
        let mode = match mode {
            ModeArg::Four => DetectorMode::FourLevel,
            ModeArg::TwoBayes => DetectorMode::TwoLevelBayes,
            ModeArg::TwoCfar => DetectorMode::TwoLevelCfar { target_pfa: cli.target_pfa },
        };
        cfg.scenario.mode = mode;
        cfg.modes = vec![mode];
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = cli.format {
        cfg.format = match format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> iqsense::Result<ExitCode> {
    let report = match &cli.command {
        Command::Analytic => cmd_analytic(cfg)?,
        Command::Sense { verify } => cmd_sense(cfg, *verify)?,
        Command::Sweep => cmd_sweep(cfg)?,
        Command::Figure { id } => cmd_figure(cfg, FigureId::from_number(*id)?)?,
        Command::Frame => cmd_frame(cfg)?,
        Command::Outage => cmd_outage(cfg)?,
    };
    let bytes = report.render(cfg.format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(match report.verified {
        Some(false) => {
            eprintln!("iqsense: analytic/empirical closure check failed");
            ExitCode::from(1)
        }
        _ => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("iqsense: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.workers {
        Some(n) => with_workers(n, || run(&cli, &cfg)).and_then(|r| r),
        None => run(&cli, &cfg),
    };
    result.unwrap_or_else(|e| {
        eprintln!("iqsense: {e}");
        ExitCode::from(2)
    })
}
