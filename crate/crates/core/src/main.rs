use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpn_rigidity::cli_report::{
    cmd_all, cmd_check, cmd_obstruction, emit, parse_checks, parse_n_list, report_integrals, ConfigLayer, OutputFormat,
    ReportError, RunConfig, RunReport,
};
use cpn_rigidity::identity_suite::EtaMode;

#[derive(Parser)]
#[command(name = "cpn-rigidity", version, about = "Second-order Einstein deformation checks on CP^n × CP^1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact standard integrals, volumes and ∫f_γ³.
    Integrals(Common),
    /// Run the identity suite.
    Check(Common),
    /// Evaluate the obstruction 𝓘(h).
    Obstruction(Common),
    /// Integrals, identities and obstruction in one report.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Dimensions, e.g. `2`, `1,2,3` or `1..4`.
    #[arg(long = "n")]
    n: Option<String>,
    /// Use dimensions 1..=N (also the table size for `integrals`).
    #[arg(long)]
    n_max: Option<usize>,
    /// Comma-separated identity tags or `all`.
    #[arg(long)]
    checks: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    partitions: Option<u32>,
    /// `gamma` or `random:K`.
    #[arg(long)]
    eta: Option<EtaMode>,
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(self) -> Result<(RunConfig, Option<usize>), ReportError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ReportError::Config(format!("cannot read {}: {e}", path.display())))?;
                ConfigLayer::parse_file(&text)?
            }
            None => ConfigLayer::default(),
        };
        let flags = ConfigLayer {
            n: self.n.as_deref().map(parse_n_list).transpose().map_err(ReportError::Config)?,
            n_max: self.n_max,
            checks: self.checks.as_deref().map(parse_checks).transpose().map_err(ReportError::Config)?,
            samples: self.samples,
            seed: self.seed,
            partitions: self.partitions,
            eta: self.eta,
            format: self.format,
            out: self.out,
            ..ConfigLayer::default()
        };
        let n_max = flags.n_max.or(file.n_max);
        Ok((RunConfig::resolve([file, flags])?, n_max))
    }
}

fn run(command: Command) -> Result<RunReport, ReportError> {
    match command {
        Command::Integrals(c) => {
            let explicit = c.n_max;
            let (cfg, n_max) = c.resolve()?;
            report_integrals(&cfg, explicit.or(n_max).unwrap_or_else(|| cfg.n_max()))
        }
        Command::Check(c) => cmd_check(&c.resolve()?.0),
        Command::Obstruction(c) => cmd_obstruction(&c.resolve()?.0),
        Command::All(c) => {
            let (cfg, n_max) = c.resolve()?;
            cmd_all(&cfg, n_max.unwrap_or_else(|| cfg.n_max()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command).and_then(|r| emit(&r).map(|text| (r, text))) {
        Ok((report, text)) => {
            if let Some(text) = text {
                print!("{text}");
            }
            let s = report.summary;
            eprintln!("{} passed, {} failed of {}", s.passed, s.failed, s.total);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
