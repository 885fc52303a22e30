use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdpump::config::{OutputFormat, Overrides, RunConfig};
use cdpump::error::PumpError;
use cdpump::run::{self, Artifacts};

#[derive(Parser)]
#[command(name = "cdpump", version, about = "Counter-diabatic Thouless pump experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rice-Mele pump with the counter-diabatic term
    Forward(Flags),
    /// Control-freak protocol against its closed-form bond charges
    Controlfreak(Flags),
    /// Optimize a nearest-neighbor drive from the Rice-Mele baseline
    Inverse(Flags),
    /// Real-space continuity, locality and bond-charge checks
    Realspace(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drive with the bare Hamiltonian only
    #[arg(long)]
    no_cd: bool,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    k_points: Option<usize>,
    #[arg(long)]
    t_points: Option<usize>,
    #[arg(long)]
    harmonics: Option<usize>,
    /// csv or csv+svg
    #[arg(long)]
    format: Option<String>,
}

impl Flags {
    fn config(&self) -> Result<RunConfig, PumpError> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let format = self.format.as_deref().map(str::parse::<OutputFormat>).transpose()?;
        base.apply(&Overrides {
            out: self.out.clone(),
            no_cd: self.no_cd,
            omega: self.omega,
            k_points: self.k_points,
            t_points: self.t_points,
            harmonics: self.harmonics,
            format,
        })
    }
}

fn report(result: &Result<Artifacts, PumpError>) {
    match result {
        Ok(art) => {
            for c in &art.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} files to {}", art.files.len(), art.dir.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
}

type Driver = fn(&RunConfig) -> Result<Artifacts, PumpError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (flags, driver): (&Flags, Driver) = match &cli.command {
        Command::Forward(f) => (f, run::run_forward),
        Command::Controlfreak(f) => (f, run::run_controlfreak),
        Command::Inverse(f) => (f, run::run_inverse),
        Command::Realspace(f) => (f, run::run_realspace),
    };
    let result = flags.config().and_then(|cfg| driver(&cfg));
    report(&result);
    ExitCode::from(run::exit_code(&result) as u8)
}
