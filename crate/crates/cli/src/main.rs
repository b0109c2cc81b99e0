use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl From<bosecond::Error> for CliError {
    fn from(e: bosecond::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bosecond", version, about = "Second-order Bose gas energy: scattering, Bogoliubov coefficients, Fock-space checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Particle number.
    #[arg(long, global = true)]
    n: Option<u64>,
    /// Comma-separated particle numbers for scans.
    #[arg(long, global = true, value_delimiter = ',')]
    n_list: Option<Vec<u64>>,
    #[arg(long, global = true)]
    ell: Option<f64>,
    /// Momentum cutoff |n|² ≤ cutoff_sq.
    #[arg(long, global = true)]
    cutoff_sq: Option<i64>,
    #[arg(long, global = true)]
    mesh_steps: Option<usize>,
    /// Fock modes |n|² ≤ modes_sq.
    #[arg(long, global = true)]
    modes_sq: Option<i64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    eigencount: Option<usize>,
    #[arg(long, global = true)]
    k_max: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Neumann problem: solution JSON and momentum-space residual CSV.
    Scatter,
    /// Per-mode quadratic coefficients.
    Coeffs,
    /// Energy report by both routes.
    Energy,
    /// Born terms with tails.
    Born,
    /// Dispersion table.
    Spectrum,
    /// Exact diagonalization against the Bogoliubov predictions.
    Ed,
    /// Symbolic commutator expansion and structure report.
    Expand,
    /// N scan with fitted exponents.
    Study,
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(kappa, beta, n, n_list, ell, cutoff_sq, mesh_steps, modes_sq, n_max, eigencount, depth, trials, output, seed);
        if self.k_max.is_some() {
            c.k_max = self.k_max;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    let cfg = cli.run_config()?;
    match cli.command {
        Command::Scatter => commands::scatter(&cfg),
        Command::Coeffs => commands::coeffs(&cfg),
        Command::Energy => commands::energy(&cfg),
        Command::Born => commands::born(&cfg),
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Ed => commands::ed(&cfg),
        Command::Expand => commands::expand(&cfg),
        Command::Study => commands::study(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
