use clap::{Args, Parser, Subcommand};
use nestma::cli_report::{
    cli_figures, cli_simulate, cli_solve, cli_verify, solve_output_csv, ExperimentConfig, Figure,
    WeightSetSpec,
};
use nestma::montecarlo::Phi;
use std::path::PathBuf;
use std::process::ExitCode;

/// Least-squares model averaging over nested candidate models.
#[derive(Parser)]
#[command(name = "nestma", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key-value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario: toy, fixed, div1, div2.
    #[arg(long)]
    scenario: Option<String>,
    /// Sample sizes, comma-separated.
    #[arg(long)]
    n: Option<String>,
    /// Population R-squared values, comma-separated (omit for the toy scenario).
    #[arg(long)]
    r2: Option<String>,
    /// Number of Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Penalty factors: mma, logn, or any positive number (comma-separated).
    #[arg(long)]
    phi: Option<String>,
    /// Weight sets: simplex, discrete:N, restricted:delta,tau0 (comma-separated).
    #[arg(long)]
    weight_set: Option<String>,
    /// Worker thread budget.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lift the desk-scale caps on n and reps.
    #[arg(long)]
    full: bool,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig, nestma::Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.scenario {
            cfg.set("scenario", v)?;
        }
        if let Some(v) = &self.n {
            cfg.set("n", v)?;
        }
        if let Some(v) = &self.r2 {
            cfg.set("r2", v)?;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.phi {
            cfg.set("phi", v)?;
        }
        if let Some(v) = &self.weight_set {
            cfg.set("weight_set", v)?;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if self.full {
            cfg.full = true;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write summary/sample CSVs.
    Simulate(ConfigArgs),
    /// Reproduce one of the figures (fig1a, fig1b, fig2).
    Figures {
        #[command(flatten)]
        config: ConfigArgs,
        /// Which figure to produce.
        #[arg(long)]
        figure: String,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 20240501)]
        seed: u64,
    },
    /// Select weights for a design/response pair read from CSV.
    Solve {
        /// Design matrix CSV (rows = observations, columns in nesting order).
        #[arg(long)]
        design: PathBuf,
        /// Response CSV (single column).
        #[arg(long)]
        response: PathBuf,
        /// Nesting sizes, comma-separated (e.g. 1,2,4).
        #[arg(long)]
        sizes: String,
        /// Penalty factor: mma, logn, or a positive number.
        #[arg(long, default_value = "mma")]
        phi: String,
        /// Weight set: simplex or discrete:N.
        #[arg(long, default_value = "simplex")]
        weight_set: String,
        /// Optional output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run() -> Result<ExitCode, nestma::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.build()?;
            let files = cli_simulate(&cfg)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures { config, figure } => {
            let cfg = config.build()?;
            let fig = Figure::parse(&figure)?;
            let files = cli_figures(&cfg, fig)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => {
            if cli_verify(seed) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Solve {
            design,
            response,
            sizes,
            phi,
            weight_set,
            out,
        } => {
            let sizes: Vec<usize> = sizes
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| nestma::Error::Argument(format!("bad size '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            let phi = Phi::parse(&phi)?;
            let set = WeightSetSpec::parse(&weight_set)?;
            let result = cli_solve(&design, &response, &sizes, phi, set)?;
            let csv = solve_output_csv(&result);
            match out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
