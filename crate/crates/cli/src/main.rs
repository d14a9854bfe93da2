use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bifsim_cli::config::{self, Entries, RunConfig};
use bifsim_cli::{commands, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bifsim", version, about = "Pathwise solver and Monte Carlo experiments for a Brownian-driven two-drift ODE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Brownian driver
    Gen(Flags),
    /// Solve on one driver with the chosen scheme
    Solve(Flags),
    /// Bifurcation direction, time and terminal local time over many trials
    Bifurcate(Flags),
    /// Terminal local time, or the long-run local-time rate for attracting drifts
    Localtime(Flags),
    /// Excursion lifetimes and height rates
    Excursions(Flags),
    /// Local-time profile moments and the flow-derivative identity
    Rayknight(Flags),
    /// Lipschitz envelopes, the special solution and gap statistics
    Lipschitz(Flags),
    /// Closed-form and quadrature values for the given parameters
    Analytics(Flags),
    /// Smoothed and push schemes against the exact solution
    Converge(Flags),
    /// Run the acceptance suite
    Acceptance(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// key = value (or JSON) file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    beta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha2: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    barrier: Option<f64>,
    /// Directory for CSV artifacts and report.json
    #[arg(long)]
    out: Option<String>,
    /// maximal | minimal | smoothed | push | adaptive
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    min_bin: Option<usize>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x2: Option<f64>,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long)]
    t_eval: Option<f64>,
    /// Driver file (.csv with header t,value, or .bin)
    #[arg(long)]
    driver: Option<String>,
    /// csv | bin
    #[arg(long)]
    format: Option<String>,
    /// Acceptance criteria to run, e.g. 1,3,7
    #[arg(long)]
    only: Option<String>,
}

impl Flags {
    fn overlay(&self, e: &mut Entries) {
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                e.insert(k.to_string(), v);
            }
        };
        let f = |x: Option<f64>| x.map(|v| v.to_string());
        let u = |x: Option<usize>| x.map(|v| v.to_string());
        put("beta1", f(self.beta1));
        put("beta2", f(self.beta2));
        put("alpha1", f(self.alpha1));
        put("alpha2", f(self.alpha2));
        put("sigma2", f(self.sigma2));
        put("t0", f(self.t0));
        put("x0", f(self.x0));
        put("dt", f(self.dt));
        put("horizon", f(self.horizon));
        put("trials", u(self.trials));
        put("seed", self.seed.map(|v| v.to_string()));
        put("epsilon", f(self.epsilon));
        put("barrier", f(self.barrier));
        put("out", self.out.clone());
        put("scheme", self.scheme.clone());
        put("delta", f(self.delta));
        put("tol", f(self.tol));
        put("x_max", f(self.x_max));
        put("bin_width", f(self.bin_width));
        put("min_bin", u(self.min_bin));
        put("resolution", f(self.resolution));
        put("margin", f(self.margin));
        put("x1", f(self.x1));
        put("x2", f(self.x2));
        put("n_sub", u(self.n_sub));
        put("t_eval", f(self.t_eval));
        put("driver", self.driver.clone());
        put("format", self.format.clone());
        put("only", self.only.clone());
    }
}

fn split(c: Command) -> (&'static str, Flags) {
    match c {
        Command::Gen(f) => ("gen", f),
        Command::Solve(f) => ("solve", f),
        Command::Bifurcate(f) => ("bifurcate", f),
        Command::Localtime(f) => ("localtime", f),
        Command::Excursions(f) => ("excursions", f),
        Command::Rayknight(f) => ("rayknight", f),
        Command::Lipschitz(f) => ("lipschitz", f),
        Command::Analytics(f) => ("analytics", f),
        Command::Converge(f) => ("converge", f),
        Command::Acceptance(f) => ("acceptance", f),
    }
}

fn configure(flags: &Flags) -> Result<RunConfig, CliError> {
    let mut entries = match &flags.config {
        Some(path) => config::load(path)?,
        None => Entries::new(),
    };
    flags.overlay(&mut entries);
    Ok(RunConfig::from_entries(&entries)?)
}

fn main() -> ExitCode {
    let (name, flags) = split(Cli::parse().command);
    let result = configure(&flags).and_then(|cfg| {
        let report = commands::run(name, &cfg)?;
        let text = report.to_json();
        if let Some(dir) = &cfg.out {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{dir}: {e}")))?;
            let path = PathBuf::from(dir).join(format!("{name}_report.json"));
            std::fs::write(&path, format!("{text}\n")).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        let _ = writeln!(std::io::stdout().lock(), "{text}");
        Ok(report)
    });
    match result {
        Ok(report) if report.passed => ExitCode::SUCCESS,
        Ok(report) => {
            for c in report.failures() {
                eprintln!("tolerance failure: {}: {}", c.name, c.detail);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("bifsim {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
