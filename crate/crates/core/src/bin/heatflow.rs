use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatflow::cli::{self, Overrides, RunConfig, EXIT_ERROR};
use heatflow::flow::Method;

#[derive(Parser)]
#[command(name = "heatflow", version, about = "Geometric heat flow trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its artifacts.
    Run(Target),
    /// Run both methods over the config's `sweep` list of penalties.
    Sweep(Target),
}

#[derive(Args)]
struct Target {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    /// `aghf` or `el_aghf`.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    min_s: Option<f64>,
    #[arg(long)]
    wall_limit: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Target {
    fn load(&self) -> heatflow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        Overrides {
            lambda: self.lambda,
            method: self.method,
            nt: self.nt,
            epsilon: self.epsilon,
            s_max: self.s_max,
            min_s: self.min_s,
            wall_limit: self.wall_limit,
            out: self.out.clone(),
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Command::Run(t) => match t.load().and_then(|c| cli::run(&c)) {
            Ok(o) => {
                let r = &o.report;
                println!(
                    "{} lambda={} converged={} s={:.4e} e(T)={:.4e} e_hat(T)={:.4e} e_viol={:.4e} -> {}",
                    r.method.label(),
                    r.lambda,
                    r.converged,
                    r.s_reached,
                    r.e_t,
                    r.e_hat_t,
                    r.e_viol,
                    o.output.display()
                );
                o.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
        Command::Sweep(t) => match t.load().and_then(|c| cli::sweep(&c)) {
            Ok(table) => {
                print!("{}", table.render());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
    };
    ExitCode::from(code as u8)
}
