//! `orbidiff`: run scenarios on Riemannian orbifolds.

mod out;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orbidiff::scenario::ScenarioSpec;
use orbidiff::{fixtures, Scenario64};

use run::{Ctx, Failure, Outcome};

#[derive(Parser)]
#[command(
    name = "orbidiff",
    version,
    about = "Geodesics, orbisections and local diffeomorphisms of Riemannian orbifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the configured geodesics; CSV (and SVG with --svg).
    Trace(Common),
    /// Orbifold exponential map on a grid of tangent vectors.
    Expmap(Common),
    /// σ ⋄ τ on a grid, with residuals.
    Compose(Common),
    /// σ* on a grid, with residuals.
    Invert(Common),
    /// Lie bracket of two orbisections.
    Bracket(Common),
    /// Evolution of a time-dependent orbisection.
    Evolve(Common),
    /// Weak-equivalence, descent and kernel checks for a configured map.
    Equivariance(Common),
    /// Full invariant suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file, or the name of a bundled scenario.
    #[arg(long, default_value = "mirror")]
    scenario: String,
    /// Integration step (overrides the scenario).
    #[arg(long)]
    step: Option<f64>,
    /// Geodesic time horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Pass/fail tolerance for residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for sampled checks; recorded in every CSV header.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write SVG plots (2-d scenarios only).
    #[arg(long)]
    svg: bool,
}

fn load(args: &Common) -> Result<Scenario64, Failure> {
    let path = Path::new(&args.scenario);
    let mut spec = if path.exists() {
        ScenarioSpec::from_path(path)
    } else if fixtures::source(&args.scenario).is_some() {
        fixtures::spec(&args.scenario)
    } else {
        return Err(Failure::config(format!(
            "no scenario file `{}` and no bundled scenario of that name (bundled: {})",
            args.scenario,
            fixtures::NAMES.join(", ")
        )));
    }
    .map_err(|e| Failure::config(format!("{}: {e}", args.scenario)))?;
    let c = &mut spec.commands;
    if let Some(v) = args.step {
        c.step = v;
    }
    if let Some(v) = args.horizon {
        c.horizon = v;
    }
    if let Some(v) = args.grid {
        c.grid = v;
    }
    if let Some(v) = args.tol {
        c.tol = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if !(c.step > 0.0 && c.horizon >= 0.0 && c.tol > 0.0) {
        return Err(Failure::config(
            "--step and --tol must be positive and --horizon non-negative",
        ));
    }
    Scenario64::build(spec).map_err(|e| Failure::config(format!("{}: {e}", args.scenario)))
}

type Op = fn(&Ctx) -> Result<Outcome, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (op, args): (Op, &Common) = match &cli.command {
        Command::Trace(a) => (run::trace, a),
        Command::Expmap(a) => (run::expmap, a),
        Command::Compose(a) => (run::compose, a),
        Command::Invert(a) => (run::invert, a),
        Command::Bracket(a) => (run::bracket_cmd, a),
        Command::Evolve(a) => (run::evolve_cmd, a),
        Command::Equivariance(a) => (run::equivariance, a),
        Command::Verify(a) => (run::verify_cmd, a),
    };
    let result = load(args).and_then(|scenario| {
        run::ensure_dir(&args.out)?;
        op(&Ctx {
            scenario,
            out: args.out.clone(),
            svg: args.svg,
        })
    });
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::InvariantFailure) => ExitCode::from(1),
        Err(f) => {
            eprintln!("orbidiff: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
