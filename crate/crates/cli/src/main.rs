//! `shadv`: render scenes, project lighting, check gradients and run
//! physically parameterised adversarial attacks.

mod attack;
mod augment;
mod check;
mod classifier;
mod info;
mod lighting;
mod render;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

/// Exit codes: 0 ok, 1 gradient check failed, 2 attack not fooled, 3 error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
    NotFooled,
}

const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "shadv", version, about = "Differentiable SH renderer and parametric adversarial attacks")]
struct Cli {
    /// Seed for every random choice a command makes
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every camera of a scene file
    Render(render::Args),
    /// Project an equirectangular environment map onto SH coefficients
    ProjectEnv(lighting::ProjectArgs),
    /// Evaluate skylight SH coefficients or regenerate the polynomial fit
    Skylight(lighting::SkylightArgs),
    /// Compare analytic derivatives with finite differences
    Gradcheck(check::Args),
    /// Run a lighting, geometry or skylight attack against a classifier
    Attack(attack::Args),
    /// Generate a labelled dataset under random or adversarial lighting
    Augment(augment::Args),
    /// Train the toy classifier, optionally with lighting augmentation
    Train(train::Args),
    /// Describe a file, or the built-in resources when no path is given
    Info(info::Args),
}

pub struct Globals {
    pub seed: u64,
    pub out: PathBuf,
}

impl Globals {
    pub fn out_dir(&self) -> anyhow::Result<&PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let g = Globals { seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Render(a) => render::run(&g, a),
        Command::ProjectEnv(a) => lighting::project(&g, a),
        Command::Skylight(a) => lighting::skylight(&g, a),
        Command::Gradcheck(a) => check::run(&g, a),
        Command::Attack(a) => attack::run(&g, a),
        Command::Augment(a) => augment::run(&g, a),
        Command::Train(a) => train::run(&g, a),
        Command::Info(a) => info::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Ok(Outcome::NotFooled) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
