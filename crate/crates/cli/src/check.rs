use std::path::PathBuf;

use shadv::gradcheck::{check_scene, CheckSpace};

use crate::render::load_scene;
use crate::{Globals, Outcome};

#[derive(clap::Args)]
pub struct Args {
    /// Scene file
    pub scene: PathBuf,
    /// lighting, geometry, albedo or skylight
    #[arg(long, default_value = "lighting")]
    pub space: CheckSpace,
    /// Random directions or parameters checked per view
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Override the scene resolution, e.g. 64x64
    #[arg(long, value_parser = crate::render::parse_resolution)]
    pub resolution: Option<(usize, usize)>,
    /// Replace the space's default tolerance
    #[arg(long)]
    pub tolerance: Option<f64>,
}

pub fn run(g: &Globals, a: Args) -> anyhow::Result<Outcome> {
    let scene = load_scene(&a.scene, a.resolution)?;
    let mut report = check_scene(&scene, a.space, a.samples, g.seed)?;
    if let Some(t) = a.tolerance {
        report.tolerance = t;
    }
    println!("{}", serde_json::to_string(&report)?);
    if report.passed() {
        println!("ok: max relative error {:.3e} <= {:.0e} over {} checks", report.max_rel_error, report.tolerance, report.checked);
        Ok(Outcome::Ok)
    } else {
        eprintln!(
            "FAILED: max relative error {:.3e} > {:.0e}, worst at {}",
            report.max_rel_error, report.tolerance, report.worst
        );
        Ok(Outcome::CheckFailed)
    }
}
