use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use shadv::adversary::{AttackOutcome, SceneLighting};
use shadv::mesh::{albedo_sidecar_path, save_albedo, save_obj};
use shadv::{run_attack, AttackConfig, AttackScene, ParamSpace};

use crate::classifier::ClassifierArgs;
use crate::render::{check_format, load_scene};
use crate::{Globals, Outcome};

#[derive(clap::Args)]
pub struct Args {
    /// Scene file
    pub scene: PathBuf,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Label whose probability the attack lowers
    #[arg(long)]
    pub label: usize,
    /// Label whose probability the attack raises (targeted attack)
    #[arg(long)]
    pub target: Option<usize>,
    /// lighting, geometry or skylight
    #[arg(long, default_value = "lighting")]
    pub space: ParamSpace,
    /// L∞ radius around the starting parameters [default: 0.1 lighting, 0.002 geometry, 0.1 skylight]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Gradient step size
    #[arg(long, default_value_t = shadv::adversary::DEFAULT_STEP_SIZE)]
    pub gamma: f64,
    /// Iteration budget
    #[arg(long, default_value_t = shadv::adversary::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
    /// Attack only these camera indices, summing their gradients
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<usize>>,
    /// One target label per attacked view; overrides --target
    #[arg(long, value_delimiter = ',')]
    pub illusion: Option<Vec<usize>>,
    /// Override the scene resolution, e.g. 16x16
    #[arg(long, value_parser = crate::render::parse_resolution)]
    pub resolution: Option<(usize, usize)>,
    /// Image format for before/after renders
    #[arg(long, default_value = "png")]
    pub format: String,
}

pub fn default_epsilon(space: ParamSpace) -> f64 {
    match space {
        ParamSpace::Lighting => 0.1,
        ParamSpace::Geometry => 0.002,
        ParamSpace::Skylight => 0.1,
    }
}

pub fn run(g: &Globals, a: Args) -> anyhow::Result<Outcome> {
    check_format(&a.format)?;
    let scene = load_scene(&a.scene, a.resolution)?;
    let mut clf = a.classifier.load()?;
    let config = AttackConfig {
        increase: a.target,
        increase_per_view: a.illusion.as_ref().map(|v| v.iter().map(|&l| Some(l)).collect()),
        step_size: a.gamma,
        max_iterations: a.max_iter,
        attacked_views: a.views.clone(),
        ..AttackConfig::new(a.space, a.label, a.eps.unwrap_or(default_epsilon(a.space)))
    };
    if a.illusion.is_some() && a.target.is_some() {
        bail!("--illusion and --target are mutually exclusive");
    }
    let outcome = run_attack(&scene, clf.as_dyn(), &config)?;
    let out = g.out_dir()?;
    write_artifacts(out, &scene, &outcome, &a.format)?;

    let trace = &outcome.trace;
    let last = trace.records.last().unwrap_or(&trace.initial);
    match trace.iterations_to_fool() {
        Some(n) => println!("fooled after {n} iterations, cost {:.4}, L∞ {:.3e}", last.cost, last.linf_distance),
        None => println!("not fooled in {} iterations, cost {:.4}, L∞ {:.3e}", a.max_iter, last.cost, last.linf_distance),
    }
    for c in &last.confidences {
        println!("view {}: predicted {}, p(label) {:.4}", c.view, c.predicted, c.decrease);
    }
    Ok(if trace.fooled { Outcome::Ok } else { Outcome::NotFooled })
}

fn write_artifacts(out: &Path, before: &AttackScene, outcome: &AttackOutcome, format: &str) -> anyhow::Result<()> {
    let trace_path = out.join("trace.jsonl");
    outcome.trace.write_jsonl(BufWriter::new(File::create(&trace_path)?)).context("writing trace")?;
    for (tag, scene) in [("before", before), ("after", &outcome.scene)] {
        for (i, img) in scene.render_all()?.iter().enumerate() {
            img.save(&out.join(format!("{tag}_{i:02}.{format}")))?;
        }
    }
    match outcome.trace.space {
        ParamSpace::Geometry => {
            let obj = out.join("mesh.obj");
            save_obj(&outcome.scene.mesh, &obj)?;
            save_albedo(outcome.scene.mesh.albedo(), &albedo_sidecar_path(&obj))?;
        }
        _ => match &outcome.scene.lighting {
            SceneLighting::Sh(u) => u.save(&out.join("lighting.shc"))?,
            SceneLighting::Skylight { params, .. } => {
                let json = serde_json::json!({
                    "theta_s": params.theta_s,
                    "phi_s": params.phi_s,
                    "turbidity": params.turbidity,
                });
                std::fs::write(out.join("skylight.json"), serde_json::to_string_pretty(&json)?)?;
            }
        },
    }
    Ok(())
}
