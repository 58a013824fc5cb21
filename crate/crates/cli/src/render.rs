use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use shadv::scene::SceneFile;
use shadv::AttackScene;

use crate::{Globals, Outcome};

#[derive(clap::Args)]
pub struct Args {
    /// Scene file (JSON, scene_version 1)
    pub scene: PathBuf,
    /// Image format: png, ppm, pfm or raw (little-endian f32 RGB)
    #[arg(long, default_value = "png")]
    pub format: String,
    /// Override the scene resolution, e.g. 256x256
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Option<(usize, usize)>,
}

pub fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let parse = |v: &str| v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| format!("bad dimension '{v}'"));
    Ok((parse(w)?, parse(h)?))
}

pub fn check_format(format: &str) -> anyhow::Result<()> {
    if !matches!(format, "png" | "ppm" | "pfm" | "raw") {
        bail!("unknown image format '{format}' (png, ppm, pfm, raw)");
    }
    Ok(())
}

pub fn load_scene(path: &Path, resolution: Option<(usize, usize)>) -> anyhow::Result<AttackScene> {
    let file = SceneFile::load(path).with_context(|| format!("loading scene {}", path.display()))?;
    let mut scene = file.build().with_context(|| format!("building scene {}", path.display()))?;
    if let Some((w, h)) = resolution {
        for v in &mut scene.views {
            v.camera = v.camera.with_resolution(w, h)?;
        }
    }
    Ok(scene)
}

pub fn run(g: &Globals, a: Args) -> anyhow::Result<Outcome> {
    check_format(&a.format)?;
    let scene = load_scene(&a.scene, a.resolution)?;
    let out = g.out_dir()?;
    for (i, img) in scene.render_all()?.iter().enumerate() {
        let path = out.join(format!("view_{i:02}.{}", a.format));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        println!("{} {}x{} max {:.6}", path.display(), img.width(), img.height(), img.max_value());
    }
    Ok(Outcome::Ok)
}
