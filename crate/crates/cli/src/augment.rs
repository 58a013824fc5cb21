use std::f64::consts::FRAC_PI_3;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shadv::adversary::{SceneLighting, View};
use shadv::fixtures::{toy_bank, ToyShape, BACKGROUND_GRAYS, RING_VIEWS};
use shadv::raster::camera_ring;
use shadv::scene::{RingSpec, SceneFile};
use shadv::train::RANDOM_LIGHTING_RANGE;
use shadv::{run_attack, AttackConfig, AttackScene, Background, Classifier, ParamSpace};

use crate::classifier::{parse_shapes, ClassifierArgs, Loaded};
use crate::render::check_format;
use crate::{Globals, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Random,
    Adversarial,
}

#[derive(clap::Args)]
pub struct Args {
    /// Scene bank: JSON lines of {"scene": path, "label": n}, paths relative to the bank
    #[arg(long, conflicts_with = "toy")]
    pub bank: Option<PathBuf>,
    /// Use generated toy scenes instead of a bank file: two-class or three-class
    #[arg(long, value_parser = parse_shapes)]
    pub toy: Option<&'static [ToyShape]>,
    /// Toy scenes to generate
    #[arg(long, default_value_t = 20)]
    pub toy_scenes: usize,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Images to emit
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub mode: Mode,
    /// Random mode: each SH coefficient moves by U[-range, range]
    #[arg(long, default_value_t = RANDOM_LIGHTING_RANGE)]
    pub range: f64,
    /// Adversarial mode: L∞ radius around the scene lighting
    #[arg(long, default_value_t = f64::INFINITY)]
    pub eps: f64,
    /// Adversarial mode: step size
    #[arg(long, default_value_t = shadv::adversary::DEFAULT_STEP_SIZE)]
    pub gamma: f64,
    /// Adversarial mode: iteration budget
    #[arg(long, default_value_t = shadv::adversary::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
    /// Background gray levels to draw from
    #[arg(long, value_delimiter = ',', default_values_t = BACKGROUND_GRAYS)]
    pub grays: Vec<f64>,
    /// Cameras on the azimuth ring
    #[arg(long, default_value_t = RING_VIEWS)]
    pub ring: usize,
    /// Zenith angle of the ring in radians
    #[arg(long, default_value_t = FRAC_PI_3)]
    pub zenith: f64,
    #[arg(long, default_value = "png")]
    pub format: String,
}

#[derive(Deserialize)]
struct BankRow {
    scene: PathBuf,
    label: usize,
}

struct Source {
    scene: AttackScene,
    label: usize,
    name: String,
}

#[derive(Serialize)]
struct ManifestRow {
    path: String,
    label: usize,
    source: String,
    view: usize,
    background: f64,
    mode: Mode,
    bands: usize,
    lighting: Vec<f64>,
    /// Whether the adversarial search fooled the classifier.
    #[serde(skip_serializing_if = "Option::is_none")]
    fooled: Option<bool>,
    seed: u64,
    stream: u64,
}

fn load_bank(path: &Path) -> anyhow::Result<Vec<Source>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let f = File::open(path).with_context(|| format!("opening bank {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: BankRow = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let scene_path = base.join(&row.scene);
        let scene = SceneFile::load(&scene_path)
            .and_then(|s| s.build())
            .with_context(|| format!("loading {}", scene_path.display()))?;
        out.push(Source { scene, label: row.label, name: row.scene.display().to_string() });
    }
    Ok(out)
}

pub fn run(g: &Globals, a: Args) -> anyhow::Result<Outcome> {
    check_format(&a.format)?;
    if a.grays.is_empty() || a.ring == 0 {
        bail!("need at least one background gray and one ring camera");
    }
    let sources = match (&a.bank, a.toy) {
        (Some(p), _) => load_bank(p)?,
        (None, Some(shapes)) => toy_bank(shapes, a.toy_scenes, g.seed, false)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Source { scene: s.scene, label: s.label, name: format!("toy:{i}") })
            .collect(),
        (None, None) => bail!("pass --bank or --toy"),
    };
    if sources.is_empty() {
        bail!("scene bank is empty");
    }
    if sources.iter().any(|s| s.scene.views.is_empty()) {
        bail!("every bank scene needs a camera to take its resolution from");
    }
    let mut clf = match a.mode {
        Mode::Adversarial => Some(a.classifier.load()?),
        Mode::Random => None,
    };
    let out = g.out_dir()?;
    fs::create_dir_all(out.join("images"))?;

    let make = |i: usize, clf: Option<&mut dyn Classifier>| -> anyhow::Result<ManifestRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
        rng.set_stream(i as u64);
        let src = &sources[rng.random_range(0..sources.len())];
        let view = rng.random_range(0..a.ring);
        let gray = a.grays[rng.random_range(0..a.grays.len())];
        let cam = &src.scene.views[0].camera;
        let ring = RingSpec::default();
        let camera = camera_ring(a.ring, a.zenith, ring.radius, ring.projection, ring.fov, cam.width(), cam.height())?[view];
        let base = src.scene.lighting.coefficients();
        let mut scene = AttackScene {
            mesh: src.scene.mesh.clone(),
            lighting: SceneLighting::Sh(base.clone()),
            views: vec![View { camera, background: Background::Color([gray; 3]) }],
        };
        let mut fooled = None;
        match clf {
            None => scene.lighting = SceneLighting::Sh(shadv::train::random_lighting(&base, a.range, &mut rng)),
            Some(c) => {
                let config = AttackConfig {
                    step_size: a.gamma,
                    max_iterations: a.max_iter,
                    ..AttackConfig::new(ParamSpace::Lighting, src.label, a.eps)
                };
                let o = run_attack(&scene, c, &config)?;
                fooled = Some(o.trace.fooled);
                scene = o.scene;
            }
        }
        let img = scene.render_all()?.remove(0);
        let rel = format!("images/{i:05}.{}", a.format);
        img.save(&out.join(&rel))?;
        let u = scene.lighting.coefficients();
        Ok(ManifestRow {
            path: rel,
            label: src.label,
            source: src.name.clone(),
            view,
            background: gray,
            mode: a.mode,
            bands: u.bands(),
            lighting: u.into_data(),
            fooled,
            seed: g.seed,
            stream: i as u64,
        })
    };

    let rows: Vec<ManifestRow> = match clf.as_mut() {
        None => (0..a.count).into_par_iter().map(|i| make(i, None)).collect::<anyhow::Result<_>>()?,
        Some(Loaded::Toy(toy)) => {
            let toy = toy.clone();
            (0..a.count)
                .into_par_iter()
                .map_init(|| toy.clone(), |c, i| make(i, Some(c)))
                .collect::<anyhow::Result<_>>()?
        }
        Some(ext) => (0..a.count).map(|i| make(i, Some(ext.as_dyn()))).collect::<anyhow::Result<_>>()?,
    };
    let mut w = BufWriter::new(File::create(out.join("manifest.jsonl"))?);
    for r in &rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if let Some(f) = rows.iter().map(|r| r.fooled).collect::<Option<Vec<bool>>>() {
        println!("{} of {} adversarial searches fooled the classifier", f.iter().filter(|x| **x).count(), f.len());
    }
    println!("wrote {} images and {}", rows.len(), out.join("manifest.jsonl").display());
    Ok(Outcome::Ok)
}
