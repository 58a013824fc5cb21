//! Bundled toy scenes: relief plates rendered under the reference lighting,
//! used to train the toy classifier and to exercise the attacks end to end.

use std::f64::consts::{FRAC_PI_3, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{AttackScene, SceneLighting, View};
use crate::classifier::ToyClassifier;
use crate::image::Image;
use crate::lighting::ShCoeffs;
use crate::mesh::TriMesh;
use crate::raster::{camera_ring, Background, Camera, Projection};
use crate::train::{train_toy, LabeledScene, TrainOptions};

/// Side length of toy renders in pixels.
pub const TOY_RESOLUTION: usize = 16;
/// Gray levels used as backgrounds.
pub const BACKGROUND_GRAYS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Azimuths on the default camera ring.
pub const RING_VIEWS: usize = 10;
/// Zenith angle of the default camera ring.
pub const RING_ZENITH: f64 = FRAC_PI_3;
/// Ring view of every training and attack render. Dome and bowl swap
/// appearance under a half turn of the camera, so the view is held fixed.
pub const TOY_VIEW: usize = 0;
const RING_RADIUS: f64 = 3.0;
const VIEW_WIDTH: f64 = 2.6;
/// Relief depths of training and held-out scenes.
pub const DEPTH_RANGE: (f64, f64) = (0.25, 0.9);
/// Relief depths of the attack suite: shallow enough that occlusion gives
/// no cue and the classes differ in shading only.
pub const ATTACK_DEPTH_RANGE: (f64, f64) = (0.25, 0.45);

static CATHEDRAL: &str = include_str!("../data/lighting/cathedral.shc");

/// Representative order-2 indoor lighting shipped with the crate.
pub fn reference_lighting() -> ShCoeffs {
    ShCoeffs::parse(CATHEDRAL).expect("bundled lighting parses")
}

/// Object categories of the toy task: a square plate carrying a smooth
/// bump, a dent of the same profile, or nothing. Their silhouettes agree,
/// so the classes are told apart by shading alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyShape {
    Dome,
    Bowl,
    Flat,
}

/// Classes of the two-class attack suite.
pub const TWO_CLASS: [ToyShape; 2] = [ToyShape::Dome, ToyShape::Bowl];
/// Classes of the three-class illusion fixture.
pub const THREE_CLASS: [ToyShape; 3] = [ToyShape::Dome, ToyShape::Bowl, ToyShape::Flat];

/// Grid vertices per side of fine and coarse plates.
const FINE_GRID: usize = 101;
const COARSE_GRID: usize = 33;

impl ToyShape {
    pub fn name(self) -> &'static str {
        match self {
            ToyShape::Dome => "dome",
            ToyShape::Bowl => "bowl",
            ToyShape::Flat => "flat",
        }
    }

    /// Plate of side 2 with relief depth `depth`. Fine meshes have over 10K
    /// vertices for geometry attacks; coarse ones keep training cheap.
    pub fn mesh(self, fine: bool, depth: f64, albedo: [f64; 3]) -> TriMesh {
        let sign = match self {
            ToyShape::Dome => 1.0,
            ToyShape::Bowl => -1.0,
            ToyShape::Flat => 0.0,
        };
        relief(if fine { FINE_GRID } else { COARSE_GRID }, sign * depth, albedo)
    }
}

/// Square height field over `[−1, 1]²` with `z = h (1 − r²)²` inside the unit
/// circle and zero outside.
fn relief(n: usize, h: f64, albedo: [f64; 3]) -> TriMesh {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (coord(i), coord(j));
            let r2 = x * x + y * y;
            let z = if r2 < 1.0 { h * (1.0 - r2) * (1.0 - r2) } else { 0.0 };
            vertices.push([x, y, z]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v = (j * n + i) as u32;
            let n = n as u32;
            faces.push([v, v + 1, v + n + 1]);
            faces.push([v, v + n + 1, v + n]);
        }
    }
    TriMesh::with_uniform_albedo(vertices, faces, albedo).expect("grid faces are valid")
}

fn spun(mesh: &TriMesh, angle: f64) -> TriMesh {
    let (s, c) = angle.sin_cos();
    let v = mesh.vertices().iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect();
    mesh.with_vertices(v).expect("rotation keeps faces valid")
}

/// Free parameters of one toy render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyVariant {
    pub shape: ToyShape,
    pub view: usize,
    pub background: f64,
    pub albedo: [f64; 3],
    pub depth: f64,
    pub spin: f64,
}

impl ToyVariant {
    pub fn random(shape: ToyShape, depth: (f64, f64), rng: &mut impl Rng) -> Self {
        let base = [0.8, 0.5, 0.25];
        Self {
            shape,
            view: TOY_VIEW,
            background: BACKGROUND_GRAYS[rng.random_range(0..BACKGROUND_GRAYS.len())],
            albedo: base.map(|a: f64| (a + rng.random_range(-0.15..0.15)).clamp(0.05, 1.0)),
            depth: rng.random_range(depth.0..depth.1),
            spin: rng.random_range(0.0..TAU),
        }
    }
}

/// Orthographic cameras of the default ring at a given resolution.
pub fn toy_ring(resolution: usize) -> Vec<Camera> {
    camera_ring(RING_VIEWS, RING_ZENITH, RING_RADIUS, Projection::Orthographic, VIEW_WIDTH, resolution, resolution)
        .expect("ring cameras are valid")
}

/// Single-view scene for a variant under `lighting`.
pub fn toy_scene(v: &ToyVariant, lighting: &ShCoeffs, fine: bool) -> AttackScene {
    let mesh = spun(&v.shape.mesh(fine, v.depth, v.albedo), v.spin);
    let camera = toy_ring(TOY_RESOLUTION)[v.view];
    AttackScene {
        mesh,
        lighting: SceneLighting::Sh(lighting.clone()),
        views: vec![View { camera, background: Background::Color([v.background; 3]) }],
    }
}

/// Labelled single-view scenes cycling through `shapes`.
pub fn toy_bank(shapes: &[ToyShape], count: usize, seed: u64, fine: bool) -> Vec<LabeledScene> {
    toy_bank_in(shapes, DEPTH_RANGE, count, seed, fine)
}

/// As [`toy_bank`] with relief depths drawn from `depth`.
pub fn toy_bank_in(shapes: &[ToyShape], depth: (f64, f64), count: usize, seed: u64, fine: bool) -> Vec<LabeledScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lighting = reference_lighting();
    (0..count)
        .map(|i| {
            let shape = shapes[i % shapes.len()];
            let v = ToyVariant::random(shape, depth, &mut rng);
            LabeledScene { scene: toy_scene(&v, &lighting, fine), label: shapes.iter().position(|s| *s == shape).unwrap() }
        })
        .collect()
}

/// Render every scene of a bank with its own lighting.
pub fn render_bank(bank: &[LabeledScene]) -> Vec<(Image, usize)> {
    bank.iter()
        .map(|s| (s.scene.render_all().expect("toy scenes render")[0].clone(), s.label))
        .collect()
}

/// Classifier trained without augmentation on `count` reference-lit renders.
pub fn trained_toy(shapes: &[ToyShape], count: usize, seed: u64) -> ToyClassifier {
    let data = render_bank(&toy_bank(shapes, count, seed, false));
    let init = ToyClassifier::random(TOY_RESOLUTION, TOY_RESOLUTION, crate::classifier::DEFAULT_HIDDEN, shapes.len(), seed);
    let opts = TrainOptions { seed, ..TrainOptions::default() };
    train_toy(&init, &data, &[], &opts).expect("non-empty dataset").0
}

/// Fine-mesh scenes from `toy_bank_in` over [`ATTACK_DEPTH_RANGE`] that `clf`
/// classifies correctly.
pub fn attack_suite(clf: &ToyClassifier, shapes: &[ToyShape], count: usize, seed: u64) -> Vec<LabeledScene> {
    toy_bank_in(shapes, ATTACK_DEPTH_RANGE, count, seed, true)
        .into_iter()
        .filter(|s| {
            let img = &s.scene.render_all().expect("toy scenes render")[0];
            clf.forward(img).map(|p| crate::classifier::argmax(&p) == s.label).unwrap_or(false)
        })
        .collect()
}

/// Ring views of the two-view illusion fixture, half a turn apart.
pub const ILLUSION_VIEWS: [usize; 2] = [0, 5];

/// A fine flat plate seen from [`ILLUSION_VIEWS`]. Under the reference
/// lighting a bump reads as a dome from one side and as a bowl from the
/// other, so one deformation can carry a different label into each view.
pub fn illusion_scene() -> AttackScene {
    let v = ToyVariant { shape: ToyShape::Flat, view: 0, background: 0.5, albedo: [0.8, 0.5, 0.25], depth: 0.0, spin: 0.3 };
    let mut scene = toy_scene(&v, &reference_lighting(), true);
    let ring = toy_ring(TOY_RESOLUTION);
    let background = scene.views[0].background.clone();
    scene.views = ILLUSION_VIEWS.iter().map(|&i| View { camera: ring[i], background: background.clone() }).collect();
    scene
}
