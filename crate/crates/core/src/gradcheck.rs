//! Finite-difference checks of the analytic image Jacobians on a scene.
//!
//! Every check keeps the fragment buffer of the unperturbed scene, so
//! geometry differences measure the frozen-visibility derivative.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::{AdversaryError, AttackScene, SceneLighting, View};
use crate::image::Image;
use crate::lighting::skylight::{skylight_sh_grad_unchecked, skylight_sh_unchecked};
use crate::lighting::{ShCoeffs, SkylightFit, SkylightParams};
use crate::mesh::{face_normals, face_normals_of, FaceNormals, TriMesh};
use crate::raster::{rasterize, FragmentBuffer};
use crate::shade::{d_image_d_albedo, d_image_d_lighting, d_image_d_vertices, shade};

pub const LIGHTING_TOLERANCE: f64 = 1e-9;
pub const ALBEDO_TOLERANCE: f64 = 1e-9;
pub const GEOMETRY_TOLERANCE: f64 = 1e-4;
pub const SKYLIGHT_TOLERANCE: f64 = 1e-4;
/// Vertex step relative to the bounding-box diagonal.
pub const GEOMETRY_STEP: f64 = 1e-6;
pub const SKYLIGHT_STEP: f64 = 1e-5;

/// Columns whose magnitude stays below this are compared in absolute terms.
const ABS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSpace {
    Lighting,
    Geometry,
    Albedo,
    Skylight,
}

impl CheckSpace {
    pub fn tolerance(self) -> f64 {
        match self {
            CheckSpace::Lighting => LIGHTING_TOLERANCE,
            CheckSpace::Geometry => GEOMETRY_TOLERANCE,
            CheckSpace::Albedo => ALBEDO_TOLERANCE,
            CheckSpace::Skylight => SKYLIGHT_TOLERANCE,
        }
    }
}

impl std::str::FromStr for CheckSpace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lighting" => Ok(Self::Lighting),
            "geometry" => Ok(Self::Geometry),
            "albedo" => Ok(Self::Albedo),
            "skylight" => Ok(Self::Skylight),
            other => Err(format!("unknown space '{other}' (lighting, geometry, albedo, skylight)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub space: CheckSpace,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter with the largest error.
    pub worst: String,
    pub tolerance: f64,
}

impl GradCheck {
    fn new(space: CheckSpace) -> Self {
        Self { space, checked: 0, max_rel_error: 0.0, worst: String::new(), tolerance: space.tolerance() }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = what();
        }
    }

    fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, or the absolute difference for tiny columns.
pub fn column_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale < ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

fn central(plus: &Image, minus: &Image, h: f64) -> Vec<f64> {
    plus.data().iter().zip(minus.data()).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

const AXES: [&str; 3] = ["x", "y", "z"];
const CHANNELS: [&str; 3] = ["r", "g", "b"];

/// Columns of `∂I/∂U` against differences of the shading, plus shading
/// against `J·U` (the image is linear in `U`).
pub fn check_lighting(
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    u: &ShCoeffs,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<GradCheck, AdversaryError> {
    let mut out = GradCheck::new(CheckSpace::Lighting);
    let jac = d_image_d_lighting(frags, normals, u.bands())?;
    let direct = shade(frags, normals, u)?;
    let mut linear = jac.jvp(u)?;
    // jvp covers only foreground pixels; the background is added back here.
    for p in 0..frags.num_pixels() {
        if frags.face(p).is_none() {
            linear.set_pixel(p, frags.background_at(p));
        }
    }
    out.record(column_error(linear.data(), direct.data()), || "linearity".into());
    let h = 1.0;
    for _ in 0..samples {
        let (k, c) = (rng.random_range(0..u.num_coeffs()), rng.random_range(0..3));
        let mut delta = ShCoeffs::zeros(u.bands());
        delta.set(k, c, 1.0);
        let analytic = jac.jvp(&delta)?;
        let (mut up, mut um) = (u.clone(), u.clone());
        up.set(k, c, u.get(k, c) + h);
        um.set(k, c, u.get(k, c) - h);
        let numeric = central(&shade(frags, normals, &up)?, &shade(frags, normals, &um)?, h);
        out.record(column_error(analytic.data(), &numeric), || format!("coefficient {k} channel {}", CHANNELS[c]));
    }
    Ok(out)
}

/// Columns of `∂I/∂ρ` for visible faces against differences of re-rendered albedo.
pub fn check_albedo(
    mesh: &TriMesh,
    view: &View,
    u: &ShCoeffs,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<GradCheck, AdversaryError> {
    let mut out = GradCheck::new(CheckSpace::Albedo);
    let frags = rasterize(mesh, &view.camera, view.background.clone())?;
    let normals = face_normals(mesh);
    let jac = d_image_d_albedo(&frags, &normals, u)?;
    let visible = visible_faces(&frags);
    if visible.is_empty() {
        return Ok(out);
    }
    let h = 0.01;
    for _ in 0..samples {
        let f = *visible.choose(rng).expect("non-empty");
        let c = rng.random_range(0..3);
        let mut delta = vec![[0.0; 3]; mesh.num_faces()];
        delta[f][c] = 1.0;
        let analytic = jac.jvp(&delta)?;
        let render_with = |s: f64| -> Result<Image, AdversaryError> {
            let mut albedo = mesh.albedo().to_vec();
            albedo[f][c] += s;
            let fr = rasterize(&mesh.with_albedo(albedo)?, &view.camera, view.background.clone())?;
            Ok(shade(&fr, &normals, u)?)
        };
        // one-sided so the albedo stays in [0, 1]; exact since shading is linear in it
        let s = if mesh.albedo()[f][c] + h <= 1.0 { h } else { -h };
        let base = shade(&frags, &normals, u)?;
        let numeric: Vec<f64> = render_with(s)?.data().iter().zip(base.data()).map(|(p, b)| (p - b) / s).collect();
        out.record(column_error(analytic.data(), &numeric), || format!("face {f} channel {}", CHANNELS[c]));
    }
    Ok(out)
}

fn visible_faces(frags: &FragmentBuffer) -> Vec<usize> {
    let mut v: Vec<usize> = (0..frags.num_pixels()).filter_map(|p| frags.face(p)).map(|f| f as usize).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Columns of the frozen-visibility `∂I/∂V` against central differences of
/// the shading with recomputed face normals.
pub fn check_geometry(
    mesh: &TriMesh,
    frags: &FragmentBuffer,
    u: &ShCoeffs,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<GradCheck, AdversaryError> {
    let mut out = GradCheck::new(CheckSpace::Geometry);
    let jac = d_image_d_vertices(frags, mesh, u)?;
    let mut verts: Vec<usize> =
        visible_faces(frags).into_iter().flat_map(|f| mesh.faces()[f]).map(|v| v as usize).collect();
    verts.sort_unstable();
    verts.dedup();
    if verts.is_empty() {
        return Ok(out);
    }
    let diag = mesh.bounding_box().map(|(lo, hi)| (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt());
    let h = GEOMETRY_STEP * diag.unwrap_or(1.0).max(f64::MIN_POSITIVE);
    for _ in 0..samples {
        let v = *verts.choose(rng).expect("non-empty");
        let a = rng.random_range(0..3);
        let mut delta = vec![[0.0; 3]; mesh.num_vertices()];
        delta[v][a] = 1.0;
        let analytic = jac.jvp(&delta)?;
        let shaded = |s: f64| -> Result<Image, AdversaryError> {
            let mut vs = mesh.vertices().to_vec();
            vs[v][a] += s;
            let n = face_normals_of(&vs, mesh.faces())?;
            Ok(shade(frags, &n, u)?)
        };
        let numeric = central(&shaded(h)?, &shaded(-h)?, h);
        out.record(column_error(analytic.data(), &numeric), || format!("vertex {v} axis {}", AXES[a]));
    }
    Ok(out)
}

/// `∂I/∂(θ_s, φ_s, τ)` through the SH chain rule against central
/// differences of the rendered image.
pub fn check_skylight(
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    params: &SkylightParams,
    fit: &SkylightFit,
) -> Result<GradCheck, AdversaryError> {
    let mut out = GradCheck::new(CheckSpace::Skylight);
    let u = skylight_sh_unchecked(params, fit);
    let jac = d_image_d_lighting(frags, normals, u.bands())?;
    let grad = skylight_sh_grad_unchecked(params, fit);
    let x = params.to_array();
    for (i, (name, du)) in
        [("theta_s", &grad.d_theta_s), ("phi_s", &grad.d_phi_s), ("turbidity", &grad.d_turbidity)].into_iter().enumerate()
    {
        let analytic = jac.jvp(du)?;
        let at = |s: f64| -> Result<Image, AdversaryError> {
            let mut y = x;
            y[i] += s;
            let p = SkylightParams { theta_s: y[0], phi_s: y[1], turbidity: y[2] };
            Ok(shade(frags, normals, &skylight_sh_unchecked(&p, fit))?)
        };
        let h = SKYLIGHT_STEP;
        let numeric = central(&at(h)?, &at(-h)?, h);
        out.record(column_error(analytic.data(), &numeric), || name.to_string());
    }
    Ok(out)
}

/// Run one check over every view of a scene. `samples` columns are drawn
/// per view (skylight always checks its three parameters).
pub fn check_scene(scene: &AttackScene, space: CheckSpace, samples: usize, seed: u64) -> Result<GradCheck, AdversaryError> {
    if scene.views.is_empty() {
        return Err(AdversaryError::NoViews);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = scene.lighting.coefficients();
    let normals = face_normals(&scene.mesh);
    let mut total = GradCheck::new(space);
    for view in &scene.views {
        let frags = rasterize(&scene.mesh, &view.camera, view.background.clone())?;
        let r = match space {
            CheckSpace::Lighting => check_lighting(&frags, &normals, &u, samples, &mut rng)?,
            CheckSpace::Albedo => check_albedo(&scene.mesh, view, &u, samples, &mut rng)?,
            CheckSpace::Geometry => check_geometry(&scene.mesh, &frags, &u, samples, &mut rng)?,
            CheckSpace::Skylight => match &scene.lighting {
                SceneLighting::Skylight { params, fit } => check_skylight(&frags, &normals, params, fit)?,
                SceneLighting::Sh(_) => {
                    return Err(AdversaryError::Config("skylight check needs skylight lighting".into()));
                }
            },
        };
        total.merge(r);
    }
    Ok(total)
}
