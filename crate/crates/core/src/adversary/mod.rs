//! Parametric adversarial attacks: the mixed cross-entropy cost, gradient
//! steps on lighting, geometry and skylight parameters, and the L∞
//! norm-ball projection in parameter space.

mod attack;

pub use attack::{
    random_baseline, run_attack, AttackOutcome, AttackScene, AttackTrace, SceneLighting, TraceRecord, View,
    ViewConfidence,
};

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::image::Image;
use crate::lighting::skylight::{skylight_sh_grad_unchecked, TURBIDITY_RANGE};
use crate::lighting::{LightingError, ShCoeffs, SkylightFit, SkylightParams};
use crate::math::Vec3;
use crate::mesh::{face_normals_of, FaceNormals, MeshError, TriMesh};
use crate::raster::{FragmentBuffer, RasterError};
use crate::shade::{d_image_d_lighting, d_image_d_vertices, ShadeError};

/// Probabilities are floored here before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_STEP_SIZE: f64 = 0.05;
pub const DEFAULT_MAX_ITERATIONS: usize = 30;
/// Halvings tried before a geometry step that degenerates faces is dropped.
pub const MAX_STEP_HALVINGS: usize = 5;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("invalid class distribution: {0}")]
    Distribution(String),
    #[error("label {0} out of range for {1} classes")]
    Label(usize, usize),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("no views given")]
    NoViews,
    #[error("classifier failed at iteration {iteration}")]
    Classifier { iteration: usize, source: Box<ClassifierError> },
    #[error(transparent)]
    Shade(#[from] ShadeError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Lighting(#[from] LightingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_distribution(p: &[f64], labels: &[usize]) -> Result<(), AdversaryError> {
    if p.is_empty() {
        return Err(AdversaryError::Distribution("empty".into()));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(AdversaryError::Distribution(format!("entry {v} is not a probability")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(AdversaryError::Distribution(format!("sums to {s}")));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= p.len()) {
        return Err(AdversaryError::Label(l, p.len()));
    }
    Ok(())
}

/// `−CE(f, L_d) + CE(f, L_i) = log p_d − log p_i`, with the `L_i` term
/// dropped when absent and probabilities floored at [`PROBABILITY_FLOOR`].
pub fn cost(p: &[f64], decrease: usize, increase: Option<usize>) -> Result<f64, AdversaryError> {
    let labels: Vec<usize> = std::iter::once(decrease).chain(increase).collect();
    check_distribution(p, &labels)?;
    let ln = |l: usize| p[l].max(PROBABILITY_FLOOR).ln();
    Ok(match increase {
        Some(i) if i == decrease => 0.0,
        Some(i) => ln(decrease) - ln(i),
        None => ln(decrease),
    })
}

/// Gradient of [`cost`] with respect to the softmax logits. A floored
/// probability contributes nothing, matching the flat floor.
pub fn cost_logit_gradient(p: &[f64], decrease: usize, increase: Option<usize>) -> Vec<f64> {
    let mut g = vec![0.0; p.len()];
    if increase == Some(decrease) {
        return g;
    }
    let mut add = |label: usize, sign: f64| {
        if p[label] > PROBABILITY_FLOOR {
            for (k, gk) in g.iter_mut().enumerate() {
                let e = if k == label { 1.0 } else { 0.0 };
                *gk += sign * (e - p[k]);
            }
        }
    };
    add(decrease, 1.0);
    if let Some(i) = increase {
        add(i, -1.0);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpace {
    Lighting,
    Geometry,
    Skylight,
}

impl std::str::FromStr for ParamSpace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lighting" => Ok(Self::Lighting),
            "geometry" => Ok(Self::Geometry),
            "skylight" => Ok(Self::Skylight),
            other => Err(format!("unknown parameter space '{other}'")),
        }
    }
}

/// Attack settings. `increase_per_view`, when set, gives each attacked view
/// its own target label and overrides `increase`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub decrease: usize,
    pub increase: Option<usize>,
    pub increase_per_view: Option<Vec<Option<usize>>>,
    pub step_size: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub space: ParamSpace,
    /// Indices into the scene's views; `None` attacks every view.
    pub attacked_views: Option<Vec<usize>>,
}

impl AttackConfig {
    pub fn new(space: ParamSpace, decrease: usize, epsilon: f64) -> Self {
        Self {
            decrease,
            increase: None,
            increase_per_view: None,
            step_size: DEFAULT_STEP_SIZE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            epsilon,
            space,
            attacked_views: None,
        }
    }

    pub fn validate(&self, views: usize) -> Result<Vec<usize>, AdversaryError> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(AdversaryError::Config(format!("step size {} must be non-negative", self.step_size)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(AdversaryError::Config(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(AdversaryError::Config("at least one iteration is required".into()));
        }
        if views == 0 {
            return Err(AdversaryError::NoViews);
        }
        let attacked = self.attacked_views.clone().unwrap_or_else(|| (0..views).collect());
        if attacked.is_empty() {
            return Err(AdversaryError::NoViews);
        }
        if let Some(&v) = attacked.iter().find(|&&v| v >= views) {
            return Err(AdversaryError::Config(format!("attacked view {v} but the scene has {views} views")));
        }
        if let Some(per) = &self.increase_per_view {
            if per.len() != attacked.len() {
                return Err(AdversaryError::Config(format!(
                    "{} per-view targets for {} attacked views",
                    per.len(),
                    attacked.len()
                )));
            }
        }
        Ok(attacked)
    }

    /// Target label for the `slot`-th attacked view.
    pub fn increase_for(&self, slot: usize) -> Option<usize> {
        match &self.increase_per_view {
            Some(per) => per[slot],
            None => self.increase,
        }
    }
}

/// Whether probabilities count as fooled for a decrease/increase pair.
pub fn is_fooled(p: &[f64], decrease: usize, increase: Option<usize>) -> bool {
    let top = crate::classifier::argmax(p);
    match increase {
        Some(i) => top == i,
        None => top != decrease,
    }
}

/// Clamp every entry of `current − initial` to `[−ε, ε]`.
pub fn project_norm_ball(current: &[f64], initial: &[f64], epsilon: f64) -> Vec<f64> {
    assert_eq!(current.len(), initial.len(), "parameter shapes differ");
    // entries already inside are returned bit-for-bit
    current
        .iter()
        .zip(initial)
        .map(|(&c, &i)| if (c - i).abs() <= epsilon { c } else { i + (c - i).clamp(-epsilon, epsilon) })
        .collect()
}

/// `max |current − initial|`.
pub fn linf_distance(current: &[f64], initial: &[f64]) -> f64 {
    current.iter().zip(initial).map(|(c, i)| (c - i).abs()).fold(0.0, f64::max)
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// `U − γ g` followed by projection around `initial`.
pub fn descend_lighting(u: &ShCoeffs, initial: &ShCoeffs, grad: &ShCoeffs, gamma: f64, epsilon: f64) -> ShCoeffs {
    let stepped: Vec<f64> = u.data().iter().zip(grad.data()).map(|(x, g)| x - gamma * g).collect();
    let projected = project_norm_ball(&stepped, initial.data(), epsilon);
    ShCoeffs::from_data(u.bands(), projected).expect("finite step keeps coefficients valid")
}

/// `(∂C/∂I)(∂I/∂U)` for one view.
pub fn lighting_gradient(
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    bands: usize,
    dc_di: &Image,
) -> Result<ShCoeffs, AdversaryError> {
    Ok(d_image_d_lighting(frags, normals, bands)?.vjp(dc_di)?)
}

/// One lighting descent step, then projection onto the ε-ball around `initial`.
pub fn lighting_step(
    u: &ShCoeffs,
    initial: &ShCoeffs,
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    dc_di: &Image,
    gamma: f64,
    epsilon: f64,
) -> Result<ShCoeffs, AdversaryError> {
    let g = lighting_gradient(frags, normals, u.bands(), dc_di)?;
    Ok(descend_lighting(u, initial, &g, gamma, epsilon))
}

/// Sum of per-view lighting gradients, accumulated in view order.
pub fn multiview_lighting_gradient(
    bands: usize,
    views: &[(&FragmentBuffer, &FaceNormals, &Image)],
) -> Result<ShCoeffs, AdversaryError> {
    if views.is_empty() {
        return Err(AdversaryError::NoViews);
    }
    let mut total = ShCoeffs::zeros(bands);
    for (frags, normals, dc_di) in views {
        let g = lighting_gradient(frags, normals, bands, dc_di)?;
        for (t, v) in total.data_mut().iter_mut().zip(g.data()) {
            *t += v;
        }
    }
    Ok(total)
}

pub fn multiview_lighting_step(
    u: &ShCoeffs,
    initial: &ShCoeffs,
    views: &[(&FragmentBuffer, &FaceNormals, &Image)],
    gamma: f64,
    epsilon: f64,
) -> Result<ShCoeffs, AdversaryError> {
    let g = multiview_lighting_gradient(u.bands(), views)?;
    Ok(descend_lighting(u, initial, &g, gamma, epsilon))
}

/// `(∂C/∂I)(∂I/∂N)(∂N/∂V)` for one view.
pub fn geometry_gradient(
    mesh: &TriMesh,
    frags: &FragmentBuffer,
    u: &ShCoeffs,
    dc_di: &Image,
) -> Result<Vec<Vec3>, AdversaryError> {
    Ok(d_image_d_vertices(frags, mesh, u)?.vjp(dc_di)?)
}

/// Result of a geometry step: the new mesh and the step size that was used
/// (zero when every halving still produced degenerate faces).
#[derive(Debug, Clone)]
pub struct GeometryStep {
    pub mesh: TriMesh,
    pub gamma: f64,
}

/// Move vertices against `grad`, project displacements onto the ε-box around
/// `initial`, and halve γ while the result has degenerate faces.
pub fn descend_geometry(
    mesh: &TriMesh,
    initial: &[Vec3],
    grad: &[Vec3],
    gamma: f64,
    epsilon: f64,
) -> GeometryStep {
    let cur = flatten(mesh.vertices());
    let g = flatten(grad);
    let init = flatten(initial);
    let mut gamma_try = gamma;
    for _ in 0..=MAX_STEP_HALVINGS {
        let stepped: Vec<f64> = cur.iter().zip(&g).map(|(x, d)| x - gamma_try * d).collect();
        let verts = unflatten(&project_norm_ball(&stepped, &init, epsilon));
        if face_normals_of(&verts, mesh.faces()).is_ok() {
            let next = mesh.with_vertices(verts).expect("validated vertices");
            return GeometryStep { mesh: next, gamma: gamma_try };
        }
        gamma_try *= 0.5;
    }
    GeometryStep { mesh: mesh.clone(), gamma: 0.0 }
}

pub fn geometry_step(
    mesh: &TriMesh,
    initial: &[Vec3],
    frags: &FragmentBuffer,
    u: &ShCoeffs,
    dc_di: &Image,
    gamma: f64,
    epsilon: f64,
) -> Result<GeometryStep, AdversaryError> {
    let g = geometry_gradient(mesh, frags, u, dc_di)?;
    Ok(descend_geometry(mesh, initial, &g, gamma, epsilon))
}

/// Skylight parameters as stepped by an attack. The azimuth is kept
/// unwrapped so distances to the start stay meaningful; [`Self::params`]
/// wraps it for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkylightState(pub [f64; 3]);

impl SkylightState {
    pub fn from_params(p: &SkylightParams) -> Self {
        Self(p.to_array())
    }

    pub fn params(&self) -> SkylightParams {
        SkylightParams::clamped(self.0[0], self.0[1], self.0[2])
    }
}

/// `∂C/∂(θ_s, φ_s, τ)` given `∂C/∂U`.
pub fn skylight_gradient(state: &SkylightState, fit: &SkylightFit, dc_du: &ShCoeffs) -> [f64; 3] {
    skylight_sh_grad_unchecked(&state.params(), fit).contract(dc_du)
}

/// Step, project onto the ε-box around `initial`, then clamp the sun zenith
/// to `[0, π/2]` and turbidity to the fit range.
pub fn descend_skylight(state: &SkylightState, initial: &SkylightState, grad: [f64; 3], gamma: f64, epsilon: f64) -> SkylightState {
    let stepped: Vec<f64> = state.0.iter().zip(grad).map(|(x, g)| x - gamma * g).collect();
    let p = project_norm_ball(&stepped, &initial.0, epsilon);
    SkylightState([p[0].clamp(0.0, FRAC_PI_2), p[1], p[2].clamp(TURBIDITY_RANGE.0, TURBIDITY_RANGE.1)])
}

#[allow(clippy::too_many_arguments)]
pub fn skylight_step(
    state: &SkylightState,
    initial: &SkylightState,
    fit: &SkylightFit,
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    dc_di: &Image,
    gamma: f64,
    epsilon: f64,
) -> Result<SkylightState, AdversaryError> {
    let dc_du = lighting_gradient(frags, normals, crate::lighting::skylight::SKY_BANDS, dc_di)?;
    let g = skylight_gradient(state, fit, &dc_du);
    Ok(descend_skylight(state, initial, g, gamma, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        let one_hot = [0.0, 1.0, 0.0];
        assert_eq!(cost(&one_hot, 1, None).unwrap(), 0.0);
        let uniform = [0.1; 10];
        assert!((cost(&uniform, 3, None).unwrap() + 2.302585).abs() < 1e-6);
        assert_eq!(cost(&[0.2, 0.3, 0.5], 2, Some(2)).unwrap(), 0.0);
        // floored zero probability stays finite
        assert!((cost(&one_hot, 0, None).unwrap() - PROBABILITY_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn cost_rejects_bad_input() {
        assert!(cost(&[0.5, 0.6], 0, None).is_err());
        assert!(cost(&[0.5, 0.5], 2, None).is_err());
        assert!(cost(&[1.5, -0.5], 0, None).is_err());
        assert!(cost(&[], 0, None).is_err());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let z = [0.3, -0.7, 1.1, 0.05];
        let f = |z: &[f64]| {
            let p = crate::classifier::softmax(z);
            cost(&p, 2, Some(0)).unwrap()
        };
        let g = cost_logit_gradient(&crate::classifier::softmax(&z), 2, Some(0));
        for k in 0..4 {
            let (mut a, mut b) = (z, z);
            a[k] += 1e-6;
            b[k] -= 1e-6;
            assert!(((f(&a) - f(&b)) / 2e-6 - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_norm_ball(&[0.3], &[0.0], 0.1), vec![0.1]);
        assert_eq!(project_norm_ball(&[0.3, -7.0], &[0.0, 1.0], f64::INFINITY), vec![0.3, -7.0]);
        let p = project_norm_ball(&[1.005, -0.995], &[1.0, -1.0], 0.002);
        assert!((p[0] - 1.002).abs() < 1e-15 && (p[1] + 0.998).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = AttackConfig::new(ParamSpace::Lighting, 0, 0.1);
        assert_eq!(c.validate(3).unwrap(), vec![0, 1, 2]);
        c.attacked_views = Some(vec![4]);
        assert!(c.validate(3).is_err());
        c.attacked_views = Some(vec![0, 2]);
        c.increase_per_view = Some(vec![Some(1)]);
        assert!(c.validate(3).is_err());
        c.increase_per_view = Some(vec![Some(1), Some(2)]);
        assert_eq!(c.increase_for(1), Some(2));
        c.max_iterations = 0;
        assert!(c.validate(3).is_err());
    }

    #[test]
    fn skylight_descent_stays_in_range() {
        let init = SkylightState([1.5, 0.1, 9.9]);
        let s = descend_skylight(&init, &init, [-10.0, 10.0, -10.0], 1.0, 0.5);
        assert!(s.0[0] <= FRAC_PI_2 && s.0[2] <= TURBIDITY_RANGE.1);
        assert!((s.0[1] - (0.1 - 0.5)).abs() < 1e-15);
        let p = s.params();
        assert!(p.validate().is_ok());
    }
}
