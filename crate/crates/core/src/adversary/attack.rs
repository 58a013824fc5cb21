use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::{
    descend_geometry, descend_lighting, descend_skylight, flatten, is_fooled, linf_distance, skylight_gradient,
    AdversaryError, AttackConfig, ParamSpace, SkylightState,
};
use crate::classifier::{Classifier, Evaluation};
use crate::image::Image;
use crate::lighting::skylight::{skylight_sh_unchecked, SKY_BANDS};
use crate::lighting::{ShCoeffs, SkylightFit, SkylightParams};
use crate::math::Vec3;
use crate::mesh::{face_normals, FaceNormals, TriMesh};
use crate::raster::{rasterize, Background, Camera, FragmentBuffer};
use crate::shade::{d_image_d_lighting, d_image_d_vertices, shade, LightingJacobian};

/// Lighting of an attack scene.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneLighting {
    Sh(ShCoeffs),
    Skylight { params: SkylightParams, fit: SkylightFit },
}

impl SceneLighting {
    pub fn coefficients(&self) -> ShCoeffs {
        match self {
            SceneLighting::Sh(u) => u.clone(),
            SceneLighting::Skylight { params, fit } => skylight_sh_unchecked(params, fit),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub background: Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScene {
    pub mesh: TriMesh,
    pub lighting: SceneLighting,
    pub views: Vec<View>,
}

impl AttackScene {
    /// Render every view with the scene's current parameters.
    pub fn render_all(&self) -> Result<Vec<Image>, AdversaryError> {
        let u = self.lighting.coefficients();
        let normals = face_normals(&self.mesh);
        self.views
            .iter()
            .map(|v| {
                let frags = rasterize(&self.mesh, &v.camera, v.background.clone())?;
                Ok(shade(&frags, &normals, &u)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewConfidence {
    pub view: usize,
    pub decrease: f64,
    pub increase: Option<f64>,
    pub predicted: usize,
}

/// One line of the attack trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cost: f64,
    pub confidences: Vec<ViewConfidence>,
    pub linf_distance: f64,
    pub fooled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub space: ParamSpace,
    /// State before the first step (iteration 0).
    pub initial: TraceRecord,
    /// One record per step, ending at the first fooling iterate.
    pub records: Vec<TraceRecord>,
    pub fooled: bool,
}

impl AttackTrace {
    /// Iterations taken until fooled, if it was.
    pub fn iterations_to_fool(&self) -> Option<usize> {
        if self.initial.fooled {
            return Some(0);
        }
        self.records.iter().find(|r| r.fooled).map(|r| r.iteration)
    }

    /// Line-delimited JSON: the initial state followed by every step.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in std::iter::once(&self.initial).chain(&self.records) {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }
}

/// Trace plus the final scene parameters.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub trace: AttackTrace,
    pub scene: AttackScene,
}

/// Current parameters of whichever space is under attack.
#[derive(Debug, Clone)]
enum State {
    Lighting(ShCoeffs),
    Geometry(TriMesh),
    Skylight(SkylightState),
}

impl State {
    fn flat(&self) -> Vec<f64> {
        match self {
            State::Lighting(u) => u.data().to_vec(),
            State::Geometry(m) => flatten(m.vertices()),
            State::Skylight(s) => s.0.to_vec(),
        }
    }
}

/// Rendered views and classifier outputs at one iterate.
struct Snapshot {
    /// Fragments rendered for this iterate; empty when visibility is fixed.
    frags: Vec<FragmentBuffer>,
    evals: Vec<Evaluation>,
    cost: f64,
    fooled: bool,
}

struct Attack<'a> {
    scene: &'a AttackScene,
    config: &'a AttackConfig,
    attacked: Vec<usize>,
    fit: Option<&'a SkylightFit>,
    normals: FaceNormals,
    /// Lighting attacks keep visibility and the lighting Jacobian fixed.
    fixed_frags: Option<Vec<FragmentBuffer>>,
    lighting_jac: Option<Vec<LightingJacobian>>,
}

impl<'a> Attack<'a> {
    fn coefficients(&self, state: &State) -> ShCoeffs {
        match state {
            State::Lighting(u) => u.clone(),
            State::Geometry(_) => self.scene.lighting.coefficients(),
            State::Skylight(s) => skylight_sh_unchecked(&s.params(), self.fit.expect("skylight scenes carry a fit")),
        }
    }

    fn snapshot(
        &self,
        state: &State,
        classifier: &mut dyn Classifier,
        iteration: usize,
    ) -> Result<Snapshot, AdversaryError> {
        let u = self.coefficients(state);
        let normals_owned;
        let (mesh, normals) = match state {
            State::Geometry(m) => {
                normals_owned = face_normals(m);
                (m, &normals_owned)
            }
            _ => (&self.scene.mesh, &self.normals),
        };
        let owned = match &self.fixed_frags {
            Some(_) => Vec::new(),
            None => self
                .attacked
                .iter()
                .map(|&v| {
                    let view = &self.scene.views[v];
                    rasterize(mesh, &view.camera, view.background.clone())
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let frags = self.fixed_frags.as_deref().unwrap_or(&owned);
        let mut evals = Vec::with_capacity(frags.len());
        let mut cost = 0.0;
        let mut fooled = true;
        for (slot, f) in frags.iter().enumerate() {
            let img = shade(f, normals, &u)?;
            let inc = self.config.increase_for(slot);
            let ev = classifier
                .evaluate(&img, self.config.decrease, inc)
                .map_err(|e| AdversaryError::Classifier { iteration, source: Box::new(e) })?;
            cost += ev.cost;
            fooled &= is_fooled(&ev.probabilities, self.config.decrease, inc);
            evals.push(ev);
        }
        Ok(Snapshot { frags: owned, evals, cost, fooled })
    }

    fn record(&self, iteration: usize, snap: &Snapshot, state: &State, initial: &State) -> TraceRecord {
        let confidences = snap
            .evals
            .iter()
            .enumerate()
            .map(|(slot, ev)| ViewConfidence {
                view: self.attacked[slot],
                decrease: ev.probabilities[self.config.decrease],
                increase: self.config.increase_for(slot).map(|i| ev.probabilities[i]),
                predicted: ev.argmax(),
            })
            .collect();
        TraceRecord {
            iteration,
            cost: snap.cost,
            confidences,
            linf_distance: linf_distance(&state.flat(), &initial.flat()),
            fooled: snap.fooled,
        }
    }

    fn step(&self, state: &State, initial: &State, snap: &Snapshot) -> Result<State, AdversaryError> {
        let (gamma, eps) = (self.config.step_size, self.config.epsilon);
        Ok(match (state, initial) {
            (State::Lighting(u), State::Lighting(u0)) => {
                let jac = self.lighting_jac.as_ref().expect("lighting Jacobians precomputed");
                let g = sum_lighting(u.bands(), jac, &snap.evals)?;
                State::Lighting(descend_lighting(u, u0, &g, gamma, eps))
            }
            (State::Skylight(s), State::Skylight(s0)) => {
                let jac = self.lighting_jac.as_ref().expect("lighting Jacobians precomputed");
                let dc_du = sum_lighting(SKY_BANDS, jac, &snap.evals)?;
                let g = skylight_gradient(s, self.fit.expect("skylight fit"), &dc_du);
                State::Skylight(descend_skylight(s, s0, g, gamma, eps))
            }
            (State::Geometry(m), State::Geometry(m0)) => {
                let u = self.scene.lighting.coefficients();
                let mut g = vec![[0.0; 3]; m.num_vertices()];
                for (f, ev) in snap.frags.iter().zip(&snap.evals) {
                    let gv = d_image_d_vertices(f, m, &u)?.vjp(&ev.gradient)?;
                    for (a, b) in g.iter_mut().zip(gv) {
                        for k in 0..3 {
                            a[k] += b[k];
                        }
                    }
                }
                State::Geometry(descend_geometry(m, m0.vertices(), &g, gamma, eps).mesh)
            }
            _ => unreachable!("state and initial share a space"),
        })
    }
}

fn sum_lighting(bands: usize, jac: &[LightingJacobian], evals: &[Evaluation]) -> Result<ShCoeffs, AdversaryError> {
    let mut total = ShCoeffs::zeros(bands);
    for (j, ev) in jac.iter().zip(evals) {
        let g = j.vjp(&ev.gradient)?;
        for (t, v) in total.data_mut().iter_mut().zip(g.data()) {
            *t += v;
        }
    }
    Ok(total)
}

fn initial_state(scene: &AttackScene, space: ParamSpace) -> Result<(State, Option<&SkylightFit>), AdversaryError> {
    Ok(match (space, &scene.lighting) {
        (ParamSpace::Lighting, SceneLighting::Sh(u)) => (State::Lighting(u.clone()), None),
        (ParamSpace::Lighting, l @ SceneLighting::Skylight { .. }) => (State::Lighting(l.coefficients()), None),
        (ParamSpace::Geometry, _) => (State::Geometry(scene.mesh.clone()), None),
        (ParamSpace::Skylight, SceneLighting::Skylight { params, fit }) => {
            (State::Skylight(SkylightState::from_params(params)), Some(fit))
        }
        (ParamSpace::Skylight, SceneLighting::Sh(_)) => {
            return Err(AdversaryError::Config("skylight attacks need a skylight-lit scene".into()))
        }
    })
}

fn finish(scene: &AttackScene, state: State) -> AttackScene {
    let mut out = scene.clone();
    match state {
        State::Lighting(u) => out.lighting = SceneLighting::Sh(u),
        State::Geometry(m) => out.mesh = m,
        State::Skylight(s) => {
            if let SceneLighting::Skylight { params, .. } = &mut out.lighting {
                *params = s.params();
            }
        }
    }
    out
}

/// Gradient descent on the chosen parameters until every attacked view is
/// fooled or the iteration budget runs out.
///
/// Lighting and skylight attacks rasterize once and reuse the fragments;
/// geometry attacks re-rasterize every iterate.
pub fn run_attack(
    scene: &AttackScene,
    classifier: &mut dyn Classifier,
    config: &AttackConfig,
) -> Result<AttackOutcome, AdversaryError> {
    let attacked = config.validate(scene.views.len())?;
    let k = classifier.num_classes();
    for l in std::iter::once(config.decrease).chain(config.increase).chain(config.increase_per_view.iter().flatten().flatten().copied()) {
        if l >= k {
            return Err(AdversaryError::Label(l, k));
        }
    }
    let (initial, fit) = initial_state(scene, config.space)?;
    let normals = face_normals(&scene.mesh);
    let mut attack = Attack { scene, config, attacked, fit, normals, fixed_frags: None, lighting_jac: None };
    if config.space != ParamSpace::Geometry {
        let frags = attack
            .attacked
            .iter()
            .map(|&v| rasterize(&scene.mesh, &scene.views[v].camera, scene.views[v].background.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let bands = attack.coefficients(&initial).bands();
        let jac = frags
            .iter()
            .map(|f| d_image_d_lighting(f, &attack.normals, bands))
            .collect::<Result<Vec<_>, _>>()?;
        attack.fixed_frags = Some(frags);
        attack.lighting_jac = Some(jac);
    }

    let mut snap = attack.snapshot(&initial, classifier, 0)?;
    let first = attack.record(0, &snap, &initial, &initial);
    let mut state = initial.clone();
    let mut records = Vec::new();
    let mut fooled = snap.fooled;
    if !fooled {
        for t in 1..=config.max_iterations {
            state = attack.step(&state, &initial, &snap)?;
            snap = attack.snapshot(&state, classifier, t)?;
            records.push(attack.record(t, &snap, &state, &initial));
            if snap.fooled {
                fooled = true;
                break;
            }
        }
    }
    let trace = AttackTrace { space: config.space, initial: first, records, fooled };
    Ok(AttackOutcome { trace, scene: finish(scene, state) })
}

/// Uniform random perturbations on `[−ε, ε]` per parameter, the baseline
/// attacks are compared against. Returns the index of the first draw that
/// fools every attacked view, if any.
pub fn random_baseline(
    scene: &AttackScene,
    classifier: &mut dyn Classifier,
    config: &AttackConfig,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<Option<usize>, AdversaryError> {
    let attacked = config.validate(scene.views.len())?;
    let (initial, fit) = initial_state(scene, config.space)?;
    let normals = face_normals(&scene.mesh);
    let attack = Attack { scene, config, attacked, fit, normals, fixed_frags: None, lighting_jac: None };
    let eps = config.epsilon;
    for d in 0..draws {
        let mut jitter = |x: f64| x + rng.random_range(-eps..=eps);
        let state = match &initial {
            State::Lighting(u) => {
                let data = u.data().iter().map(|&x| jitter(x)).collect();
                State::Lighting(ShCoeffs::from_data(u.bands(), data)?)
            }
            State::Geometry(m) => {
                let verts: Vec<Vec3> = m.vertices().iter().map(|v| v.map(&mut jitter)).collect();
                match m.with_vertices(verts) {
                    Ok(next) if crate::mesh::face_normals_of(next.vertices(), next.faces()).is_ok() => State::Geometry(next),
                    _ => continue,
                }
            }
            State::Skylight(s) => {
                let p = s.0.map(&mut jitter);
                State::Skylight(descend_skylight(&SkylightState(p), &SkylightState(p), [0.0; 3], 0.0, f64::INFINITY))
            }
        };
        if attack.snapshot(&state, classifier, d)?.fooled {
            return Ok(Some(d));
        }
    }
    Ok(None)
}
