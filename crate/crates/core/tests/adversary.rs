use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadv::adversary::{
    descend_geometry, descend_lighting, geometry_gradient, is_fooled, lighting_gradient, linf_distance,
    multiview_lighting_gradient, multiview_lighting_step, project_norm_ball, run_attack, AttackConfig, AttackScene,
    ParamSpace, SceneLighting, View,
};
use shadv::classifier::{ClassifierError, Evaluation};
use shadv::lighting::{ShCoeffs, SkylightFit, SkylightParams};
use shadv::math::Vec3;
use shadv::mesh::{face_normals, primitives, TriMesh};
use shadv::raster::{camera_ring, rasterize, Background, Projection};
use shadv::sh::BandIndex;
use shadv::{Classifier, Image};

/// Softmax over `W x + b` with its own cost gradient, independent of the
/// library's cost code.
#[derive(Clone)]
struct Linear {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Linear {
    fn random(classes: usize, inputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..classes).map(|_| (0..inputs).map(|_| rng.random_range(-0.05..0.05)).collect()).collect();
        let bias = (0..classes).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self { weights, bias }
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.weights.iter().zip(&self.bias).map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }
}

impl Classifier for Linear {
    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn evaluate(&mut self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Evaluation, ClassifierError> {
        let p = self.probabilities(image.data());
        // d(log p_d − log p_i)/dz = e_d − e_i, or e_d − p without a target
        let mut dz: Vec<f64> = match increase {
            Some(_) => vec![0.0; p.len()],
            None => p.iter().map(|v| -v).collect(),
        };
        dz[decrease] += 1.0;
        if let Some(i) = increase {
            dz[i] -= 1.0;
        }
        let cost = p[decrease].ln() - increase.map_or(0.0, |i| p[i].ln());
        let mut g = vec![0.0; image.data().len()];
        for (w, d) in self.weights.iter().zip(&dz) {
            for (gk, wk) in g.iter_mut().zip(w) {
                *gk += d * wk;
            }
        }
        let gradient = Image::from_data(image.width(), image.height(), g).unwrap();
        Ok(Evaluation { probabilities: p, cost, gradient })
    }
}

const RES: usize = 16;

fn scene(seed: u64, views: &[usize]) -> AttackScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = primitives::icosphere(2, [0.6; 3]);
    let verts = base.vertices().iter().map(|v| v.map(|x| 0.9 * x * rng.random_range(0.85..1.15))).collect();
    let albedo = (0..base.num_faces()).map(|_| std::array::from_fn(|_| rng.random_range(0.2..0.9))).collect();
    let mesh = base.with_vertices(verts).unwrap().with_albedo(albedo).unwrap();
    let mut u = ShCoeffs::uniform(2, [0.8; 3]);
    for v in u.data_mut().iter_mut().skip(3) {
        *v = rng.random_range(-0.3..0.3);
    }
    let ring = camera_ring(10, 1.0, 3.0, Projection::Orthographic, 2.4, RES, RES).unwrap();
    AttackScene {
        mesh,
        lighting: SceneLighting::Sh(u),
        views: views.iter().map(|&v| View { camera: ring[v], background: Background::Color([0.2; 3]) }).collect(),
    }
}

fn total_cost(s: &AttackScene, clf: &mut Linear, d: usize, i: Option<usize>) -> f64 {
    s.render_all().unwrap().iter().map(|img| clf.evaluate(img, d, i).unwrap().cost).sum()
}

fn with_lighting(s: &AttackScene, u: ShCoeffs) -> AttackScene {
    AttackScene { lighting: SceneLighting::Sh(u), ..s.clone() }
}

struct ViewData {
    frags: shadv::FragmentBuffer,
    normals: shadv::FaceNormals,
    dc_di: Image,
}

fn view_data(s: &AttackScene, clf: &mut Linear, decrease: usize) -> Vec<ViewData> {
    let normals = face_normals(&s.mesh);
    s.views
        .iter()
        .zip(s.render_all().unwrap())
        .map(|(v, img)| ViewData {
            frags: rasterize(&s.mesh, &v.camera, v.background.clone()).unwrap(),
            normals: normals.clone(),
            dc_di: clf.evaluate(&img, decrease, None).unwrap().gradient,
        })
        .collect()
}

#[test]
fn multiview_gradient_is_the_sum_of_views() {
    let s = scene(1, &[0, 3, 7]);
    let mut clf = Linear::random(3, RES * RES * 3, 1);
    let data = view_data(&s, &mut clf, 0);
    let views: Vec<_> = data.iter().map(|d| (&d.frags, &d.normals, &d.dc_di)).collect();
    let total = multiview_lighting_gradient(2, &views).unwrap();
    let mut sum = vec![0.0; total.data().len()];
    for d in &data {
        let g = lighting_gradient(&d.frags, &d.normals, 2, &d.dc_di).unwrap();
        for (a, b) in sum.iter_mut().zip(g.data()) {
            *a += b;
        }
    }
    assert_eq!(total.data(), &sum[..]);

    // the multiview step is the step along the summed gradient
    let u = s.lighting.coefficients();
    let step = multiview_lighting_step(&u, &u, &views, 0.05, 0.1).unwrap();
    let want = descend_lighting(&u, &u, &total, 0.05, 0.1);
    assert_eq!(step, want);

    let one = lighting_gradient(&data[0].frags, &data[0].normals, 2, &data[0].dc_di).unwrap();
    let twice = multiview_lighting_gradient(2, &[views[0], views[0]]).unwrap();
    for (a, b) in twice.data().iter().zip(one.data()) {
        assert_eq!(*a, 2.0 * b);
    }
    let mut neg = data[0].dc_di.clone();
    neg.data_mut().iter_mut().for_each(|v| *v = -*v);
    let cancel = multiview_lighting_gradient(2, &[views[0], (&data[0].frags, &data[0].normals, &neg)]).unwrap();
    assert!(cancel.data().iter().all(|v| *v == 0.0));
    assert!(multiview_lighting_gradient(2, &[]).is_err());
}

#[test]
fn zero_step_changes_nothing() {
    let s = scene(2, &[0, 5]);
    let mut clf = Linear::random(3, RES * RES * 3, 2);
    let before = s.render_all().unwrap();
    for space in [ParamSpace::Lighting, ParamSpace::Geometry] {
        let config = AttackConfig { step_size: 0.0, max_iterations: 1, ..AttackConfig::new(space, 0, 0.1) };
        let out = run_attack(&s, &mut clf, &config).unwrap();
        assert_eq!(out.scene.render_all().unwrap(), before);
        assert_eq!(out.scene.mesh, s.mesh);
        for r in out.trace.records.iter().chain([&out.trace.initial]) {
            assert_eq!(r.linf_distance, 0.0);
        }
    }
}

#[test]
fn descent_direction_matches_finite_differences() {
    let gamma = 1e-4;
    for seed in 0..20 {
        let s = scene(100 + seed, &[seed as usize % 10]);
        let mut clf = Linear::random(4, RES * RES * 3, seed);
        let data = view_data(&s, &mut clf, 1);
        let g = lighting_gradient(&data[0].frags, &data[0].normals, 2, &data[0].dc_di).unwrap();
        let u = s.lighting.coefficients();
        let next = descend_lighting(&u, &u, &g, gamma, f64::INFINITY);
        let c0 = total_cost(&s, &mut clf, 1, None);
        let c1 = total_cost(&with_lighting(&s, next), &mut clf, 1, None);
        let predicted = -gamma * g.data().iter().map(|v| v * v).sum::<f64>();
        let actual = c1 - c0;
        assert!(actual < 0.0, "seed {seed}: cost rose by {actual}");
        assert!((actual - predicted).abs() <= 0.05 * predicted.abs(), "seed {seed}: {actual} vs {predicted}");
    }
}

#[test]
fn geometry_gradient_predicts_first_step() {
    let s = scene(7, &[2]);
    let mut clf = Linear::random(3, RES * RES * 3, 7);
    let data = view_data(&s, &mut clf, 0);
    let u = s.lighting.coefficients();
    let g = geometry_gradient(&s.mesh, &data[0].frags, &u, &data[0].dc_di).unwrap();
    let gamma = 1e-5;
    let step = descend_geometry(&s.mesh, s.mesh.vertices(), &g, gamma, f64::INFINITY);
    assert_eq!(step.gamma, gamma);
    // frozen visibility: shade the moved normals through the original fragments
    let img = shadv::shade::shade(&data[0].frags, &face_normals(&step.mesh), &u).unwrap();
    let c0 = clf.evaluate(&s.render_all().unwrap()[0], 0, None).unwrap().cost;
    let c1 = clf.evaluate(&img, 0, None).unwrap().cost;
    let predicted = -gamma * g.iter().flatten().map(|v| v * v).sum::<f64>();
    assert!(((c1 - c0) - predicted).abs() <= 0.05 * predicted.abs(), "{} vs {predicted}", c1 - c0);
}

#[test]
fn geometry_steps_stay_in_the_box_and_avoid_degenerate_faces() {
    let tri = TriMesh::with_uniform_albedo(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]], [0.5; 3]).unwrap();
    // a full step collapses the triangle onto a line; halving avoids it
    let grad: Vec<Vec3> = vec![[0.0; 3], [0.0; 3], [0.0, 1.0, 0.0]];
    let step = descend_geometry(&tri, tri.vertices(), &grad, 1.0, f64::INFINITY);
    assert_eq!(step.gamma, 0.5);
    let boxed = descend_geometry(&tri, tri.vertices(), &grad, 1.0, 0.01);
    assert_eq!(boxed.gamma, 1.0);
    let d: Vec<f64> = boxed.mesh.vertices().iter().flatten().copied().collect();
    let d0: Vec<f64> = tri.vertices().iter().flatten().copied().collect();
    assert!(linf_distance(&d, &d0) <= 0.01 + 1e-15);
}

#[test]
fn traces_respect_the_norm_ball() {
    for (space, eps) in [(ParamSpace::Lighting, 0.1), (ParamSpace::Geometry, 0.002)] {
        for seed in 0..3 {
            let s = scene(30 + seed, &[0]);
            let mut clf = Linear::random(3, RES * RES * 3, seed);
            let p = clf.probabilities(s.render_all().unwrap()[0].data());
            let label = shadv::classifier::argmax(&p);
            let config = AttackConfig { step_size: 5.0, max_iterations: 15, ..AttackConfig::new(space, label, eps) };
            let out = run_attack(&s, &mut clf, &config).unwrap();
            assert_eq!(out.trace.initial.iteration, 0);
            for (k, r) in out.trace.records.iter().enumerate() {
                assert_eq!(r.iteration, k + 1);
                assert!(r.linf_distance <= eps + 1e-12);
            }
            let (now, start) = match space {
                ParamSpace::Geometry => (
                    out.scene.mesh.vertices().iter().flatten().copied().collect::<Vec<_>>(),
                    s.mesh.vertices().iter().flatten().copied().collect::<Vec<_>>(),
                ),
                _ => (out.scene.lighting.coefficients().into_data(), s.lighting.coefficients().into_data()),
            };
            assert!(linf_distance(&now, &start) <= eps + 1e-12);
            assert!(out.trace.records.len() <= 15);
            if out.trace.fooled {
                assert!(out.trace.records.last().unwrap().fooled);
            }
        }
    }
}

#[test]
fn already_fooled_scenes_stop_immediately() {
    let s = scene(4, &[0]);
    let mut clf = Linear::random(3, RES * RES * 3, 4);
    let p = clf.probabilities(s.render_all().unwrap()[0].data());
    let wrong = (shadv::classifier::argmax(&p) + 1) % 3;
    let out = run_attack(&s, &mut clf, &AttackConfig::new(ParamSpace::Lighting, wrong, 0.1)).unwrap();
    assert!(out.trace.fooled && out.trace.initial.fooled);
    assert!(out.trace.records.is_empty());
    assert_eq!(out.scene.lighting, s.lighting);
}

#[test]
fn targeted_attacks_end_on_the_target() {
    let mut hits = 0;
    for seed in 0..6 {
        let s = scene(50 + seed, &[1]);
        let mut clf = Linear::random(3, RES * RES * 3, 60 + seed);
        let p = clf.probabilities(s.render_all().unwrap()[0].data());
        let label = shadv::classifier::argmax(&p);
        let target = (label + 1) % 3;
        let config = AttackConfig {
            increase: Some(target),
            step_size: 1.0,
            max_iterations: 50,
            ..AttackConfig::new(ParamSpace::Lighting, label, 1.0)
        };
        let out = run_attack(&s, &mut clf, &config).unwrap();
        let costs: Vec<f64> = std::iter::once(&out.trace.initial).chain(&out.trace.records).map(|r| r.cost).collect();
        assert!(costs.last().unwrap() < &costs[0]);
        if out.trace.fooled {
            hits += 1;
            let last = out.trace.records.last().unwrap();
            assert_eq!(last.confidences[0].predicted, target);
            let img = &out.scene.render_all().unwrap()[0];
            assert_eq!(shadv::classifier::argmax(&clf.probabilities(img.data())), target);
        }
    }
    assert!(hits > 0);
}

#[test]
fn skylight_attacks_need_a_sky() {
    let s = scene(5, &[0]);
    let mut clf = Linear::random(3, RES * RES * 3, 5);
    assert!(run_attack(&s, &mut clf, &AttackConfig::new(ParamSpace::Skylight, 0, 0.1)).is_err());
    let sky = AttackScene {
        lighting: SceneLighting::Skylight {
            params: SkylightParams::new(0.6, 1.0, 3.0).unwrap(),
            fit: SkylightFit::bundled().unwrap(),
        },
        ..s
    };
    let p = clf.probabilities(sky.render_all().unwrap()[0].data());
    let label = shadv::classifier::argmax(&p);
    let config = AttackConfig { step_size: 0.5, max_iterations: 5, ..AttackConfig::new(ParamSpace::Skylight, label, 0.2) };
    let out = run_attack(&sky, &mut clf, &config).unwrap();
    for r in &out.trace.records {
        assert!(r.linf_distance <= 0.2 + 1e-12);
    }
    let SceneLighting::Skylight { params, .. } = out.scene.lighting else { panic!("lighting kind changed") };
    assert!(params.validate().is_ok());
}

#[test]
fn fooled_predicate() {
    assert!(is_fooled(&[0.2, 0.5, 0.3], 0, None));
    assert!(!is_fooled(&[0.6, 0.1, 0.3], 0, None));
    assert!(is_fooled(&[0.2, 0.5, 0.3], 0, Some(1)));
    assert!(!is_fooled(&[0.2, 0.3, 0.5], 0, Some(1)));
}

proptest! {
    #[test]
    fn projection_lands_in_the_ball(
        cur in prop::collection::vec(-10.0f64..10.0, 1..40),
        eps in 0.0f64..2.0,
        seed in 0u64..100,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init: Vec<f64> = cur.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = project_norm_ball(&cur, &init, eps);
        prop_assert!(linf_distance(&p, &init) <= eps + 1e-12);
        prop_assert_eq!(project_norm_ball(&p, &init, eps), p.clone());
        for ((pi, ci), ii) in p.iter().zip(&cur).zip(&init) {
            if (ci - ii).abs() <= eps {
                prop_assert_eq!(pi, ci);
            }
        }
    }

    #[test]
    fn lighting_descent_stays_in_the_ball(seed in 0u64..500, gamma in 0.0f64..10.0, eps in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = BandIndex::count(2) * 3;
        let rand_u = |rng: &mut ChaCha8Rng| ShCoeffs::from_data(2, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (u0, g) = (rand_u(&mut rng), rand_u(&mut rng));
        let mut u = u0.clone();
        for _ in 0..5 {
            u = descend_lighting(&u, &u0, &g, gamma, eps);
            prop_assert!(linf_distance(u.data(), u0.data()) <= eps + 1e-12);
        }
    }
}
