mod common;

use std::f64::consts::PI;

use common::{irradiance, rel_error, test_environments};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadv::lighting::{project_environment, EnvMap, ShCoeffs};
use shadv::math::{norm, Vec3};
use shadv::mesh::{face_normals, face_normals_of, primitives, TriMesh};
use shadv::raster::{rasterize, Background, Camera, FragmentBuffer, Projection};
use shadv::shade::{d_image_d_albedo, d_image_d_lighting, d_image_d_vertices, render, shade};
use shadv::sh::BandIndex;
use shadv::Image;

fn camera(res: usize) -> Camera {
    Camera::new(Projection::Perspective, [2.2, -2.6, 1.9], [0.0; 3], [0.0, 0.0, 1.0], 2.8, res, res).unwrap()
}

fn random_lighting(bands: usize, rng: &mut impl Rng) -> ShCoeffs {
    let data = (0..BandIndex::count(bands) * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    ShCoeffs::from_data(bands, data).unwrap()
}

fn random_mesh(seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = primitives::icosphere(2, [0.5; 3]);
    let verts = base.vertices().iter().map(|v| v.map(|x| x * rng.random_range(0.8..1.2))).collect();
    let albedo = (0..base.num_faces()).map(|_| std::array::from_fn(|_| rng.random_range(0.1..1.0))).collect();
    base.with_vertices(verts).unwrap().with_albedo(albedo).unwrap()
}

fn dot_images(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> Image {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn shading_matches_irradiance_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mesh = random_mesh(1);
    let u = random_lighting(4, &mut rng);
    let (frags, img) = render(&mesh, &camera(48), Background::Color([0.0; 3]), &u).unwrap();
    let normals = face_normals(&mesh);
    for p in frags.covered_pixels() {
        let n = normals[frags.face(p).unwrap() as usize];
        let e = irradiance(n, (16, 32), |d| u.radiance(d));
        let a = frags.albedo(p);
        let px = img.pixel(p);
        for c in 0..3 {
            assert!((px[c] - a[c] * e[c]).abs() < 1e-10, "pixel {p}");
        }
    }
}

#[test]
fn uniform_environment_shades_to_albedo_times_pi() {
    let mesh = random_mesh(2);
    let u = ShCoeffs::uniform(6, [1.0; 3]);
    assert!((u.coeff(0, 0)[0] - 2.0 * PI.sqrt()).abs() < 1e-15);
    let (frags, img) = render(&mesh, &camera(40), Background::Color([0.0; 3]), &u).unwrap();
    for p in frags.covered_pixels() {
        let a = frags.albedo(p);
        for c in 0..3 {
            assert!((img.pixel(p)[c] - a[c] * PI).abs() < 1e-9);
        }
    }
}

#[test]
fn lighting_jacobian_reproduces_shading() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = random_mesh(3);
    let u = random_lighting(6, &mut rng);
    let (frags, img) = render(&mesh, &camera(40), Background::Color([0.3, 0.2, 0.1]), &u).unwrap();
    let jac = d_image_d_lighting(&frags, &face_normals(&mesh), 6).unwrap();
    let lin = jac.jvp(&u).unwrap();
    for p in 0..frags.num_pixels() {
        let want = if frags.face(p).is_some() { img.pixel(p) } else { [0.0; 3] };
        let got = lin.pixel(p);
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() <= 1e-12 * want[c].abs().max(1.0));
        }
    }
    // one column per basis function
    let normals = face_normals(&mesh);
    for k in [0, 3, 17, 40] {
        let mut e = ShCoeffs::zeros(6);
        e.set(k, 1, 1.0);
        let col = shade(&frags, &normals, &e).unwrap();
        for (row, &p) in jac.pixels().iter().enumerate() {
            assert_eq!(jac.entry(row, k)[1], col.pixel(p as usize)[1]);
        }
    }
    assert_eq!(jac.rows(), frags.covered_count());
}

#[test]
fn adjoints_agree_with_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mesh = random_mesh(4);
    let u = random_lighting(3, &mut rng);
    let (frags, _) = render(&mesh, &camera(32), Background::Color([0.0; 3]), &u).unwrap();
    let normals = face_normals(&mesh);
    let w = random_image(32, 32, &mut rng);

    let lj = d_image_d_lighting(&frags, &normals, 3).unwrap();
    let du = random_lighting(3, &mut rng);
    let lhs = dot_images(&lj.jvp(&du).unwrap(), &w);
    let rhs: f64 = lj.vjp(&w).unwrap().data().iter().zip(du.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

    let aj = d_image_d_albedo(&frags, &normals, &u).unwrap();
    let da: Vec<[f64; 3]> = (0..mesh.num_faces()).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let lhs = dot_images(&aj.jvp(&da).unwrap(), &w);
    let rhs: f64 = aj.vjp(&w).unwrap().iter().zip(&da).map(|(a, b)| (0..3).map(|c| a[c] * b[c]).sum::<f64>()).sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

    let vj = d_image_d_vertices(&frags, &mesh, &u).unwrap();
    let dv: Vec<Vec3> = (0..mesh.num_vertices()).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let lhs = dot_images(&vj.jvp(&dv).unwrap(), &w);
    let rhs: f64 = vj.vjp(&w).unwrap().iter().zip(&dv).map(|(a, b)| (0..3).map(|c| a[c] * b[c]).sum::<f64>()).sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn albedo_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..5 {
        let mesh = random_mesh(10 + seed);
        let u = random_lighting(2, &mut rng);
        let cam = camera(32);
        let (frags, base) = render(&mesh, &cam, Background::Color([0.0; 3]), &u).unwrap();
        let jac = d_image_d_albedo(&frags, &face_normals(&mesh), &u).unwrap();
        let delta: Vec<[f64; 3]> = (0..mesh.num_faces()).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let h = 1e-3;
        let stepped: Vec<[f64; 3]> =
            mesh.albedo().iter().zip(&delta).map(|(a, d)| std::array::from_fn(|c| a[c] + h * d[c])).collect();
        let (_, moved) = render(&mesh.with_albedo(stepped).unwrap(), &cam, Background::Color([0.0; 3]), &u).unwrap();
        let fd: Vec<f64> = moved.data().iter().zip(base.data()).map(|(a, b)| (a - b) / h).collect();
        let err = rel_error(jac.jvp(&delta).unwrap().data(), &fd);
        assert!(err <= 1e-9, "seed {seed}: {err}");
    }
}

fn frozen_shade(frags: &FragmentBuffer, mesh: &TriMesh, verts: &[Vec3], u: &ShCoeffs) -> Image {
    shade(frags, &face_normals_of(verts, mesh.faces()).unwrap(), u).unwrap()
}

#[test]
fn vertex_jacobian_matches_frozen_visibility_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..10 {
        let mesh = random_mesh(20 + seed);
        let u = random_lighting(3, &mut rng);
        let (frags, _) = render(&mesh, &camera(32), Background::Color([0.0; 3]), &u).unwrap();
        let jac = d_image_d_vertices(&frags, &mesh, &u).unwrap();
        let (lo, hi) = mesh.bounding_box().unwrap();
        let h = 1e-6 * norm([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]);
        let delta: Vec<Vec3> = (0..mesh.num_vertices()).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let shift = |s: f64| -> Vec<Vec3> {
            mesh.vertices().iter().zip(&delta).map(|(v, d)| std::array::from_fn(|k| v[k] + s * d[k])).collect()
        };
        let (a, b) = (frozen_shade(&frags, &mesh, &shift(h), &u), frozen_shade(&frags, &mesh, &shift(-h), &u));
        let fd: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) / (2.0 * h)).collect();
        let err = rel_error(jac.jvp(&delta).unwrap().data(), &fd);
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn rigid_translation_leaves_shading_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mesh = random_mesh(7);
    let u = random_lighting(6, &mut rng);
    let (frags, _) = render(&mesh, &camera(40), Background::Color([0.0; 3]), &u).unwrap();
    let jac = d_image_d_vertices(&frags, &mesh, &u).unwrap();
    for t in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.3, -0.7, 2.0]] {
        let img = jac.jvp(&vec![t; mesh.num_vertices()]).unwrap();
        assert!(img.data().iter().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn background_pixels_have_no_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mesh = random_mesh(8);
    let u = random_lighting(2, &mut rng);
    let (frags, _) = render(&mesh, &camera(32), Background::Color([0.4; 3]), &u).unwrap();
    let normals = face_normals(&mesh);
    let lj = d_image_d_lighting(&frags, &normals, 2).unwrap().jvp(&u).unwrap();
    let vj = d_image_d_vertices(&frags, &mesh, &u).unwrap().jvp(&vec![[1.0, 2.0, 3.0]; mesh.num_vertices()]).unwrap();
    for p in (0..frags.num_pixels()).filter(|&p| frags.face(p).is_none()) {
        assert_eq!(lj.pixel(p), [0.0; 3]);
        assert_eq!(vj.pixel(p), [0.0; 3]);
    }
}

/// Mean absolute error of order-`bands` shading against direct quadrature of
/// the environment, and the peak reference value.
fn sh_shading_error(bands: usize, env: &(dyn Fn(Vec3) -> [f64; 3] + Sync)) -> (f64, f64) {
    let sphere = primitives::icosphere(4, [0.7, 0.7, 0.7]);
    assert!(sphere.num_faces() >= 5000);
    let cam = Camera::new(Projection::Orthographic, [0.0, -4.0, 1.0], [0.0; 3], [0.0, 0.0, 1.0], 2.4, 96, 96).unwrap();
    let frags = rasterize(&sphere, &cam, Background::Color([0.0; 3])).unwrap();
    let normals = face_normals(&sphere);
    let u = project_environment(&EnvMap::from_fn(512, 256, env).unwrap(), bands).unwrap();
    let img = shade(&frags, &normals, &u).unwrap();
    let mut reference = std::collections::HashMap::new();
    let (mut err, mut peak, mut count) = (0.0, 0.0f64, 0.0);
    for p in frags.covered_pixels() {
        let f = frags.face(p).unwrap();
        let e = *reference.entry(f).or_insert_with(|| irradiance(normals[f as usize], (24, 48), env));
        let a = frags.albedo(p);
        for c in 0..3 {
            let want = a[c] * e[c];
            peak = peak.max(want.abs());
            err += (img.pixel(p)[c] - want).abs();
            count += 1.0;
        }
    }
    (err / count, peak)
}

#[test]
fn low_order_shading_is_accurate() {
    for (name, env) in test_environments() {
        let (e2, peak) = sh_shading_error(2, env.as_ref());
        let (e6, _) = sh_shading_error(6, env.as_ref());
        assert!(e2 <= 0.05 * peak, "{name}: order 2 error {e2} peak {peak}");
        assert!(e6 < e2, "{name}: order 6 {e6} vs order 2 {e2}");
        eprintln!("{name}: order 2 {:.3}% order 6 {:.3}% of peak", 100.0 * e2 / peak, 100.0 * e6 / peak);
    }
}

#[test]
fn jacobian_storage_is_linear_in_coverage() {
    let mesh = random_mesh(9);
    let u = ShCoeffs::uniform(2, [1.0; 3]);
    let mut last = None;
    for res in [16, 32, 64] {
        let (frags, _) = render(&mesh, &camera(res), Background::Color([0.0; 3]), &u).unwrap();
        let bytes = d_image_d_vertices(&frags, &mesh, &u).unwrap().storage_bytes();
        let per_pixel = bytes as f64 / frags.covered_count() as f64;
        if let Some(prev) = last {
            assert!((per_pixel - prev) / prev < 0.05);
        }
        last = Some(per_pixel);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shading_is_linear_in_lighting(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_mesh(seed % 5);
        let (u, v) = (random_lighting(3, &mut rng), random_lighting(3, &mut rng));
        let mix_data = u.data().iter().zip(v.data()).map(|(x, y)| a * x + b * y).collect();
        let mix = ShCoeffs::from_data(3, mix_data).unwrap();
        let cam = camera(24);
        let frags = rasterize(&mesh, &cam, Background::Color([0.0; 3])).unwrap();
        let normals = face_normals(&mesh);
        let (iu, iv, im) = (shade(&frags, &normals, &u).unwrap(), shade(&frags, &normals, &mix).unwrap(), shade(&frags, &normals, &v).unwrap());
        for k in 0..iu.data().len() {
            let want = a * iu.data()[k] + b * im.data()[k];
            prop_assert!((iv.data()[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}
