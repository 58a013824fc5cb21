use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadv::quadrature::SphereQuadrature;
use shadv::sh::{assoc_legendre, legendre, sh_basis, sh_basis_grad, BandIndex, ShEvaluator, UnitVec3};

fn random_dir(rng: &mut impl Rng) -> UnitVec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    UnitVec3::from_spherical(z.acos(), rng.random_range(0.0..2.0 * PI))
}

/// Coefficients of `(x² − 1)^l`, lowest power first.
fn rodrigues_base(l: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..l {
        let mut next = vec![0.0; p.len() + 2];
        for (i, c) in p.iter().enumerate() {
            next[i] -= c;
            next[i + 2] += c;
        }
        p = next;
    }
    p
}

fn derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `(−1)^m (1 − x²)^{m/2} dᵐ/dxᵐ P_l(x)` with `P_l` from the Rodrigues formula.
fn rodrigues_assoc(l: usize, m: usize, x: f64) -> f64 {
    let mut p = rodrigues_base(l);
    for _ in 0..l + m {
        p = derivative(&p);
    }
    let fact: f64 = (1..=l).map(|k| k as f64).product();
    let scale = 1.0 / (2f64.powi(l as i32) * fact);
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * (1.0 - x * x).powf(m as f64 / 2.0) * scale * horner(&p, x)
}

#[test]
fn associated_legendre_matches_rodrigues() {
    for l in 0..=10 {
        for m in 0..=l {
            for i in 0..=40 {
                let x = -1.0 + 2.0 * i as f64 / 40.0;
                let want = rodrigues_assoc(l, m, x);
                let got = assoc_legendre(l, m, x).unwrap();
                let scale = want.abs().max(1.0);
                assert!((got - want).abs() <= 1e-10 * scale, "P_{l}^{m}({x}) = {got}, oracle {want}");
            }
        }
    }
}

#[test]
fn legendre_is_zonal_associated() {
    for l in 0..=10 {
        for x in [-1.0, -0.3, 0.0, 0.45, 1.0] {
            assert!((legendre(l, x).unwrap() - assoc_legendre(l, 0, x).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn basis_is_orthonormal() {
    let quad = SphereQuadrature::new(64, 128);
    let bands = 6;
    let mut eval = ShEvaluator::new(bands).unwrap();
    let count = BandIndex::count(bands);
    let mut gram = vec![0.0; count * count];
    for &(d, w) in quad.points() {
        let y = eval.values(d).to_vec();
        for a in 0..count {
            for b in 0..count {
                gram[a * count + b] += w * y[a] * y[b];
            }
        }
    }
    for a in 0..count {
        for b in 0..count {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((gram[a * count + b] - want).abs() < 1e-6, "<Y{a}, Y{b}> = {}", gram[a * count + b]);
        }
    }
}

#[test]
fn evaluator_agrees_with_single_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut eval = ShEvaluator::new(8).unwrap();
    for _ in 0..50 {
        let d = random_dir(&mut rng);
        let y = eval.values(d.to_array()).to_vec();
        for idx in BandIndex::iter(8) {
            let single = sh_basis(idx.l(), idx.m(), d).unwrap();
            assert!((y[idx.flat()] - single).abs() < 1e-12);
        }
    }
}

#[test]
fn flat_index_round_trips() {
    for k in 0..BandIndex::count(10) {
        let idx = BandIndex::from_flat(k);
        assert_eq!(idx.flat(), k);
        assert_eq!(BandIndex::new(idx.l(), idx.m()).unwrap().flat(), k);
    }
    assert!(BandIndex::new(2, 3).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut checked = 0;
    while checked < 100 {
        let n = random_dir(&mut rng);
        if n.z().abs() >= 0.99 {
            continue;
        }
        checked += 1;
        for idx in BandIndex::iter(6) {
            let g = sh_basis_grad(idx.l(), idx.m(), n).unwrap();
            let mut fd = [0.0; 3];
            for (j, f) in fd.iter_mut().enumerate() {
                let (mut a, mut b) = (n.to_array(), n.to_array());
                a[j] += h;
                b[j] -= h;
                let ya = sh_basis(idx.l(), idx.m(), UnitVec3::normalize(a).unwrap()).unwrap();
                let yb = sh_basis(idx.l(), idx.m(), UnitVec3::normalize(b).unwrap()).unwrap();
                *f = (ya - yb) / (2.0 * h);
            }
            let err = (0..3).map(|j| (g[j] - fd[j]).abs()).fold(0.0, f64::max);
            let scale = (0..3).map(|j| fd[j].abs()).fold(0.0, f64::max).max(1.0);
            assert!(err / scale < 1e-5, "Y_{}^{} at {:?}: {:?} vs {:?}", idx.l(), idx.m(), n, g, fd);
        }
    }
}

#[test]
fn gradient_is_tangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = random_dir(&mut rng);
        if n.z().abs() > 0.99 {
            continue;
        }
        for idx in BandIndex::iter(6) {
            let g = sh_basis_grad(idx.l(), idx.m(), n).unwrap();
            let radial = g[0] * n.x() + g[1] * n.y() + g[2] * n.z();
            assert!(radial.abs() < 1e-10);
        }
    }
}

fn dir_strategy() -> impl Strategy<Value = UnitVec3> {
    (-1.0f64..1.0, 0.0f64..2.0 * PI).prop_map(|(z, phi)| UnitVec3::from_spherical(z.acos(), phi))
}

proptest! {
    #[test]
    fn addition_theorem(a in dir_strategy(), b in dir_strategy(), l in 0usize..=8) {
        let sum: f64 = (-(l as i64)..=l as i64)
            .map(|m| sh_basis(l, m, a).unwrap() * sh_basis(l, m, b).unwrap())
            .sum();
        let want = (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, a.dot(b).clamp(-1.0, 1.0)).unwrap();
        prop_assert!((sum - want).abs() < 1e-10, "{} vs {}", sum, want);
    }

    #[test]
    fn unit_vectors_stay_unit(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
        prop_assume!(x * x + y * y + z * z > 1e-6);
        let n = UnitVec3::normalize([x, y, z]).unwrap();
        prop_assert!((n.dot(n) - 1.0).abs() < 1e-14);
        let back = UnitVec3::from_spherical(n.theta(), n.phi());
        prop_assert!((back.dot(n) - 1.0).abs() < 1e-12);
    }
}
