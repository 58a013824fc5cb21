//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::PI;

use shadv::math::{cross, dot, normalize, Vec3};
use shadv::quadrature::gauss_legendre;

/// Orthonormal tangent pair completing `n` to a right-handed frame.
pub fn frame(n: Vec3) -> (Vec3, Vec3) {
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let t = normalize(cross(helper, n));
    (t, cross(n, t))
}

/// Directions of the hemisphere around `n` with weights that already
/// include the cosine factor: `Σ w f(ω) ≈ ∫ max(ω·n, 0) f(ω) dω`.
pub fn cosine_hemisphere(n: Vec3, n_theta: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let n = normalize(n);
    let (t, b) = frame(n);
    let (nodes, weights) = gauss_legendre(n_theta);
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (x, w) in nodes.iter().zip(&weights) {
        let ct = 0.5 * (x + 1.0);
        let st = (1.0 - ct * ct).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * 2.0 * PI / n_phi as f64;
            let (sp, cp) = phi.sin_cos();
            let d = std::array::from_fn(|k| st * cp * t[k] + st * sp * b[k] + ct * n[k]);
            out.push((d, 0.5 * w * 2.0 * PI / n_phi as f64 * ct));
        }
    }
    out
}

/// `∫ max(ω·n, 0) L(ω) dω` per channel.
pub fn irradiance(n: Vec3, rule: (usize, usize), radiance: impl Fn(Vec3) -> [f64; 3]) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (d, w) in cosine_hemisphere(n, rule.0, rule.1) {
        let l = radiance(d);
        for c in 0..3 {
            e[c] += w * l[c];
        }
    }
    e
}

/// Smooth environments for shading-accuracy checks: a sky gradient, a broad
/// sun lobe over ambient light and a two-tone colour split.
pub fn test_environments() -> Vec<(&'static str, Box<dyn Fn(Vec3) -> [f64; 3] + Sync>)> {
    let sun = normalize([0.4, -0.3, 0.85]);
    vec![
        (
            "sky",
            Box::new(|d: Vec3| {
                let g = (1.5 * (d[2] - 1.0)).exp();
                [0.3 + 0.7 * g + 0.1 * d[0], 0.4 + 0.6 * g, 0.5 + 0.6 * g]
            }),
        ),
        (
            "sun",
            Box::new(move |d: Vec3| {
                let lobe = (3.0 * (dot(d, sun) - 1.0)).exp();
                [0.15 + 2.0 * lobe, 0.15 + 1.8 * lobe, 0.2 + 1.5 * lobe]
            }),
        ),
        (
            "split",
            Box::new(|d: Vec3| {
                let s = 0.5 * (1.0 + (2.5 * (d[0] - 0.3)).tanh());
                [0.3 + 0.9 * s, 0.5, 1.1 - 0.8 * s]
            }),
        ),
    ]
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Infinity-norm relative error, absolute when the reference is tiny.
pub fn rel_error(got: &[f64], want: &[f64]) -> f64 {
    let err = got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err / max_abs(want).max(1e-10)
}
