//! Gauss-Legendre rules and spherical product quadrature.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Gauss-Legendre in `cos(theta)` times a uniform midpoint rule in `phi`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    points: Vec<([f64; 3], f64)>,
}

impl SphereQuadrature {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n_theta);
        Self::from_rule(&nodes, &weights, n_phi)
    }

    /// Same rule with the `cos(theta)` interval split at the equator, so
    /// integrands with a kink there (clamped cosines about +z) integrate exactly.
    pub fn split_hemispheres(n_theta_each: usize, n_phi: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n_theta_each);
        let mut all_nodes = Vec::with_capacity(2 * n_theta_each);
        let mut all_weights = Vec::with_capacity(2 * n_theta_each);
        for (shift, _) in [(-0.5, 0), (0.5, 1)] {
            for (x, w) in nodes.iter().zip(&weights) {
                all_nodes.push(0.5 * x + shift);
                all_weights.push(0.5 * w);
            }
        }
        Self::from_rule(&all_nodes, &all_weights, n_phi)
    }

    fn from_rule(nodes: &[f64], weights: &[f64], n_phi: usize) -> Self {
        let dphi = 2.0 * PI / n_phi as f64;
        let mut points = Vec::with_capacity(nodes.len() * n_phi);
        for (&ct, &w) in nodes.iter().zip(weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                points.push(([st * phi.cos(), st * phi.sin(), ct], w * dphi));
            }
        }
        Self { points }
    }

    pub fn points(&self) -> &[([f64; 3], f64)] {
        &self.points
    }

    pub fn integrate(&self, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
        self.points.iter().map(|&(d, w)| w * f(d)).sum()
    }
}
