//! Preetham daylight sky model and the least-squares polynomial fit of its
//! SH projection that backs [`SkylightFit`](super::SkylightFit).
//!
//! The sun sits at azimuth 0; radiance below the horizon is zero. Luminance
//! is in kcd/m² scaled by [`SKY_RADIANCE_SCALE`] and converted to linear sRGB.

use nalgebra::DMatrix;

use super::skylight::{SkylightFit, SKY_BANDS, THETA_TERMS, TURBIDITY_RANGE, TURBIDITY_TERMS};
use crate::quadrature::gauss_legendre;
use crate::sh::{BandIndex, ShEvaluator};

/// Maps Preetham luminance (kcd/m²) to renderer radiance units.
pub const SKY_RADIANCE_SCALE: f64 = 0.05;

/// Sky dome of the Preetham model for one sun zenith angle and turbidity.
#[derive(Debug, Clone, Copy)]
pub struct PreethamSky {
    theta_s: f64,
    sun: [f64; 3],
    zenith: [f64; 3],
    coeffs: [[f64; 5]; 3],
    norm: [f64; 3],
}

impl PreethamSky {
    pub fn new(theta_s: f64, turbidity: f64) -> Self {
        let t = turbidity;
        let coeffs = [
            [0.1787 * t - 1.4630, -0.3554 * t + 0.4275, -0.0227 * t + 5.3251, 0.1206 * t - 2.5771, -0.0670 * t + 0.3703],
            [-0.0193 * t - 0.2592, -0.0665 * t + 0.0008, -0.0004 * t + 0.2125, -0.0641 * t - 0.8989, -0.0033 * t + 0.0452],
            [-0.0167 * t - 0.2608, -0.0950 * t + 0.0092, -0.0079 * t + 0.2102, -0.0441 * t - 1.6537, -0.0109 * t + 0.0529],
        ];
        let chi = (4.0 / 9.0 - t / 120.0) * (std::f64::consts::PI - 2.0 * theta_s);
        let zenith_y = ((4.0453 * t - 4.9710) * chi.tan() - 0.2155 * t + 2.4192).max(0.0);
        let (t1, t2, t3) = (theta_s, theta_s * theta_s, theta_s * theta_s * theta_s);
        let zenith_x = (0.00165 * t3 - 0.00375 * t2 + 0.00209 * t1) * t * t
            + (-0.02903 * t3 + 0.06377 * t2 - 0.03202 * t1 + 0.00394) * t
            + (0.11693 * t3 - 0.21196 * t2 + 0.06052 * t1 + 0.25886);
        let zenith_yc = (0.00275 * t3 - 0.00610 * t2 + 0.00317 * t1) * t * t
            + (-0.04214 * t3 + 0.08970 * t2 - 0.04153 * t1 + 0.00516) * t
            + (0.15346 * t3 - 0.26756 * t2 + 0.06670 * t1 + 0.26688);
        let zenith = [zenith_y, zenith_x, zenith_yc];
        let norm = [0, 1, 2].map(|c| perez(0.0, theta_s, &coeffs[c]));
        Self { theta_s, sun: [theta_s.sin(), 0.0, theta_s.cos()], zenith, coeffs, norm }
    }

    pub fn theta_s(&self) -> f64 {
        self.theta_s
    }

    /// Linear sRGB radiance seen along unit direction `dir` (z up).
    pub fn radiance(&self, dir: [f64; 3]) -> [f64; 3] {
        if dir[2] <= 0.0 {
            return [0.0; 3];
        }
        let theta = dir[2].min(1.0).acos();
        let cos_gamma = (dir[0] * self.sun[0] + dir[1] * self.sun[1] + dir[2] * self.sun[2]).clamp(-1.0, 1.0);
        let gamma = cos_gamma.acos();
        let mut yxy = [0.0; 3];
        for c in 0..3 {
            yxy[c] = self.zenith[c] * perez(theta, gamma, &self.coeffs[c]) / self.norm[c];
        }
        let (lum, x, y) = (yxy[0].max(0.0) * SKY_RADIANCE_SCALE, yxy[1], yxy[2]);
        if y <= 0.0 {
            return [0.0; 3];
        }
        let big_x = x / y * lum;
        let big_z = (1.0 - x - y) / y * lum;
        [
            3.2406 * big_x - 1.5372 * lum - 0.4986 * big_z,
            -0.9689 * big_x + 1.8758 * lum + 0.0415 * big_z,
            0.0557 * big_x - 0.2040 * lum + 1.0570 * big_z,
        ]
        .map(|v| v.max(0.0))
    }

    /// SH coefficients of the sky dome (bands 0..=6) by hemisphere quadrature.
    pub fn project(&self, n_theta: usize, n_phi: usize) -> Vec<f64> {
        let (nodes, weights) = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut ev = ShEvaluator::new(SKY_BANDS).expect("sky bands within limit");
        let n = BandIndex::count(SKY_BANDS);
        let mut out = vec![0.0; n * 3];
        for (x, w) in nodes.iter().zip(&weights) {
            // cos(theta) on (0, 1)
            let ct = 0.5 * (x + 1.0);
            let st = (1.0 - ct * ct).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                let dir = [st * phi.cos(), st * phi.sin(), ct];
                let rad = self.radiance(dir);
                let y = ev.values(dir);
                let wt = 0.5 * w * dphi;
                for k in 0..n {
                    for c in 0..3 {
                        out[k * 3 + c] += wt * rad[c] * y[k];
                    }
                }
            }
        }
        out
    }
}

fn perez(theta: f64, gamma: f64, [a, b, c, d, e]: &[f64; 5]) -> f64 {
    let ct = theta.cos().max(1e-6);
    (1.0 + a * (b / ct).exp()) * (1.0 + c * (d * gamma).exp() + e * gamma.cos().powi(2))
}

/// Sampling density for [`fit_skylight`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub theta_samples: usize,
    pub turbidity_samples: usize,
    pub quad_theta: usize,
    pub quad_phi: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { theta_samples: 36, turbidity_samples: 20, quad_theta: 24, quad_phi: 48 }
    }
}

/// Result of a fit: the coefficient tensor and its RMS residual over the samples.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub fit: SkylightFit,
    pub rms_residual: f64,
    pub max_target: f64,
}

/// Least-squares fit of `Σ_ij p_ij θ_s^i τ^j` to the projected sky over a
/// grid of sun zenith angles and turbidities.
pub fn fit_skylight(opts: FitOptions) -> FitReport {
    use std::f64::consts::FRAC_PI_2;
    let nt = opts.theta_samples.max(THETA_TERMS);
    let nu = opts.turbidity_samples.max(TURBIDITY_TERMS);
    // Chebyshev-Lobatto points cluster near the ends, where monomials misbehave.
    let cheb = |k: usize, n: usize, lo: f64, hi: f64| {
        let x = -(std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        lo + (hi - lo) * 0.5 * (x + 1.0)
    };
    let mut samples = Vec::with_capacity(nt * nu);
    for a in 0..nt {
        for b in 0..nu {
            samples.push((cheb(a, nt, 0.0, FRAC_PI_2), cheb(b, nu, TURBIDITY_RANGE.0, TURBIDITY_RANGE.1)));
        }
    }
    let terms = THETA_TERMS * TURBIDITY_TERMS;
    let ncoef = BandIndex::count(SKY_BANDS) * 3;

    let mut design = DMatrix::<f64>::zeros(samples.len(), terms);
    let targets: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(ts, tu)| PreethamSky::new(ts, tu).project(opts.quad_theta, opts.quad_phi))
        .collect();
    for (r, &(ts, tu)) in samples.iter().enumerate() {
        for i in 0..THETA_TERMS {
            for j in 0..TURBIDITY_TERMS {
                design[(r, i * TURBIDITY_TERMS + j)] = ts.powi(i as i32) * tu.powi(j as i32);
            }
        }
    }
    let mut rhs = DMatrix::<f64>::zeros(samples.len(), ncoef);
    for (r, t) in targets.iter().enumerate() {
        for (c, v) in t.iter().enumerate() {
            rhs[(r, c)] = *v;
        }
    }
    // Equilibrate columns before the SVD.
    let col_scale: Vec<f64> = (0..terms).map(|j| 1.0 / design.column(j).amax()).collect();
    let mut scaled = design.clone();
    for (j, s) in col_scale.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let solution = svd.solve(&rhs, smax * 1e-14).expect("SVD computed with U and V");

    let mut fit = SkylightFit::zeros();
    for k in 0..BandIndex::count(SKY_BANDS) {
        for c in 0..3 {
            for i in 0..THETA_TERMS {
                for j in 0..TURBIDITY_TERMS {
                    let t = i * TURBIDITY_TERMS + j;
                    fit.set(k, i, j, c, solution[(t, k * 3 + c)] * col_scale[t]);
                }
            }
        }
    }
    let mut sq = 0.0;
    let mut max_target = 0.0f64;
    for (r, &(ts, tu)) in samples.iter().enumerate() {
        let poly = fit.evaluate_zenith_polynomial(ts, tu);
        for (a, b) in poly.value.iter().zip(&targets[r]) {
            sq += (a - b) * (a - b);
            max_target = max_target.max(b.abs());
        }
    }
    let rms_residual = (sq / (samples.len() * ncoef) as f64).sqrt();
    FitReport { fit, rms_residual, max_target }
}
