//! Skylight lighting as a polynomial in sun zenith angle and turbidity,
//! rotated about +z by the sun azimuth, with analytic parameter derivatives.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{LightingError, ShCoeffs};
use crate::sh::BandIndex;

/// Band limit of the skylight fit.
pub const SKY_BANDS: usize = 6;
/// Number of polynomial powers in the sun zenith angle.
pub const THETA_TERMS: usize = 14;
/// Number of polynomial powers in turbidity.
pub const TURBIDITY_TERMS: usize = 8;
/// Turbidity interval the bundled fit was computed on, where the Preetham
/// model is calibrated. Attacks clamp turbidity into it; values outside it
/// are accepted but extrapolate the fit.
pub const TURBIDITY_RANGE: (f64, f64) = (2.0, 10.0);

const MAGIC: &[u8; 5] = b"PSKY1";
const COEFFS: usize = (SKY_BANDS + 1) * (SKY_BANDS + 1);
const TENSOR_LEN: usize = COEFFS * THETA_TERMS * TURBIDITY_TERMS * 3;

static BUNDLED_FIT: &[u8] = include_bytes!("../../data/preetham_sh.psky");

/// SHA-256 of `data/preetham_sh.psky`.
pub const BUNDLED_FIT_SHA256: &str = "8b4dc05653ba4e3335c46ec8177c5de08df6651dcb4ceffb685856d08b4714db";

/// Sun direction and atmospheric turbidity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkylightParams {
    pub theta_s: f64,
    pub phi_s: f64,
    pub turbidity: f64,
}

impl SkylightParams {
    pub fn new(theta_s: f64, phi_s: f64, turbidity: f64) -> Result<Self, LightingError> {
        let p = Self { theta_s, phi_s, turbidity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LightingError> {
        if !(0.0..=FRAC_PI_2).contains(&self.theta_s) {
            return Err(LightingError::Skylight(format!("sun zenith {} outside [0, pi/2]", self.theta_s)));
        }
        if !(self.phi_s >= 0.0 && self.phi_s < TAU) {
            return Err(LightingError::Skylight(format!("sun azimuth {} outside [0, 2pi)", self.phi_s)));
        }
        if !(self.turbidity >= 1.0 && self.turbidity.is_finite()) {
            return Err(LightingError::Skylight(format!("turbidity {} below 1", self.turbidity)));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta_s, self.phi_s, self.turbidity]
    }

    /// Clamp zenith and turbidity into range and wrap the azimuth.
    pub fn clamped(theta_s: f64, phi_s: f64, turbidity: f64) -> Self {
        Self {
            theta_s: theta_s.clamp(0.0, FRAC_PI_2),
            phi_s: wrap_azimuth(phi_s),
            turbidity: turbidity.clamp(TURBIDITY_RANGE.0, TURBIDITY_RANGE.1),
        }
    }
}

pub fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Polynomial coefficients `(p_{l,m})_{i,j}` per color channel, stored
/// `(l,m)`-major, then `i`, then `j`, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SkylightFit {
    data: Vec<f64>,
}

impl SkylightFit {
    pub fn from_data(data: Vec<f64>) -> Result<Self, LightingError> {
        if data.len() != TENSOR_LEN {
            return Err(LightingError::Fit(format!("expected {TENSOR_LEN} values, found {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LightingError::Fit("non-finite coefficient".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros() -> Self {
        Self { data: vec![0.0; TENSOR_LEN] }
    }

    #[inline]
    pub fn index(k: usize, i: usize, j: usize, c: usize) -> usize {
        ((k * THETA_TERMS + i) * TURBIDITY_TERMS + j) * 3 + c
    }

    pub fn get(&self, k: usize, i: usize, j: usize, c: usize) -> f64 {
        self.data[Self::index(k, i, j, c)]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, c: usize, v: f64) {
        self.data[Self::index(k, i, j, c)] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MAGIC.len() + TENSOR_LEN * 8);
        out.extend_from_slice(MAGIC);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LightingError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(LightingError::Fit("missing PSKY1 magic".into()));
        }
        let body = &bytes[MAGIC.len()..];
        if body.len() != TENSOR_LEN * 8 {
            return Err(LightingError::Fit(format!("expected {} payload bytes, found {}", TENSOR_LEN * 8, body.len())));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_data(data)
    }

    pub fn load(path: &Path) -> Result<Self, LightingError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LightingError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// The fit shipped with the crate, verified against its checksum.
    pub fn bundled() -> Result<Self, LightingError> {
        let digest = sha256_hex(BUNDLED_FIT);
        if digest != BUNDLED_FIT_SHA256 {
            return Err(LightingError::Fit(format!("bundled fit checksum mismatch: {digest}")));
        }
        Self::from_bytes(BUNDLED_FIT)
    }

    /// `Ũ_{l,m}(θ_s, τ)` and its partial derivatives in `θ_s` and `τ`.
    pub fn evaluate_zenith_polynomial(&self, theta_s: f64, turbidity: f64) -> ZenithPolynomial {
        let mut tp = [0.0; THETA_TERMS];
        let mut dtp = [0.0; THETA_TERMS];
        let mut up = [0.0; TURBIDITY_TERMS];
        let mut dup = [0.0; TURBIDITY_TERMS];
        powers(theta_s, &mut tp, &mut dtp);
        powers(turbidity, &mut up, &mut dup);
        let mut out = ZenithPolynomial {
            value: vec![0.0; COEFFS * 3],
            d_theta: vec![0.0; COEFFS * 3],
            d_turbidity: vec![0.0; COEFFS * 3],
        };
        for k in 0..COEFFS {
            for i in 0..THETA_TERMS {
                for j in 0..TURBIDITY_TERMS {
                    let base = Self::index(k, i, j, 0);
                    let w = tp[i] * up[j];
                    let wt = dtp[i] * up[j];
                    let wu = tp[i] * dup[j];
                    for c in 0..3 {
                        let p = self.data[base + c];
                        out.value[k * 3 + c] += p * w;
                        out.d_theta[k * 3 + c] += p * wt;
                        out.d_turbidity[k * 3 + c] += p * wu;
                    }
                }
            }
        }
        out
    }
}

fn powers(x: f64, p: &mut [f64], dp: &mut [f64]) {
    p[0] = 1.0;
    dp[0] = 0.0;
    for i in 1..p.len() {
        p[i] = p[i - 1] * x;
        dp[i] = i as f64 * p[i - 1];
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Values of the azimuth-free polynomial and its partials, layout as [`ShCoeffs`].
#[derive(Debug, Clone)]
pub struct ZenithPolynomial {
    pub value: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_turbidity: Vec<f64>,
}

/// Rotate azimuth-free coefficients by `phi_s`:
/// `U_{l,m} = Ũ_{l,m} cos(mφ_s) − Ũ_{l,-m} sin(mφ_s)`, which carries the sun
/// from azimuth 0 to `φ_s`.
fn rotate_azimuth(src: &[f64], phi_s: f64, out: &mut [f64]) {
    for idx in BandIndex::iter(SKY_BANDS) {
        let k = idx.flat();
        let m = idx.m();
        let mirror = BandIndex::new(idx.l(), -m).expect("mirror index").flat();
        let (s, c) = (m as f64 * phi_s).sin_cos();
        for ch in 0..3 {
            out[k * 3 + ch] = src[k * 3 + ch] * c - src[mirror * 3 + ch] * s;
        }
    }
}

/// `∂/∂φ_s` of [`rotate_azimuth`].
fn rotate_azimuth_dphi(src: &[f64], phi_s: f64, out: &mut [f64]) {
    for idx in BandIndex::iter(SKY_BANDS) {
        let k = idx.flat();
        let m = idx.m() as f64;
        let mirror = BandIndex::new(idx.l(), -idx.m()).expect("mirror index").flat();
        let (s, c) = (m * phi_s).sin_cos();
        for ch in 0..3 {
            out[k * 3 + ch] = -m * src[k * 3 + ch] * s - m * src[mirror * 3 + ch] * c;
        }
    }
}

/// SH lighting (6 bands) of the skylight at `params`.
pub fn skylight_sh(params: &SkylightParams, fit: &SkylightFit) -> Result<ShCoeffs, LightingError> {
    params.validate()?;
    Ok(skylight_sh_unchecked(params, fit))
}

pub(crate) fn skylight_sh_unchecked(params: &SkylightParams, fit: &SkylightFit) -> ShCoeffs {
    let poly = fit.evaluate_zenith_polynomial(params.theta_s, params.turbidity);
    let mut out = ShCoeffs::zeros(SKY_BANDS);
    rotate_azimuth(&poly.value, params.phi_s, out.data_mut());
    out
}

/// Derivatives of the skylight coefficients with respect to each parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SkylightGrad {
    pub d_theta_s: ShCoeffs,
    pub d_phi_s: ShCoeffs,
    pub d_turbidity: ShCoeffs,
}

impl SkylightGrad {
    /// Contract a lighting gradient `∂C/∂U` into `∂C/∂(θ_s, φ_s, τ)`.
    pub fn contract(&self, dc_du: &ShCoeffs) -> [f64; 3] {
        let dot = |a: &ShCoeffs| a.data().iter().zip(dc_du.data()).map(|(x, y)| x * y).sum::<f64>();
        [dot(&self.d_theta_s), dot(&self.d_phi_s), dot(&self.d_turbidity)]
    }
}

pub fn skylight_sh_grad(params: &SkylightParams, fit: &SkylightFit) -> Result<SkylightGrad, LightingError> {
    params.validate()?;
    Ok(skylight_sh_grad_unchecked(params, fit))
}

pub(crate) fn skylight_sh_grad_unchecked(params: &SkylightParams, fit: &SkylightFit) -> SkylightGrad {
    let poly = fit.evaluate_zenith_polynomial(params.theta_s, params.turbidity);
    let mut d_theta_s = ShCoeffs::zeros(SKY_BANDS);
    let mut d_phi_s = ShCoeffs::zeros(SKY_BANDS);
    let mut d_turbidity = ShCoeffs::zeros(SKY_BANDS);
    rotate_azimuth(&poly.d_theta, params.phi_s, d_theta_s.data_mut());
    rotate_azimuth(&poly.d_turbidity, params.phi_s, d_turbidity.data_mut());
    rotate_azimuth_dphi(&poly.value, params.phi_s, d_phi_s.data_mut());
    SkylightGrad { d_theta_s, d_phi_s, d_turbidity }
}

/// Default sun direction used when none is given.
pub const DEFAULT_PARAMS: SkylightParams = SkylightParams { theta_s: PI / 4.0, phi_s: 0.0, turbidity: 3.0 };
