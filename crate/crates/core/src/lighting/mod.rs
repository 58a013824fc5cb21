//! Distant lighting expressed in spherical harmonics.

pub mod preetham;
pub mod skylight;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::image::{Image, ImageError};
use crate::sh::{BandIndex, ShError, ShEvaluator, UnitVec3, MAX_BANDS};

pub use skylight::{skylight_sh, skylight_sh_grad, SkylightFit, SkylightGrad, SkylightParams};

#[derive(Debug, Error)]
pub enum LightingError {
    #[error("expected {expected} coefficients for {bands} bands, found {found}")]
    Length { bands: usize, expected: usize, found: usize },
    #[error("non-finite lighting coefficient at index {0}")]
    NonFinite(usize),
    #[error("band count {0} exceeds {MAX_BANDS}")]
    Bands(usize),
    #[error("SH coefficient file, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid skylight parameters: {0}")]
    Skylight(String),
    #[error("skylight fit: {0}")]
    Fit(String),
    #[error("environment map must be at least 2x2 with non-negative radiance")]
    EnvMap,
    #[error(transparent)]
    Sh(#[from] ShError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// SH lighting coefficients `U_{l,m}` for three color channels.
///
/// Stored as `data[k * 3 + c]` with `k = l(l+1)+m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffs {
    bands: usize,
    data: Vec<f64>,
}

impl ShCoeffs {
    pub fn zeros(bands: usize) -> Self {
        Self { bands, data: vec![0.0; BandIndex::count(bands) * 3] }
    }

    pub fn from_data(bands: usize, data: Vec<f64>) -> Result<Self, LightingError> {
        if bands > MAX_BANDS {
            return Err(LightingError::Bands(bands));
        }
        let expected = BandIndex::count(bands) * 3;
        if data.len() != expected {
            return Err(LightingError::Length { bands, expected, found: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LightingError::NonFinite(i));
        }
        Ok(Self { bands, data })
    }

    /// Constant environment of unit radiance in every channel.
    pub fn uniform(bands: usize, radiance: [f64; 3]) -> Self {
        let mut c = Self::zeros(bands);
        let y00 = 2.0 * PI.sqrt();
        for ch in 0..3 {
            c.data[ch] = radiance[ch] * y00;
        }
        c
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_coeffs(&self) -> usize {
        BandIndex::count(self.bands)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, k: usize, channel: usize) -> f64 {
        self.data[k * 3 + channel]
    }

    pub fn set(&mut self, k: usize, channel: usize, value: f64) {
        self.data[k * 3 + channel] = value;
    }

    pub fn coeff(&self, l: usize, m: i64) -> [f64; 3] {
        let k = BandIndex::new(l, m).expect("valid band index").flat();
        [self.data[k * 3], self.data[k * 3 + 1], self.data[k * 3 + 2]]
    }

    /// Copy truncated or zero-padded to `bands`.
    pub fn resized(&self, bands: usize) -> Self {
        let mut out = Self::zeros(bands);
        let n = out.data.len().min(self.data.len());
        out.data[..n].copy_from_slice(&self.data[..n]);
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { bands: self.bands, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Read the text format: header `shc <bands>` then `l m r g b` per line.
    pub fn load(path: &Path) -> Result<Self, LightingError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, LightingError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, message: &str| LightingError::Parse { line, message: message.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some("shc") {
            return Err(perr(hl, "header must start with \"shc\""));
        }
        let bands: usize = h.next().and_then(|b| b.parse().ok()).ok_or_else(|| perr(hl, "bad band count"))?;
        if bands > MAX_BANDS {
            return Err(LightingError::Bands(bands));
        }
        let mut out = Self::zeros(bands);
        let mut seen = vec![false; out.num_coeffs()];
        for (ln, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(perr(ln, "expected \"l m r g b\""));
            }
            let l: usize = t[0].parse().map_err(|_| perr(ln, "bad l"))?;
            let m: i64 = t[1].parse().map_err(|_| perr(ln, "bad m"))?;
            let idx = BandIndex::new(l, m).map_err(|_| perr(ln, "invalid (l, m)"))?;
            if l > bands {
                return Err(perr(ln, "band exceeds header"));
            }
            for c in 0..3 {
                let v: f64 = t[2 + c].parse().map_err(|_| perr(ln, "bad value"))?;
                if !v.is_finite() {
                    return Err(perr(ln, "non-finite value"));
                }
                out.set(idx.flat(), c, v);
            }
            seen[idx.flat()] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let idx = BandIndex::from_flat(k);
            return Err(perr(0, &format!("missing coefficient l={} m={}", idx.l(), idx.m())));
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("shc {}\n", self.bands);
        for idx in BandIndex::iter(self.bands) {
            let c = self.coeff(idx.l(), idx.m());
            let _ = writeln!(out, "{} {} {} {} {}", idx.l(), idx.m(), c[0], c[1], c[2]);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), LightingError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Radiance `u(dir)` reconstructed from the coefficients.
    pub fn radiance(&self, dir: [f64; 3]) -> [f64; 3] {
        let mut ev = ShEvaluator::new(self.bands).expect("band count validated");
        let y = ev.values(dir);
        let mut out = [0.0; 3];
        for (k, yk) in y.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[k * 3 + c] * yk;
            }
        }
        out
    }
}

/// Zonal coefficient `G̃_l` of the clamped cosine `max(cos θ, 0)`.
pub fn clamped_cosine_zonal(l: usize) -> f64 {
    match l {
        0 => PI.sqrt() / 2.0,
        1 => (PI / 3.0).sqrt(),
        _ if l % 2 == 1 => 0.0,
        _ => {
            let half = l / 2;
            let sign = if (half + 1) % 2 == 0 { 1.0 } else { -1.0 };
            // (l-2)! / (2^l (l/2-1)! (l/2+1)!) accumulated in floating point
            let mut ratio = 1.0 / 2f64.powi(l as i32);
            for k in 2..=(l - 2) {
                ratio *= k as f64;
            }
            for k in 2..half {
                ratio /= k as f64;
            }
            for k in 2..=(half + 1) {
                ratio /= k as f64;
            }
            sign * ratio * ((2 * l + 1) as f64 * PI).sqrt()
        }
    }
}

/// `sqrt(4π/(2l+1)) G̃_l` for every band up to `bands`.
pub fn zonal_transfer(bands: usize) -> Vec<f64> {
    (0..=bands)
        .map(|l| (4.0 * PI / (2 * l + 1) as f64).sqrt() * clamped_cosine_zonal(l))
        .collect()
}

/// Clamped-cosine coefficients `G_{l,m}(n)` rotated from the zonal ones.
pub fn rotate_zonal_to_normal(n: UnitVec3, bands: usize) -> Result<Vec<f64>, LightingError> {
    let mut ev = ShEvaluator::new(bands)?;
    let y = ev.values(n.to_array());
    let transfer = zonal_transfer(bands);
    Ok(BandIndex::iter(bands).map(|idx| transfer[idx.l()] * y[idx.flat()]).collect())
}

/// Equirectangular radiance map: row `r` spans polar angle
/// `θ ∈ [rπ/H, (r+1)π/H]` from +z, column `c` spans azimuth `φ ∈ [2πc/W, 2π(c+1)/W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvMap {
    image: Image,
}

impl EnvMap {
    pub fn new(image: Image) -> Result<Self, LightingError> {
        if image.width() < 2 || image.height() < 2 || image.data().iter().any(|v| !(*v >= 0.0)) {
            return Err(LightingError::EnvMap);
        }
        Ok(Self { image })
    }

    /// Sample `f(direction)` at every texel centre.
    pub fn from_fn(width: usize, height: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self, LightingError> {
        let mut image = Image::new(width, height);
        for r in 0..height {
            for c in 0..width {
                let (theta, phi) = texel_angles(r, c, width, height);
                image.set_pixel(r * width + c, f(UnitVec3::from_spherical(theta, phi).to_array()));
            }
        }
        Self::new(image)
    }

    pub fn load(path: &Path) -> Result<Self, LightingError> {
        Self::new(Image::load(path)?)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn image(&self) -> &Image {
        &self.image
    }
}

fn texel_angles(r: usize, c: usize, width: usize, height: usize) -> (f64, f64) {
    ((r as f64 + 0.5) * PI / height as f64, (c as f64 + 0.5) * 2.0 * PI / width as f64)
}

/// Project an environment map onto SH by the midpoint rule in `θ` and `φ`.
/// The polar rows carry the Euler-Maclaurin endpoint correction, which
/// lifts the rule from second to fourth order in the row spacing.
pub fn project_environment(env: &EnvMap, bands: usize) -> Result<ShCoeffs, LightingError> {
    if bands > MAX_BANDS {
        return Err(LightingError::Bands(bands));
    }
    let (w, h) = (env.width(), env.height());
    let dtheta = PI / h as f64;
    let dphi = 2.0 * PI / w as f64;
    let mut out = ShCoeffs::zeros(bands);
    let mut ev = ShEvaluator::new(bands)?;
    for r in 0..h {
        let pole = if r == 0 || r == h - 1 { 1.0 } else { 0.0 };
        let mut row = vec![0.0; out.data.len()];
        for c in 0..w {
            let (theta, phi) = texel_angles(r, c, w, h);
            let weight = (theta.sin() * dtheta - pole * dtheta * dtheta / 24.0) * dphi;
            let u = env.image.pixel(r * w + c);
            let y = ev.values(UnitVec3::from_spherical(theta, phi).to_array());
            for (k, yk) in y.iter().enumerate() {
                for ch in 0..3 {
                    row[k * 3 + ch] += weight * u[ch] * yk;
                }
            }
        }
        for (o, v) in out.data.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::sh_basis;

    #[test]
    fn zonal_constants() {
        assert!((clamped_cosine_zonal(0) - 0.8862269).abs() < 1e-7);
        assert!((clamped_cosine_zonal(1) - 1.0233267).abs() < 1e-7);
        assert_eq!(clamped_cosine_zonal(3), 0.0);
        assert!((clamped_cosine_zonal(2) - 0.4954159).abs() < 1e-7);
        assert!((clamped_cosine_zonal(2) - (5.0 * PI).sqrt() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rotated_at_pole_is_zonal() {
        let g = rotate_zonal_to_normal(UnitVec3::Z, 6).unwrap();
        for idx in BandIndex::iter(6) {
            let expected = if idx.m() == 0 { clamped_cosine_zonal(idx.l()) } else { 0.0 };
            assert!((g[idx.flat()] - expected).abs() < 1e-14, "{idx:?}");
        }
        let n = UnitVec3::normalize([0.3, 0.4, -0.2]).unwrap();
        let g = rotate_zonal_to_normal(n, 2).unwrap();
        assert!((g[0] - 0.8862269).abs() < 1e-7);
    }

    #[test]
    fn constant_environment_projects_to_dc() {
        let env = EnvMap::from_fn(16, 4096, |_| [1.0; 3]).unwrap();
        let c = project_environment(&env, 6).unwrap();
        assert!((c.get(0, 0) - 3.5449077).abs() < 1e-6);
        for k in 1..49 {
            assert!(c.get(k, 0).abs() <= 1e-6, "k={k}: {}", c.get(k, 0));
        }
    }

    #[test]
    fn single_harmonic_environment() {
        let y10 = |d: [f64; 3]| sh_basis(1, 0, UnitVec3::normalize(d).unwrap()).unwrap();
        // Y_1^0 takes negative values; bypass the radiance check for this probe.
        assert!(EnvMap::from_fn(256, 128, |d| [y10(d); 3]).is_err());
        let env = EnvMap { image: env_image(256, 128, |d| [y10(d); 3]) };
        let c = project_environment(&env, 4).unwrap();
        for k in 0..25 {
            let expected = if k == 2 { 1.0 } else { 0.0 };
            assert!((c.get(k, 1) - expected).abs() <= 1e-3, "k={k}");
        }
    }

    fn env_image(w: usize, h: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Image {
        let mut img = Image::new(w, h);
        for r in 0..h {
            for c in 0..w {
                let (t, p) = texel_angles(r, c, w, h);
                img.set_pixel(r * w + c, f(UnitVec3::from_spherical(t, p).to_array()));
            }
        }
        img
    }

    #[test]
    fn projection_is_linear() {
        let f = |d: [f64; 3]| [1.0 + d[0], 0.5 + 0.5 * d[2] * d[2], (2.0 * d[1]).exp()];
        let a = project_environment(&EnvMap::from_fn(32, 16, f).unwrap(), 4).unwrap();
        let b = project_environment(&EnvMap::from_fn(32, 16, |d| f(d).map(|v| 2.0 * v)).unwrap(), 4).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn shc_text_round_trip_and_errors() {
        let mut c = ShCoeffs::zeros(2);
        for (i, v) in c.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.1 - 0.7;
        }
        assert_eq!(ShCoeffs::parse(&c.to_text()).unwrap(), c);
        assert!(ShCoeffs::parse("shc 1\n0 0 1 1 1\n").is_err());
        assert!(ShCoeffs::parse("sh 1\n").is_err());
        assert!(ShCoeffs::parse("shc 0\n0 0 1 1\n").is_err());
        assert!(ShCoeffs::parse("shc 0\n1 0 1 1 1\n").is_err());
    }

    #[test]
    fn envmap_validation() {
        assert!(EnvMap::new(Image::new(1, 4)).is_err());
        assert!(EnvMap::new(Image::filled(2, 2, [-1.0, 0.0, 0.0])).is_err());
    }
}
