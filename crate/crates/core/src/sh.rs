//! Legendre polynomials, the real spherical-harmonics basis and its gradient
//! with respect to a surface normal.
//!
//! Conventions: the Condon-Shortley phase lives inside `P_l^m`, and the real
//! basis multiplies it back out with a `(-1)^m sqrt(2)` factor, so the
//! resulting `Y_l^m` are the usual positive real harmonics (`Y_1^1 ∝ x`,
//! `Y_1^-1 ∝ y`, `Y_1^0 ∝ z`). Coefficients are flattened as `l(l+1)+m`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

/// Largest band supported by the renderer.
pub const MAX_BANDS: usize = 16;

/// Default band count used by lighting (49 coefficients per channel).
pub const DEFAULT_BANDS: usize = 6;

/// Below this value of `sqrt(n_x^2 + n_y^2) / |n|` a normal is treated as
/// sitting on the polar axis.
pub const POLE_TOLERANCE: f64 = 1e-8;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShError {
    #[error("argument {0} outside [-1, 1]")]
    Domain(f64),
    #[error("invalid band index l={l}, m={m}")]
    BandIndex { l: usize, m: i64 },
    #[error("band count {0} exceeds the supported maximum {MAX_BANDS}")]
    TooManyBands(usize),
    #[error("vector ({0}, {1}, {2}) cannot be normalized")]
    ZeroVector(f64, f64, f64),
}

/// Band `l` and order `m` of a spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BandIndex {
    l: usize,
    m: i64,
}

impl BandIndex {
    pub fn new(l: usize, m: i64) -> Result<Self, ShError> {
        if m.unsigned_abs() as usize > l {
            return Err(ShError::BandIndex { l, m });
        }
        Ok(Self { l, m })
    }

    pub fn l(self) -> usize {
        self.l
    }

    pub fn m(self) -> i64 {
        self.m
    }

    /// Position in the flattened coefficient vector.
    pub fn flat(self) -> usize {
        ((self.l * (self.l + 1)) as i64 + self.m) as usize
    }

    pub fn from_flat(k: usize) -> Self {
        let l = (k as f64).sqrt().floor() as usize;
        // guard against sqrt rounding for large k
        let l = if (l + 1) * (l + 1) <= k { l + 1 } else { l };
        let m = k as i64 - (l * (l + 1)) as i64;
        Self { l, m }
    }

    /// Number of coefficients for bands `0..=bands`.
    pub fn count(bands: usize) -> usize {
        (bands + 1) * (bands + 1)
    }

    /// All indices for bands `0..=bands`, in flattened order.
    pub fn iter(bands: usize) -> impl Iterator<Item = BandIndex> {
        (0..Self::count(bands)).map(Self::from_flat)
    }
}

/// A unit-length direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVec3 {
    pub const Z: UnitVec3 = UnitVec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn normalize(v: [f64; 3]) -> Result<Self, ShError> {
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(len.is_finite() && len > 0.0) {
            return Err(ShError::ZeroVector(v[0], v[1], v[2]));
        }
        Ok(Self {
            x: v[0] / len,
            y: v[1] / len,
            z: v[2] / len,
        })
    }

    /// Direction from polar angle `theta` (from +z) and azimuth `phi`.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    pub fn x(self) -> f64 {
        self.x
    }
    pub fn y(self) -> f64 {
        self.y
    }
    pub fn z(self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: UnitVec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Polar angle in `[0, pi]`.
    pub fn theta(self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    /// Azimuth `atan2(y, x)` in `(-pi, pi]`.
    pub fn phi(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl From<UnitVec3> for [f64; 3] {
    fn from(v: UnitVec3) -> Self {
        v.to_array()
    }
}

fn check_domain(x: f64) -> Result<f64, ShError> {
    if !(x.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(ShError::Domain(x));
    }
    Ok(x.clamp(-1.0, 1.0))
}

/// Legendre polynomial `P_l(x)` by the three-term upward recurrence.
pub fn legendre(l: usize, x: f64) -> Result<f64, ShError> {
    let x = check_domain(x)?;
    let mut prev = 1.0;
    if l == 0 {
        return Ok(prev);
    }
    let mut cur = x;
    for k in 1..l {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Associated Legendre polynomial `P_l^m(x)` including the Condon-Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> Result<f64, ShError> {
    if m > l {
        return Err(ShError::BandIndex { l, m: m as i64 });
    }
    let x = check_domain(x)?;
    Ok(assoc_legendre_unchecked(l, m, x))
}

fn assoc_legendre_unchecked(l: usize, m: usize, x: f64) -> f64 {
    // P_m^m = (-1)^m (2m-1)!! (1-x^2)^{m/2}
    let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= -((2 * i + 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    // (l - m + 1) P_{l+1}^m = (2l + 1) x P_l^m - (l + m) P_{l-1}^m
    for ll in (m + 1)..l {
        let next = ((2 * ll + 1) as f64 * x * cur - (ll + m) as f64 * prev) / (ll - m + 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Table of `P_l^m(x)` for `0 <= m <= l <= lmax`.
struct LegendreTable {
    lmax: usize,
    values: Vec<f64>,
}

impl LegendreTable {
    fn new(lmax: usize, x: f64) -> Self {
        let mut values = vec![0.0; (lmax + 1) * (lmax + 1)];
        let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut pmm = 1.0;
        for m in 0..=lmax {
            if m > 0 {
                pmm *= -((2 * m - 1) as f64) * s;
            }
            values[m * (lmax + 1) + m] = pmm;
            if m == lmax {
                break;
            }
            let mut prev = pmm;
            let mut cur = x * (2 * m + 1) as f64 * pmm;
            values[m * (lmax + 1) + m + 1] = cur;
            for ll in (m + 1)..lmax {
                let next =
                    ((2 * ll + 1) as f64 * x * cur - (ll + m) as f64 * prev) / (ll - m + 1) as f64;
                prev = cur;
                cur = next;
                values[m * (lmax + 1) + ll + 1] = cur;
            }
        }
        Self { lmax, values }
    }

    #[inline]
    fn get(&self, l: usize, m: usize) -> f64 {
        if m > l {
            0.0
        } else {
            self.values[m * (self.lmax + 1) + l]
        }
    }
}

fn norm_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = MAX_BANDS + 1;
        let mut t = vec![0.0; n * n];
        for l in 0..n {
            for m in 0..=l {
                // (l-m)!/(l+m)! as a running product
                let mut ratio = 1.0;
                for k in (l - m + 1)..=(l + m) {
                    ratio /= k as f64;
                }
                t[l * n + m] = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
            }
        }
        t
    })
}

/// Normalization constant `K_l^m`.
pub fn sh_norm(l: usize, m: i64) -> f64 {
    let am = m.unsigned_abs() as usize;
    if l <= MAX_BANDS {
        norm_table()[l * (MAX_BANDS + 1) + am]
    } else {
        let mut ratio = 1.0;
        for k in (l - am + 1)..=(l + am) {
            ratio /= k as f64;
        }
        ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
    }
}

fn sign_pow(m: i64) -> f64 {
    if m.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Real spherical harmonic `Y_l^m` evaluated at `dir`.
pub fn sh_basis(l: usize, m: i64, dir: UnitVec3) -> Result<f64, ShError> {
    let idx = BandIndex::new(l, m)?;
    let am = m.unsigned_abs() as usize;
    let p = assoc_legendre_unchecked(l, am, dir.z().clamp(-1.0, 1.0));
    let k = sh_norm(l, m);
    let phi = dir.phi();
    Ok(match idx.m.cmp(&0) {
        std::cmp::Ordering::Equal => k * p,
        std::cmp::Ordering::Greater => k * sign_pow(m) * std::f64::consts::SQRT_2 * p * (m as f64 * phi).cos(),
        std::cmp::Ordering::Less => k * sign_pow(m) * std::f64::consts::SQRT_2 * p * (am as f64 * phi).sin(),
    })
}

/// `dtheta/dn` and `dphi/dn` for a (not necessarily unit) normal, or `None`
/// when the normal lies on the polar axis.
pub fn polar_angle_gradients(n: [f64; 3]) -> Option<([f64; 3], [f64; 3])> {
    let rxy2 = n[0] * n[0] + n[1] * n[1];
    let r2 = rxy2 + n[2] * n[2];
    let rxy = rxy2.sqrt();
    if rxy <= POLE_TOLERANCE * r2.sqrt() {
        return None;
    }
    let denom = r2 * rxy;
    let dtheta = [n[0] * n[2] / denom, n[1] * n[2] / denom, -rxy2 / denom];
    let dphi = [-n[1] / rxy2, n[0] / rxy2, 0.0];
    Some((dtheta, dphi))
}

/// Gradient of `Y_l^m(n / |n|)` with respect to `n`.
pub fn sh_basis_grad(l: usize, m: i64, n: UnitVec3) -> Result<[f64; 3], ShError> {
    BandIndex::new(l, m)?;
    let mut eval = ShEvaluator::new(l)?;
    let k = BandIndex { l, m }.flat();
    Ok(eval.gradients(n.to_array())[k])
}

/// Reusable evaluator for every basis function up to a band limit.
#[derive(Debug, Clone)]
pub struct ShEvaluator {
    bands: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

impl ShEvaluator {
    pub fn new(bands: usize) -> Result<Self, ShError> {
        if bands > MAX_BANDS {
            return Err(ShError::TooManyBands(bands));
        }
        let n = BandIndex::count(bands);
        Ok(Self {
            bands,
            values: vec![0.0; n],
            grads: vec![[0.0; 3]; n],
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// All `Y_l^m(dir)` in flattened order. `dir` need not be normalized.
    pub fn values(&mut self, dir: [f64; 3]) -> &[f64] {
        let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let z = (dir[2] / len).clamp(-1.0, 1.0);
        let phi = dir[1].atan2(dir[0]);
        let table = LegendreTable::new(self.bands, z);
        for l in 0..=self.bands {
            let base = l * (l + 1);
            self.values[base] = sh_norm(l, 0) * table.get(l, 0);
            for am in 1..=l {
                let c = sh_norm(l, am as i64) * sign_pow(am as i64) * std::f64::consts::SQRT_2 * table.get(l, am);
                let (s, co) = (am as f64 * phi).sin_cos();
                self.values[base + am] = c * co;
                self.values[base - am] = c * s;
            }
        }
        &self.values
    }

    /// All `dY_l^m/dn` in flattened order.
    pub fn gradients(&mut self, n: [f64; 3]) -> &[[f64; 3]] {
        let r = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let z = (n[2] / r).clamp(-1.0, 1.0);
        let table = LegendreTable::new(self.bands + 1, z);
        match polar_angle_gradients(n) {
            Some((dtheta, dphi)) => {
                let sin_t = ((1.0 - z) * (1.0 + z)).sqrt();
                let phi = n[1].atan2(n[0]);
                for l in 0..=self.bands {
                    let base = l * (l + 1);
                    for am in 0..=l {
                        let p = table.get(l, am);
                        let dp = (-z * (l + 1) as f64 * p + (l - am + 1) as f64 * table.get(l + 1, am)) / sin_t;
                        if am == 0 {
                            let k = sh_norm(l, 0);
                            self.grads[base] = scale(dtheta, k * dp);
                            continue;
                        }
                        let c = sh_norm(l, am as i64) * sign_pow(am as i64) * std::f64::consts::SQRT_2;
                        let mf = am as f64;
                        let (s, co) = (mf * phi).sin_cos();
                        // m > 0: cos(m phi) branch
                        self.grads[base + am] = axpy(scale(dtheta, c * dp * co), dphi, -c * mf * p * s);
                        // m < 0: sin(|m| phi) branch
                        self.grads[base - am] = axpy(scale(dtheta, c * dp * s), dphi, c * mf * p * co);
                    }
                }
            }
            None => {
                // On the axis only |m| = 1 has a nonzero tangential gradient:
                // Y_l^{±1} = sqrt(2) K_l^1 P_l'(n_z) (n_x or n_y) on the sphere.
                for g in self.grads.iter_mut() {
                    *g = [0.0; 3];
                }
                for l in 1..=self.bands {
                    let base = l * (l + 1);
                    let lf = l as f64;
                    let dleg = if z > 0.0 { 1.0 } else { sign_pow(l as i64 + 1) } * lf * (lf + 1.0) / 2.0;
                    let c = sh_norm(l, 1) * std::f64::consts::SQRT_2 * dleg / r;
                    self.grads[base + 1] = [c, 0.0, 0.0];
                    self.grads[base - 1] = [0.0, c, 0.0];
                }
            }
        }
        &self.grads
    }
}

#[inline]
fn scale(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

#[inline]
fn axpy(y: [f64; 3], x: [f64; 3], a: f64) -> [f64; 3] {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre(1, 0.5).unwrap(), 0.5);
        assert!((legendre(2, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(legendre(3, 1.1), Err(ShError::Domain(_))));
        // slack for rounding just outside the interval
        assert!(legendre(3, 1.0 + 1e-13).is_ok());
    }

    #[test]
    fn assoc_legendre_examples() {
        assert_eq!(assoc_legendre(1, 0, 0.5).unwrap(), 0.5);
        assert_eq!(assoc_legendre(1, 1, 0.0).unwrap(), -1.0);
        assert!((assoc_legendre(2, 0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(assoc_legendre(1, 2, 0.0).is_err());
        assert!(assoc_legendre(2, 1, -1.5).is_err());
    }

    #[test]
    fn m_zero_matches_legendre() {
        for l in 0..10 {
            for &x in &[-0.9, -0.2, 0.0, 0.4, 1.0] {
                let a = assoc_legendre(l, 0, x).unwrap();
                let b = legendre(l, x).unwrap();
                assert!((a - b).abs() < 1e-14, "l={l} x={x}");
            }
        }
    }

    #[test]
    fn basis_examples() {
        let z = UnitVec3::Z;
        let any = UnitVec3::normalize([0.3, -0.2, 0.5]).unwrap();
        assert!((sh_basis(0, 0, any).unwrap() - 0.2820948).abs() < 1e-7);
        assert!((sh_basis(1, 0, z).unwrap() - 0.4886025).abs() < 1e-7);
        assert_eq!(sh_basis(1, 1, z).unwrap(), 0.0);
        assert!(sh_basis(1, 2, z).is_err());
    }

    #[test]
    fn band_one_is_cartesian() {
        let n = UnitVec3::normalize([0.3, -0.7, 0.2]).unwrap();
        let c = (3.0 / (4.0 * PI)).sqrt();
        assert!((sh_basis(1, 1, n).unwrap() - c * n.x()).abs() < 1e-14);
        assert!((sh_basis(1, -1, n).unwrap() - c * n.y()).abs() < 1e-14);
        assert!((sh_basis(1, 0, n).unwrap() - c * n.z()).abs() < 1e-14);
    }

    #[test]
    fn evaluator_matches_pointwise() {
        let n = UnitVec3::normalize([-0.4, 0.1, -0.6]).unwrap();
        let mut ev = ShEvaluator::new(6).unwrap();
        let vals = ev.values(n.to_array()).to_vec();
        for idx in BandIndex::iter(6) {
            let y = sh_basis(idx.l(), idx.m(), n).unwrap();
            assert!((vals[idx.flat()] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn polar_gradient_examples() {
        let (dt, dp) = polar_angle_gradients([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(dt, [0.0, 0.0, -1.0]);
        assert_eq!(dp, [0.0, 1.0, 0.0]);
        assert!(polar_angle_gradients([0.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn constant_band_has_zero_gradient() {
        let n = UnitVec3::normalize([0.2, 0.5, 0.1]).unwrap();
        assert_eq!(sh_basis_grad(0, 0, n).unwrap(), [0.0; 3]);
    }

    #[test]
    fn flat_index_round_trip() {
        for k in 0..BandIndex::count(MAX_BANDS) {
            let idx = BandIndex::from_flat(k);
            assert_eq!(idx.flat(), k);
            assert!(idx.m().unsigned_abs() as usize <= idx.l());
        }
        assert_eq!(BandIndex::count(6), 49);
    }

    #[test]
    fn too_many_bands_rejected() {
        assert!(matches!(ShEvaluator::new(17), Err(ShError::TooManyBands(17))));
    }
}
