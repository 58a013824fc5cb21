//! Cameras and a z-buffered software rasterizer producing per-pixel
//! visibility records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::math::{add, cross, dot, norm, normalize, scale, sub, Vec3};
use crate::mesh::TriMesh;

/// Face id stored for pixels that see the background.
pub const BACKGROUND: u32 = u32::MAX;

const NEAR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("camera up vector is parallel to the view direction")]
    DegenerateBasis,
    #[error("camera resolution must be at least 1x1, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("camera field of view must be positive, got {0}")]
    FieldOfView(f64),
    #[error("background image is {0}x{1} but the camera renders {2}x{3}")]
    Background(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Orthographic,
    Perspective,
}

/// Pinhole or orthographic camera.
///
/// `fov` is the width of the view in scene units: for orthographic cameras
/// the width of the view volume, for perspective cameras the width of the
/// frustum at the depth of the look-at point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    projection: Projection,
    position: Vec3,
    look_at: Vec3,
    up: Vec3,
    fov: f64,
    width: usize,
    height: usize,
    // derived basis
    right: Vec3,
    true_up: Vec3,
    forward: Vec3,
    focal_depth: f64,
}

impl Camera {
    pub fn new(
        projection: Projection,
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        fov: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Resolution(width, height));
        }
        if !(fov > 0.0 && fov.is_finite()) {
            return Err(RasterError::FieldOfView(fov));
        }
        let view = sub(look_at, position);
        let focal_depth = norm(view);
        if !(focal_depth > 0.0) {
            return Err(RasterError::DegenerateBasis);
        }
        let forward = scale(view, 1.0 / focal_depth);
        let r = cross(forward, up);
        if norm(r) < 1e-9 * norm(up).max(1e-300) {
            return Err(RasterError::DegenerateBasis);
        }
        let right = normalize(r);
        let true_up = cross(right, forward);
        Ok(Self { projection, position, look_at, up, fov, width, height, right, true_up, forward, focal_depth })
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }
    pub fn position(&self) -> Vec3 {
        self.position
    }
    pub fn look_at(&self) -> Vec3 {
        self.look_at
    }
    pub fn up(&self) -> Vec3 {
        self.up
    }
    pub fn fov(&self) -> f64 {
        self.fov
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(self.projection, self.position, self.look_at, self.up, self.fov, width, height)
    }

    /// Continuous pixel coordinates `(x, y)` and view depth of a point.
    /// Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` with row 0 at the top.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let d = sub(p, self.position);
        let (cx, cy, depth) = (dot(d, self.right), dot(d, self.true_up), dot(d, self.forward));
        let (sx, sy) = match self.projection {
            Projection::Orthographic => (cx, cy),
            Projection::Perspective => (cx * self.focal_depth / depth, cy * self.focal_depth / depth),
        };
        let px = self.width as f64 / self.fov;
        (self.width as f64 * 0.5 + sx * px, self.height as f64 * 0.5 - sy * px, depth)
    }

    /// Ray through a continuous pixel coordinate: `(origin, unit direction)`.
    pub fn ray(&self, x: f64, y: f64) -> (Vec3, Vec3) {
        let unit = self.fov / self.width as f64;
        let sx = (x - self.width as f64 * 0.5) * unit;
        let sy = (self.height as f64 * 0.5 - y) * unit;
        let offset = add(scale(self.right, sx), scale(self.true_up, sy));
        match self.projection {
            Projection::Orthographic => (add(self.position, offset), self.forward),
            Projection::Perspective => {
                let dir = add(scale(self.forward, self.focal_depth), offset);
                (self.position, normalize(dir))
            }
        }
    }
}

/// Cameras on a circle of constant zenith angle around the origin, at
/// azimuths `2πk/count`, all looking at the origin with +z up.
pub fn camera_ring(
    count: usize,
    zenith: f64,
    radius: f64,
    projection: Projection,
    fov: f64,
    width: usize,
    height: usize,
) -> Result<Vec<Camera>, RasterError> {
    (0..count)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let (st, ct) = zenith.sin_cos();
            let pos = [radius * st * phi.cos(), radius * st * phi.sin(), radius * ct];
            // looking straight down the axis needs another up vector
            let up = if st.abs() < 1e-9 { [phi.cos(), phi.sin(), 0.0] } else { [0.0, 0.0, 1.0] };
            Camera::new(projection, pos, [0.0; 3], up, fov, width, height)
        })
        .collect()
}

/// What fills pixels not covered by the mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    Color([f64; 3]),
    Image(Image),
}

/// Visible face, depth and albedo behind every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    width: usize,
    height: usize,
    face: Vec<u32>,
    depth: Vec<f64>,
    albedo: Vec<[f64; 3]>,
    background: Background,
}

impl FragmentBuffer {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Face id at a pixel, `None` for background.
    pub fn face(&self, pixel: usize) -> Option<u32> {
        let f = self.face[pixel];
        (f != BACKGROUND).then_some(f)
    }

    pub fn faces(&self) -> &[u32] {
        &self.face
    }

    pub fn depth(&self, pixel: usize) -> f64 {
        self.depth[pixel]
    }

    pub fn albedo(&self, pixel: usize) -> [f64; 3] {
        self.albedo[pixel]
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn background_at(&self, pixel: usize) -> [f64; 3] {
        match &self.background {
            Background::Color(c) => *c,
            Background::Image(img) => img.pixel(pixel),
        }
    }

    /// Indices of pixels that see a face, in row-major order.
    pub fn covered_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.face.iter().enumerate().filter(|(_, f)| **f != BACKGROUND).map(|(i, _)| i)
    }

    pub fn covered_count(&self) -> usize {
        self.face.iter().filter(|f| **f != BACKGROUND).count()
    }
}

/// Nearest face per pixel centre; ties in depth go to the lower face id.
/// Faces are drawn regardless of orientation and without antialiasing.
pub fn rasterize(mesh: &TriMesh, cam: &Camera, background: Background) -> Result<FragmentBuffer, RasterError> {
    let (w, h) = (cam.width, cam.height);
    if let Background::Image(img) = &background {
        if img.width() != w || img.height() != h {
            return Err(RasterError::Background(img.width(), img.height(), w, h));
        }
    }
    let projected: Vec<(f64, f64, f64)> = mesh.vertices().iter().map(|&v| cam.project(v)).collect();
    let mut face = vec![BACKGROUND; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let perspective = cam.projection == Projection::Perspective;

    for (fi, f) in mesh.faces().iter().enumerate() {
        let p = [projected[f[0] as usize], projected[f[1] as usize], projected[f[2] as usize]];
        if perspective && p.iter().any(|q| q.2 <= NEAR) {
            continue;
        }
        let area = edge(p[0], p[1], p[2].0, p[2].1);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        // pixel i has its centre at i + 0.5
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        let x1 = (max_x - 0.5).floor();
        let y1 = (max_y - 0.5).floor();
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let x1 = (x1 as usize).min(w - 1);
        let y1 = (y1 as usize).min(h - 1);
        let inv_area = 1.0 / area;
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let px = x as f64 + 0.5;
                let b0 = edge(p[1], p[2], px, py) * inv_area;
                let b1 = edge(p[2], p[0], px, py) * inv_area;
                let b2 = edge(p[0], p[1], px, py) * inv_area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let z = if perspective {
                    1.0 / (b0 / p[0].2 + b1 / p[1].2 + b2 / p[2].2)
                } else {
                    b0 * p[0].2 + b1 * p[1].2 + b2 * p[2].2
                };
                if perspective && z <= NEAR {
                    continue;
                }
                let idx = y * w + x;
                // faces arrive in increasing id, so strict comparison keeps the lower id on ties
                if z < depth[idx] {
                    depth[idx] = z;
                    face[idx] = fi as u32;
                }
            }
        }
    }
    let albedo = face
        .iter()
        .map(|&f| if f == BACKGROUND { [0.0; 3] } else { mesh.albedo()[f as usize] })
        .collect();
    Ok(FragmentBuffer { width: w, height: h, face, depth, albedo, background })
}

#[inline]
fn edge(a: (f64, f64, f64), b: (f64, f64, f64), x: f64, y: f64) -> f64 {
    (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    fn ortho_down_z(res: usize, fov: f64) -> Camera {
        Camera::new(Projection::Orthographic, [0.0, 0.0, -5.0], [0.0; 3], [0.0, 1.0, 0.0], fov, res, res).unwrap()
    }

    #[test]
    fn empty_mesh_is_background() {
        let f = rasterize(&TriMesh::empty(), &ortho_down_z(8, 2.0), Background::Color([0.5; 3])).unwrap();
        assert_eq!(f.covered_count(), 0);
        assert_eq!(f.background_at(3), [0.5; 3]);
    }

    #[test]
    fn full_coverage_quad() {
        let q = primitives::quad(2.0, 0.0, [0.5; 3]);
        let f = rasterize(&q, &ortho_down_z(16, 2.0), Background::Color([0.0; 3])).unwrap();
        assert_eq!(f.covered_count(), 256);
        assert!(f.faces().iter().all(|&id| id < 2));
    }

    #[test]
    fn nearer_quad_wins() {
        let near = primitives::quad(2.0, 1.0, [0.2; 3]);
        let far = primitives::quad(2.0, 2.0, [0.8; 3]);
        let cam = Camera::new(Projection::Orthographic, [0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 1.5, 8, 8).unwrap();
        // far quad first so the near one has higher ids
        let mesh = far.merged(&near);
        let f = rasterize(&mesh, &cam, Background::Color([0.0; 3])).unwrap();
        assert_eq!(f.covered_count(), 64);
        assert!(f.faces().iter().all(|&id| id >= 2));
        assert!((f.depth(10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_tie_goes_to_lower_id() {
        let a = primitives::quad(2.0, 0.0, [0.2; 3]);
        let mesh = a.merged(&a);
        let f = rasterize(&mesh, &ortho_down_z(8, 1.0), Background::Color([0.0; 3])).unwrap();
        assert!(f.faces().iter().all(|&id| id < 2));
    }

    #[test]
    fn ring_examples() {
        let one = camera_ring(1, std::f64::consts::FRAC_PI_3, 2.0, Projection::Orthographic, 2.0, 4, 4).unwrap();
        let p = one[0].position();
        assert!((p[2] / 2.0 - 0.5).abs() < 1e-12);
        let four = camera_ring(4, std::f64::consts::FRAC_PI_2, 1.0, Projection::Orthographic, 2.0, 4, 4).unwrap();
        let az: Vec<f64> = four.iter().map(|c| c.position()[1].atan2(c.position()[0]).rem_euclid(std::f64::consts::TAU)).collect();
        for (k, a) in az.iter().enumerate() {
            assert!((a - k as f64 * std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
        for c in &four {
            assert!((norm(c.position()) - 1.0).abs() < 1e-12);
        }
        assert_eq!(camera_ring(2, 0.0, 3.0, Projection::Perspective, 2.0, 4, 4).unwrap().len(), 2);
    }

    #[test]
    fn camera_validation() {
        assert!(matches!(
            Camera::new(Projection::Orthographic, [0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], 1.0, 4, 4),
            Err(RasterError::DegenerateBasis)
        ));
        assert!(Camera::new(Projection::Orthographic, [0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 1.0, 0, 4).is_err());
        let cam = ortho_down_z(4, 2.0);
        assert!(rasterize(&TriMesh::empty(), &cam, Background::Image(Image::new(3, 4))).is_err());
    }

    #[test]
    fn perspective_projects_lookat_to_centre() {
        let cam = Camera::new(Projection::Perspective, [0.0, 0.0, 4.0], [0.0; 3], [0.0, 1.0, 0.0], 2.0, 10, 10).unwrap();
        let (x, y, d) = cam.project([0.0; 3]);
        assert!((x - 5.0).abs() < 1e-12 && (y - 5.0).abs() < 1e-12 && (d - 4.0).abs() < 1e-12);
        // frustum width at the look-at depth equals fov
        let (x, _, _) = cam.project([1.0, 0.0, 0.0]);
        assert!((x - 10.0).abs() < 1e-12 || x.abs() < 1e-12);
    }
}
