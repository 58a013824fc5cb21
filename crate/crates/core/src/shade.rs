//! SH shading of rasterized fragments and the analytic image Jacobians
//! with respect to lighting, albedo and vertex positions.
//!
//! Visibility is frozen: every Jacobian is taken with the fragment buffer
//! held fixed, so silhouettes do not move under differentiation. Background
//! pixels carry no parameter derivatives.

use rayon::prelude::*;
use thiserror::Error;

use crate::image::Image;
use crate::lighting::{zonal_transfer, ShCoeffs};
use crate::math::Vec3;
use crate::mesh::{normal_jacobian_from, FaceNormals, TriMesh};
use crate::raster::{rasterize, Background, Camera, FragmentBuffer, RasterError};
use crate::sh::{BandIndex, ShEvaluator, MAX_BANDS};

#[derive(Debug, Error)]
pub enum ShadeError {
    #[error("lighting has {0} bands, more than the supported {MAX_BANDS}")]
    Bands(usize),
    #[error("fragment buffer references face {face} but only {normals} normals were given")]
    FaceMismatch { face: u32, normals: usize },
    #[error("gradient image is {0}x{1}, expected {2}x{3}")]
    Shape(usize, usize, usize, usize),
    #[error("parameter vector has {0} entries, expected {1}")]
    Length(usize, usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn check_inputs(frags: &FragmentBuffer, normals: &FaceNormals, bands: usize) -> Result<(), ShadeError> {
    if bands > MAX_BANDS {
        return Err(ShadeError::Bands(bands));
    }
    if let Some(&face) = frags.faces().iter().filter(|&&f| f != crate::raster::BACKGROUND).max() {
        if face as usize >= normals.len() {
            return Err(ShadeError::FaceMismatch { face, normals: normals.len() });
        }
    }
    Ok(())
}

/// `√(4π/(2l+1)) G̃_l Y_l^m(n)` for every coefficient: the clamped-cosine
/// kernel rotated to `n`, premultiplied by the convolution constants.
pub fn transfer_vector(eval: &mut ShEvaluator, transfer: &[f64], n: Vec3) -> Vec<f64> {
    let bands = eval.bands();
    let y = eval.values(n);
    BandIndex::iter(bands).map(|idx| transfer[idx.l()] * y[idx.flat()]).collect()
}

fn visible_faces(frags: &FragmentBuffer, num_faces: usize) -> Vec<bool> {
    let mut seen = vec![false; num_faces];
    for f in frags.covered_pixels().map(|p| frags.faces()[p]) {
        seen[f as usize] = true;
    }
    seen
}

/// Irradiance factor `Σ U_{lm} √(4π/(2l+1)) G̃_l Y_l^m(n)` of every visible face,
/// `None` for faces that no pixel sees.
fn face_shading(frags: &FragmentBuffer, normals: &FaceNormals, u: &ShCoeffs) -> Vec<Option<[f64; 3]>> {
    let seen = visible_faces(frags, normals.len());
    let transfer = zonal_transfer(u.bands());
    let bands = u.bands();
    normals
        .as_slice()
        .par_iter()
        .zip(seen.par_iter())
        .map_init(
            || ShEvaluator::new(bands).expect("bands checked"),
            |eval, (n, &visible)| {
                if !visible {
                    return None;
                }
                let t = transfer_vector(eval, &transfer, *n);
                let mut out = [0.0; 3];
                for (k, tk) in t.iter().enumerate() {
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += u.get(k, c) * tk;
                    }
                }
                Some(out)
            },
        )
        .collect()
}

/// Shade every covered pixel with its face's SH irradiance times albedo.
///
/// The returned image holds raw values, which can be slightly negative where
/// a truncated SH expansion rings; use [`Image::clamped`] for output.
pub fn shade(frags: &FragmentBuffer, normals: &FaceNormals, u: &ShCoeffs) -> Result<Image, ShadeError> {
    check_inputs(frags, normals, u.bands())?;
    let factors = face_shading(frags, normals, u);
    let mut img = Image::new(frags.width(), frags.height());
    img.data_mut().par_chunks_mut(3).enumerate().for_each(|(p, px)| {
        let rgb = match frags.face(p) {
            Some(f) => {
                let s = factors[f as usize].expect("covered faces are shaded");
                let a = frags.albedo(p);
                [a[0] * s[0], a[1] * s[1], a[2] * s[2]]
            }
            None => frags.background_at(p),
        };
        px.copy_from_slice(&rgb);
    });
    Ok(img)
}

/// Rasterize and shade in one go.
pub fn render(
    mesh: &TriMesh,
    cam: &Camera,
    background: Background,
    u: &ShCoeffs,
) -> Result<(FragmentBuffer, Image), ShadeError> {
    let frags = rasterize(mesh, cam, background)?;
    let normals = crate::mesh::face_normals(mesh);
    let img = shade(&frags, &normals, u)?;
    Ok((frags, img))
}

/// `∂I/∂U`: for each covered pixel, the albedo and the transfer vector.
/// Entry `(pixel, k, c)` equals `ρ_c √(4π/(2l+1)) G̃_l Y_l^m(n)`.
#[derive(Debug, Clone)]
pub struct LightingJacobian {
    width: usize,
    height: usize,
    bands: usize,
    pixels: Vec<u32>,
    albedo: Vec<[f64; 3]>,
    transfer: Vec<f64>,
}

pub fn d_image_d_lighting(
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    bands: usize,
) -> Result<LightingJacobian, ShadeError> {
    check_inputs(frags, normals, bands)?;
    let seen = visible_faces(frags, normals.len());
    let transfer = zonal_transfer(bands);
    let per_face: Vec<Option<Vec<f64>>> = normals
        .as_slice()
        .par_iter()
        .zip(seen.par_iter())
        .map_init(
            || ShEvaluator::new(bands).expect("bands checked"),
            |eval, (n, &visible)| visible.then(|| transfer_vector(eval, &transfer, *n)),
        )
        .collect();
    let pixels: Vec<u32> = frags.covered_pixels().map(|p| p as u32).collect();
    let ncoef = BandIndex::count(bands);
    let mut flat = Vec::with_capacity(pixels.len() * ncoef);
    let mut albedo = Vec::with_capacity(pixels.len());
    for &p in &pixels {
        let f = frags.faces()[p as usize] as usize;
        flat.extend_from_slice(per_face[f].as_ref().expect("covered faces have transfer"));
        albedo.push(frags.albedo(p as usize));
    }
    Ok(LightingJacobian { width: frags.width(), height: frags.height(), bands, pixels, albedo, transfer: flat })
}

impl LightingJacobian {
    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_coeffs(&self) -> usize {
        BandIndex::count(self.bands)
    }

    /// Number of covered pixels with stored rows.
    pub fn rows(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    /// Derivative of pixel `row`'s three channels by coefficient `k`.
    pub fn entry(&self, row: usize, k: usize) -> [f64; 3] {
        let t = self.transfer[row * self.num_coeffs() + k];
        self.albedo[row].map(|a| a * t)
    }

    /// `(∂C/∂I)(∂I/∂U)` as a coefficient set.
    pub fn vjp(&self, dc_di: &Image) -> Result<ShCoeffs, ShadeError> {
        if dc_di.width() != self.width || dc_di.height() != self.height {
            return Err(ShadeError::Shape(dc_di.width(), dc_di.height(), self.width, self.height));
        }
        let n = self.num_coeffs();
        let mut out = ShCoeffs::zeros(self.bands);
        let g = out.data_mut();
        for (row, &p) in self.pixels.iter().enumerate() {
            let d = dc_di.pixel(p as usize);
            let a = self.albedo[row];
            let w = [d[0] * a[0], d[1] * a[1], d[2] * a[2]];
            if w == [0.0; 3] {
                continue;
            }
            let t = &self.transfer[row * n..(row + 1) * n];
            for (k, tk) in t.iter().enumerate() {
                for c in 0..3 {
                    g[k * 3 + c] += w[c] * tk;
                }
            }
        }
        Ok(out)
    }

    /// Image change `J δU`; background pixels stay zero.
    pub fn jvp(&self, delta: &ShCoeffs) -> Result<Image, ShadeError> {
        if delta.bands() != self.bands {
            return Err(ShadeError::Length(delta.num_coeffs(), self.num_coeffs()));
        }
        let n = self.num_coeffs();
        let mut img = Image::new(self.width, self.height);
        for (row, &p) in self.pixels.iter().enumerate() {
            let t = &self.transfer[row * n..(row + 1) * n];
            let mut s = [0.0; 3];
            for (k, tk) in t.iter().enumerate() {
                for (c, sc) in s.iter_mut().enumerate() {
                    *sc += delta.get(k, c) * tk;
                }
            }
            let a = self.albedo[row];
            img.set_pixel(p as usize, [a[0] * s[0], a[1] * s[1], a[2] * s[2]]);
        }
        Ok(img)
    }

    pub fn storage_bytes(&self) -> usize {
        self.pixels.len() * std::mem::size_of::<u32>()
            + self.albedo.len() * std::mem::size_of::<[f64; 3]>()
            + self.transfer.len() * std::mem::size_of::<f64>()
    }
}

/// `∂I/∂ρ`: each covered pixel depends only on its own face's albedo, with
/// derivative equal to the face's SH irradiance factor.
#[derive(Debug, Clone)]
pub struct AlbedoJacobian {
    width: usize,
    height: usize,
    num_faces: usize,
    pixels: Vec<u32>,
    faces: Vec<u32>,
    shading: Vec<[f64; 3]>,
}

pub fn d_image_d_albedo(
    frags: &FragmentBuffer,
    normals: &FaceNormals,
    u: &ShCoeffs,
) -> Result<AlbedoJacobian, ShadeError> {
    check_inputs(frags, normals, u.bands())?;
    let factors = face_shading(frags, normals, u);
    let pixels: Vec<u32> = frags.covered_pixels().map(|p| p as u32).collect();
    let faces: Vec<u32> = pixels.iter().map(|&p| frags.faces()[p as usize]).collect();
    let shading = faces.iter().map(|&f| factors[f as usize].expect("covered faces are shaded")).collect();
    Ok(AlbedoJacobian { width: frags.width(), height: frags.height(), num_faces: normals.len(), pixels, faces, shading })
}

impl AlbedoJacobian {
    pub fn rows(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    /// Face coupled to row `row` and the per-channel derivative.
    pub fn entry(&self, row: usize) -> (u32, [f64; 3]) {
        (self.faces[row], self.shading[row])
    }

    /// Gradient with respect to every face's albedo.
    pub fn vjp(&self, dc_di: &Image) -> Result<Vec<[f64; 3]>, ShadeError> {
        if dc_di.width() != self.width || dc_di.height() != self.height {
            return Err(ShadeError::Shape(dc_di.width(), dc_di.height(), self.width, self.height));
        }
        let mut out = vec![[0.0; 3]; self.num_faces];
        for ((&p, &f), s) in self.pixels.iter().zip(&self.faces).zip(&self.shading) {
            let d = dc_di.pixel(p as usize);
            for c in 0..3 {
                out[f as usize][c] += d[c] * s[c];
            }
        }
        Ok(out)
    }

    pub fn jvp(&self, delta: &[[f64; 3]]) -> Result<Image, ShadeError> {
        if delta.len() != self.num_faces {
            return Err(ShadeError::Length(delta.len(), self.num_faces));
        }
        let mut img = Image::new(self.width, self.height);
        for ((&p, &f), s) in self.pixels.iter().zip(&self.faces).zip(&self.shading) {
            let d = delta[f as usize];
            img.set_pixel(p as usize, [d[0] * s[0], d[1] * s[1], d[2] * s[2]]);
        }
        Ok(img)
    }

    pub fn storage_bytes(&self) -> usize {
        self.pixels.len() * 2 * std::mem::size_of::<u32>() + self.shading.len() * std::mem::size_of::<[f64; 3]>()
    }
}

/// `∂I/∂V`: each covered pixel couples to the nine coordinates of its face's
/// corners. `values[row][corner][axis][channel]`.
#[derive(Debug, Clone)]
pub struct VertexJacobian {
    width: usize,
    height: usize,
    num_vertices: usize,
    pixels: Vec<u32>,
    corners: Vec<[u32; 3]>,
    values: Vec<[[[f64; 3]; 3]; 3]>,
}

/// Derivative of a face's irradiance factor with respect to its three
/// corners: `[corner][axis][channel]`.
fn face_vertex_factor(
    eval: &mut ShEvaluator,
    transfer: &[f64],
    u: &ShCoeffs,
    p: [Vec3; 3],
    n: Vec3,
) -> [[[f64; 3]; 3]; 3] {
    // dF_c/dn
    let grads = eval.gradients(n);
    let mut g = [[0.0; 3]; 3];
    for (k, gk) in grads.iter().enumerate() {
        let t = transfer[BandIndex::from_flat(k).l()];
        if t == 0.0 {
            continue;
        }
        for (c, gc) in g.iter_mut().enumerate() {
            let w = u.get(k, c) * t;
            for a in 0..3 {
                gc[a] += w * gk[a];
            }
        }
    }
    let mut out = [[[0.0; 3]; 3]; 3];
    for (corner, oc) in out.iter_mut().enumerate() {
        let j = normal_jacobian_from(p, n, corner);
        for (axis, oa) in oc.iter_mut().enumerate() {
            for (c, gc) in g.iter().enumerate() {
                oa[c] = gc[0] * j[0][axis] + gc[1] * j[1][axis] + gc[2] * j[2][axis];
            }
        }
    }
    out
}

pub fn d_image_d_vertices(frags: &FragmentBuffer, mesh: &TriMesh, u: &ShCoeffs) -> Result<VertexJacobian, ShadeError> {
    let normals = crate::mesh::face_normals(mesh);
    check_inputs(frags, &normals, u.bands())?;
    let bands = u.bands();
    let transfer = zonal_transfer(bands);
    let seen = visible_faces(frags, mesh.num_faces());
    let per_face: Vec<Option<[[[f64; 3]; 3]; 3]>> = (0..mesh.num_faces())
        .into_par_iter()
        .map_init(
            || ShEvaluator::new(bands).expect("bands checked"),
            |eval, f| seen[f].then(|| face_vertex_factor(eval, &transfer, u, mesh.corners(f), normals[f])),
        )
        .collect();
    let pixels: Vec<u32> = frags.covered_pixels().map(|p| p as u32).collect();
    let (corners, values) = pixels
        .par_iter()
        .map(|&p| {
            let f = frags.faces()[p as usize] as usize;
            let a = frags.albedo(p as usize);
            let mut v = per_face[f].expect("covered faces have derivatives");
            for axis_block in v.iter_mut() {
                for ch in axis_block.iter_mut() {
                    for c in 0..3 {
                        ch[c] *= a[c];
                    }
                }
            }
            (mesh.faces()[f], v)
        })
        .unzip();
    Ok(VertexJacobian { width: frags.width(), height: frags.height(), num_vertices: mesh.num_vertices(), pixels, corners, values })
}

impl VertexJacobian {
    pub fn rows(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    /// Vertex ids of row `row`'s face and `[corner][axis][channel]` derivatives.
    pub fn entry(&self, row: usize) -> ([u32; 3], [[[f64; 3]; 3]; 3]) {
        (self.corners[row], self.values[row])
    }

    /// Gradient with respect to every vertex position.
    pub fn vjp(&self, dc_di: &Image) -> Result<Vec<Vec3>, ShadeError> {
        if dc_di.width() != self.width || dc_di.height() != self.height {
            return Err(ShadeError::Shape(dc_di.width(), dc_di.height(), self.width, self.height));
        }
        let mut out = vec![[0.0; 3]; self.num_vertices];
        for ((&p, ids), v) in self.pixels.iter().zip(&self.corners).zip(&self.values) {
            let d = dc_di.pixel(p as usize);
            if d == [0.0; 3] {
                continue;
            }
            for (corner, &vid) in ids.iter().enumerate() {
                for axis in 0..3 {
                    let vc = v[corner][axis];
                    out[vid as usize][axis] += d[0] * vc[0] + d[1] * vc[1] + d[2] * vc[2];
                }
            }
        }
        Ok(out)
    }

    /// Image change for a displacement of every vertex.
    pub fn jvp(&self, delta: &[Vec3]) -> Result<Image, ShadeError> {
        if delta.len() != self.num_vertices {
            return Err(ShadeError::Length(delta.len(), self.num_vertices));
        }
        let mut img = Image::new(self.width, self.height);
        for ((&p, ids), v) in self.pixels.iter().zip(&self.corners).zip(&self.values) {
            let mut s = [0.0; 3];
            for (corner, &vid) in ids.iter().enumerate() {
                let d = delta[vid as usize];
                for axis in 0..3 {
                    for c in 0..3 {
                        s[c] += v[corner][axis][c] * d[axis];
                    }
                }
            }
            img.set_pixel(p as usize, s);
        }
        Ok(img)
    }

    pub fn storage_bytes(&self) -> usize {
        self.pixels.len() * std::mem::size_of::<u32>()
            + self.corners.len() * std::mem::size_of::<[u32; 3]>()
            + self.values.len() * std::mem::size_of::<[[[f64; 3]; 3]; 3]>()
    }
}
