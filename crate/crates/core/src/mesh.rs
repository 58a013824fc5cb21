//! Triangle meshes with piece-wise constant albedo, flat face normals and the
//! analytic Jacobian of a face normal with respect to its corners.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::math::{add, cross, dot, norm, scale, sub, Vec3};

/// Faces with less area than this are rejected.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Albedo assigned when no sidecar file is present.
pub const DEFAULT_ALBEDO: f64 = 0.75;

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("degenerate faces (area <= {DEGENERATE_AREA}): {0:?}")]
    DegenerateFaces(Vec<usize>),
    #[error("albedo of face {face} outside [0, 1]: {value:?}")]
    Albedo { face: usize, value: [f64; 3] },
    #[error("expected {expected} albedo rows, found {found}")]
    AlbedoCount { expected: usize, found: usize },
    #[error("non-finite vertex {0}")]
    NonFinite(usize),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("face {0} out of range")]
    FaceOutOfRange(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Triangle mesh: vertex positions, counter-clockwise faces and per-face albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    albedo: Vec<[f64; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, albedo: Vec<[f64; 3]>) -> Result<Self, MeshError> {
        if albedo.len() != faces.len() {
            return Err(MeshError::AlbedoCount { expected: faces.len(), found: albedo.len() });
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (face, f) in faces.iter().enumerate() {
            for &index in f {
                if index as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { face, index, count: vertices.len() });
                }
            }
        }
        for (face, a) in albedo.iter().enumerate() {
            if !a.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(MeshError::Albedo { face, value: *a });
            }
        }
        let bad = degenerate_faces(&vertices, &faces);
        if !bad.is_empty() {
            return Err(MeshError::DegenerateFaces(bad));
        }
        Ok(Self { vertices, faces, albedo })
    }

    pub fn with_uniform_albedo(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, albedo: [f64; 3]) -> Result<Self, MeshError> {
        let n = faces.len();
        Self::new(vertices, faces, vec![albedo; n])
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), faces: Vec::new(), albedo: Vec::new() }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn albedo(&self) -> &[[f64; 3]] {
        &self.albedo
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity and albedo with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::IndexOutOfRange {
                face: 0,
                index: vertices.len() as u32,
                count: self.vertices.len(),
            });
        }
        Self::new(vertices, self.faces.clone(), self.albedo.clone())
    }

    pub fn with_albedo(&self, albedo: Vec<[f64; 3]>) -> Result<Self, MeshError> {
        Self::new(self.vertices.clone(), self.faces.clone(), albedo)
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        let vertices = self.vertices.iter().map(|&v| add(v, offset)).collect();
        Self { vertices, faces: self.faces.clone(), albedo: self.albedo.clone() }
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0] as usize], self.vertices[f[1] as usize], self.vertices[f[2] as usize]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (
                [lo[0].min(v[0]), lo[1].min(v[1]), lo[2].min(v[2])],
                [hi[0].max(v[0]), hi[1].max(v[1]), hi[2].max(v[2])],
            )
        }))
    }

    /// Concatenate two meshes.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len() as u32;
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.faces.extend(other.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        out.albedo.extend_from_slice(&other.albedo);
        out
    }
}

fn degenerate_faces(vertices: &[Vec3], faces: &[[u32; 3]]) -> Vec<usize> {
    faces
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            !(0.5 * norm(cross(sub(b, a), sub(c, a))) > DEGENERATE_AREA)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Unit normal of every face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceNormals(Vec<Vec3>);

impl FaceNormals {
    pub fn as_slice(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for FaceNormals {
    type Output = Vec3;
    fn index(&self, i: usize) -> &Vec3 {
        &self.0[i]
    }
}

pub fn face_normals(mesh: &TriMesh) -> FaceNormals {
    // construction already rejected degenerate faces
    face_normals_of(&mesh.vertices, &mesh.faces).expect("validated mesh has no degenerate faces")
}

/// Normals for raw vertex/face arrays, used when positions are perturbed
/// without rebuilding a mesh.
pub fn face_normals_of(vertices: &[Vec3], faces: &[[u32; 3]]) -> Result<FaceNormals, MeshError> {
    let mut bad = Vec::new();
    let normals = faces
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            let n = cross(sub(b, a), sub(c, a));
            let len = norm(n);
            if !(0.5 * len > DEGENERATE_AREA) {
                bad.push(i);
                return [0.0; 3];
            }
            scale(n, 1.0 / len)
        })
        .collect();
    if bad.is_empty() {
        Ok(FaceNormals(normals))
    } else {
        Err(MeshError::DegenerateFaces(bad))
    }
}

/// Height vector of a triangle at `corner`: the perpendicular from the line
/// through the opposite edge to the corner.
pub fn height_vector(a: Vec3, b: Vec3, corner: Vec3) -> Vec3 {
    let e = sub(b, a);
    let c = sub(corner, a);
    let t = dot(c, e) / dot(e, e);
    sub(c, scale(e, t))
}

/// `J[i][j] = d n_i / d v_j` for corner `corner` (0..3) of `face`.
///
/// Moving a corner along the face normal tilts the face away from the
/// corner, so the Jacobian is `-h n^T / |h|^2`; in-plane motion leaves the
/// normal unchanged.
pub fn normal_jacobian(mesh: &TriMesh, face: usize, corner: usize) -> Result<Mat3, MeshError> {
    if face >= mesh.faces.len() || corner > 2 {
        return Err(MeshError::FaceOutOfRange(face));
    }
    let p = mesh.corners(face);
    let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let len = norm(n);
    if !(0.5 * len > DEGENERATE_AREA) {
        return Err(MeshError::DegenerateFaces(vec![face]));
    }
    Ok(normal_jacobian_from(p, scale(n, 1.0 / len), corner))
}

/// Jacobian for raw corner positions and their unit normal.
#[inline]
pub fn normal_jacobian_from(p: [Vec3; 3], n: Vec3, corner: usize) -> Mat3 {
    let a = p[(corner + 1) % 3];
    let b = p[(corner + 2) % 3];
    let h = height_vector(a, b, p[corner]);
    let inv = -1.0 / dot(h, h);
    let mut j = [[0.0; 3]; 3];
    for (row, hi) in j.iter_mut().zip(h) {
        for (col, nj) in row.iter_mut().zip(n) {
            *col = inv * hi * nj;
        }
    }
    j
}

/// Split each face into four through its edge midpoints, `rounds` times.
pub fn midpoint_subdivide(mesh: &TriMesh, rounds: usize) -> TriMesh {
    let mut cur = mesh.clone();
    for _ in 0..rounds {
        let mut vertices = cur.vertices.clone();
        let mut faces = Vec::with_capacity(cur.faces.len() * 4);
        let mut albedo = Vec::with_capacity(cur.faces.len() * 4);
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let va = vertices[a as usize];
                let vb = vertices[b as usize];
                vertices.push(scale(add(va, vb), 0.5));
                (vertices.len() - 1) as u32
            })
        };
        for (f, alb) in cur.faces.iter().zip(&cur.albedo) {
            let [a, b, c] = *f;
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            albedo.extend_from_slice(&[*alb; 4]);
        }
        cur = TriMesh { vertices, faces, albedo };
    }
    cur
}

/// Path of the albedo sidecar that accompanies an OBJ file.
pub fn albedo_sidecar_path(obj: &Path) -> PathBuf {
    obj.with_extension("albedo")
}

/// Read an OBJ file; albedo comes from the sidecar next to it when present.
pub fn load_obj(path: &Path) -> Result<TriMesh, MeshError> {
    let sidecar = albedo_sidecar_path(path);
    let sidecar = sidecar.exists().then_some(sidecar);
    load_obj_with_albedo(path, sidecar.as_deref())
}

pub fn load_obj_with_albedo(path: &Path, albedo: Option<&Path>) -> Result<TriMesh, MeshError> {
    let text = fs::read_to_string(path)?;
    let (vertices, faces) = parse_obj(&text, path)?;
    let albedo = match albedo {
        Some(p) => load_albedo(p, faces.len())?,
        None => vec![[DEFAULT_ALBEDO; 3]; faces.len()],
    };
    TriMesh::new(vertices, faces, albedo)
}

/// Parse OBJ text. Only `v` and `f` records are used; polygons are fan
/// triangulated from their first vertex.
pub fn parse_obj(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), MeshError> {
    let err = |line: usize, message: String| MeshError::Parse { path: path.to_path_buf(), line, message };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(lineno, format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in parts {
                    let first = tok.split('/').next().unwrap_or("");
                    let k: i64 = first.parse().map_err(|e| err(lineno, format!("bad face index {tok:?}: {e}")))?;
                    let resolved = if k > 0 {
                        k - 1
                    } else if k < 0 {
                        vertices.len() as i64 + k
                    } else {
                        return Err(err(lineno, "face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(lineno, format!("face index {k} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(err(lineno, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, out)?;
    save_albedo(mesh.albedo(), &albedo_sidecar_path(path))
}

pub fn load_albedo(path: &Path, faces: usize) -> Result<Vec<[f64; 3]>, MeshError> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::with_capacity(faces);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeshError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        if vals.len() != 3 {
            return Err(MeshError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected \"r g b\"".into(),
            });
        }
        rows.push([vals[0], vals[1], vals[2]]);
    }
    if rows.len() != faces {
        return Err(MeshError::AlbedoCount { expected: faces, found: rows.len() });
    }
    Ok(rows)
}

pub fn save_albedo(albedo: &[[f64; 3]], path: &Path) -> Result<(), MeshError> {
    let mut out = String::with_capacity(albedo.len() * 24);
    for a in albedo {
        let _ = writeln!(out, "{} {} {}", a[0], a[1], a[2]);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Procedural meshes used by fixtures and the command line.
pub mod primitives {
    use super::*;
    use crate::math::normalize;

    /// Icosahedron refined `level` times with vertices pushed to the unit sphere.
    pub fn icosphere(level: usize, albedo: [f64; 3]) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw: [Vec3; 12] = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut mesh = TriMesh {
            vertices: raw.iter().map(|&v| normalize(v)).collect(),
            albedo: vec![albedo; faces.len()],
            faces,
        };
        for _ in 0..level {
            mesh = midpoint_subdivide(&mesh, 1);
            for v in mesh.vertices.iter_mut() {
                *v = normalize(*v);
            }
        }
        mesh
    }

    /// Axis-aligned cube of side 2 centred at the origin, each face split
    /// into `2 * 4^rounds` triangles.
    pub fn cube(rounds: usize, albedo: [f64; 3]) -> TriMesh {
        let vertices: Vec<Vec3> = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { -1.0 } else { 1.0 },
                    if i & 2 == 0 { -1.0 } else { 1.0 },
                    if i & 4 == 0 { -1.0 } else { 1.0 },
                ]
            })
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let faces: Vec<[u32; 3]> = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        let mesh = TriMesh { vertices, albedo: vec![albedo; faces.len()], faces };
        midpoint_subdivide(&mesh, rounds)
    }

    pub fn tetrahedron(albedo: [f64; 3]) -> TriMesh {
        let vertices = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        TriMesh { vertices, albedo: vec![albedo; 4], faces }
    }

    /// Axis-aligned square in the plane `z = z`, side `size`, facing +z.
    pub fn quad(size: f64, z: f64, albedo: [f64; 3]) -> TriMesh {
        let h = size / 2.0;
        let vertices = vec![[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]];
        let faces = vec![[0, 1, 2], [0, 2, 3]];
        TriMesh { vertices, albedo: vec![albedo; 2], faces }
    }

    /// Triangle fan approximating a disk of `radius` in the plane `z = 0`.
    pub fn disk(radius: f64, segments: usize, albedo: [f64; 3]) -> TriMesh {
        let mut vertices = vec![[0.0, 0.0, 0.0]];
        for k in 0..segments {
            let a = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            vertices.push([radius * a.cos(), radius * a.sin(), 0.0]);
        }
        let faces = (0..segments as u32).map(|k| [0, 1 + k, 1 + (k + 1) % segments as u32]).collect::<Vec<_>>();
        TriMesh { vertices, albedo: vec![albedo; segments], faces }
    }

    /// Torus around the z axis.
    pub fn torus(major: f64, minor: f64, rings: usize, sides: usize, albedo: [f64; 3]) -> TriMesh {
        use std::f64::consts::TAU;
        let mut vertices = Vec::with_capacity(rings * sides);
        for i in 0..rings {
            let u = TAU * i as f64 / rings as f64;
            for j in 0..sides {
                let v = TAU * j as f64 / sides as f64;
                let r = major + minor * v.cos();
                vertices.push([r * u.cos(), r * u.sin(), minor * v.sin()]);
            }
        }
        let id = |i: usize, j: usize| ((i % rings) * sides + (j % sides)) as u32;
        let mut faces = Vec::with_capacity(2 * rings * sides);
        for i in 0..rings {
            for j in 0..sides {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh { vertices, albedo: vec![albedo; faces.len()], faces }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(v: [Vec3; 3]) -> TriMesh {
        TriMesh::with_uniform_albedo(v.to_vec(), vec![[0, 1, 2]], [0.5; 3]).unwrap()
    }

    #[test]
    fn normal_examples() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(face_normals(&m)[0], [0.0, 0.0, 1.0]);
        let flipped = TriMesh::with_uniform_albedo(m.vertices().to_vec(), vec![[0, 2, 1]], [0.5; 3]).unwrap();
        assert_eq!(face_normals(&flipped)[0], [0.0, 0.0, -1.0]);
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(face_normals(&m)[0], [0.0, -1.0, 0.0]);
    }

    #[test]
    fn degenerate_faces_reported() {
        let err = TriMesh::with_uniform_albedo(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 3], [0, 1, 2]],
            [0.5; 3],
        )
        .unwrap_err();
        match err {
            MeshError::DegenerateFaces(f) => assert_eq!(f, vec![1]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn index_and_albedo_validation() {
        assert!(matches!(
            TriMesh::with_uniform_albedo(vec![[0.0; 3]], vec![[0, 1, 2]], [0.5; 3]),
            Err(MeshError::IndexOutOfRange { .. })
        ));
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            TriMesh::with_uniform_albedo(v, vec![[0, 1, 2]], [1.2, 0.0, 0.0]),
            Err(MeshError::Albedo { .. })
        ));
    }

    #[test]
    fn jacobian_is_rank_one_and_tangent() {
        let m = tri([[0.1, 0.0, 0.3], [1.0, 0.2, 0.0], [0.3, 0.9, 0.5]]);
        let n = face_normals(&m)[0];
        for corner in 0..3 {
            let j = normal_jacobian(&m, 0, corner).unwrap();
            // every row is a multiple of n^T
            for row in &j {
                let c = cross(*row, n);
                assert!(norm(c) < 1e-12);
            }
            // n^T J = 0: first-order change stays tangent to the sphere
            for col in 0..3 {
                let s: f64 = (0..3).map(|i| n[i] * j[i][col]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subdivide_counts() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(midpoint_subdivide(&m, 0), m);
        let s = midpoint_subdivide(&m, 1);
        assert_eq!((s.num_vertices(), s.num_faces()), (6, 4));
        let t = primitives::tetrahedron([0.5; 3]);
        let s = midpoint_subdivide(&t, 1);
        assert_eq!(s.num_faces(), 16);
        let edges = s.num_faces() * 3 / 2;
        assert_eq!(s.num_vertices() as i64 - edges as i64 + s.num_faces() as i64, 2);
    }

    #[test]
    fn primitives_are_valid() {
        for m in [
            primitives::icosphere(2, [0.5; 3]),
            primitives::cube(1, [0.5; 3]),
            primitives::tetrahedron([0.5; 3]),
            primitives::quad(2.0, 0.0, [0.5; 3]),
            primitives::disk(1.0, 32, [0.5; 3]),
            primitives::torus(1.0, 0.4, 24, 12, [0.5; 3]),
        ] {
            TriMesh::new(m.vertices().to_vec(), m.faces().to_vec(), m.albedo().to_vec()).unwrap();
        }
        // outward orientation: normals point away from the centre
        let s = primitives::icosphere(1, [0.5; 3]);
        let n = face_normals(&s);
        for f in 0..s.num_faces() {
            let [a, b, c] = s.corners(f);
            let centroid = scale(add(add(a, b), c), 1.0 / 3.0);
            assert!(dot(centroid, n[f]) > 0.0);
        }
        let c = primitives::cube(0, [0.5; 3]);
        let n = face_normals(&c);
        for f in 0..c.num_faces() {
            let [a, b, cc] = c.corners(f);
            let centroid = scale(add(add(a, b), cc), 1.0 / 3.0);
            assert!(dot(centroid, n[f]) > 0.0, "cube face {f}");
        }
    }

    #[test]
    fn obj_minimal_and_quads() {
        let p = Path::new("inline.obj");
        let (v, f) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", p).unwrap();
        assert_eq!((v.len(), f.len()), (3, 1));
        let (_, f) = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3 4\n", p).unwrap();
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3]]);
        let (_, f) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", p).unwrap();
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let p = Path::new("bad.obj");
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 x\n", p) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_obj("v 0 0 0\nf 1 2 3\n", p) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_sidecar_defaults_to_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let m = load_obj(&path).unwrap();
        assert_eq!(m.albedo(), &[[DEFAULT_ALBEDO; 3]]);
        fs::write(albedo_sidecar_path(&path), "0.1 0.2 0.3\n").unwrap();
        assert_eq!(load_obj(&path).unwrap().albedo(), &[[0.1, 0.2, 0.3]]);
    }
}
