//! Shared inputs for the benchmarks.

use shadv::fixtures::reference_lighting;
use shadv::mesh::primitives;
use shadv::raster::{rasterize, Background, Camera, FragmentBuffer, Projection};
use shadv::{ShCoeffs, TriMesh};

/// Icosphere seen head-on by a perspective camera at `resolution`².
pub fn sphere_view(level: usize, resolution: usize) -> (TriMesh, Camera) {
    let mesh = primitives::icosphere(level, [0.7, 0.6, 0.5]);
    let cam = Camera::new(Projection::Perspective, [0.0, -3.0, 1.0], [0.0; 3], [0.0, 0.0, 1.0], 2.6, resolution, resolution)
        .expect("valid camera");
    (mesh, cam)
}

pub fn fragments(mesh: &TriMesh, cam: &Camera) -> FragmentBuffer {
    rasterize(mesh, cam, Background::Color([0.0; 3])).expect("valid scene")
}

/// The bundled lighting padded to `bands`.
pub fn lighting(bands: usize) -> ShCoeffs {
    reference_lighting().resized(bands)
}
