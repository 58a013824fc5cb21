use std::path::PathBuf;

use anyhow::Context;
use shadv::lighting::skylight::{sha256_hex, BUNDLED_FIT_SHA256};
use shadv::mesh::load_obj;
use shadv::scene::SceneFile;
use shadv::{Image, ShCoeffs, SkylightFit, ToyClassifier};

use crate::Outcome;

#[derive(clap::Args)]
pub struct Args {
    /// Scene (.json), model (.json), lighting (.shc), mesh (.obj), fit (.psky) or image
    pub path: Option<PathBuf>,
}

pub fn run(a: Args) -> anyhow::Result<Outcome> {
    let Some(path) = a.path else {
        println!("shadv {}", env!("CARGO_PKG_VERSION"));
        println!("bundled skylight fit sha256 {BUNDLED_FIT_SHA256}");
        let u = shadv::fixtures::reference_lighting();
        println!("reference lighting: bands 0..={}, {} coefficients per channel", u.bands(), u.num_coeffs());
        println!("rayon threads {}", rayon::current_num_threads());
        return Ok(Outcome::Ok);
    };
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let ctx = || format!("reading {}", path.display());
    match ext.as_str() {
        "json" => {
            if let Ok(file) = SceneFile::load(&path) {
                let scene = file.build().with_context(ctx)?;
                let u = scene.lighting.coefficients();
                println!("scene: {} vertices, {} faces", scene.mesh.num_vertices(), scene.mesh.num_faces());
                println!("views: {}", scene.views.len());
                for (i, v) in scene.views.iter().enumerate() {
                    let c = &v.camera;
                    println!("  view {i}: {:?} {}x{} at {:?}", c.projection(), c.width(), c.height(), c.position());
                }
                println!("lighting: bands 0..={}", u.bands());
            } else {
                let clf = ToyClassifier::load(&path).with_context(ctx)?;
                println!("toy classifier: {}x{} input, {} hidden, {} classes", clf.width(), clf.height(), clf.hidden(), clf.classes());
            }
        }
        "shc" => {
            let u = ShCoeffs::load(&path).with_context(ctx)?;
            println!("SH lighting: bands 0..={}, DC {:?}", u.bands(), u.coeff(0, 0));
        }
        "obj" => {
            let m = load_obj(&path).with_context(ctx)?;
            println!("mesh: {} vertices, {} faces, area {:.6}", m.num_vertices(), m.num_faces(), m.surface_area());
            if let Some((lo, hi)) = m.bounding_box() {
                println!("bounds {lo:?} .. {hi:?}");
            }
        }
        "psky" => {
            let bytes = std::fs::read(&path).with_context(ctx)?;
            SkylightFit::from_bytes(&bytes).with_context(ctx)?;
            let sha = sha256_hex(&bytes);
            println!("skylight fit sha256 {sha} (bundled: {})", sha == BUNDLED_FIT_SHA256);
        }
        _ => {
            let img = Image::load(&path).with_context(ctx)?;
            println!("image: {}x{}, max {:.6}", img.width(), img.height(), img.max_value());
        }
    }
    Ok(Outcome::Ok)
}
