//! Differentiable spherical-harmonics rendering of triangle meshes and
//! parametric adversarial attacks on image classifiers.
//!
//! The renderer shades each pixel with the irradiance of a low-order SH
//! environment evaluated at the visible face normal. Its derivatives with
//! respect to lighting coefficients, per-face albedo and vertex positions
//! are analytic, which lets gradient-based attacks perturb the scene itself
//! instead of individual pixels.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod classifier;
pub mod fixtures;
pub mod gradcheck;
pub mod image;
pub mod lighting;
pub mod math;
pub mod mesh;
pub mod quadrature;
pub mod raster;
pub mod scene;
pub mod sh;
pub mod shade;
pub mod train;

pub use adversary::{run_attack, AttackConfig, AttackScene, AttackTrace, ParamSpace};
pub use classifier::{Classifier, Evaluation, ExternalClassifier, ToyClassifier};
pub use image::Image;
pub use lighting::{EnvMap, ShCoeffs, SkylightFit, SkylightParams};
pub use mesh::{FaceNormals, TriMesh};
pub use raster::{Background, Camera, FragmentBuffer, Projection};
pub use sh::{BandIndex, UnitVec3};
