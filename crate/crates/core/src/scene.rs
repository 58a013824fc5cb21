//! Scene files: a versioned JSON description of mesh, lighting, cameras,
//! background and resolution, resolved into an [`AttackScene`].
//!
//! ```json
//! {
//!   "scene_version": 1,
//!   "mesh": { "obj": { "path": "bunny.obj", "albedo": "bunny.albedo" } },
//!   "lighting": { "sh_file": "cathedral.shc" },
//!   "camera_ring": { "count": 10 },
//!   "background": { "color": [0.5, 0.5, 0.5] },
//!   "resolution": [64, 64]
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the scene file.

use std::f64::consts::FRAC_PI_3;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AttackScene, SceneLighting, View};
use crate::image::{Image, ImageError};
use crate::lighting::{project_environment, EnvMap, LightingError, ShCoeffs, SkylightFit, SkylightParams};
use crate::math::Vec3;
use crate::mesh::{load_obj_with_albedo, primitives, MeshError, TriMesh};
use crate::raster::{camera_ring, Background, Camera, Projection, RasterError};

pub const SCENE_VERSION: u32 = 1;
/// Bands used when projecting an environment map and none are given.
pub const DEFAULT_ENV_BANDS: usize = 3;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scene file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported scene_version {0}, expected {SCENE_VERSION}")]
    Version(u32),
    #[error("{0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Lighting(#[from] LightingError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub scene_version: u32,
    pub mesh: MeshSource,
    pub lighting: LightingSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_ring: Option<RingSpec>,
    #[serde(default)]
    pub background: BackgroundSpec,
    pub resolution: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Obj {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        albedo: Option<PathBuf>,
    },
    Primitive(Primitive),
}

fn default_albedo() -> [f64; 3] {
    [0.8; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Icosphere {
        level: usize,
        #[serde(default = "default_albedo")]
        albedo: [f64; 3],
    },
    Cube {
        rounds: usize,
        #[serde(default = "default_albedo")]
        albedo: [f64; 3],
    },
    Torus {
        major: f64,
        minor: f64,
        rings: usize,
        sides: usize,
        #[serde(default = "default_albedo")]
        albedo: [f64; 3],
    },
    Disk {
        radius: f64,
        segments: usize,
        #[serde(default = "default_albedo")]
        albedo: [f64; 3],
    },
    Quad {
        size: f64,
        #[serde(default = "default_albedo")]
        albedo: [f64; 3],
    },
}

impl Primitive {
    pub fn build(&self) -> Result<TriMesh, SceneError> {
        let bad = |what: &str| Err(SceneError::Invalid(format!("primitive {what}")));
        Ok(match *self {
            Primitive::Icosphere { level, albedo } => {
                if level > 8 {
                    return bad("icosphere level must be at most 8");
                }
                primitives::icosphere(level, albedo)
            }
            Primitive::Cube { rounds, albedo } => {
                if rounds > 8 {
                    return bad("cube rounds must be at most 8");
                }
                primitives::cube(rounds, albedo)
            }
            Primitive::Torus { major, minor, rings, sides, albedo } => {
                if !(major > minor && minor > 0.0) || rings < 3 || sides < 3 {
                    return bad("torus needs major > minor > 0 and at least 3 rings and sides");
                }
                primitives::torus(major, minor, rings, sides, albedo)
            }
            Primitive::Disk { radius, segments, albedo } => {
                if !(radius > 0.0) || segments < 3 {
                    return bad("disk needs a positive radius and at least 3 segments");
                }
                primitives::disk(radius, segments, albedo)
            }
            Primitive::Quad { size, albedo } => {
                if !(size > 0.0) {
                    return bad("quad needs a positive size");
                }
                primitives::quad(size, 0.0, albedo)
            }
        })
    }
}

/// Exactly one of the three sources must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sh_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_map: Option<EnvMapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skylight: Option<SkylightSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvMapSpec {
    pub path: PathBuf,
    #[serde(default = "default_env_bands")]
    pub bands: usize,
}

fn default_env_bands() -> usize {
    DEFAULT_ENV_BANDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkylightSpec {
    pub theta_s: f64,
    pub phi_s: f64,
    pub turbidity: f64,
    /// Coefficient table; the bundled fit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<PathBuf>,
}

fn default_up() -> Vec3 {
    [0.0, 0.0, 1.0]
}

fn default_projection() -> Projection {
    Projection::Orthographic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default = "default_projection")]
    pub projection: Projection,
    pub position: Vec3,
    #[serde(default)]
    pub look_at: Vec3,
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// Frustum width in scene units at the look-at distance.
    pub fov: f64,
}

fn default_ring_count() -> usize {
    10
}
fn default_ring_zenith() -> f64 {
    FRAC_PI_3
}
fn default_ring_radius() -> f64 {
    3.0
}
fn default_ring_fov() -> f64 {
    2.6
}

/// Cameras at equal azimuth steps on a circle of constant zenith angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    #[serde(default = "default_ring_count")]
    pub count: usize,
    #[serde(default = "default_ring_zenith")]
    pub zenith: f64,
    #[serde(default = "default_ring_radius")]
    pub radius: f64,
    #[serde(default = "default_projection")]
    pub projection: Projection,
    #[serde(default = "default_ring_fov")]
    pub fov: f64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            count: default_ring_count(),
            zenith: default_ring_zenith(),
            radius: default_ring_radius(),
            projection: default_projection(),
            fov: default_ring_fov(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    Color([f64; 3]),
    Image(PathBuf),
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec::Color([0.0; 3])
    }
}

/// A parsed scene together with the directory its relative paths start from.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub spec: SceneSpec,
    pub base: PathBuf,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parse and validate, checking that referenced files exist under `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, SceneError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        let file = Self { spec, base: base.to_path_buf() };
        file.validate()?;
        Ok(file)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn existing(&self, p: &Path) -> Result<PathBuf, SceneError> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(SceneError::Missing(full))
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let s = &self.spec;
        if s.scene_version != SCENE_VERSION {
            return Err(SceneError::Version(s.scene_version));
        }
        let sources = [s.lighting.sh_file.is_some(), s.lighting.env_map.is_some(), s.lighting.skylight.is_some()];
        if sources.iter().filter(|x| **x).count() != 1 {
            return Err(SceneError::Invalid("lighting needs exactly one of sh_file, env_map, skylight".into()));
        }
        if s.camera.is_some() == s.camera_ring.is_some() {
            return Err(SceneError::Invalid("give exactly one of camera, camera_ring".into()));
        }
        if let Some(r) = &s.camera_ring {
            if r.count == 0 {
                return Err(SceneError::Invalid("camera_ring.count must be positive".into()));
            }
        }
        if s.resolution[0] == 0 || s.resolution[1] == 0 {
            return Err(SceneError::Invalid(format!("resolution {}x{} is empty", s.resolution[0], s.resolution[1])));
        }
        if let MeshSource::Obj { path, albedo } = &s.mesh {
            self.existing(path)?;
            if let Some(a) = albedo {
                self.existing(a)?;
            }
        }
        if let Some(p) = &s.lighting.sh_file {
            self.existing(p)?;
        }
        if let Some(e) = &s.lighting.env_map {
            self.existing(&e.path)?;
            if e.bands == 0 {
                return Err(SceneError::Invalid("env_map.bands must be positive".into()));
            }
        }
        if let Some(sky) = &s.lighting.skylight {
            SkylightParams::new(sky.theta_s, sky.phi_s, sky.turbidity)?;
            if let Some(f) = &sky.fit {
                self.existing(f)?;
            }
        }
        if let BackgroundSpec::Image(p) = &s.background {
            self.existing(p)?;
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<TriMesh, SceneError> {
        match &self.spec.mesh {
            MeshSource::Obj { path, albedo } => {
                let albedo = albedo.as_ref().map(|a| self.resolve(a));
                Ok(load_obj_with_albedo(&self.resolve(path), albedo.as_deref())?)
            }
            MeshSource::Primitive(p) => p.build(),
        }
    }

    pub fn lighting(&self) -> Result<SceneLighting, SceneError> {
        let l = &self.spec.lighting;
        if let Some(p) = &l.sh_file {
            return Ok(SceneLighting::Sh(ShCoeffs::load(&self.resolve(p))?));
        }
        if let Some(e) = &l.env_map {
            let env = EnvMap::load(&self.resolve(&e.path))?;
            return Ok(SceneLighting::Sh(project_environment(&env, e.bands)?));
        }
        let sky = l.skylight.as_ref().expect("validated: one lighting source");
        let params = SkylightParams::new(sky.theta_s, sky.phi_s, sky.turbidity)?;
        let fit = match &sky.fit {
            Some(f) => SkylightFit::load(&self.resolve(f))?,
            None => SkylightFit::bundled()?,
        };
        Ok(SceneLighting::Skylight { params, fit })
    }

    pub fn cameras(&self) -> Result<Vec<Camera>, SceneError> {
        let [w, h] = self.spec.resolution;
        if let Some(c) = &self.spec.camera {
            return Ok(vec![Camera::new(c.projection, c.position, c.look_at, c.up, c.fov, w, h)?]);
        }
        let r = self.spec.camera_ring.as_ref().expect("validated: one camera spec");
        Ok(camera_ring(r.count, r.zenith, r.radius, r.projection, r.fov, w, h)?)
    }

    pub fn background(&self) -> Result<Background, SceneError> {
        Ok(match &self.spec.background {
            BackgroundSpec::Color(c) => Background::Color(*c),
            BackgroundSpec::Image(p) => Background::Image(Image::load(&self.resolve(p))?),
        })
    }

    /// Load every referenced resource into a renderable scene.
    pub fn build(&self) -> Result<AttackScene, SceneError> {
        let background = self.background()?;
        let views = self.cameras()?.into_iter().map(|camera| View { camera, background: background.clone() }).collect();
        Ok(AttackScene { mesh: self.mesh()?, lighting: self.lighting()?, views })
    }
}
