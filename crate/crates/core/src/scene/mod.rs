//! Scene assembly: synthetic generation, on-disk formats, and PLY export.
//!
//! A scene bundles a labeled point cloud with its cameras and any
//! image-sourced captions. Scenes are generated from a declarative spec or
//! read back from a manifest directory; both paths produce bit-identical
//! clouds for the same inputs.

mod format;
mod generate;
mod ply;

pub use format::{read_scene, write_scene};
pub use generate::generate_scene;
pub use ply::{export_ply, label_color};

use serde::{Deserialize, Serialize};

use crate::captioning::{Caption, CaptionSource};
use crate::error::{Error, Result};
use crate::geometry::{Camera, PointCloud};

/// A point cloud plus the cameras and captions that describe it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// The labeled cloud.
    pub cloud: PointCloud,
    /// Cameras observing the cloud.
    pub cameras: Vec<Camera>,
    /// Image-sourced captions, one or none per camera.
    pub captions: Vec<Caption>,
    /// Scene name (manifest `name` field).
    pub name: String,
    /// Generator seed when the scene was synthesized; not persisted.
    pub seed: Option<u64>,
}

impl Scene {
    /// Assembles and validates a scene.
    pub fn new(
        cloud: PointCloud,
        cameras: Vec<Camera>,
        captions: Vec<Caption>,
        name: impl Into<String>,
        seed: Option<u64>,
    ) -> Result<Self> {
        for caption in &captions {
            if caption.source == CaptionSource::Image && caption.source_index >= cameras.len() {
                return Err(Error::Schema {
                    reason: format!(
                        "caption references camera {} but the scene has {}",
                        caption.source_index,
                        cameras.len()
                    ),
                });
            }
        }
        Ok(Self {
            cloud,
            cameras,
            captions,
            name: name.into(),
            seed,
        })
    }
}

/// Primitive shapes the generator can sample points from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Axis-aligned solid box.
    Box,
    /// Horizontal rectangle with optional thickness.
    Plane,
    /// Vertical-axis solid cylinder.
    Cylinder,
}

/// One labeled object in a scene spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// Class label; must be a valid noun in the bundled lexicon.
    pub label: String,
    /// Primitive to sample from.
    pub shape: Shape,
    /// Primitive center `[x, y, z]`.
    pub center: [f64; 3],
    /// Full axis extents `[x, y, z]`; cylinders read `x` as diameter and `z`
    /// as height.
    pub extent: [f64; 3],
    /// Points to sample.
    pub point_count: usize,
}

/// A camera description inside a scene spec.
///
/// Either explicit matrices (`intrinsics` row-major 9, `extrinsics` row-major
/// 16) or a look-at form (`eye`, `target`, optional `up`/`focal`/`center`)
/// must be present, alongside the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    /// Row-major 3x3 intrinsics (explicit form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Vec<f64>>,
    /// Row-major 4x4 extrinsics (explicit form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsics: Option<Vec<f64>>,
    /// Camera position (look-at form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eye: Option<[f64; 3]>,
    /// Point the camera looks toward (look-at form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    /// Roll reference, default `[0, 1, 0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
    /// Focal lengths `(fx, fy)`, default `(width, width)` pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<[f64; 2]>,
    /// Principal point, default the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
}

impl CameraSpec {
    /// Resolves this description into a validated camera.
    pub fn build(&self) -> Result<Camera> {
        match (&self.intrinsics, &self.extrinsics, &self.eye, &self.target) {
            (Some(intr), Some(extr), None, None) => {
                if intr.len() != 9 {
                    return Err(Error::schema("camera intrinsics must hold 9 values"));
                }
                if extr.len() != 16 {
                    return Err(Error::schema("camera extrinsics must hold 16 values"));
                }
                let intrinsics =
                    ndarray::Array2::from_shape_vec((3, 3), intr.clone()).expect("length checked");
                let extrinsics =
                    ndarray::Array2::from_shape_vec((4, 4), extr.clone()).expect("length checked");
                Camera::new(intrinsics, extrinsics, self.width, self.height)
            }
            (None, None, Some(eye), Some(target)) => {
                let up = self.up.unwrap_or([0.0, 1.0, 0.0]);
                let focal = self
                    .focal
                    .map(|f| (f[0], f[1]))
                    .unwrap_or((self.width as f64, self.width as f64));
                let center = self
                    .center
                    .map(|c| (c[0], c[1]))
                    .unwrap_or((self.width as f64 / 2.0, self.height as f64 / 2.0));
                Camera::look_at(*eye, *target, up, focal, center, self.width, self.height)
            }
            _ => Err(Error::schema(
                "camera must give either intrinsics+extrinsics or eye+target",
            )),
        }
    }

    /// Captures an existing camera as an explicit-matrix spec.
    pub fn from_camera(cam: &Camera) -> Self {
        Self {
            intrinsics: Some(cam.intrinsics.iter().copied().collect()),
            extrinsics: Some(cam.extrinsics.iter().copied().collect()),
            eye: None,
            target: None,
            up: None,
            focal: None,
            center: None,
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Declarative input to [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Scene name carried into the manifest.
    #[serde(default = "default_scene_name")]
    pub name: String,
    /// Labeled objects to sample.
    pub classes: Vec<ClassSpec>,
    /// Cameras observing the scene.
    #[serde(default)]
    pub cameras: Vec<CameraSpec>,
    /// Seed for all sampling.
    pub seed: u64,
    /// Oracle feature noise recorded for downstream stages.
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_scene_name() -> String {
    "scene".to_owned()
}

impl SceneSpec {
    /// Reads a spec from a JSON file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text)?;
        Ok(spec)
    }
}
