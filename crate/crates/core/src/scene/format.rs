//! Scene manifest and binary blob codecs.
//!
//! A scene directory holds `scene.json` (the manifest) next to the blobs it
//! references: `points.avsp` (magic `AVSP`, little-endian u32 count, then
//! `N x 3` f32 coordinates row-major), optional `labels.avsl` (magic `AVSL`,
//! u32 count, then `N` u32 indices), and optional `captions.jsonl`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::captioning::Caption;
use crate::error::{Error, Result};
use crate::geometry::{Camera, PointCloud};

const POINTS_MAGIC: &str = "AVSP";
const LABELS_MAGIC: &str = "AVSL";
const MANIFEST_NAME: &str = "scene.json";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestCamera {
    intrinsics: Vec<f64>,
    extrinsics: Vec<f64>,
    width: usize,
    height: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    points: String,
    labels: Option<String>,
    label_table: Vec<String>,
    cameras: Vec<ManifestCamera>,
    captions: Option<String>,
}

/// Writes a scene into `dir` (created if missing) as a manifest plus blobs.
///
/// Coordinates are stored as f32; clouds whose values are already
/// f32-representable (all generated scenes) round-trip bitwise. The
/// generator seed is not persisted.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let points_name = "points.avsp";
    let labels_name = scene.cloud.labels.as_ref().map(|_| "labels.avsl");
    let captions_name = (!scene.captions.is_empty()).then_some("captions.jsonl");

    let manifest = Manifest {
        name: scene.name.clone(),
        points: points_name.to_owned(),
        labels: labels_name.map(str::to_owned),
        label_table: scene.cloud.label_table.clone(),
        cameras: scene
            .cameras
            .iter()
            .map(|cam| ManifestCamera {
                intrinsics: cam.intrinsics.iter().copied().collect(),
                extrinsics: cam.extrinsics.iter().copied().collect(),
                width: cam.width,
                height: cam.height,
            })
            .collect(),
        captions: captions_name.map(str::to_owned),
    };
    let manifest_path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let points_path = dir.join(points_name);
    std::fs::write(&points_path, encode_points(&scene.cloud)?)
        .map_err(|e| Error::io(&points_path, e))?;

    if let (Some(name), Some(labels)) = (labels_name, scene.cloud.labels.as_ref()) {
        let labels_path = dir.join(name);
        std::fs::write(&labels_path, encode_labels(labels)?)
            .map_err(|e| Error::io(&labels_path, e))?;
    }
    if let Some(name) = captions_name {
        let captions_path = dir.join(name);
        let mut lines = String::new();
        for caption in &scene.captions {
            lines.push_str(&serde_json::to_string(caption)?);
            lines.push('\n');
        }
        std::fs::write(&captions_path, lines).map_err(|e| Error::io(&captions_path, e))?;
    }
    Ok(())
}

/// Reads a scene from a manifest file or a directory containing `scene.json`.
pub fn read_scene(path: &Path) -> Result<Scene> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let points = decode_points(&read_resource(&base.join(&manifest.points))?)?;
    let mut cloud = match &manifest.labels {
        Some(rel) => {
            let labels = decode_labels(&read_resource(&base.join(rel))?)?;
            PointCloud::with_labels(points, labels, manifest.label_table.clone())?
        }
        None => PointCloud::new(points)?,
    };
    if manifest.labels.is_none() {
        cloud.label_table = manifest.label_table.clone();
    }

    let cameras: Vec<Camera> = manifest
        .cameras
        .iter()
        .map(|mc| {
            if mc.intrinsics.len() != 9 {
                return Err(Error::schema(
                    "manifest camera intrinsics must hold 9 values",
                ));
            }
            if mc.extrinsics.len() != 16 {
                return Err(Error::schema(
                    "manifest camera extrinsics must hold 16 values",
                ));
            }
            Camera::new(
                Array2::from_shape_vec((3, 3), mc.intrinsics.clone()).expect("length checked"),
                Array2::from_shape_vec((4, 4), mc.extrinsics.clone()).expect("length checked"),
                mc.width,
                mc.height,
            )
        })
        .collect::<Result<_>>()?;

    let captions = match &manifest.captions {
        Some(rel) => {
            let captions_path = base.join(rel);
            let text = String::from_utf8(read_resource(&captions_path)?)
                .map_err(|_| Error::schema("captions file is not UTF-8"))?;
            let mut captions = Vec::new();
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                captions.push(serde_json::from_str::<Caption>(line)?);
            }
            captions
        }
        None => Vec::new(),
    };

    Scene::new(cloud, cameras, captions, manifest.name, None)
}

fn read_resource(path: &PathBuf) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingResource { path: path.clone() });
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn encode_points(cloud: &PointCloud) -> Result<Vec<u8>> {
    let n = cloud.len();
    if n as u128 > u32::MAX as u128 {
        return Err(Error::CountOverflow { count: n as u64 });
    }
    let mut out = Vec::with_capacity(8 + n * 12);
    out.extend_from_slice(POINTS_MAGIC.as_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in cloud.points.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

fn encode_labels(labels: &[u32]) -> Result<Vec<u8>> {
    if labels.len() as u128 > u32::MAX as u128 {
        return Err(Error::CountOverflow {
            count: labels.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(8 + labels.len() * 4);
    out.extend_from_slice(LABELS_MAGIC.as_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

/// Checks a blob's magic and count header, returning the declared count.
fn blob_header(bytes: &[u8], magic: &'static str, record_size: u64) -> Result<u64> {
    if bytes.len() < 4 || &bytes[..4] != magic.as_bytes() {
        return Err(Error::MagicMismatch {
            expected: magic,
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < 8 {
        return Err(Error::TruncatedPayload {
            expected: 8,
            found: bytes.len() as u64,
        });
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked")) as u64;
    let expected = 8 + count * record_size;
    match (bytes.len() as u64).cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::TruncatedPayload {
            expected,
            found: bytes.len() as u64,
        }),
        std::cmp::Ordering::Greater => Err(Error::TrailingBytes {
            expected,
            found: bytes.len() as u64,
        }),
        std::cmp::Ordering::Equal => Ok(count),
    }
}

fn decode_points(bytes: &[u8]) -> Result<Array2<f64>> {
    let count = blob_header(bytes, POINTS_MAGIC, 12)? as usize;
    let mut points = Array2::zeros((count, 3));
    for i in 0..count * 3 {
        let at = 8 + i * 4;
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("length checked"));
        points[[i / 3, i % 3]] = v as f64;
    }
    Ok(points)
}

fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let count = blob_header(bytes, LABELS_MAGIC, 4)? as usize;
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let at = 8 + i * 4;
        labels.push(u32::from_le_bytes(
            bytes[at..at + 4].try_into().expect("length checked"),
        ));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioning::CaptionSource;
    use crate::scene::{generate_scene, CameraSpec, ClassSpec, SceneSpec, Shape};

    fn sample_scene() -> Scene {
        let spec = SceneSpec {
            name: "roundtrip".into(),
            classes: vec![
                ClassSpec {
                    label: "car".into(),
                    shape: Shape::Box,
                    center: [3.0, 1.0, 0.0],
                    extent: [2.0, 1.0, 1.0],
                    point_count: 40,
                },
                ClassSpec {
                    label: "road".into(),
                    shape: Shape::Plane,
                    center: [0.0, 0.0, -0.5],
                    extent: [20.0, 20.0, 0.0],
                    point_count: 60,
                },
            ],
            cameras: vec![CameraSpec {
                intrinsics: None,
                extrinsics: None,
                eye: Some([0.0, 0.0, 20.0]),
                target: Some([0.0, 0.0, 0.0]),
                up: None,
                focal: None,
                center: None,
                width: 64,
                height: 48,
            }],
            seed: 11,
            noise_sigma: 0.0,
        };
        generate_scene(&spec).unwrap()
    }

    #[test]
    fn write_then_read_is_identity_up_to_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene();
        write_scene(&scene, dir.path()).unwrap();
        let back = read_scene(dir.path()).unwrap();
        assert_eq!(back.seed, None);
        assert_eq!(back.name, scene.name);
        assert_eq!(back.cloud, scene.cloud);
        assert_eq!(back.cameras, scene.cameras);
        assert_eq!(back.captions, scene.captions);
    }

    #[test]
    fn point_coordinates_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene();
        write_scene(&scene, dir.path()).unwrap();
        let back = read_scene(dir.path()).unwrap();
        for (a, b) in scene.cloud.points.iter().zip(back.cloud.points.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn read_accepts_the_manifest_path_directly() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene();
        write_scene(&scene, dir.path()).unwrap();
        let back = read_scene(&dir.path().join("scene.json")).unwrap();
        assert_eq!(back.cloud, scene.cloud);
    }

    #[test]
    fn corrupt_points_magic_is_a_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        let path = dir.path().join("points.avsp");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_scene(dir.path()),
            Err(Error::MagicMismatch {
                expected: "AVSP",
                ..
            })
        ));
    }

    #[test]
    fn truncated_points_blob_is_a_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        let path = dir.path().join("points.avsp");
        let bytes = std::fs::read(&path).unwrap();
        let expected = bytes.len() as u64;
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match read_scene(dir.path()) {
            Err(Error::TruncatedPayload { expected: e, found }) => {
                assert_eq!(e, expected);
                assert_eq!(found, expected - 5);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_a_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        let path = dir.path().join("labels.avsl");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_scene(dir.path()),
            Err(Error::TrailingBytes { .. })
        ));
    }

    #[test]
    fn missing_blob_is_a_missing_resource_error() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("labels.avsl")).unwrap();
        assert!(matches!(
            read_scene(dir.path()),
            Err(Error::MissingResource { .. })
        ));
    }

    #[test]
    fn bad_manifest_json_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("scene.json"), "{\"name\": 3}").unwrap();
        let err = read_scene(dir.path()).unwrap_err();
        assert_eq!(err.category(), "schema");
    }

    #[test]
    fn label_blob_with_wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        let path = dir.path().join("labels.avsl");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[..4].copy_from_slice(b"AVSP");
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_scene(dir.path()),
            Err(Error::MagicMismatch {
                expected: "AVSL",
                ..
            })
        ));
    }

    #[test]
    fn scene_without_labels_or_captions_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(ndarray::array![[1.0f32 as f64, 2.0, 3.0]]).unwrap();
        let scene = Scene::new(cloud, Vec::new(), Vec::new(), "bare", None).unwrap();
        write_scene(&scene, dir.path()).unwrap();
        let back = read_scene(dir.path()).unwrap();
        assert_eq!(back, scene);
        assert!(!dir.path().join("labels.avsl").exists());
        assert!(!dir.path().join("captions.jsonl").exists());
    }

    #[test]
    fn caption_camera_reference_is_validated_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = sample_scene();
        // Break the invariant after generation, then write the files by hand.
        scene.captions = vec![Caption::new("a car.", CaptionSource::Image, 5).unwrap()];
        // write_scene itself does not re-validate; reading must.
        write_scene(&scene, dir.path()).unwrap();
        let err = read_scene(dir.path()).unwrap_err();
        assert_eq!(err.category(), "schema");
    }

    #[test]
    fn out_of_range_label_indices_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&sample_scene(), dir.path()).unwrap();
        let path = dir.path().join("labels.avsl");
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_scene(dir.path()),
            Err(Error::LabelIndexOutOfRange { .. })
        ));
    }
}
