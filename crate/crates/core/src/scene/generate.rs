//! Deterministic synthetic scene generation from a declarative spec.

use ndarray::Array2;
use rand::Rng;

use super::{CameraSpec, ClassSpec, Scene, SceneSpec, Shape};
use crate::captioning::{Caption, CaptionSource, Lexicon};
use crate::error::{Error, Result};
use crate::geometry::{Camera, PointCloud};
use crate::rng;

/// Samples a labeled cloud (plus cameras and per-camera captions) from a
/// spec.
///
/// Point sampling is keyed by `(seed, class index)`, so editing one class
/// never moves another class's points. Every coordinate is rounded through
/// f32 to match the on-disk point format bit for bit. Captions list the
/// classes whose primitive centers each camera sees.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.classes.is_empty() {
        return Err(Error::InvalidPrimitive {
            reason: "scene spec declares no classes".into(),
        });
    }
    let lex = Lexicon::bundled();
    let mut label_table: Vec<String> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut rows: Vec<[f64; 3]> = Vec::new();

    for (ci, class) in spec.classes.iter().enumerate() {
        validate_class(class)?;
        let canonical = class.label.trim().to_lowercase();
        let known = canonical
            .split_whitespace()
            .all(|w| lex.resolve(w).is_some_and(|e| e.valid));
        if !known {
            return Err(Error::InvalidPrimitive {
                reason: format!("label {:?} is not a valid lexicon noun", class.label),
            });
        }
        let index = match label_table.iter().position(|l| *l == canonical) {
            Some(i) => i,
            None => {
                label_table.push(canonical);
                label_table.len() - 1
            }
        };
        let mut stream = rng::derive(spec.seed, &[b"scene-class", &(ci as u64).to_le_bytes()]);
        for _ in 0..class.point_count {
            let p = sample_point(class, &mut stream);
            rows.push(p.map(|v| v as f32 as f64));
            labels.push(index as u32);
        }
    }

    let mut points = Array2::zeros((rows.len(), 3));
    for (i, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            points[[i, c]] = v;
        }
    }
    let cloud = PointCloud::with_labels(points, labels, label_table)?;

    let cameras: Vec<Camera> = spec
        .cameras
        .iter()
        .map(CameraSpec::build)
        .collect::<Result<_>>()?;
    let captions = synthesize_captions(spec, &cameras)?;
    Scene::new(cloud, cameras, captions, spec.name.clone(), Some(spec.seed))
}

fn validate_class(class: &ClassSpec) -> Result<()> {
    if class.point_count == 0 {
        return Err(Error::InvalidPrimitive {
            reason: format!("class {:?} has zero points", class.label),
        });
    }
    let finite = class
        .center
        .iter()
        .chain(class.extent.iter())
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidPrimitive {
            reason: format!("class {:?} has non-finite geometry", class.label),
        });
    }
    let [ex, ey, ez] = class.extent;
    let ok = match class.shape {
        Shape::Box => ex > 0.0 && ey > 0.0 && ez > 0.0,
        Shape::Plane => ex > 0.0 && ey > 0.0 && ez >= 0.0,
        Shape::Cylinder => ex > 0.0 && ez >= 0.0,
    };
    if !ok {
        return Err(Error::InvalidPrimitive {
            reason: format!(
                "class {:?} has invalid extent {:?} for shape {:?}",
                class.label, class.extent, class.shape
            ),
        });
    }
    Ok(())
}

fn sample_point(class: &ClassSpec, stream: &mut impl Rng) -> [f64; 3] {
    let [cx, cy, cz] = class.center;
    let [ex, ey, ez] = class.extent;
    match class.shape {
        Shape::Box => [
            cx + (stream.gen_range(0.0..1.0) - 0.5) * ex,
            cy + (stream.gen_range(0.0..1.0) - 0.5) * ey,
            cz + (stream.gen_range(0.0..1.0) - 0.5) * ez,
        ],
        Shape::Plane => {
            let x = cx + (stream.gen_range(0.0..1.0) - 0.5) * ex;
            let y = cy + (stream.gen_range(0.0..1.0) - 0.5) * ey;
            let z = if ez == 0.0 {
                cz
            } else {
                cz + (stream.gen_range(0.0..1.0) - 0.5) * ez
            };
            [x, y, z]
        }
        Shape::Cylinder => {
            let radius = ex / 2.0 * stream.gen_range(0.0f64..1.0).sqrt();
            let angle = stream.gen_range(0.0..std::f64::consts::TAU);
            let z = if ez == 0.0 {
                cz
            } else {
                cz + (stream.gen_range(0.0..1.0) - 0.5) * ez
            };
            [cx + radius * angle.cos(), cy + radius * angle.sin(), z]
        }
    }
}

/// One caption per camera naming the classes whose centers it sees.
fn synthesize_captions(spec: &SceneSpec, cameras: &[Camera]) -> Result<Vec<Caption>> {
    let mut captions = Vec::new();
    for (k, cam) in cameras.iter().enumerate() {
        let mut seen: Vec<String> = Vec::new();
        for class in &spec.classes {
            let center = ndarray::arr1(&class.center);
            if cam.sees(center.view()) {
                let canonical = class.label.trim().to_lowercase();
                if !seen.contains(&canonical) {
                    seen.push(canonical);
                }
            }
        }
        let text = if seen.is_empty() {
            "an empty view.".to_owned()
        } else {
            format!("the image shows a {}.", seen.join(", a "))
        };
        captions.push(Caption::new(text, CaptionSource::Image, k)?);
    }
    Ok(captions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_box(label: &str, count: usize) -> SceneSpec {
        SceneSpec {
            name: "t".into(),
            classes: vec![ClassSpec {
                label: label.into(),
                shape: Shape::Box,
                center: [0.0, 0.0, 0.0],
                extent: [2.0, 2.0, 2.0],
                point_count: count,
            }],
            cameras: Vec::new(),
            seed: 7,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn single_box_yields_uniform_labels() {
        let scene = generate_scene(&one_box("car", 100)).unwrap();
        assert_eq!(scene.cloud.len(), 100);
        assert_eq!(scene.cloud.label_table, vec!["car"]);
        assert!(scene.cloud.labels.as_ref().unwrap().iter().all(|&l| l == 0));
        assert_eq!(scene.seed, Some(7));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&one_box("car", 50)).unwrap();
        let b = generate_scene(&one_box("car", 50)).unwrap();
        assert_eq!(a.cloud.points, b.cloud.points);
    }

    #[test]
    fn box_points_stay_inside_the_extent() {
        let scene = generate_scene(&one_box("car", 500)).unwrap();
        for p in scene.cloud.points.rows() {
            for c in 0..3 {
                assert!(p[c] >= -1.0 - 1e-6 && p[c] <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn plane_points_respect_the_z_extent() {
        let mut spec = one_box("road", 300);
        spec.classes[0].shape = Shape::Plane;
        spec.classes[0].extent = [10.0, 10.0, 0.0];
        spec.classes[0].center = [0.0, 0.0, -1.5];
        let scene = generate_scene(&spec).unwrap();
        for p in scene.cloud.points.rows() {
            assert_eq!(p[2], -1.5f64 as f32 as f64);
        }
    }

    #[test]
    fn cylinder_points_stay_inside_the_radius() {
        let mut spec = one_box("tree", 300);
        spec.classes[0].shape = Shape::Cylinder;
        spec.classes[0].extent = [3.0, 0.0, 2.0];
        spec.classes[0].center = [5.0, -2.0, 0.0];
        let scene = generate_scene(&spec).unwrap();
        for p in scene.cloud.points.rows() {
            let dx = p[0] - 5.0;
            let dy = p[1] + 2.0;
            assert!((dx * dx + dy * dy).sqrt() <= 1.5 + 1e-6);
            assert!(p[2] >= -1.0 - 1e-6 && p[2] <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn repeated_labels_share_a_table_entry() {
        let mut spec = one_box("car", 10);
        spec.classes.push(ClassSpec {
            label: "Car".into(),
            shape: Shape::Box,
            center: [5.0, 0.0, 0.0],
            extent: [1.0, 1.0, 1.0],
            point_count: 5,
        });
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.cloud.label_table, vec!["car"]);
        assert_eq!(scene.cloud.len(), 15);
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let err = generate_scene(&one_box("zzyzx", 10)).unwrap_err();
        assert!(matches!(err, Error::InvalidPrimitive { .. }));
    }

    #[test]
    fn zero_point_count_is_rejected() {
        let err = generate_scene(&one_box("car", 0)).unwrap_err();
        assert!(matches!(err, Error::InvalidPrimitive { .. }));
    }

    #[test]
    fn negative_extent_is_rejected() {
        let mut spec = one_box("car", 10);
        spec.classes[0].extent = [1.0, -1.0, 1.0];
        assert!(matches!(
            generate_scene(&spec),
            Err(Error::InvalidPrimitive { .. })
        ));
    }

    #[test]
    fn coordinates_survive_f32_rounding_exactly() {
        let scene = generate_scene(&one_box("car", 64)).unwrap();
        for &v in scene.cloud.points.iter() {
            assert_eq!(v, v as f32 as f64);
        }
    }

    #[test]
    fn captions_name_the_visible_classes() {
        let mut spec = one_box("car", 10);
        spec.cameras.push(CameraSpec {
            intrinsics: None,
            extrinsics: None,
            eye: Some([0.0, 0.0, 10.0]),
            target: Some([0.0, 0.0, 0.0]),
            up: None,
            focal: None,
            center: None,
            width: 64,
            height: 64,
        });
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.captions.len(), 1);
        assert!(scene.captions[0].text.contains("car"));
        assert_eq!(scene.captions[0].source, CaptionSource::Image);
    }
}
