//! ASCII PLY export of segmentation results.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::segmenter::SegmentationResult;

/// Deterministic label color: FNV-1a of the label string picks a hue.
///
/// Hashing the string rather than the vocabulary index keeps a label's color
/// stable across runs and vocabulary orderings.
pub fn label_color(label: &str) -> [u8; 3] {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hsv_to_rgb((hash % 360) as f64, 0.75, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Writes a labeled cloud as an ASCII PLY file with per-label colors.
pub fn export_ply(result: &SegmentationResult, cloud: &PointCloud, path: &Path) -> Result<()> {
    if result.labels.len() != cloud.len() {
        return Err(Error::DimMismatch {
            what: "segmentation labels",
            expected: cloud.len(),
            found: result.labels.len(),
        });
    }
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for (i, p) in cloud.points.rows().into_iter().enumerate() {
        let [r, g, b] = label_color(result.label_name(i));
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            p[0] as f32, p[1] as f32, p[2] as f32, r, g, b
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioning::Vocabulary;
    use ndarray::array;

    fn tiny_result(labels: Vec<usize>, tags: &[&str]) -> SegmentationResult {
        SegmentationResult {
            scores: vec![1.0; labels.len()],
            labels,
            vocabulary: Vocabulary::new(tags.iter().copied()).unwrap(),
        }
    }

    #[test]
    fn single_point_export_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.ply");
        let cloud = PointCloud::new(array![[1.0, 2.0, 3.0]]).unwrap();
        export_ply(&tiny_result(vec![0], &["car"]), &cloud, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\n"));
        assert!(text.contains("element vertex 1"));
        let body = text.lines().last().unwrap();
        let fields: Vec<&str> = body.split(' ').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[..3], ["1", "2", "3"]);
    }

    #[test]
    fn label_colors_are_stable() {
        assert_eq!(label_color("car"), label_color("car"));
        assert_ne!(label_color("car"), label_color("road"));
    }

    #[test]
    fn three_labels_export_three_distinct_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.ply");
        let cloud = PointCloud::new(array![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0]
        ])
        .unwrap();
        let result = tiny_result(vec![0, 1, 2, 0], &["car", "road", "building"]);
        export_ply(&result, &cloud, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut colors = std::collections::BTreeSet::new();
        for line in text.lines().skip_while(|l| *l != "end_header").skip(1) {
            let fields: Vec<&str> = line.split(' ').collect();
            colors.insert((
                fields[3].to_owned(),
                fields[4].to_owned(),
                fields[5].to_owned(),
            ));
        }
        assert_eq!(colors.len(), 3);
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let err = export_ply(
            &tiny_result(vec![0], &["car"]),
            &cloud,
            &dir.path().join("out.ply"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimMismatch { .. }));
    }
}
