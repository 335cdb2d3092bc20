//! Similarity-based label assignment over a generated vocabulary.
//!
//! Every point is scored against every vocabulary label by dot product in
//! the shared embedding space; points that received a lifted image feature
//! fuse the two score rows with a per-label maximum before the argmax picks
//! the winner.

use ndarray::Array2;

use crate::captioning::Vocabulary;
use crate::embedding::{lift_to_points_multi, FeatureMatrix, ImageView, SyntheticSpace};
use crate::error::{Error, Result};
use crate::scene::Scene;

/// Per-point label assignment over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Winning vocabulary index per point.
    pub labels: Vec<usize>,
    /// The vocabulary the indices refer to.
    pub vocabulary: Vocabulary,
    /// Winning similarity per point.
    pub scores: Vec<f64>,
}

impl SegmentationResult {
    /// Resolves a point's winning label name.
    pub fn label_name(&self, point: usize) -> &str {
        &self.vocabulary.tags()[self.labels[point]]
    }
}

/// Options controlling [`segment_scene`].
#[derive(Debug, Clone, Copy)]
pub struct SegmentOptions {
    /// Fuse lifted image features into the scores where available.
    pub use_image: bool,
    /// Feature-grid resolution (rows, columns) when rendering image views.
    pub grid_size: (usize, usize),
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            use_image: false,
            grid_size: (32, 32),
        }
    }
}

/// Assigns each point the vocabulary label with the highest similarity.
///
/// Scores are raw dot products of the point feature against each label
/// embedding. When `image_feats` is given, points flagged as having an image
/// feature take the per-label maximum of the two score rows before the
/// argmax. Ties resolve to the lowest label index.
pub fn assign_labels(
    point_feats: &FeatureMatrix,
    image_feats: Option<(&FeatureMatrix, &[bool])>,
    text_embs: &FeatureMatrix,
    vocab: &Vocabulary,
) -> Result<SegmentationResult> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if text_embs.len() != vocab.len() {
        return Err(Error::DimMismatch {
            what: "text embedding rows",
            expected: vocab.len(),
            found: text_embs.len(),
        });
    }
    if text_embs.dim() != point_feats.dim() {
        return Err(Error::DimMismatch {
            what: "text embedding dimension",
            expected: point_feats.dim(),
            found: text_embs.dim(),
        });
    }
    let n = point_feats.len();
    let mut scores: Array2<f64> = point_feats.values.dot(&text_embs.values.t());
    if let Some((im, has)) = image_feats {
        if im.len() != n {
            return Err(Error::DimMismatch {
                what: "image feature rows",
                expected: n,
                found: im.len(),
            });
        }
        if im.dim() != point_feats.dim() {
            return Err(Error::DimMismatch {
                what: "image feature dimension",
                expected: point_feats.dim(),
                found: im.dim(),
            });
        }
        if has.len() != n {
            return Err(Error::DimMismatch {
                what: "image feature flags",
                expected: n,
                found: has.len(),
            });
        }
        let image_scores = im.values.dot(&text_embs.values.t());
        for i in 0..n {
            if !has[i] {
                continue;
            }
            for m in 0..vocab.len() {
                if image_scores[[i, m]] > scores[[i, m]] {
                    scores[[i, m]] = image_scores[[i, m]];
                }
            }
        }
    }

    let mut labels = Vec::with_capacity(n);
    let mut winning = Vec::with_capacity(n);
    for row in scores.rows() {
        let mut best = 0;
        for (m, &s) in row.iter().enumerate() {
            if s > row[best] {
                best = m;
            }
        }
        labels.push(best);
        winning.push(row[best]);
    }
    Ok(SegmentationResult {
        labels,
        vocabulary: vocab.clone(),
        scores: winning,
    })
}

/// Runs the vocabulary-assignment pipeline over a scene.
///
/// Point features come from the embedding space's point oracle; when
/// `use_image` is set and the scene has cameras, per-camera feature grids
/// are rendered and lifted back onto the points for max fusion.
pub fn segment_scene(
    scene: &Scene,
    vocab: &Vocabulary,
    space: &SyntheticSpace,
    options: &SegmentOptions,
) -> Result<SegmentationResult> {
    let text_embs = space.encode_text_batch(vocab.tags())?;
    let point_feats = space.encode_points_oracle(&scene.cloud)?;
    let lifted;
    let image = if options.use_image && !scene.cameras.is_empty() {
        let views: Vec<ImageView> = scene
            .cameras
            .iter()
            .map(|cam| {
                let grid = space.render_image_features(
                    &scene.cloud,
                    cam,
                    options.grid_size.0,
                    options.grid_size.1,
                )?;
                Ok(ImageView {
                    camera: cam.clone(),
                    grid,
                })
            })
            .collect::<Result<_>>()?;
        lifted = lift_to_points_multi(&views, &scene.cloud)?;
        Some((&lifted.0, lifted.1.as_slice()))
    } else {
        None
    };
    assign_labels(&point_feats, image, &text_embs, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::RowRole;
    use ndarray::array;

    fn feats(values: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(values, RowRole::PerPoint).unwrap()
    }

    fn text(values: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(values, RowRole::PerLabel).unwrap()
    }

    #[test]
    fn single_label_vocabulary_labels_everything_zero() {
        let p = feats(array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]);
        let t = text(array![[1.0, 0.0]]);
        let vocab = Vocabulary::new(["car"]).unwrap();
        let out = assign_labels(&p, None, &t, &vocab).unwrap();
        assert_eq!(out.labels, vec![0, 0, 0]);
        assert_eq!(out.scores, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn empty_vocabulary_is_rejected() {
        let p = feats(array![[1.0, 0.0]]);
        let t = text(Array2::zeros((0, 2)));
        assert!(matches!(
            assign_labels(&p, None, &t, &Vocabulary::empty()),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn mismatched_text_rows_are_rejected() {
        let p = feats(array![[1.0, 0.0]]);
        let t = text(array![[1.0, 0.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        assert!(matches!(
            assign_labels(&p, None, &t, &vocab),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        // Both labels score identically for the point.
        let p = feats(array![[1.0, 1.0]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["building", "road"]).unwrap();
        let out = assign_labels(&p, None, &t, &vocab).unwrap();
        assert_eq!(out.labels, vec![0]);
    }

    #[test]
    fn vocabulary_permutation_permutes_predictions() {
        let p = feats(array![[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let out = assign_labels(&p, None, &t, &vocab).unwrap();

        let t_perm = text(array![[0.0, 1.0], [1.0, 0.0]]);
        let vocab_perm = Vocabulary::new(["road", "car"]).unwrap();
        let out_perm = assign_labels(&p, None, &t_perm, &vocab_perm).unwrap();
        for (a, b) in out.labels.iter().zip(&out_perm.labels) {
            assert_eq!(out.vocabulary.tags()[*a], out_perm.vocabulary.tags()[*b]);
        }
        assert_eq!(out.scores, out_perm.scores);
    }

    #[test]
    fn positive_scaling_of_scores_preserves_argmax() {
        let p = feats(array![[0.9, 0.1], [0.2, 0.8]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let base = assign_labels(&p, None, &t, &vocab).unwrap();
        let scaled = feats(array![[0.9 * 7.5, 0.1 * 7.5], [0.2 * 7.5, 0.8 * 7.5]]);
        let out = assign_labels(&scaled, None, &t, &vocab).unwrap();
        assert_eq!(base.labels, out.labels);
    }

    #[test]
    fn image_fusion_only_raises_winning_scores() {
        let p = feats(array![[0.5, 0.0], [0.5, 0.0]]);
        let im = feats(array![[0.9, 0.0], [0.0, 0.0]]);
        let has = vec![true, false];
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let base = assign_labels(&p, None, &t, &vocab).unwrap();
        let fused = assign_labels(&p, Some((&im, &has)), &t, &vocab).unwrap();
        for (b, f) in base.scores.iter().zip(&fused.scores) {
            assert!(f >= b);
        }
        assert_eq!(fused.scores[0], 0.9);
        assert_eq!(fused.scores[1], 0.5);
    }

    #[test]
    fn image_fusion_can_fix_a_point_level_mistake() {
        // The point feature mildly prefers label 1, the image feature
        // strongly prefers label 0; the fused max flips the argmax.
        let p = feats(array![[0.4, 0.5]]);
        let im = feats(array![[0.95, 0.0]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let base = assign_labels(&p, None, &t, &vocab).unwrap();
        assert_eq!(base.labels, vec![1]);
        let fused = assign_labels(&p, Some((&im, &[true])), &t, &vocab).unwrap();
        assert_eq!(fused.labels, vec![0]);
        assert_eq!(fused.scores, vec![0.95]);
    }

    #[test]
    fn unflagged_points_ignore_their_image_rows() {
        let p = feats(array![[0.4, 0.5]]);
        let im = feats(array![[0.95, 0.0]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let fused = assign_labels(&p, Some((&im, &[false])), &t, &vocab).unwrap();
        assert_eq!(fused.labels, vec![1]);
        assert_eq!(fused.scores, vec![0.5]);
    }

    #[test]
    fn assignment_is_deterministic() {
        let p = feats(array![[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]]);
        let t = text(array![[1.0, 0.0], [0.0, 1.0]]);
        let vocab = Vocabulary::new(["car", "road"]).unwrap();
        let a = assign_labels(&p, None, &t, &vocab).unwrap();
        let b = assign_labels(&p, None, &t, &vocab).unwrap();
        assert_eq!(a, b);
    }
}
