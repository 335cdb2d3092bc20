//! Vocabulary-quality scoring, vocabulary mapping, and mapped evaluation.
//!
//! The text-point score rewards vocabularies whose label embeddings sit
//! close to the point features; the mapper folds an auto-generated
//! vocabulary onto a fixed target class list so predictions can be graded
//! with a confusion matrix and mean IoU.

use serde::{Deserialize, Serialize};

use crate::captioning::Vocabulary;
use crate::embedding::{FeatureMatrix, SyntheticSpace};
use crate::error::{Error, Result};
use crate::segmenter::SegmentationResult;

/// Mean over points of the best similarity to any vocabulary label.
///
/// Labels are embedded with the space's text encoder; each point scores
/// `max_m f_n . e_m` and the mean is multiplied by `report_scale` (1.0 for
/// raw dot products).
pub fn tpss(
    point_feats: &FeatureMatrix,
    labels: &Vocabulary,
    space: &SyntheticSpace,
    report_scale: f64,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if point_feats.len() == 0 {
        return Err(Error::EmptyCloud);
    }
    let text = space.encode_text_batch(labels.tags())?;
    if text.dim() != point_feats.dim() {
        return Err(Error::DimMismatch {
            what: "text embedding dimension",
            expected: point_feats.dim(),
            found: text.dim(),
        });
    }
    let scores = point_feats.values.dot(&text.values.t());
    let mut total = 0.0;
    for row in scores.rows() {
        total += row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    }
    Ok(total / point_feats.len() as f64 * report_scale)
}

/// One resolved auto-label-to-target assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPair {
    /// Label from the auto-generated vocabulary.
    pub auto_label: String,
    /// Closest target class.
    pub target_label: String,
    /// Similarity between the two label embeddings.
    pub similarity: f64,
}

/// Total mapping of an auto vocabulary onto a target class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyMapping {
    /// One pair per auto label, in auto-vocabulary order.
    pub pairs: Vec<MappingPair>,
    /// The target classes the pairs point into.
    pub targets: Vocabulary,
}

impl VocabularyMapping {
    /// Index into `targets` for an auto label, if the label is covered.
    pub fn target_index(&self, auto_label: &str) -> Option<usize> {
        let pair = self.pairs.iter().find(|p| p.auto_label == auto_label)?;
        self.targets.position(&pair.target_label)
    }
}

/// Maps every auto label to its most similar target class.
///
/// Similarity is the dot product of the two label embeddings; ties resolve
/// to the lowest target index. Every auto label receives a mapping — any
/// thresholding is left to the caller, who can read the recorded similarity.
pub fn map_vocabulary(
    auto: &Vocabulary,
    targets: &Vocabulary,
    space: &SyntheticSpace,
) -> Result<VocabularyMapping> {
    if auto.is_empty() || targets.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let auto_embs = space.encode_text_batch(auto.tags())?;
    let target_embs = space.encode_text_batch(targets.tags())?;
    let scores = auto_embs.values.dot(&target_embs.values.t());
    let mut pairs = Vec::with_capacity(auto.len());
    for (a, row) in scores.rows().into_iter().enumerate() {
        let mut best = 0;
        for (t, &s) in row.iter().enumerate() {
            if s > row[best] {
                best = t;
            }
        }
        pairs.push(MappingPair {
            auto_label: auto.tags()[a].clone(),
            target_label: targets.tags()[best].clone(),
            similarity: row[best],
        });
    }
    Ok(VocabularyMapping {
        pairs,
        targets: targets.clone(),
    })
}

/// Rewrites per-point predictions through a vocabulary mapping.
///
/// Returns target-class indices; fails if a predicted label is not covered.
pub fn remap_predictions(
    result: &SegmentationResult,
    mapping: &VocabularyMapping,
) -> Result<Vec<u32>> {
    let mut lookup = Vec::with_capacity(result.vocabulary.len());
    for tag in result.vocabulary.tags() {
        let target = mapping
            .target_index(tag)
            .ok_or_else(|| Error::UncoveredLabel { label: tag.clone() })?;
        lookup.push(target as u32);
    }
    Ok(result.labels.iter().map(|&l| lookup[l]).collect())
}

/// Confusion matrix, per-class IoU, and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[gt][pred]` point counts.
    pub confusion: Vec<Vec<u64>>,
    /// IoU per class; 0.0 placeholder where `defined` is false.
    pub per_class_iou: Vec<f64>,
    /// Whether the class appeared in ground truth or predictions.
    pub defined: Vec<bool>,
    /// Mean IoU over defined classes.
    pub miou: f64,
    /// Text-point similarity score, when the caller computed one.
    pub tpss: Option<f64>,
}

/// Scores predictions against ground truth over `k_gt` classes.
///
/// `IoU_c = TP / (TP + FP + FN)`; classes absent from both sides are
/// excluded from the mean and flagged undefined.
pub fn evaluate(pred: &[u32], gt: &[u32], k_gt: usize) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimMismatch {
            what: "prediction length",
            expected: gt.len(),
            found: pred.len(),
        });
    }
    let mut confusion = vec![vec![0u64; k_gt]; k_gt];
    for (&p, &g) in pred.iter().zip(gt) {
        if p as usize >= k_gt {
            return Err(Error::ClassOutOfRange {
                index: p as usize,
                classes: k_gt,
            });
        }
        if g as usize >= k_gt {
            return Err(Error::ClassOutOfRange {
                index: g as usize,
                classes: k_gt,
            });
        }
        confusion[g as usize][p as usize] += 1;
    }
    let mut per_class_iou = vec![0.0; k_gt];
    let mut defined = vec![false; k_gt];
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..k_gt {
        let tp = confusion[c][c];
        let row: u64 = confusion[c].iter().sum();
        let col: u64 = confusion.iter().map(|r| r[c]).sum();
        let union = row + col - tp;
        if union == 0 {
            continue;
        }
        defined[c] = true;
        per_class_iou[c] = tp as f64 / union as f64;
        total += per_class_iou[c];
        count += 1;
    }
    let miou = if count == 0 {
        0.0
    } else {
        total / count as f64
    };
    Ok(EvalReport {
        confusion,
        per_class_iou,
        defined,
        miou,
        tpss: None,
    })
}
