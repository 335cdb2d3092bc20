//! Shared fixture builders for the pipeline benchmarks.
//!
//! Everything is seeded so benchmark numbers are comparable across runs and
//! machines; sizes are desk-scale but large enough that per-call overhead is
//! negligible next to the measured kernels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use autovoc_core::captioning::Vocabulary;
use autovoc_core::embedding::{FeatureMatrix, RowRole, SyntheticSpace};
use autovoc_core::geometry::{sector_masks, PointCloud};
use autovoc_core::smap::{SmapBatch, SmapParams};

/// A seeded uniform cloud spread over a disk-like outdoor extent.
pub fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Array2::from_shape_fn((n, 3), |(_, a)| {
        if a == 2 {
            rng.gen_range(0.0..6.0)
        } else {
            rng.gen_range(-40.0..40.0)
        }
    });
    PointCloud::new(points).expect("finite points")
}

/// A pooling batch over `n` points sectored into `t` masks with `c`-dim
/// features, plus randomly initialized parameters (`heads` heads).
pub fn bench_batch(
    n: usize,
    t: usize,
    c: usize,
    heads: usize,
    seed: u64,
) -> (SmapBatch, SmapParams) {
    let cloud = bench_cloud(n, seed);
    let masks = sector_masks(&cloud, t).expect("sector masks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let features = Array2::from_shape_fn((n, c), |_| rng.gen_range(-1.0..1.0));
    let batch = SmapBatch::new(cloud.points.clone(), features, masks, None).expect("valid batch");
    let params = SmapParams::init(c, 32, heads, seed).expect("valid params");
    (batch, params)
}

/// Unit-ish point features and label anchors for the assignment benchmark.
pub fn bench_assignment(
    n: usize,
    labels: usize,
    c: usize,
    seed: u64,
) -> (FeatureMatrix, FeatureMatrix, Vocabulary) {
    let space = SyntheticSpace::new(c, seed, 0.0).expect("space");
    let names: Vec<String> = (0..labels).map(|i| format!("label{i}")).collect();
    let text = space.encode_text_batch(&names).expect("anchors");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa551);
    let feats = FeatureMatrix::new(
        Array2::from_shape_fn((n, c), |_| rng.gen_range(-1.0..1.0)),
        RowRole::PerPoint,
    )
    .expect("features");
    let vocab = Vocabulary::new(names).expect("vocabulary");
    (feats, text, vocab)
}
