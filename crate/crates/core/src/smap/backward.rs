//! Analytic gradients of the pooling loss.
//!
//! Backpropagation runs group by group through normalization, the output
//! projection, per-head attention (softmax included), the query/key/value
//! projections, GAP, the residual, and the positional-encoding MLP.
//! Accumulation order is fixed (mask 0, 1, …), so gradients are bitwise
//! reproducible.

use ndarray::{s, Array1, Array2, Axis};

use super::{group_forward, GroupCache, SmapBatch, SmapParams, NORM_FLOOR};
use crate::error::{Error, Result};

/// `out[i][j] += a[i] * b[j]`.
fn add_outer(out: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        out.row_mut(i).scaled_add(ai, b);
    }
}

/// Loss and analytic parameter gradients for one batch.
///
/// The loss is [`super::smap_loss`] over the batch's targets; the returned
/// parameter set holds `dL/dp` for every tensor (its `heads` field mirrors
/// the input). Masks whose pooled vector degenerated to zero norm contribute
/// a constant zero row and therefore no gradient.
pub fn smap_gradients(batch: &SmapBatch, params: &SmapParams) -> Result<(f64, SmapParams)> {
    params.validate()?;
    let targets = batch.targets.as_ref().ok_or(Error::MissingTargets)?;
    if batch.dim() != params.dim() {
        return Err(Error::DimMismatch {
            what: "batch feature dimension",
            expected: params.dim(),
            found: batch.dim(),
        });
    }

    let caches: Vec<Option<GroupCache>> = batch
        .masks
        .iter()
        .map(|mask| {
            (!mask.is_empty()).then(|| group_forward(&batch.coords, &batch.features, mask, params))
        })
        .collect();
    let non_empty = caches.iter().flatten().count();
    if non_empty == 0 {
        return Err(Error::AllMasksEmpty);
    }

    let c = params.dim();
    let mut loss = 0.0;
    let mut grads = params.zeros_like();
    for (ji, cache) in caches.iter().enumerate() {
        let Some(cache) = cache else { continue };
        let target = targets.row(ji);
        let diff = &cache.pooled - &target;
        loss += diff.dot(&diff);
        // dL/d pooled for mean-over-(non-empty masks x channels) MSE.
        let upstream = diff.mapv(|d| 2.0 * d / (non_empty * c) as f64);
        accumulate_group(cache, params, upstream, &mut grads);
    }
    Ok((loss / (non_empty * c) as f64, grads))
}

/// Backward pass for a single group, accumulating into `grads`.
fn accumulate_group(
    cache: &GroupCache,
    params: &SmapParams,
    d_pooled: Array1<f64>,
    grads: &mut SmapParams,
) {
    if cache.norm < NORM_FLOOR {
        return;
    }
    let n = cache.x.nrows();
    let c = params.dim();
    let heads = params.heads();
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();

    // Normalization: pooled = y / |y|.
    let radial = cache.pooled.dot(&d_pooled);
    let dy = (&d_pooled - &(&cache.pooled * radial)) / cache.norm;

    // Output projection: y = o . wo.
    add_outer(&mut grads.wo, &cache.o, &dy);
    let d_o = params.wo.dot(&dy);

    // Per-head attention.
    let mut dk = Array2::zeros((n, c));
    let mut dv = Array2::zeros((n, c));
    let mut dq = Array1::zeros(c);
    for head in 0..heads {
        let cols = head * d..(head + 1) * d;
        let d_oh = d_o.slice(s![cols.clone()]);
        let qh = cache.q.slice(s![cols.clone()]);
        let alpha = cache.alphas.row(head);

        // Through the weighted sum of values.
        let mut d_alpha = Array1::zeros(n);
        for i in 0..n {
            d_alpha[i] = cache.v.slice(s![i, cols.clone()]).dot(&d_oh);
            dv.slice_mut(s![i, cols.clone()])
                .scaled_add(alpha[i], &d_oh);
        }
        // Softmax backward: ds_i = a_i (da_i - sum_k a_k da_k).
        let mixed = alpha.dot(&d_alpha);
        for i in 0..n {
            let ds = alpha[i] * (d_alpha[i] - mixed);
            if ds == 0.0 {
                continue;
            }
            dk.slice_mut(s![i, cols.clone()])
                .scaled_add(ds * scale, &qh);
            dq.slice_mut(s![cols.clone()])
                .scaled_add(ds * scale, &cache.k.slice(s![i, cols.clone()]));
        }
    }

    // Projections: q = g . wq, K = x . wk, V = x . wv.
    add_outer(&mut grads.wq, &cache.g, &dq);
    let dg = params.wq.dot(&dq);
    grads.wk = &grads.wk + &cache.x.t().dot(&dk);
    grads.wv = &grads.wv + &cache.x.t().dot(&dv);
    let mut dx = dk.dot(&params.wk.t()) + dv.dot(&params.wv.t());

    // GAP: g = mean over rows of x.
    let dg_each = dg / n as f64;
    for i in 0..n {
        dx.row_mut(i).scaled_add(1.0, &dg_each);
    }

    // Residual passes dx straight into the positional-encoding MLP.
    grads.pe_b2 = &grads.pe_b2 + &dx.sum_axis(Axis(0));
    grads.pe_w2 = &grads.pe_w2 + &cache.h.t().dot(&dx);
    let dh = dx.dot(&params.pe_w2.t());
    let dz = &dh * &cache.z.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    grads.pe_w1 = &grads.pe_w1 + &cache.rel.t().dot(&dz);
    grads.pe_b1 = &grads.pe_b1 + &dz.sum_axis(Axis(0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MaskKind, MaskSet};
    use crate::smap::{smap_forward, smap_loss};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch_with_targets(seed: u64, n: usize, j: usize, c: usize) -> SmapBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-2.0..2.0));
        let features = Array2::from_shape_fn((n, c), |_| rng.gen_range(-1.0..1.0));
        let mut masks = vec![Vec::new(); j];
        for i in 0..n {
            masks[rng.gen_range(0..j)].push(i);
        }
        let targets = Array2::from_shape_fn((j, c), |_| rng.gen_range(-1.0..1.0));
        SmapBatch::new(
            coords,
            features,
            MaskSet::new(MaskKind::Visibility, masks),
            Some(targets),
        )
        .unwrap()
    }

    #[test]
    fn gradient_requires_targets() {
        let batch = SmapBatch::new(
            array![[0.0, 0.0, 0.0]],
            Array2::ones((1, 4)),
            MaskSet::new(MaskKind::Visibility, vec![vec![0]]),
            None,
        )
        .unwrap();
        let params = SmapParams::identity(4, 2, 2).unwrap();
        assert!(matches!(
            smap_gradients(&batch, &params),
            Err(Error::MissingTargets)
        ));
    }

    #[test]
    fn gradient_loss_agrees_with_forward_loss() {
        let batch = batch_with_targets(31, 20, 4, 8);
        let params = SmapParams::init(8, 4, 2, 7).unwrap();
        let (loss, _) = smap_gradients(&batch, &params).unwrap();
        let pooled = smap_forward(&batch, &params).unwrap();
        let expect = smap_loss(&pooled, batch.targets.as_ref().unwrap()).unwrap();
        assert_abs_diff_eq!(loss, expect, epsilon = 1e-12);
    }

    #[test]
    fn zero_residual_means_zero_gradient() {
        // Make targets equal the pooled outputs; the MSE minimum has exactly
        // zero gradient.
        let mut batch = batch_with_targets(32, 15, 3, 8);
        let params = SmapParams::init(8, 4, 4, 8).unwrap();
        let pooled = smap_forward(&batch, &params).unwrap();
        batch.targets = Some(pooled.features.values.clone());
        let (loss, grads) = smap_gradients(&batch, &params).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-24);
        for v in grads.flatten() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn duplicating_every_mask_leaves_gradients_unchanged() {
        let batch = batch_with_targets(33, 18, 3, 8);
        let params = SmapParams::init(8, 4, 2, 9).unwrap();
        let (loss, grads) = smap_gradients(&batch, &params).unwrap();

        // Duplicate all masks and targets: mean semantics keep loss and
        // gradient identical.
        let masks: Vec<Vec<usize>> = batch
            .masks
            .iter()
            .chain(batch.masks.iter())
            .map(|m| m.to_vec())
            .collect();
        let targets = batch.targets.as_ref().unwrap();
        let doubled_targets = ndarray::concatenate![Axis(0), targets.view(), targets.view()];
        let doubled = SmapBatch::new(
            batch.coords.clone(),
            batch.features.clone(),
            MaskSet::new(MaskKind::Visibility, masks),
            Some(doubled_targets),
        )
        .unwrap();
        let (loss2, grads2) = smap_gradients(&doubled, &params).unwrap();
        assert_abs_diff_eq!(loss, loss2, epsilon = 1e-12);
        let a = grads.flatten();
        let b = grads2.flatten();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradients_are_deterministic() {
        let batch = batch_with_targets(34, 22, 4, 8);
        let params = SmapParams::init(8, 4, 2, 10).unwrap();
        let (l1, g1) = smap_gradients(&batch, &params).unwrap();
        let (l2, g2) = smap_gradients(&batch, &params).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.flatten(), g2.flatten());
    }
}
