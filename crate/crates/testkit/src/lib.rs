//! Independent oracles used by the autovoc test suites.
//!
//! Everything here favors obviousness over speed: the attention-pooling
//! reference materializes zero-padded per-group tensors and walks them with
//! scalar loops, the gradient checker is plain central differences over the
//! flattened parameter vector, and the PLY reader parses just enough of the
//! format to round-trip exported clouds.

use ndarray::{Array1, Array2, Array3};

use autovoc_core::smap::{smap_forward, smap_loss, SmapBatch, SmapParams};

/// Dense padded-tensor reference for attention pooling.
///
/// Groups are packed into `J x n_max` slots; padding slots carry zeros and a
/// false validity flag, and are excluded from the softmax with a -inf score.
/// All linear algebra is explicit scalar loops. Empty masks yield zero rows,
/// matching the production path.
pub fn dense_reference_forward(batch: &SmapBatch, params: &SmapParams) -> Array2<f64> {
    let j = batch.masks.len();
    let c = params.dim();
    let hidden = params.pe_hidden();
    let heads = params.heads();
    let d = c / heads;
    let n_max = (0..j)
        .map(|ji| batch.masks.mask(ji).len())
        .max()
        .unwrap_or(0);

    let mut coords = Array3::zeros((j, n_max.max(1), 3));
    let mut feats = Array3::zeros((j, n_max.max(1), c));
    let mut valid = Array2::from_elem((j, n_max.max(1)), false);
    for ji in 0..j {
        for (slot, &pi) in batch.masks.mask(ji).iter().enumerate() {
            for a in 0..3 {
                coords[[ji, slot, a]] = batch.coords[[pi, a]];
            }
            for a in 0..c {
                feats[[ji, slot, a]] = batch.features[[pi, a]];
            }
            valid[[ji, slot]] = true;
        }
    }

    let mut out = Array2::zeros((j, c));
    for ji in 0..j {
        let count = (0..n_max).filter(|&s| valid[[ji, s]]).count();
        if count == 0 {
            continue;
        }
        // Group centroid over valid slots.
        let mut centroid = [0.0; 3];
        for slot in 0..n_max {
            if valid[[ji, slot]] {
                for a in 0..3 {
                    centroid[a] += coords[[ji, slot, a]];
                }
            }
        }
        for a in &mut centroid {
            *a /= count as f64;
        }

        // Positional encoding and residual, per valid slot.
        let mut x = Array2::zeros((n_max, c));
        for slot in 0..n_max {
            if !valid[[ji, slot]] {
                continue;
            }
            let mut hid = vec![0.0; hidden];
            for (k, h) in hid.iter_mut().enumerate() {
                let mut acc = params.pe_b1[k];
                for a in 0..3 {
                    acc += (coords[[ji, slot, a]] - centroid[a]) * params.pe_w1[[a, k]];
                }
                *h = if acc > 0.0 { acc } else { 0.0 };
            }
            for ck in 0..c {
                let mut acc = params.pe_b2[ck];
                for (k, h) in hid.iter().enumerate() {
                    acc += h * params.pe_w2[[k, ck]];
                }
                x[[slot, ck]] = feats[[ji, slot, ck]] + acc;
            }
        }

        // GAP query over valid slots.
        let mut g = vec![0.0; c];
        for slot in 0..n_max {
            if valid[[ji, slot]] {
                for (a, ga) in g.iter_mut().enumerate() {
                    *ga += x[[slot, a]];
                }
            }
        }
        for ga in &mut g {
            *ga /= count as f64;
        }
        let project = |vec: &[f64], w: &Array2<f64>| -> Vec<f64> {
            let mut out = vec![0.0; c];
            for (col, o) in out.iter_mut().enumerate() {
                for (row, v) in vec.iter().enumerate() {
                    *o += v * w[[row, col]];
                }
            }
            out
        };
        let q = project(&g, &params.wq);
        let mut keys = Array2::zeros((n_max, c));
        let mut vals = Array2::zeros((n_max, c));
        for slot in 0..n_max {
            let row: Vec<f64> = (0..c).map(|a| x[[slot, a]]).collect();
            let kr = project(&row, &params.wk);
            let vr = project(&row, &params.wv);
            for a in 0..c {
                keys[[slot, a]] = kr[a];
                vals[[slot, a]] = vr[a];
            }
        }

        // Masked softmax attention per head over all padded slots.
        let mut pooled = vec![0.0; c];
        for head in 0..heads {
            let base = head * d;
            let mut scores = vec![f64::NEG_INFINITY; n_max];
            for (slot, score) in scores.iter_mut().enumerate() {
                if !valid[[ji, slot]] {
                    continue;
                }
                let mut acc = 0.0;
                for a in 0..d {
                    acc += keys[[slot, base + a]] * q[base + a];
                }
                *score = acc / (d as f64).sqrt();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores
                .iter()
                .map(|&s| {
                    if s == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (s - max).exp()
                    }
                })
                .collect();
            let denom: f64 = exps.iter().sum();
            for (slot, &e) in exps.iter().enumerate() {
                let w = e / denom;
                for a in 0..d {
                    pooled[base + a] += w * vals[[slot, base + a]];
                }
            }
        }

        let y = project(&pooled, &params.wo);
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 1e-12 {
            for a in 0..c {
                out[[ji, a]] = y[a] / norm;
            }
        }
    }
    out
}

/// Central finite-difference gradients of the pooling loss.
///
/// Perturbs every scalar parameter by ±h and differences the losses; the
/// batch must carry targets.
pub fn finite_difference_gradients(batch: &SmapBatch, params: &SmapParams, h: f64) -> SmapParams {
    let loss_of = |p: &SmapParams| -> f64 {
        let pooled = smap_forward(batch, p).expect("forward");
        smap_loss(&pooled, batch.targets.as_ref().expect("targets")).expect("loss")
    };
    let flat = params.flatten();
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let lp = loss_of(&params.with_values(&plus).expect("shape"));
        let lm = loss_of(&params.with_values(&minus).expect("shape"));
        grad[i] = (lp - lm) / (2.0 * h);
    }
    params.with_values(&grad).expect("shape")
}

/// Largest relative disagreement between two parameter-shaped tensors,
/// with denominators floored to avoid blowups near zero.
pub fn max_relative_error(a: &SmapParams, b: &SmapParams, floor: f64) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(&x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A parsed ASCII PLY cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<[f64; 3]>,
    pub colors: Vec<[u8; 3]>,
    pub comments: Vec<String>,
}

/// Parses a minimal ASCII PLY: one vertex element with x/y/z float and
/// red/green/blue uchar properties, in any property order.
pub fn parse_ascii_ply(text: &str) -> Result<PlyData, String> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err("missing ply magic".into());
    }
    if lines.next() != Some("format ascii 1.0") {
        return Err("expected ascii 1.0 format".into());
    }
    let mut comments = Vec::new();
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines.by_ref() {
        if line == "end_header" {
            break;
        }
        if let Some(c) = line.strip_prefix("comment ") {
            comments.push(c.to_string());
        } else if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(rest.parse().map_err(|_| "bad vertex count")?);
        } else if line.starts_with("element ") {
            return Err(format!("unsupported element: {line}"));
        } else if let Some(rest) = line.strip_prefix("property ") {
            let name = rest
                .split_whitespace()
                .last()
                .ok_or("property without name")?;
            props.push(name.to_string());
        } else {
            return Err(format!("unrecognized header line: {line}"));
        }
    }
    let count = count.ok_or("no vertex element")?;
    let index = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or(format!("missing {name}"))
    };
    let (xi, yi, zi) = (index("x")?, index("y")?, index("z")?);
    let (ri, gi, bi) = (index("red")?, index("green")?, index("blue")?);

    let mut vertices = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or("truncated vertex data")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(format!(
                "expected {} fields, got {}",
                props.len(),
                fields.len()
            ));
        }
        let f =
            |i: usize| -> Result<f64, String> { fields[i].parse().map_err(|_| "bad float".into()) };
        let u =
            |i: usize| -> Result<u8, String> { fields[i].parse().map_err(|_| "bad color".into()) };
        vertices.push([f(xi)?, f(yi)?, f(zi)?]);
        colors.push([u(ri)?, u(gi)?, u(bi)?]);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err("trailing data after vertices".into());
    }
    Ok(PlyData {
        vertices,
        colors,
        comments,
    })
}

/// Convenience: a unit vector from arbitrary components.
pub fn unit(values: &[f64]) -> Array1<f64> {
    let v = Array1::from_vec(values.to_vec());
    let n = v.dot(&v).sqrt();
    v / n
}
