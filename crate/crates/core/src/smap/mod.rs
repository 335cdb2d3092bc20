//! Sparse masked attention pooling: one pooled embedding per point mask.
//!
//! For every mask the member points are gathered, given a relative positional
//! encoding against the group centroid, and pooled by single-layer multi-head
//! attention whose query is the group mean (GAP). Pooling, analytic
//! gradients, and the distillation training loop live here; parameters
//! persist through a small binary checkpoint format.

mod backward;
pub mod io;
mod train;

pub use backward::smap_gradients;
pub use train::{train_smap, TrainConfig, TrainReport};

use ndarray::{s, Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{FeatureMatrix, RowRole};
use crate::error::{Error, Result};
use crate::geometry::MaskSet;
use crate::rng;

/// Width of the positional-encoding hidden layer by default.
pub const DEFAULT_PE_HIDDEN: usize = 32;

/// Default number of attention heads.
pub const DEFAULT_HEADS: usize = 4;

/// Pooled rows with a norm below this are left as zero vectors.
const NORM_FLOOR: f64 = 1e-12;

/// All trainable parameters of the pooling operator.
///
/// The positional encoding is a two-layer MLP (3 → `pe_hidden` → C, ReLU);
/// `wq`, `wk`, `wv`, `wo` are the C×C attention projections. Vectors are
/// treated as rows, so a projection is `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmapParams {
    pub pe_w1: Array2<f64>,
    pub pe_b1: Array1<f64>,
    pub pe_w2: Array2<f64>,
    pub pe_b2: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    heads: usize,
}

impl SmapParams {
    /// Assembles parameters from explicit tensors, validating shapes.
    pub fn new(
        pe_w1: Array2<f64>,
        pe_b1: Array1<f64>,
        pe_w2: Array2<f64>,
        pe_b2: Array1<f64>,
        wq: Array2<f64>,
        wk: Array2<f64>,
        wv: Array2<f64>,
        wo: Array2<f64>,
        heads: usize,
    ) -> Result<Self> {
        let p = Self {
            pe_w1,
            pe_b1,
            pe_w2,
            pe_b2,
            wq,
            wk,
            wv,
            wo,
            heads,
        };
        p.validate()?;
        Ok(p)
    }

    /// Seeded random initialization.
    ///
    /// Weights and biases are Gaussian with a 1/sqrt(fan-in) scale. Biases
    /// are randomized rather than zeroed so that degenerate groups (for
    /// example a single member, whose relative coordinates are all zero)
    /// never place the ReLU pre-activations exactly on the hinge, where the
    /// loss is non-differentiable and the PE path would receive no gradient.
    /// Every value is rounded through f32 so a freshly initialized model
    /// survives a checkpoint round trip bitwise.
    pub fn init(dim: usize, pe_hidden: usize, heads: usize, seed: u64) -> Result<Self> {
        let mut stream = rng::derive(seed, &[b"smap-init"]);
        let mut draw = |scale: f64| {
            let x: f64 = StandardNormal.sample(&mut stream);
            (x * scale) as f32 as f64
        };
        let mut sample = |rows: usize, cols: usize, fan_in: usize| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| draw(scale))
        };
        let pe_w1 = sample(3, pe_hidden, 3);
        let pe_w2 = sample(pe_hidden, dim, pe_hidden);
        let wq = sample(dim, dim, dim);
        let wk = sample(dim, dim, dim);
        let wv = sample(dim, dim, dim);
        let wo = sample(dim, dim, dim);
        let pe_b1 = Array1::from_shape_fn(pe_hidden, |_| draw(1.0 / (3.0f64).sqrt()));
        let pe_b2 = Array1::from_shape_fn(dim, |_| draw(1.0 / (pe_hidden as f64).sqrt()));
        Self::new(pe_w1, pe_b1, pe_w2, pe_b2, wq, wk, wv, wo, heads)
    }

    /// Pass-through parameters: zero positional encoding and identity
    /// projections, turning the pooler into attention-weighted mean pooling
    /// of the raw features.
    pub fn identity(dim: usize, pe_hidden: usize, heads: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((3, pe_hidden)),
            Array1::zeros(pe_hidden),
            Array2::zeros((pe_hidden, dim)),
            Array1::zeros(dim),
            Array2::eye(dim),
            Array2::eye(dim),
            Array2::eye(dim),
            Array2::eye(dim),
            heads,
        )
    }

    /// A same-shaped parameter set of all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        Self {
            pe_w1: Array2::zeros(self.pe_w1.dim()),
            pe_b1: Array1::zeros(self.pe_b1.len()),
            pe_w2: Array2::zeros(self.pe_w2.dim()),
            pe_b2: Array1::zeros(self.pe_b2.len()),
            wq: Array2::zeros(self.wq.dim()),
            wk: Array2::zeros(self.wk.dim()),
            wv: Array2::zeros(self.wv.dim()),
            wo: Array2::zeros(self.wo.dim()),
            heads: self.heads,
        }
    }

    /// Embedding dimension C.
    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    /// Hidden width of the positional-encoding MLP.
    pub fn pe_hidden(&self) -> usize {
        self.pe_w1.ncols()
    }

    /// Number of attention heads.
    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Checks shape consistency, head divisibility, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let c = self.dim();
        let h = self.pe_hidden();
        if self.heads == 0 || c % self.heads != 0 {
            return Err(Error::HeadsDoNotDivide {
                heads: self.heads,
                dim: c,
            });
        }
        let shapes = [
            ("pe_w1", self.pe_w1.dim(), (3, h)),
            ("pe_w2", self.pe_w2.dim(), (h, c)),
            ("wq", self.wq.dim(), (c, c)),
            ("wk", self.wk.dim(), (c, c)),
            ("wv", self.wv.dim(), (c, c)),
            ("wo", self.wo.dim(), (c, c)),
        ];
        for (what, got, want) in shapes {
            if got != want {
                return Err(Error::DimMismatch {
                    what: match what {
                        "pe_w1" => "pe_w1 shape",
                        "pe_w2" => "pe_w2 shape",
                        "wq" => "wq shape",
                        "wk" => "wk shape",
                        "wv" => "wv shape",
                        _ => "wo shape",
                    },
                    expected: want.0 * want.1,
                    found: got.0 * got.1,
                });
            }
        }
        if self.pe_b1.len() != h {
            return Err(Error::DimMismatch {
                what: "pe_b1",
                expected: h,
                found: self.pe_b1.len(),
            });
        }
        if self.pe_b2.len() != c {
            return Err(Error::DimMismatch {
                what: "pe_b2",
                expected: c,
                found: self.pe_b2.len(),
            });
        }
        let finite = self
            .tensors()
            .into_iter()
            .all(|t| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite {
                what: "smap parameters",
            });
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.tensors().into_iter().map(|t| t.len()).sum()
    }

    /// All values concatenated in checkpoint field order
    /// (pe_w1, pe_b1, pe_w2, pe_b2, wq, wk, wv, wo; matrices row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for t in self.tensors() {
            out.extend(t);
        }
        out
    }

    /// Rebuilds a parameter set with this one's shapes and the given values
    /// (inverse of [`Self::flatten`]).
    pub fn with_values(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.n_params() {
            return Err(Error::DimMismatch {
                what: "flattened parameters",
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        struct Cursor<'a> {
            flat: &'a [f64],
            offset: usize,
        }
        impl Cursor<'_> {
            fn take1(&mut self, len: usize) -> Array1<f64> {
                let out = Array1::from_vec(self.flat[self.offset..self.offset + len].to_vec());
                self.offset += len;
                out
            }
            fn take2(&mut self, shape: (usize, usize)) -> Array2<f64> {
                let len = shape.0 * shape.1;
                let out = Array2::from_shape_vec(
                    shape,
                    self.flat[self.offset..self.offset + len].to_vec(),
                )
                .expect("length checked");
                self.offset += len;
                out
            }
        }
        let mut cur = Cursor { flat, offset: 0 };
        let pe_w1 = cur.take2(self.pe_w1.dim());
        let pe_b1 = cur.take1(self.pe_b1.len());
        let pe_w2 = cur.take2(self.pe_w2.dim());
        let pe_b2 = cur.take1(self.pe_b2.len());
        let wq = cur.take2(self.wq.dim());
        let wk = cur.take2(self.wk.dim());
        let wv = cur.take2(self.wv.dim());
        let wo = cur.take2(self.wo.dim());
        Self::new(pe_w1, pe_b1, pe_w2, pe_b2, wq, wk, wv, wo, self.heads)
    }

    fn tensors(&self) -> Vec<ndarray::ArrayViewD<'_, f64>> {
        vec![
            self.pe_w1.view().into_dyn(),
            self.pe_b1.view().into_dyn(),
            self.pe_w2.view().into_dyn(),
            self.pe_b2.view().into_dyn(),
            self.wq.view().into_dyn(),
            self.wk.view().into_dyn(),
            self.wv.view().into_dyn(),
            self.wo.view().into_dyn(),
        ]
    }
}

/// One pooling workload: a cloud's coordinates and features plus the masks
/// to pool, with optional distillation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SmapBatch {
    /// Point positions, `N x 3`.
    pub coords: Array2<f64>,
    /// Per-point input features, `N x C`.
    pub features: Array2<f64>,
    /// The `J` masks to pool.
    pub masks: MaskSet,
    /// Distillation targets, `J x C` (training only).
    pub targets: Option<Array2<f64>>,
}

impl SmapBatch {
    /// Validates cross-references between coordinates, features, masks, and
    /// targets.
    pub fn new(
        coords: Array2<f64>,
        features: Array2<f64>,
        masks: MaskSet,
        targets: Option<Array2<f64>>,
    ) -> Result<Self> {
        if coords.ncols() != 3 {
            return Err(Error::DimMismatch {
                what: "coordinate columns",
                expected: 3,
                found: coords.ncols(),
            });
        }
        if coords.nrows() != features.nrows() {
            return Err(Error::DimMismatch {
                what: "feature rows",
                expected: coords.nrows(),
                found: features.nrows(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) || features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "smap batch" });
        }
        let n = coords.nrows();
        for mask in masks.iter() {
            if mask.iter().any(|&i| i >= n) {
                return Err(Error::DimMismatch {
                    what: "mask point index",
                    expected: n,
                    found: mask.iter().copied().max().unwrap_or(0),
                });
            }
        }
        if let Some(t) = &targets {
            if t.nrows() != masks.len() || t.ncols() != features.ncols() {
                return Err(Error::DimMismatch {
                    what: "targets shape",
                    expected: masks.len() * features.ncols(),
                    found: t.nrows() * t.ncols(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "targets" });
            }
        }
        Ok(Self {
            coords,
            features,
            masks,
            targets,
        })
    }

    /// Feature dimension C.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Pooled per-mask features plus empty-mask flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    /// `J x C`, one L2-normalized row per non-empty mask, zeros otherwise.
    pub features: FeatureMatrix,
    /// True where the mask had no members.
    pub empty: Vec<bool>,
}

/// Relative positional encoding of coordinates against a reference point:
/// `MLP(p - centroid)` with one ReLU hidden layer.
pub fn positional_encoding(
    coords: &Array2<f64>,
    centroid: ndarray::ArrayView1<f64>,
    params: &SmapParams,
) -> Array2<f64> {
    let rel = coords - &centroid;
    let z = rel.dot(&params.pe_w1) + &params.pe_b1;
    let h = z.mapv(|v| v.max(0.0));
    h.dot(&params.pe_w2) + &params.pe_b2
}

/// Everything the backward pass needs about one pooled group.
pub(crate) struct GroupCache {
    /// Member coordinates relative to the group centroid, `n x 3`.
    pub rel: Array2<f64>,
    /// PE hidden-layer pre-activation, `n x pe_hidden`.
    pub z: Array2<f64>,
    /// PE hidden-layer activation, `n x pe_hidden`.
    pub h: Array2<f64>,
    /// Encoded member features (residual applied), `n x C`.
    pub x: Array2<f64>,
    /// GAP query input (mean of `x` rows).
    pub g: Array1<f64>,
    /// Projected query.
    pub q: Array1<f64>,
    /// Projected keys and values, `n x C`.
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Softmax weights per head, `heads x n`.
    pub alphas: Array2<f64>,
    /// Concatenated head outputs.
    pub o: Array1<f64>,
    /// Norm of the pre-normalization pooled vector.
    pub norm: f64,
    /// Final normalized row.
    pub pooled: Array1<f64>,
}

/// Forward pass for a single non-empty group.
pub(crate) fn group_forward(
    coords: &Array2<f64>,
    features: &Array2<f64>,
    members: &[usize],
    params: &SmapParams,
) -> GroupCache {
    debug_assert!(!members.is_empty());
    let n = members.len();
    let c = params.dim();
    let sel_coords = coords.select(Axis(0), members);
    let sel_feats = features.select(Axis(0), members);

    let centroid = sel_coords.mean_axis(Axis(0)).expect("non-empty group");
    let rel = sel_coords - &centroid;
    let z = rel.dot(&params.pe_w1) + &params.pe_b1;
    let h = z.mapv(|v| v.max(0.0));
    let pe = h.dot(&params.pe_w2) + &params.pe_b2;
    let x = &sel_feats + &pe;

    let g = x.mean_axis(Axis(0)).expect("non-empty group");
    let q = g.dot(&params.wq);
    let k = x.dot(&params.wk);
    let v = x.dot(&params.wv);

    let heads = params.heads();
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut alphas = Array2::zeros((heads, n));
    let mut o = Array1::zeros(c);
    for head in 0..heads {
        let cols = head * d..(head + 1) * d;
        let qh = q.slice(s![cols.clone()]);
        let mut scores = Array1::zeros(n);
        for i in 0..n {
            scores[i] = k.slice(s![i, cols.clone()]).dot(&qh) * scale;
        }
        // Numerically stable softmax over the group members only.
        let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut weights = scores.mapv(|s| (s - max).exp());
        weights /= weights.sum();
        for i in 0..n {
            o.slice_mut(s![cols.clone()])
                .scaled_add(weights[i], &v.slice(s![i, cols.clone()]));
        }
        alphas.row_mut(head).assign(&weights);
    }

    let y = o.dot(&params.wo);
    let norm = y.dot(&y).sqrt();
    let pooled = if norm < NORM_FLOOR {
        Array1::zeros(c)
    } else {
        &y / norm
    };
    GroupCache {
        rel,
        z,
        h,
        x,
        g,
        q,
        k,
        v,
        alphas,
        o,
        norm,
        pooled,
    }
}

/// Pools every mask of a batch into one feature row.
///
/// Empty masks produce zero rows flagged empty; all other rows are
/// L2-normalized attention-pooled features.
pub fn smap_forward(batch: &SmapBatch, params: &SmapParams) -> Result<PooledFeatures> {
    params.validate()?;
    if batch.dim() != params.dim() {
        return Err(Error::DimMismatch {
            what: "batch feature dimension",
            expected: params.dim(),
            found: batch.dim(),
        });
    }
    let j = batch.masks.len();
    let mut values = Array2::zeros((j, params.dim()));
    let mut empty = vec![false; j];
    for (ji, mask) in batch.masks.iter().enumerate() {
        if mask.is_empty() {
            empty[ji] = true;
            continue;
        }
        let cache = group_forward(&batch.coords, &batch.features, mask, params);
        values.row_mut(ji).assign(&cache.pooled);
    }
    Ok(PooledFeatures {
        features: FeatureMatrix::new(values, RowRole::PerMask)?,
        empty,
    })
}

/// Mean squared error between pooled rows and targets over non-empty masks.
///
/// The mean runs over non-empty masks and channels; empty masks contribute
/// nothing. Errors out when every mask is empty.
pub fn smap_loss(pooled: &PooledFeatures, targets: &Array2<f64>) -> Result<f64> {
    let values = &pooled.features.values;
    if targets.dim() != values.dim() {
        return Err(Error::DimMismatch {
            what: "loss targets",
            expected: values.nrows() * values.ncols(),
            found: targets.nrows() * targets.ncols(),
        });
    }
    let non_empty = pooled.empty.iter().filter(|&&e| !e).count();
    if non_empty == 0 {
        return Err(Error::AllMasksEmpty);
    }
    let mut acc = 0.0;
    for (ji, row) in values.rows().into_iter().enumerate() {
        if pooled.empty[ji] {
            continue;
        }
        let diff = &row - &targets.row(ji);
        acc += diff.dot(&diff);
    }
    Ok(acc / (non_empty * values.ncols()) as f64)
}
