//! The shared embedding space and its deterministic synthetic oracle.
//!
//! Real vision-language encoders are out of scope; in their place a
//! [`SyntheticSpace`] hands out one unit-norm anchor vector per label string,
//! derived purely from a seed. Point features are noisy copies of their class
//! anchor, image features are anchors splatted through a pinhole camera, and
//! every downstream stage (pooling, decoding, labeling, evaluation) speaks
//! this one space.

use std::collections::BTreeMap;
use std::sync::Mutex;

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Camera, PointCloud};
use crate::rng;

/// Pairwise separation bound enforced between generated anchors.
const SEPARATION: f64 = 0.8;

/// Attempts before giving up on drawing a separated anchor.
const MAX_ANCHOR_ATTEMPTS: u64 = 4096;

/// What the rows of a [`FeatureMatrix`] index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRole {
    PerPoint,
    PerPixel,
    PerMask,
    PerLabel,
}

/// A dense matrix of embedding vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Row-per-entity feature values, `R x C`.
    pub values: Array2<f64>,
    /// What each row stands for.
    pub row_role: RowRole,
}

impl FeatureMatrix {
    /// Wraps a matrix after checking that every entry is finite.
    pub fn new(values: Array2<f64>, row_role: RowRole) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
            });
        }
        Ok(Self { values, row_role })
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// True when the matrix has no rows.
    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Deterministic stand-in for a pre-aligned vision-language embedding space.
///
/// Each distinct label string owns a unit-norm anchor drawn from a seeded
/// Gaussian and redrawn until it keeps `|dot| < 0.8` against all anchors
/// registered before it. Labels are canonicalized by trimming and
/// lowercasing. All derived features live on the unit sphere.
#[derive(Debug)]
pub struct SyntheticSpace {
    dim: usize,
    seed: u64,
    noise_sigma: f64,
    anchors: Mutex<BTreeMap<String, Array1<f64>>>,
}

impl SyntheticSpace {
    /// Creates a space of dimension `dim >= 2` with per-point noise level
    /// `noise_sigma >= 0`.
    pub fn new(dim: usize, seed: u64, noise_sigma: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimMismatch {
                what: "embedding dimension",
                expected: 2,
                found: dim,
            });
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::NonFinite {
                what: "noise sigma",
            });
        }
        Ok(Self {
            dim,
            seed,
            noise_sigma,
            anchors: Mutex::new(BTreeMap::new()),
        })
    }

    /// Embedding dimension `C`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed the space was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Standard deviation of per-point feature noise.
    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn canonical(label: &str) -> Result<String> {
        let c = label.trim().to_lowercase();
        if c.is_empty() {
            return Err(Error::EmptyLabel);
        }
        Ok(c)
    }

    /// Returns the deterministic unit-norm anchor for a label.
    ///
    /// The anchor depends only on `(seed, canonical label)` and on nothing
    /// else; in particular it does not depend on registration order, because
    /// redraws are indexed by an attempt counter rather than by shared RNG
    /// state. Inserted anchors (see [`Self::insert_anchor`]) are returned
    /// as-is.
    pub fn encode_text(&self, label: &str) -> Result<Array1<f64>> {
        let label = Self::canonical(label)?;
        let mut anchors = self.anchors.lock().expect("anchor registry poisoned");
        if let Some(v) = anchors.get(&label) {
            return Ok(v.clone());
        }
        for attempt in 0..MAX_ANCHOR_ATTEMPTS {
            let mut stream = rng::derive(
                self.seed,
                &[b"anchor", label.as_bytes(), &attempt.to_le_bytes()],
            );
            let mut v: Array1<f64> =
                Array1::from_shape_fn(self.dim, |_| StandardNormal.sample(&mut stream));
            let norm = v.dot(&v).sqrt();
            if norm < 1e-12 {
                continue;
            }
            v /= norm;
            let separated = anchors
                .values()
                .all(|other| v.dot(other).abs() < SEPARATION);
            if separated {
                anchors.insert(label, v.clone());
                return Ok(v);
            }
        }
        Err(Error::AnchorSaturation { label })
    }

    /// Registers an explicit anchor, bypassing the separation bound.
    ///
    /// The vector is L2-normalized before registration; any existing anchor
    /// for the label is replaced. Intended for constructing synonym anchors
    /// that deliberately sit close to an existing label.
    pub fn insert_anchor(&self, label: &str, vector: Array1<f64>) -> Result<Array1<f64>> {
        let label = Self::canonical(label)?;
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                what: "anchor",
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "anchor" });
        }
        let norm = vector.dot(&vector).sqrt();
        if norm < 1e-12 {
            return Err(Error::NonFinite {
                what: "anchor norm",
            });
        }
        let v = vector / norm;
        self.anchors
            .lock()
            .expect("anchor registry poisoned")
            .insert(label, v.clone());
        Ok(v)
    }

    /// Stacks the anchors of `labels` into a per-label feature matrix.
    pub fn encode_text_batch<S: AsRef<str>>(&self, labels: &[S]) -> Result<FeatureMatrix> {
        let mut values = Array2::zeros((labels.len(), self.dim));
        for (i, label) in labels.iter().enumerate() {
            let anchor = self.encode_text(label.as_ref())?;
            values.row_mut(i).assign(&anchor);
        }
        FeatureMatrix::new(values, RowRole::PerLabel)
    }

    /// Ground-truth point features: per-point class anchor plus seeded
    /// Gaussian noise, L2-normalized.
    ///
    /// Noise streams are keyed by point index alone, so relabeling a point
    /// changes its anchor but not its noise draw. With `noise_sigma = 0` each
    /// row is bitwise equal to its class anchor.
    pub fn encode_points_oracle(&self, cloud: &PointCloud) -> Result<FeatureMatrix> {
        let labels = cloud.labels.as_ref().ok_or(Error::MissingGroundTruth)?;
        let anchors: Vec<Array1<f64>> = cloud
            .label_table
            .iter()
            .map(|l| self.encode_text(l))
            .collect::<Result<_>>()?;
        let mut values = Array2::zeros((cloud.len(), self.dim));
        for (i, &label_ix) in labels.iter().enumerate() {
            let anchor = &anchors[label_ix as usize];
            if self.noise_sigma == 0.0 {
                values.row_mut(i).assign(anchor);
                continue;
            }
            let mut stream = rng::derive(self.seed, &[b"point-noise", &(i as u64).to_le_bytes()]);
            let mut row = anchor.clone();
            for x in row.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut stream);
                *x += self.noise_sigma * n;
            }
            let norm = row.dot(&row).sqrt();
            if norm < 1e-12 {
                return Err(Error::NonFinite {
                    what: "point feature norm",
                });
            }
            row /= norm;
            values.row_mut(i).assign(&row);
        }
        FeatureMatrix::new(values, RowRole::PerPoint)
    }

    /// Splats ground-truth class anchors into a per-pixel feature grid.
    ///
    /// Every visible point projects into one grid cell; when several points
    /// share a cell the smallest camera-frame depth wins (ties keep the
    /// lowest point index). Cells no point reaches hold zero vectors and are
    /// flagged unoccupied. Cell features are exact anchors, never noisy.
    pub fn render_image_features(
        &self,
        cloud: &PointCloud,
        cam: &Camera,
        grid_height: usize,
        grid_width: usize,
    ) -> Result<PixelFeatureGrid> {
        if grid_height == 0 || grid_width == 0 {
            return Err(Error::InvalidCamera(
                "feature grid must be non-empty".into(),
            ));
        }
        let labels = cloud.labels.as_ref().ok_or(Error::MissingGroundTruth)?;
        let anchors: Vec<Array1<f64>> = cloud
            .label_table
            .iter()
            .map(|l| self.encode_text(l))
            .collect::<Result<_>>()?;
        let cells = grid_height * grid_width;
        let mut values = Array2::zeros((cells, self.dim));
        let mut occupied = vec![false; cells];
        let mut depths = vec![f64::INFINITY; cells];
        for (i, p) in cloud.points.rows().into_iter().enumerate() {
            if !cam.sees(p) {
                continue;
            }
            let (u, v, depth) = cam.project(p).expect("seen point projects");
            let cell = cell_index(cam, grid_height, grid_width, u, v);
            if depth < depths[cell] {
                depths[cell] = depth;
                occupied[cell] = true;
                values.row_mut(cell).assign(&anchors[labels[i] as usize]);
            }
        }
        Ok(PixelFeatureGrid {
            features: FeatureMatrix::new(values, RowRole::PerPixel)?,
            occupied,
            grid_height,
            grid_width,
        })
    }
}

/// A rendered feature image: one embedding per grid cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatureGrid {
    /// `grid_height * grid_width` rows of per-pixel features.
    pub features: FeatureMatrix,
    /// Whether any point landed in the cell.
    pub occupied: Vec<bool>,
    /// Cell rows.
    pub grid_height: usize,
    /// Cell columns.
    pub grid_width: usize,
}

/// A camera together with the feature grid rendered from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageView {
    pub camera: Camera,
    pub grid: PixelFeatureGrid,
}

/// Maps image-plane coordinates to a row-major grid cell index.
fn cell_index(cam: &Camera, grid_height: usize, grid_width: usize, u: f64, v: f64) -> usize {
    let gu = ((u / cam.width as f64 * grid_width as f64) as usize).min(grid_width - 1);
    let gv = ((v / cam.height as f64 * grid_height as f64) as usize).min(grid_height - 1);
    gv * grid_width + gu
}

/// Copies each visible point's pixel-cell feature back onto the point.
///
/// Returns the per-point feature matrix (zero rows where no feature exists)
/// and a flag vector marking points that actually received one. A point
/// qualifies when the camera sees it and its cell is occupied.
pub fn lift_to_points(
    grid: &PixelFeatureGrid,
    cloud: &PointCloud,
    cam: &Camera,
) -> Result<(FeatureMatrix, Vec<bool>)> {
    let dim = grid.features.dim();
    let mut values = Array2::zeros((cloud.len(), dim));
    let mut has = vec![false; cloud.len()];
    for (i, p) in cloud.points.rows().into_iter().enumerate() {
        if !cam.sees(p) {
            continue;
        }
        let (u, v, _) = cam.project(p).expect("seen point projects");
        let cell = cell_index(cam, grid.grid_height, grid.grid_width, u, v);
        if grid.occupied[cell] {
            values.row_mut(i).assign(&grid.features.values.row(cell));
            has[i] = true;
        }
    }
    Ok((FeatureMatrix::new(values, RowRole::PerPoint)?, has))
}

/// Multi-camera lift: each point takes the feature from the seeing camera
/// with the smallest camera-frame depth.
pub fn lift_to_points_multi(
    views: &[ImageView],
    cloud: &PointCloud,
) -> Result<(FeatureMatrix, Vec<bool>)> {
    let dim = views.first().map(|v| v.grid.features.dim()).unwrap_or(0);
    let mut values = Array2::zeros((cloud.len(), dim.max(1)));
    let mut has = vec![false; cloud.len()];
    let mut best = vec![f64::INFINITY; cloud.len()];
    for view in views {
        if view.grid.features.dim() != dim {
            return Err(Error::DimMismatch {
                what: "image view features",
                expected: dim,
                found: view.grid.features.dim(),
            });
        }
        for (i, p) in cloud.points.rows().into_iter().enumerate() {
            if !view.camera.sees(p) {
                continue;
            }
            let (u, v, depth) = view.camera.project(p).expect("seen point projects");
            let cell = cell_index(
                &view.camera,
                view.grid.grid_height,
                view.grid.grid_width,
                u,
                v,
            );
            if view.grid.occupied[cell] && depth < best[i] {
                best[i] = depth;
                values
                    .row_mut(i)
                    .assign(&view.grid.features.values.row(cell));
                has[i] = true;
            }
        }
    }
    if dim == 0 {
        values = Array2::zeros((cloud.len(), 0));
    }
    Ok((FeatureMatrix::new(values, RowRole::PerPoint)?, has))
}

/// Dot-product similarity between two embedding vectors.
pub fn similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            what: "similarity operands",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.dot(&b))
}
