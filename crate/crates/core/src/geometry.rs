//! Point clouds, cameras, and geometric mask construction.
//!
//! Masks are index sets over a cloud. Sector and pillar masks partition the
//! cloud from its geometry alone; visibility masks tie points to cameras via
//! a pinhole projection. All three feed the same downstream pooling path.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// A cloud of 3D points with an optional ground-truth labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// Point positions, one row per point, columns `x, y, z`.
    pub points: Array2<f64>,
    /// Per-point indices into `label_table`, when ground truth exists.
    pub labels: Option<Vec<u32>>,
    /// Class names referenced by `labels`.
    pub label_table: Vec<String>,
}

impl PointCloud {
    /// Wraps an `N x 3` position matrix without ground truth.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        Self::validate_points(&points)?;
        Ok(Self {
            points,
            labels: None,
            label_table: Vec::new(),
        })
    }

    /// Wraps positions together with a per-point labeling.
    pub fn with_labels(
        points: Array2<f64>,
        labels: Vec<u32>,
        label_table: Vec<String>,
    ) -> Result<Self> {
        Self::validate_points(&points)?;
        if labels.len() != points.nrows() {
            return Err(Error::DimMismatch {
                what: "labels",
                expected: points.nrows(),
                found: labels.len(),
            });
        }
        for &ix in &labels {
            if ix as usize >= label_table.len() {
                return Err(Error::LabelIndexOutOfRange {
                    index: ix,
                    table_len: label_table.len(),
                });
            }
        }
        Ok(Self {
            points,
            labels: Some(labels),
            label_table,
        })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    /// True when the cloud has no points (never holds for validated clouds).
    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    fn validate_points(points: &Array2<f64>) -> Result<()> {
        if points.nrows() == 0 {
            return Err(Error::EmptyCloud);
        }
        if points.ncols() != 3 {
            return Err(Error::DimMismatch {
                what: "point columns",
                expected: 3,
                found: points.ncols(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "points" });
        }
        Ok(())
    }
}

/// How a [`MaskSet`] was constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    /// Equal angular sectors around the vertical axis.
    Sector { count: usize },
    /// Square grid cells in the ground plane.
    Pillar { side: f64 },
    /// One mask of visible points per camera.
    Visibility,
}

/// A family of index masks over one cloud.
///
/// Every mask lists point indices in strictly ascending order. Sector and
/// pillar sets partition the cloud; visibility masks may overlap or be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    kind: MaskKind,
    masks: Vec<Vec<usize>>,
}

impl MaskSet {
    /// Bundles pre-built masks. Callers must supply ascending index lists.
    pub fn new(kind: MaskKind, masks: Vec<Vec<usize>>) -> Self {
        debug_assert!(masks.iter().all(|m| m.windows(2).all(|w| w[0] < w[1])));
        Self { kind, masks }
    }

    /// Construction recipe for this set.
    pub fn kind(&self) -> &MaskKind {
        &self.kind
    }

    /// Number of masks.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    /// True when the set holds no masks at all.
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Point indices of mask `i`.
    pub fn mask(&self, i: usize) -> &[usize] {
        &self.masks[i]
    }

    /// Iterator over all masks.
    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.masks.iter().map(Vec::as_slice)
    }

    /// Inverse lookup: for each of `n_points`, the mask that contains it.
    ///
    /// Only meaningful for partitioning sets; with overlapping masks the
    /// highest mask index wins.
    pub fn membership(&self, n_points: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; n_points];
        for (mi, mask) in self.masks.iter().enumerate() {
            for &pi in mask {
                owner[pi] = Some(mi);
            }
        }
        owner
    }
}

/// Cylindrical coordinates per point: columns `r`, `phi` in `[0, 2*pi)`, `z`.
pub fn to_polar(points: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((points.nrows(), 3));
    for (i, p) in points.rows().into_iter().enumerate() {
        let (x, y, z) = (p[0], p[1], p[2]);
        out[[i, 0]] = x.hypot(y);
        out[[i, 1]] = wrap_angle(y.atan2(x));
        out[[i, 2]] = z;
    }
    out
}

/// Maps an angle from `(-pi, pi]` to `[0, 2*pi)`.
fn wrap_angle(phi: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let wrapped = if phi < 0.0 { phi + tau } else { phi };
    // Tiny negative angles round up to exactly tau; fold them back to zero so
    // the result stays inside the half-open interval.
    if wrapped >= tau {
        0.0
    } else {
        wrapped
    }
}

/// Lower angular boundary of sector `t` out of `count`.
fn sector_boundary(t: usize, count: usize) -> f64 {
    t as f64 / count as f64 * std::f64::consts::TAU
}

/// Partitions a cloud into `count` equal angular sectors around the z axis.
///
/// A point with azimuth `phi` belongs to sector `t` exactly when
/// `t/count * 2*pi <= phi < (t+1)/count * 2*pi`; boundary angles therefore
/// fall into the upper sector. Every sector is represented even when empty,
/// so the result always holds `count` masks.
pub fn sector_masks(cloud: &PointCloud, count: usize) -> Result<MaskSet> {
    if count == 0 {
        return Err(Error::ZeroSectors);
    }
    let polar = to_polar(&cloud.points);
    let mut masks = vec![Vec::new(); count];
    for (i, row) in polar.rows().into_iter().enumerate() {
        let phi = row[1];
        // Start from an arithmetic guess, then settle on the half-open
        // interval test so membership matches the boundary values exactly.
        let mut t = ((phi / std::f64::consts::TAU * count as f64) as usize).min(count - 1);
        while t > 0 && phi < sector_boundary(t, count) {
            t -= 1;
        }
        while t + 1 < count && phi >= sector_boundary(t + 1, count) {
            t += 1;
        }
        masks[t].push(i);
    }
    Ok(MaskSet::new(MaskKind::Sector { count }, masks))
}

/// Partitions a cloud into vertical pillars over a square ground-plane grid.
///
/// A point lands in cell `(floor(x/side), floor(y/side))`; z is ignored.
/// Only occupied cells yield masks, ordered lexicographically by cell index.
pub fn pillar_masks(cloud: &PointCloud, side: f64) -> Result<MaskSet> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::InvalidPillarSide { side });
    }
    let mut cells: std::collections::BTreeMap<(i64, i64), Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, p) in cloud.points.rows().into_iter().enumerate() {
        let ix = (p[0] / side).floor() as i64;
        let iy = (p[1] / side).floor() as i64;
        cells.entry((ix, iy)).or_default().push(i);
    }
    let masks = cells.into_values().collect();
    Ok(MaskSet::new(MaskKind::Pillar { side }, masks))
}

/// A pinhole camera with a world-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// `3 x 3` intrinsic matrix `[[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
    pub intrinsics: Array2<f64>,
    /// `4 x 4` homogeneous world-to-camera transform.
    pub extrinsics: Array2<f64>,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
}

impl Camera {
    /// Validates and wraps explicit camera matrices.
    pub fn new(
        intrinsics: Array2<f64>,
        extrinsics: Array2<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if intrinsics.dim() != (3, 3) {
            return Err(Error::InvalidCamera("intrinsics must be 3x3".into()));
        }
        if extrinsics.dim() != (4, 4) {
            return Err(Error::InvalidCamera("extrinsics must be 4x4".into()));
        }
        if intrinsics.iter().any(|v| !v.is_finite()) || extrinsics.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("matrix entries must be finite".into()));
        }
        if intrinsics[[0, 0]] == 0.0 || intrinsics[[1, 1]] == 0.0 {
            return Err(Error::InvalidCamera("focal lengths must be nonzero".into()));
        }
        let bottom: Vec<f64> = extrinsics.row(3).to_vec();
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidCamera(
                "extrinsics bottom row must be [0, 0, 0, 1]".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    /// Builds a camera at `eye` looking toward `target`.
    ///
    /// The camera frame is right-handed with +z forward along the view
    /// direction and +y pointing down in the image; `up` fixes the roll and
    /// must not be parallel to the view direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: (f64, f64),
        center: (f64, f64),
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let fwd = sub3(target, eye);
        let fwd_n = norm3(fwd);
        if fwd_n == 0.0 {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let z = scale3(fwd, 1.0 / fwd_n);
        let xr = cross3(z, up);
        let xr_n = norm3(xr);
        if xr_n < 1e-12 {
            return Err(Error::InvalidCamera(
                "up is parallel to the view direction".into(),
            ));
        }
        let x = scale3(xr, 1.0 / xr_n);
        let y = cross3(z, x);

        let mut ext = Array2::zeros((4, 4));
        for (r, axis) in [x, y, z].into_iter().enumerate() {
            for c in 0..3 {
                ext[[r, c]] = axis[c];
            }
            ext[[r, 3]] = -dot3(axis, eye);
        }
        ext[[3, 3]] = 1.0;

        let mut intr = Array2::eye(3);
        intr[[0, 0]] = focal.0;
        intr[[1, 1]] = focal.1;
        intr[[0, 2]] = center.0;
        intr[[1, 2]] = center.1;
        Camera::new(intr, ext, width, height)
    }

    /// Projects a world point into the image plane.
    ///
    /// Returns `(u, v, depth)` when the point lies strictly in front of the
    /// camera (`depth > 0`); pixel coordinates are not clamped to the image.
    pub fn project(&self, p: ArrayView1<f64>) -> Option<(f64, f64, f64)> {
        let e = &self.extrinsics;
        let cam = [
            e[[0, 0]] * p[0] + e[[0, 1]] * p[1] + e[[0, 2]] * p[2] + e[[0, 3]],
            e[[1, 0]] * p[0] + e[[1, 1]] * p[1] + e[[1, 2]] * p[2] + e[[1, 3]],
            e[[2, 0]] * p[0] + e[[2, 1]] * p[1] + e[[2, 2]] * p[2] + e[[2, 3]],
        ];
        if cam[2] <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let u = k[[0, 0]] * cam[0] / cam[2] + k[[0, 2]];
        let v = k[[1, 1]] * cam[1] / cam[2] + k[[1, 2]];
        Some((u, v, cam[2]))
    }

    /// True when the point projects inside the image with positive depth.
    ///
    /// Bounds are half-open: `0 <= u < width` and `0 <= v < height`.
    pub fn sees(&self, p: ArrayView1<f64>) -> bool {
        match self.project(p) {
            Some((u, v, _)) => {
                u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
            }
            None => false,
        }
    }

    /// Camera position in world coordinates.
    pub fn position(&self) -> Array1<f64> {
        // eye = -R^T t for extrinsics [R | t].
        let e = &self.extrinsics;
        let mut eye = Array1::zeros(3);
        for i in 0..3 {
            eye[i] = -(e[[0, i]] * e[[0, 3]] + e[[1, i]] * e[[1, 3]] + e[[2, i]] * e[[2, 3]]);
        }
        eye
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// One visibility mask per camera: indices of points the camera sees.
///
/// Masks may overlap across cameras and may be empty; order follows the
/// camera list.
pub fn visibility_masks(cloud: &PointCloud, cameras: &[Camera]) -> MaskSet {
    let masks = cameras
        .iter()
        .map(|cam| {
            cloud
                .points
                .rows()
                .into_iter()
                .enumerate()
                .filter(|(_, p)| cam.sees(*p))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    MaskSet::new(MaskKind::Visibility, masks)
}
