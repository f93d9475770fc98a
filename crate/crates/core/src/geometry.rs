//! Instantaneous rigid-body motion-field geometry under perspective projection.
//!
//! The image velocity induced at a normalized image point `p = (x, y)` by a
//! camera translating with `t` and rotating with `omega`, observing a scene
//! point at inverse depth `rho`, is
//!
//! ```text
//! v(p) = rho(p) * A(p) * t + B(p) * omega
//! ```
//!
//! with `A(p) = [[1, 0, -x], [0, 1, -y]]` and
//! `B(p) = [[-x*y, 1 + x^2, -y], [-1 - y^2, x*y, x]]`.
//!
//! All field math in this crate works in normalized camera coordinates
//! (focal length folded into the coordinates, so `f = 1` inside `A` and `B`).
//! Pixel-to-normalized conversion happens only at I/O boundaries through
//! [`CameraModel`].
//!
//! Coordinate convention, fixed globally: `x` points right, `y` points down,
//! grids are row-major with row 0 at the top.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Errors from geometric construction and pose algebra.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
}

/// Pinhole camera intrinsics. Defines the pixel-to-normalized mapping
/// `x = (col - cx) / f`, `y = (row - cy) / f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        focal: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(focal > 0.0) || !focal.is_finite() {
            return Err(GeometryError::InvalidCamera(format!(
                "focal length must be positive and finite, got {focal}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self {
            focal,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera with the principal point at the grid center and `f = width`,
    /// so normalized `x` spans roughly `[-0.5, 0.5]`. Used for synthetic
    /// desk-scale grids where no calibration exists.
    pub fn centered(width: usize, height: usize) -> Self {
        Self {
            focal: width as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }

    /// Normalized coordinates of the pixel at (row, col).
    #[inline]
    pub fn normalized(&self, row: usize, col: usize) -> Vector2<f64> {
        Vector2::new(
            (col as f64 - self.cx) / self.focal,
            (row as f64 - self.cy) / self.focal,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Instantaneous camera motion: translation in scene units per frame,
/// rotation as an axis-angle rate in radians per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoMotion {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl EgoMotion {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn zero() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        }
    }
}

/// Dense 2D velocity field over an image grid, row-major.
///
/// Components are in normalized units per frame when camera-normalized,
/// pixels per frame otherwise; this type does not care which.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<Vector2<f64>>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Vector2::zeros(); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vector2<f64>) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<Vector2<f64>>) -> Self {
        assert_eq!(data.len(), width * height, "flow data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Vector2<f64> {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut Vector2<f64> {
        &mut self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[Vector2<f64>] {
        &self.data
    }

    /// Iterate `(row, col, v)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Vector2<f64>)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / w, i % w, *v))
    }

    pub fn add(&self, other: &FlowField) -> FlowField {
        assert_eq!((self.width, self.height), (other.width, other.height));
        FlowField {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &FlowField) -> FlowField {
        assert_eq!((self.width, self.height), (other.width, other.height));
        FlowField {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Sum of squared entries over both components and all pixels.
    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v.norm_squared()).sum()
    }

    /// Largest per-pixel vector magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }

    pub fn same_shape(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel inverse scene depth `rho = 1/Z`. Zero encodes a point at
/// infinity; negative values are not representable by construction of
/// the solvers but are not rejected here.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl InverseDepthMap {
    pub fn uniform(width: usize, height: usize, rho: f64) -> Self {
        Self {
            width,
            height,
            data: vec![rho; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "depth data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Boolean per-pixel grid, row-major. Used for object masks and inlier maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl MaskGrid {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &MaskGrid) -> MaskGrid {
        assert_eq!((self.width, self.height), (other.width, other.height));
        MaskGrid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    /// Intersection over union against another mask of the same shape.
    /// Two empty masks have IoU 1.
    pub fn iou(&self, other: &MaskGrid) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Rigid pose: rotation plus translation, used as camera-to-world.
/// The translation is the camera position in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// `self ∘ other`: apply `other` in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Frobenius deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn validate(&self, tol: f64) -> Result<(), GeometryError> {
        let err = self.orthonormality_error();
        let det_err = (self.rotation.determinant() - 1.0).abs();
        if err > tol || det_err > tol {
            return Err(GeometryError::NotARotation(err.max(det_err)));
        }
        Ok(())
    }
}

/// Camera-to-world poses, one per frame.
pub type Trajectory = Vec<Pose>;

/// Translational interaction matrix at a normalized point, `f = 1`:
/// `[[1, 0, -x], [0, 1, -y]]`.
#[inline]
pub fn a_matrix(p: Vector2<f64>) -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, -p.x, 0.0, 1.0, -p.y)
}

/// Rotational interaction matrix at a normalized point, `f = 1`:
/// `[[-x*y, 1 + x^2, -y], [-1 - y^2, x*y, x]]`.
#[inline]
pub fn b_matrix(p: Vector2<f64>) -> Matrix2x3<f64> {
    let (x, y) = (p.x, p.y);
    Matrix2x3::new(
        -x * y,
        1.0 + x * x,
        -y,
        -1.0 - y * y,
        x * y,
        x,
    )
}

/// Full rigid motion field `v(p) = rho(p) A(p) t + B(p) omega` over the
/// camera grid. Separable: equals `translational` + `rotational` parts with
/// the translational part scaled per-pixel by `rho`.
pub fn motion_field(
    ego: &EgoMotion,
    rho: &InverseDepthMap,
    cam: &CameraModel,
) -> Result<FlowField, GeometryError> {
    if rho.width() != cam.width || rho.height() != cam.height {
        return Err(GeometryError::DimensionMismatch {
            want_w: cam.width,
            want_h: cam.height,
            got_w: rho.width(),
            got_h: rho.height(),
        });
    }
    Ok(FlowField::from_fn(cam.width, cam.height, |row, col| {
        let p = cam.normalized(row, col);
        a_matrix(p) * ego.translation * rho.at(row, col) + b_matrix(p) * ego.rotation
    }))
}

/// Translational motion field at unit inverse depth: `v_t(p) = A(p) t`.
pub fn translational_field(t: Vector3<f64>, cam: &CameraModel) -> FlowField {
    FlowField::from_fn(cam.width, cam.height, |row, col| {
        a_matrix(cam.normalized(row, col)) * t
    })
}

/// Rotational motion field `v_w(p) = B(p) omega`; independent of depth.
pub fn rotational_field(omega: Vector3<f64>, cam: &CameraModel) -> FlowField {
    FlowField::from_fn(cam.width, cam.height, |row, col| {
        b_matrix(cam.normalized(row, col)) * omega
    })
}

/// Skew-symmetric cross-product matrix of `w`.
#[inline]
pub fn hat(w: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn so3_exp(omega: Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = hat(omega);
    if theta2 < 1e-28 {
        // Second-order Taylor keeps the map smooth through zero.
        return Matrix3::identity() + k + 0.5 * (k * k);
    }
    let theta = theta2.sqrt();
    Matrix3::identity() + (theta.sin() / theta) * k + ((1.0 - theta.cos()) / theta2) * (k * k)
}

/// Axis-angle vector of a rotation matrix; inverse of [`so3_exp`] on
/// angles in `[0, pi)`.
///
/// Near `theta = pi` (trace within 1e-6 of -1) the off-diagonal extraction
/// degenerates and the axis is recovered from the symmetric part instead.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
        return Err(GeometryError::NotARotation(ortho));
    }
    let trace = r.trace();
    let cos_theta = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);

    if trace <= -1.0 + 1e-6 {
        // theta ~ pi: axis from the dominant diagonal of (R + I) / 2.
        let b = (r + Matrix3::identity()) / 2.0;
        let diag = [b[(0, 0)], b[(1, 1)], b[(2, 2)]];
        let i = (0..3).max_by(|&a, &c| diag[a].total_cmp(&diag[c])).unwrap();
        let mut axis = Vector3::zeros();
        axis[i] = diag[i].max(0.0).sqrt();
        for j in 0..3 {
            if j != i {
                axis[j] = b[(i, j)] / axis[i];
            }
        }
        axis.normalize_mut();
        let theta = cos_theta.acos();
        // Fix the sign using the antisymmetric part, which may be tiny but
        // carries the direction when theta < pi.
        let v = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        if v.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * theta);
    }

    let v = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    // The antisymmetric part carries 2 sin(theta) * axis; pairing its own
    // norm with the trace cosine through atan2 keeps the magnitude
    // well-conditioned right up to the near-pi branch above.
    let sin_theta = v.norm() / 2.0;
    let theta = sin_theta.atan2(cos_theta);
    if sin_theta < 1e-12 {
        return Ok(v / 2.0);
    }
    Ok(v * (theta / (2.0 * sin_theta)))
}

/// Relative motion taking frame `a` to frame `b`, expressed in the camera
/// frame of `a`: the `(t, omega)` of `a^-1 ∘ b`.
pub fn relative_egomotion(a: &Pose, b: &Pose) -> Result<EgoMotion, GeometryError> {
    let rel = a.inverse().compose(b);
    let omega = so3_log(&rel.rotation)?;
    Ok(EgoMotion::new(rel.translation, omega))
}

/// Chain per-frame motions into a trajectory starting at `origin`.
/// The result has `motions.len() + 1` poses; [`relative_egomotion`] applied
/// to consecutive poses reproduces the inputs.
pub fn integrate_trajectory(motions: &[EgoMotion], origin: &Pose) -> Trajectory {
    let mut poses = Vec::with_capacity(motions.len() + 1);
    poses.push(origin.clone());
    for m in motions {
        let step = Pose::new(so3_exp(m.rotation), m.translation);
        let next = poses.last().unwrap().compose(&step);
        poses.push(next);
    }
    poses
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_unit_omega(rng: &mut impl Rng, max_angle: f64) -> Vector3<f64> {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        v.normalize() * rng.gen_range(0.0..max_angle)
    }

    #[test]
    fn a_matrix_values() {
        let a = a_matrix(Vector2::new(0.0, 0.0));
        assert_eq!(a, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0));
        let a = a_matrix(Vector2::new(0.5, -0.25));
        assert_eq!(a, Matrix2x3::new(1.0, 0.0, -0.5, 0.0, 1.0, 0.25));
    }

    #[test]
    fn a_matrix_annihilates_ray_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let ray = Vector3::new(p.x, p.y, 1.0);
            let out = a_matrix(p) * ray;
            assert_relative_eq!(out.norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn b_matrix_columns_at_origin() {
        let p = Vector2::new(0.0, 0.0);
        let b = b_matrix(p);
        assert_eq!(b * Vector3::new(0.0, 0.0, 1.0), Vector2::new(0.0, 0.0));
        assert_eq!(b * Vector3::new(1.0, 0.0, 0.0), Vector2::new(0.0, -1.0));
    }

    #[test]
    fn b_matrix_second_column() {
        let b = b_matrix(Vector2::new(0.2, 0.1));
        let v = b * Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(v.x, 1.04, epsilon = 1e-15);
        assert_relative_eq!(v.y, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn forward_translation_vanishes_at_principal_point() {
        let cam = CameraModel::centered(9, 9);
        let rho = InverseDepthMap::uniform(9, 9, 0.7);
        let ego = EgoMotion::new(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros());
        let field = motion_field(&ego, &rho, &cam).unwrap();
        // Principal point sits at the grid center for the centered camera.
        assert_relative_eq!(field.at(4, 4).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn motion_field_matches_scaled_a_column() {
        // t = (1,0,0), rho = 2 at p = (0.5, -0.25): v = 2 * A * t = (2, 0).
        let v = a_matrix(Vector2::new(0.5, -0.25)) * Vector3::new(1.0, 0.0, 0.0) * 2.0;
        assert_eq!(v, Vector2::new(2.0, 0.0));
    }

    #[test]
    fn motion_field_separates_into_partial_fields() {
        let cam = CameraModel::centered(12, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let t = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let w = random_unit_omega(&mut rng, 0.2);
            let rho =
                InverseDepthMap::from_fn(12, 8, |_, _| rng.gen_range(0.0..0.5));
            let full = motion_field(&EgoMotion::new(t, w), &rho, &cam).unwrap();
            // Independent path: scale the unit-depth translational field
            // pixelwise, then add the rotational field.
            let trans = translational_field(t, &cam);
            let rot = rotational_field(w, &cam);
            for (row, col, v) in full.iter() {
                let expect = trans.at(row, col) * rho.at(row, col) + rot.at(row, col);
                assert_relative_eq!((v - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn motion_field_rejects_mismatched_depth() {
        let cam = CameraModel::centered(8, 8);
        let rho = InverseDepthMap::uniform(4, 4, 1.0);
        let err = motion_field(&EgoMotion::zero(), &rho, &cam);
        assert!(matches!(
            err,
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn translational_field_canonical_cases() {
        let cam = CameraModel::centered(8, 6);
        let zero = translational_field(Vector3::zeros(), &cam);
        assert_eq!(zero.norm_squared(), 0.0);

        let forward = translational_field(Vector3::new(0.0, 0.0, 1.0), &cam);
        for (row, col, v) in forward.iter() {
            let p = cam.normalized(row, col);
            assert_relative_eq!(v.x, -p.x, epsilon = 1e-15);
            assert_relative_eq!(v.y, -p.y, epsilon = 1e-15);
        }

        let lateral = translational_field(Vector3::new(1.0, 0.0, 0.0), &cam);
        for (_, _, v) in lateral.iter() {
            assert_eq!(v, Vector2::new(1.0, 0.0));
        }
    }

    #[test]
    fn rotational_field_matches_b_matrix_gridwise() {
        let cam = CameraModel::centered(10, 6);
        let cases = [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        for w in cases {
            let field = rotational_field(w, &cam);
            for (row, col, v) in field.iter() {
                let expect = b_matrix(cam.normalized(row, col)) * w;
                assert_relative_eq!((v - expect).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn so3_exp_identity_and_quarter_turn() {
        assert_eq!(so3_exp(Vector3::zeros()), Matrix3::identity());
        let r = so3_exp(Vector3::new(0.0, 0.0, PI / 2.0));
        let rotated = r * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!((rotated - Vector3::new(0.0, 1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn so3_log_round_trip() {
        let w = Vector3::new(0.1, 0.2, 0.3);
        let back = so3_log(&so3_exp(w)).unwrap();
        assert_relative_eq!((back - w).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn so3_log_round_trip_random_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = random_unit_omega(&mut rng, PI - 1e-3);
            let back = so3_log(&so3_exp(w)).unwrap();
            assert!(
                (back - w).norm() < 1e-9,
                "round-trip failed for angle {}",
                w.norm()
            );
        }
    }

    #[test]
    fn so3_log_near_pi() {
        let w = Vector3::new(0.6, -0.3, 0.74).normalize() * (PI - 1e-8);
        let back = so3_log(&so3_exp(w)).unwrap();
        assert!((back - w).norm() < 1e-6);
    }

    #[test]
    fn so3_log_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(so3_log(&m), Err(GeometryError::NotARotation(_))));
    }

    #[test]
    fn relative_egomotion_identity_and_pure_translation() {
        let a = Pose::identity();
        let m = relative_egomotion(&a, &a).unwrap();
        assert_eq!(m.translation, Vector3::zeros());
        assert_eq!(m.rotation, Vector3::zeros());

        let b = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let m = relative_egomotion(&a, &b).unwrap();
        assert_eq!(m.translation, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(m.rotation, Vector3::zeros());
    }

    #[test]
    fn relative_egomotion_round_trip_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = Pose::new(
                so3_exp(random_unit_omega(&mut rng, 2.0)),
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            );
            let b = Pose::new(
                so3_exp(random_unit_omega(&mut rng, 2.0)),
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            );
            let m = relative_egomotion(&a, &b).unwrap();
            let rebuilt = a.compose(&Pose::new(so3_exp(m.rotation), m.translation));
            assert!((rebuilt.rotation - b.rotation).norm() < 1e-10);
            assert!((rebuilt.translation - b.translation).norm() < 1e-10);
        }
    }

    #[test]
    fn integrate_trajectory_degenerate_cases() {
        let origin = Pose::identity();
        assert_eq!(integrate_trajectory(&[], &origin).len(), 1);

        let zeros = vec![EgoMotion::zero(); 4];
        let traj = integrate_trajectory(&zeros, &origin);
        assert_eq!(traj.len(), 5);
        for pose in &traj {
            assert_eq!(*pose, origin);
        }
    }

    #[test]
    fn integrate_then_difference_recovers_motions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let motions: Vec<EgoMotion> = (0..6)
            .map(|_| {
                EgoMotion::new(
                    Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                    random_unit_omega(&mut rng, 0.5),
                )
            })
            .collect();
        let traj = integrate_trajectory(&motions, &Pose::identity());
        for (i, m) in motions.iter().enumerate() {
            let rec = relative_egomotion(&traj[i], &traj[i + 1]).unwrap();
            assert!((rec.translation - m.translation).norm() < 1e-10);
            assert!((rec.rotation - m.rotation).norm() < 1e-10);
        }
    }
}
