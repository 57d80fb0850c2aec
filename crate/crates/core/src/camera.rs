//! Unified omnidirectional (fish-eye) camera model: projection, unprojection
//! via inverse distance, rigid 3D warp between frames and the direct
//! photometric measurement.

use crate::grid::Grid;
use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("projection undefined: point behind the unified projection surface")]
    ProjectionUndefined,
    #[error("inverse depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("pixel ({0}, {1}) outside the unprojection domain")]
    OutsideDomain(f64, f64),
    #[error("rotation is not orthonormal within 1e-9")]
    NotARotation,
    #[error("no inverse depth stored at pixel ({0}, {1})")]
    MissingDepth(usize, usize),
    #[error("frame has no inverse-depth grid (not a keyframe)")]
    NotAKeyframe,
}

/// Calibrated unified-model intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Unified-model distortion parameter (0 recovers a pinhole).
    pub xi: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, xi: f64, width: usize, height: usize) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        assert!(cx >= 0.0 && cx < width as f64, "principal point x out of image");
        assert!(cy >= 0.0 && cy < height as f64, "principal point y out of image");
        assert!(xi >= 0.0, "xi must be non-negative");
        Self { fx, fy, cx, cy, xi, width, height }
    }

    pub fn contains(&self, u: &Vector2<f64>) -> bool {
        u.x >= 0.0 && u.y >= 0.0 && u.x <= (self.width - 1) as f64 && u.y <= (self.height - 1) as f64
    }
}

/// A captured fish-eye frame; keyframes additionally carry per-pixel inverse
/// distances (zero entries mark pixels without depth, e.g. sky).
#[derive(Debug, Clone)]
pub struct FisheyeFrame {
    pub intensities: Grid<f64>,
    pub timestamp: f64,
    inverse_depth: Option<Grid<f64>>,
}

impl FisheyeFrame {
    pub fn new(intensities: Grid<f64>, timestamp: f64) -> Self {
        Self { intensities, timestamp, inverse_depth: None }
    }

    /// Promote to a keyframe with an inverse-depth grid of the same size.
    /// Stored depths must be positive; zero marks "no depth".
    pub fn with_inverse_depth(mut self, depth: Grid<f64>) -> Self {
        assert_eq!(depth.width(), self.intensities.width());
        assert_eq!(depth.height(), self.intensities.height());
        debug_assert!(depth.data().iter().all(|&d| d >= 0.0 && d.is_finite()));
        self.inverse_depth = Some(depth);
        self
    }

    pub fn is_keyframe(&self) -> bool {
        self.inverse_depth.is_some()
    }

    pub fn width(&self) -> usize {
        self.intensities.width()
    }

    pub fn height(&self) -> usize {
        self.intensities.height()
    }

    /// Inverse distance at an integer pixel, if stored and positive.
    pub fn inverse_depth_at(&self, x: usize, y: usize) -> Option<f64> {
        let g = self.inverse_depth.as_ref()?;
        if !g.contains(x, y) {
            return None;
        }
        let d = *g.get(x, y);
        (d > 0.0).then_some(d)
    }

    pub fn inverse_depth_grid(&self) -> Option<&Grid<f64>> {
        self.inverse_depth.as_ref()
    }
}

/// Rigid transform taking keyframe camera coordinates to current camera
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).norm() > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9
        {
            return Err(CameraError::NotARotation);
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

const DENOM_EPS: f64 = 1e-12;

/// Project a camera-frame point to pixel coordinates:
/// `u = fx * px / (pz + ||p|| xi) + cx` and likewise for `v`.
pub fn project(p: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>, CameraError> {
    let norm = p.norm();
    let den = p.z + norm * intr.xi;
    if den <= DENOM_EPS * norm.max(1.0) {
        return Err(CameraError::ProjectionUndefined);
    }
    Ok(Vector2::new(intr.fx * p.x / den + intr.cx, intr.fy * p.y / den + intr.cy))
}

/// Jacobian of [`project`] with respect to the camera-frame point.
pub fn project_jacobian(
    p: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Result<Matrix2x3<f64>, CameraError> {
    let norm = p.norm();
    let den = p.z + norm * intr.xi;
    if den <= DENOM_EPS * norm.max(1.0) || norm < DENOM_EPS {
        return Err(CameraError::ProjectionUndefined);
    }
    let den2 = den * den;
    let xi_over_norm = intr.xi / norm;
    // d(den)/dp = [xi*px/||p||, xi*py/||p||, 1 + xi*pz/||p||]
    let ddx = xi_over_norm * p.x;
    let ddy = xi_over_norm * p.y;
    let ddz = 1.0 + xi_over_norm * p.z;
    Ok(Matrix2x3::new(
        intr.fx * (den - p.x * ddx) / den2,
        intr.fx * (-p.x * ddy) / den2,
        intr.fx * (-p.x * ddz) / den2,
        intr.fy * (-p.y * ddx) / den2,
        intr.fy * (den - p.y * ddy) / den2,
        intr.fy * (-p.y * ddz) / den2,
    ))
}

/// Map a pixel and an inverse distance back to a camera-frame point.
///
/// Uses the round-trip-consistent unified model: the unit-sphere point is
/// `s * [u_hat, v_hat, 1] - [0, 0, xi]` with
/// `s = (xi + sqrt(1 + (1 - xi^2) r^2)) / (r^2 + 1)`, scaled by `1 / d`.
pub fn unproject(
    u: &Vector2<f64>,
    d: f64,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>, CameraError> {
    if !(d > 0.0) {
        return Err(CameraError::InvalidDepth(d));
    }
    let dir = unproject_unit(u, intr)?;
    Ok(dir / d)
}

/// The unit-norm ray of [`unproject`] (the point at inverse distance 1
/// normalized to the unit sphere).
pub fn unproject_unit(
    u: &Vector2<f64>,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>, CameraError> {
    let uh = (u.x - intr.cx) / intr.fx;
    let vh = (u.y - intr.cy) / intr.fy;
    if !(uh.is_finite() && vh.is_finite()) {
        return Err(CameraError::OutsideDomain(u.x, u.y));
    }
    let r2 = uh * uh + vh * vh;
    let disc = 1.0 + (1.0 - intr.xi * intr.xi) * r2;
    if disc < 0.0 {
        return Err(CameraError::OutsideDomain(u.x, u.y));
    }
    let scale = (intr.xi + disc.sqrt()) / (r2 + 1.0);
    Ok(Vector3::new(scale * uh, scale * vh, scale - intr.xi))
}

/// Unproject a keyframe pixel at inverse distance `d_kf` and move it by the
/// relative pose: `R * unproject(u, d_kf) + t`.
pub fn warp(
    pose: &RelativePose,
    u: &Vector2<f64>,
    d_kf: f64,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>, CameraError> {
    Ok(pose.apply(&unproject(u, d_kf, intr)?))
}

/// Photometric residual `I_kf(u) - I_cur(project(warp(pose, u)))` with
/// bilinear interpolation in the current frame.
///
/// `Ok(None)` marks a warp landing outside the current image; such pixels are
/// dropped from any cost, not zero-filled.
pub fn photometric_residual(
    kf: &FisheyeFrame,
    cur: &FisheyeFrame,
    pose: &RelativePose,
    u: &Vector2<f64>,
    intr: &CameraIntrinsics,
) -> Result<Option<f64>, CameraError> {
    if !kf.is_keyframe() {
        return Err(CameraError::NotAKeyframe);
    }
    let (px, py) = (u.x.round() as usize, u.y.round() as usize);
    let d = kf
        .inverse_depth_at(px, py)
        .ok_or(CameraError::MissingDepth(px, py))?;
    let p_cur = warp(pose, u, d, intr)?;
    let proj = match project(&p_cur, intr) {
        Ok(p) => p,
        Err(CameraError::ProjectionUndefined) => return Ok(None),
        Err(e) => return Err(e),
    };
    let kf_val = *kf.intensities.get(px, py);
    Ok(cur.intensities.bilinear(proj.x, proj.y).map(|cur_val| kf_val - cur_val))
}
