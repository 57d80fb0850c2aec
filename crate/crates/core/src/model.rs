//! Shared domain types: vehicle / satellite / landmark states in ECEF,
//! the overall-state container and the dimension bookkeeping used by the
//! optimizer and the integrity machinery.

use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

/// Dimension of a flattened [`VehicleState`].
pub const VEHICLE_DIM: usize = 11;
/// Dimension of a flattened [`SatelliteState`].
pub const SATELLITE_DIM: usize = 8;
/// Dimension of a flattened [`PixelLandmark`] position.
pub const LANDMARK_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("non-finite component in state")]
    NonFinite,
    #[error("at least {min} satellites required, got {got}")]
    TooFewSatellites { min: usize, got: usize },
    #[error("flattened vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Vehicle state: ECEF position, receiver clock bias (m), velocity,
/// clock drift (m/s) and attitude (roll, pitch, yaw in radians) with
/// respect to the scenario's local level frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pos: Vector3<f64>,
    pub clk_bias: f64,
    pub vel: Vector3<f64>,
    pub clk_drift: f64,
    pub att: Vector3<f64>,
}

impl VehicleState {
    pub fn new(
        pos: Vector3<f64>,
        clk_bias: f64,
        vel: Vector3<f64>,
        clk_drift: f64,
        att: Vector3<f64>,
    ) -> Result<Self, ModelError> {
        let s = Self { pos, clk_bias, vel, clk_drift, att: wrap_attitude(att)? };
        if s.is_finite() {
            Ok(s)
        } else {
            Err(ModelError::NonFinite)
        }
    }

    pub fn zeros() -> Self {
        Self {
            pos: Vector3::zeros(),
            clk_bias: 0.0,
            vel: Vector3::zeros(),
            clk_drift: 0.0,
            att: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite())
            && self.clk_bias.is_finite()
            && self.vel.iter().all(|v| v.is_finite())
            && self.clk_drift.is_finite()
            && self.att.iter().all(|v| v.is_finite())
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.pos.as_slice());
        out.push(self.clk_bias);
        out.extend_from_slice(self.vel.as_slice());
        out.push(self.clk_drift);
        out.extend_from_slice(self.att.as_slice());
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            pos: Vector3::new(s[0], s[1], s[2]),
            clk_bias: s[3],
            vel: Vector3::new(s[4], s[5], s[6]),
            clk_drift: s[7],
            att: Vector3::new(s[8], s[9], s[10]),
        }
    }
}

/// Satellite state: ECEF position, clock bias (m), velocity, clock drift (m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub pos: Vector3<f64>,
    pub clk_bias: f64,
    pub vel: Vector3<f64>,
    pub clk_drift: f64,
}

impl SatelliteState {
    pub fn new(pos: Vector3<f64>, clk_bias: f64, vel: Vector3<f64>, clk_drift: f64) -> Self {
        Self { pos, clk_bias, vel, clk_drift }
    }

    /// Radius band for the simulated MEO constellation.
    pub fn radius_in_meo_band(&self) -> bool {
        let r = self.pos.norm();
        (2.0e7..=3.5e7).contains(&r)
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.pos.as_slice());
        out.push(self.clk_bias);
        out.extend_from_slice(self.vel.as_slice());
        out.push(self.clk_drift);
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            pos: Vector3::new(s[0], s[1], s[2]),
            clk_bias: s[3],
            vel: Vector3::new(s[4], s[5], s[6]),
            clk_drift: s[7],
        }
    }
}

/// A key image pixel anchored in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelLandmark {
    pub world_pos: Vector3<f64>,
    pub source_pixel: (f64, f64),
    pub keyframe_id: u64,
}

impl PixelLandmark {
    pub fn new(world_pos: Vector3<f64>, source_pixel: (f64, f64), keyframe_id: u64) -> Result<Self, ModelError> {
        if world_pos.iter().all(|v| v.is_finite())
            && source_pixel.0.is_finite()
            && source_pixel.1.is_finite()
        {
            Ok(Self { world_pos, source_pixel, keyframe_id })
        } else {
            Err(ModelError::NonFinite)
        }
    }
}

/// Vehicle, satellite and landmark states bundled per epoch.
///
/// Landmarks are carried for bookkeeping and export; they are maintained by
/// inverse-mapping selected keyframe pixels through the estimated keyframe
/// pose, so the estimated block of the state is the vehicle plus satellites.
#[derive(Debug, Clone, PartialEq)]
pub struct OverallState {
    pub vehicle: VehicleState,
    pub satellites: Vec<SatelliteState>,
    pub landmarks: Vec<PixelLandmark>,
}

impl OverallState {
    pub const MIN_SATELLITES: usize = 4;

    pub fn new(
        vehicle: VehicleState,
        satellites: Vec<SatelliteState>,
        landmarks: Vec<PixelLandmark>,
    ) -> Result<Self, ModelError> {
        if satellites.len() < Self::MIN_SATELLITES {
            return Err(ModelError::TooFewSatellites {
                min: Self::MIN_SATELLITES,
                got: satellites.len(),
            });
        }
        Ok(Self { vehicle, satellites, landmarks })
    }

    pub fn flat_len(&self) -> usize {
        VEHICLE_DIM + SATELLITE_DIM * self.satellites.len() + LANDMARK_DIM * self.landmarks.len()
    }
}

/// Serialize in the fixed order: vehicle, satellites by index, landmarks by index.
pub fn flatten(state: &OverallState) -> DVector<f64> {
    let mut out = Vec::with_capacity(state.flat_len());
    state.vehicle.write_into(&mut out);
    for sat in &state.satellites {
        sat.write_into(&mut out);
    }
    for lm in &state.landmarks {
        out.extend_from_slice(lm.world_pos.as_slice());
    }
    DVector::from_vec(out)
}

/// Inverse of [`flatten`]; landmark pixel/keyframe metadata is restored from `template`.
pub fn unflatten(template: &OverallState, v: &DVector<f64>) -> Result<OverallState, ModelError> {
    let expected = template.flat_len();
    if v.len() != expected {
        return Err(ModelError::LengthMismatch { expected, got: v.len() });
    }
    let s = v.as_slice();
    let vehicle = VehicleState::from_slice(&s[..VEHICLE_DIM]);
    let mut off = VEHICLE_DIM;
    let mut satellites = Vec::with_capacity(template.satellites.len());
    for _ in 0..template.satellites.len() {
        satellites.push(SatelliteState::from_slice(&s[off..off + SATELLITE_DIM]));
        off += SATELLITE_DIM;
    }
    let mut landmarks = Vec::with_capacity(template.landmarks.len());
    for lm in &template.landmarks {
        landmarks.push(PixelLandmark {
            world_pos: Vector3::new(s[off], s[off + 1], s[off + 2]),
            source_pixel: lm.source_pixel,
            keyframe_id: lm.keyframe_id,
        });
        off += LANDMARK_DIM;
    }
    Ok(OverallState { vehicle, satellites, landmarks })
}

/// Wrap each attitude component to (-pi, pi].
pub fn wrap_attitude(att: Vector3<f64>) -> Result<Vector3<f64>, ModelError> {
    if !att.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(att.map(wrap_angle))
}

/// Wrap a single angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a.rem_euclid(two_pi); // [0, 2pi)
    if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Shared dimension descriptor: one place that knows how states and
/// measurements are counted so that `k = n - l` is consistent everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_satellites: usize,
    pub n_landmarks: usize,
    pub n_photo: usize,
}

impl Dims {
    pub fn new(n_satellites: usize, n_landmarks: usize, n_photo: usize) -> Self {
        Self { n_satellites, n_landmarks, n_photo }
    }

    /// Flattened length of the full [`OverallState`] container.
    pub fn container_dim(&self) -> usize {
        VEHICLE_DIM + SATELLITE_DIM * self.n_satellites + LANDMARK_DIM * self.n_landmarks
    }

    /// Dimension `l` of the estimated block (vehicle + satellites); landmarks
    /// are derived via inverse mapping rather than estimated.
    pub fn state_dim(&self) -> usize {
        VEHICLE_DIM + SATELLITE_DIM * self.n_satellites
    }

    /// Measurement dimension `n`: pseudoranges, motion prior, ephemeris
    /// predictions, photometric pixels — in that stacking order.
    pub fn measurement_dim(&self) -> usize {
        self.n_satellites + VEHICLE_DIM + SATELLITE_DIM * self.n_satellites + self.n_photo
    }

    /// Redundancy `k = n - l` of the current-epoch linearized system.
    pub fn redundancy(&self) -> usize {
        self.measurement_dim() - self.state_dim()
    }

    /// Offset of the motion-prior block in the measurement stacking.
    pub fn motion_offset(&self) -> usize {
        self.n_satellites
    }

    /// Offset of the ephemeris block in the measurement stacking.
    pub fn ephemeris_offset(&self) -> usize {
        self.n_satellites + VEHICLE_DIM
    }

    /// Offset of the photometric block in the measurement stacking.
    pub fn photo_offset(&self) -> usize {
        self.n_satellites + VEHICLE_DIM + SATELLITE_DIM * self.n_satellites
    }
}

/// Rotation about the x axis.
pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the y axis.
pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the z axis.
pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Body-to-level rotation from (roll, pitch, yaw) Euler angles,
/// composed as Rz(yaw) * Ry(pitch) * Rx(roll).
pub fn body_to_level(att: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(att.z) * rot_y(att.y) * rot_x(att.x)
}

/// Derivatives of [`body_to_level`] with respect to roll, pitch, yaw.
pub fn body_to_level_derivatives(att: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let (sy, cy) = att.z.sin_cos();
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    [
        rot_z(att.z) * rot_y(att.y) * drx,
        rot_z(att.z) * dry * rot_x(att.x),
        drz * rot_y(att.y) * rot_x(att.x),
    ]
}

/// Fixed local level frame of a scenario: columns are the east/north/up
/// directions (in ECEF) at the scenario anchor. Vehicle attitude and the
/// camera mount are expressed against this frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelFrame {
    axes: Matrix3<f64>,
}

impl LevelFrame {
    pub fn at(anchor_ecef: &Vector3<f64>) -> Self {
        Self { axes: enu_basis(anchor_ecef) }
    }

    pub fn from_axes(axes: Matrix3<f64>) -> Self {
        Self { axes }
    }

    #[inline]
    pub fn up(&self) -> Vector3<f64> {
        self.axes.column(2).into()
    }

    #[inline]
    pub fn east(&self) -> Vector3<f64> {
        self.axes.column(0).into()
    }

    #[inline]
    pub fn north(&self) -> Vector3<f64> {
        self.axes.column(1).into()
    }

    /// Map level-frame coordinates to ECEF directions.
    #[inline]
    pub fn to_ecef(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.axes * v
    }

    /// Rotation taking camera coordinates to ECEF for a given attitude.
    /// The camera is rigidly mounted with its optical axis along body "up".
    pub fn camera_to_world(&self, att: &Vector3<f64>) -> Matrix3<f64> {
        self.axes * body_to_level(att)
    }
}

/// Orthonormal east/north/up basis (as matrix columns) at an ECEF position,
/// using the spherical up direction; no geodetic datum involved.
pub fn enu_basis(pos_ecef: &Vector3<f64>) -> Matrix3<f64> {
    let up = pos_ecef.normalize();
    let z = Vector3::z();
    let east = z.cross(&up);
    let east = if east.norm() < 1e-12 { Vector3::x() } else { east.normalize() };
    let north = up.cross(&east);
    Matrix3::from_columns(&[east, north, up])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn state_with(n_sats: usize, n_lms: usize) -> OverallState {
        let vehicle = VehicleState::new(
            Vector3::new(6.378e6, 1.0, 2.0),
            3.0,
            Vector3::new(0.1, 0.2, 0.3),
            0.4,
            Vector3::new(0.01, -0.02, 0.03),
        )
        .unwrap();
        let satellites = (0..n_sats)
            .map(|i| {
                SatelliteState::new(
                    Vector3::new(2.6e7 + i as f64, -1.0e6, 5.0e5),
                    10.0 + i as f64,
                    Vector3::new(1000.0, -2000.0, 3000.0),
                    0.1,
                )
            })
            .collect();
        let landmarks = (0..n_lms)
            .map(|i| {
                PixelLandmark::new(
                    Vector3::new(6.378e6 + i as f64, 10.0, 20.0),
                    (i as f64, 2.0 * i as f64),
                    0,
                )
                .unwrap()
            })
            .collect();
        OverallState::new(vehicle, satellites, landmarks).unwrap()
    }

    #[test]
    fn flatten_length_four_sats_no_landmarks() {
        let s = state_with(4, 0);
        assert_eq!(flatten(&s).len(), 43);
    }

    #[test]
    fn flatten_length_seven_sats_five_landmarks() {
        let s = state_with(7, 5);
        assert_eq!(flatten(&s).len(), 82);
        assert_eq!(Dims::new(7, 5, 0).container_dim(), 82);
    }

    #[test]
    fn min_satellite_count_enforced() {
        let v = VehicleState::zeros();
        let sats = vec![SatelliteState::new(Vector3::new(2.6e7, 0.0, 0.0), 0.0, Vector3::zeros(), 0.0); 3];
        assert_eq!(
            OverallState::new(v, sats, vec![]).unwrap_err(),
            ModelError::TooFewSatellites { min: 4, got: 3 }
        );
    }

    #[test]
    fn wrap_attitude_examples() {
        let w = wrap_attitude(Vector3::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(w, Vector3::new(0.0, 0.0, 0.0));
        let w = wrap_attitude(Vector3::new(0.0, 0.0, 2.0 * PI)).unwrap();
        assert!(w.norm() < 1e-12);
        let w = wrap_attitude(Vector3::new(1.5 * PI, 0.0, 0.0)).unwrap();
        assert!((w.x + 0.5 * PI).abs() < 1e-12);
        // pi itself stays pi: interval is (-pi, pi]
        assert_eq!(wrap_angle(PI), PI);
        assert!(wrap_attitude(Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn dims_bookkeeping_consistent() {
        let d = Dims::new(5, 3, 50);
        assert_eq!(d.state_dim(), 11 + 40);
        assert_eq!(d.measurement_dim(), 5 + 11 + 40 + 50);
        assert_eq!(d.redundancy(), d.measurement_dim() - d.state_dim());
        assert_eq!(d.photo_offset(), 5 + 11 + 40);
    }

    #[test]
    fn enu_basis_is_orthonormal() {
        let e = enu_basis(&Vector3::new(6.378e6, 1.2e6, 3.4e6));
        let should_be_eye = e.transpose() * e;
        assert!((should_be_eye - Matrix3::identity()).norm() < 1e-12);
        assert!((e.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_derivatives_match_finite_differences() {
        let att = Vector3::new(0.3, -0.2, 0.7);
        let derivs = body_to_level_derivatives(&att);
        let h = 1e-7;
        for axis in 0..3 {
            let mut plus = att;
            let mut minus = att;
            plus[axis] += h;
            minus[axis] -= h;
            let fd = (body_to_level(&plus) - body_to_level(&minus)) / (2.0 * h);
            assert!((fd - derivs[axis]).norm() < 1e-6, "axis {axis}");
        }
    }

    proptest! {
        #[test]
        fn flatten_unflatten_roundtrip(
            n_sats in 4usize..9,
            n_lms in 0usize..6,
            seed_vals in proptest::collection::vec(-1.0e7..1.0e7f64, 0..130),
        ) {
            let mut s = state_with(n_sats, n_lms);
            // Scatter arbitrary finite values through the flattened form.
            let mut v = flatten(&s);
            for (i, val) in seed_vals.iter().enumerate() {
                if i < v.len() {
                    v[i] = *val;
                }
            }
            s = unflatten(&s, &v).unwrap();
            let back = unflatten(&s, &flatten(&s)).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn wrap_stays_in_range_and_preserves_mod_2pi(a in -50.0..50.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            let diff = (a - w) / std::f64::consts::TAU;
            prop_assert!((diff - diff.round()).abs() < 1e-9);
        }
    }
}
