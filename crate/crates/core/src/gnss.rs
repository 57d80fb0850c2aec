//! GPS pseudorange measurement model, the C/N0- and sky-aware measurement
//! covariance, and a simplified circular-orbit satellite propagator.

use crate::camera::{self, CameraIntrinsics};
use crate::model::{LevelFrame, SatelliteState, VehicleState};
use crate::sky::SkyMask;
use nalgebra::{Vector2, Vector3};
use std::io::{self, BufRead, BufReader, Read, Write};
use thiserror::Error;

/// Earth's gravitational parameter, m^3/s^2.
pub const EARTH_MU: f64 = 3.986004418e14;

#[derive(Debug, Error, PartialEq)]
pub enum GnssError {
    #[error("degenerate geometry: satellite range {0} m below 1e6 m")]
    DegenerateGeometry(f64),
    #[error("pseudorange csv parse error: {0}")]
    Parse(String),
}

/// One epoch of pseudorange observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudorangeSet {
    pub epoch: f64,
    pub observations: Vec<PseudorangeObs>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudorangeObs {
    pub prn: u32,
    /// Measured pseudorange, meters.
    pub rho: f64,
    /// Carrier-to-noise density, dB-Hz.
    pub cn0: f64,
}

/// Coefficients of the vision-aided pseudorange covariance. The NLOS pair
/// must dominate the LOS pair so that masked satellites are de-weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionCoefficients {
    pub b_los: f64,
    pub a_los: f64,
    pub b_nlos: f64,
    pub a_nlos: f64,
    /// Sky threshold shared with the sky-detection config.
    pub eta: f64,
}

impl VisionCoefficients {
    pub fn new(b_los: f64, a_los: f64, b_nlos: f64, a_nlos: f64, eta: f64) -> Self {
        assert!(b_los > 0.0 && a_los > 0.0);
        assert!(b_nlos > b_los && a_nlos > a_los, "NLOS coefficients must inflate the variance");
        assert!(eta > 0.0 && eta < 1.0);
        Self { b_los, a_los, b_nlos, a_nlos, eta }
    }
}

/// Simplified per-satellite ephemeris: circular Keplerian elements plus a
/// linear clock polynomial. Stands in for broadcast ephemeris decoding,
/// which is out of scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ephemeris {
    pub prn: u32,
    /// Semi-major axis, meters (~26,560 km for GPS).
    pub semi_major_axis: f64,
    /// Inclination, radians.
    pub inclination: f64,
    /// Right ascension of the ascending node, radians.
    pub raan: f64,
    /// Argument of latitude at t = 0, radians.
    pub arg_latitude: f64,
    /// In-plane angular rate, rad/s.
    pub angular_rate: f64,
    /// Clock bias at t = 0, meters.
    pub clk_bias: f64,
    /// Clock drift, m/s.
    pub clk_drift: f64,
}

impl Ephemeris {
    /// Circular orbit through `pos` (which fixes the radius) with the
    /// in-plane direction chosen by `tangent_hint`.
    pub fn circular_through(
        prn: u32,
        pos: &Vector3<f64>,
        tangent_hint: &Vector3<f64>,
        clk_bias: f64,
        clk_drift: f64,
    ) -> Self {
        let a = pos.norm();
        let radial = pos / a;
        // Orbit normal perpendicular to the radius, biased toward the hint.
        let mut normal = radial.cross(tangent_hint);
        if normal.norm() < 1e-9 {
            normal = radial.cross(&Vector3::z());
        }
        if normal.norm() < 1e-9 {
            normal = radial.cross(&Vector3::x());
        }
        let normal = normal.normalize();
        let inclination = normal.z.acos();
        // Ascending node direction; degenerate for equatorial orbits where
        // RAAN is conventionally zero.
        let node = Vector3::z().cross(&normal);
        let (raan, node_dir) = if node.norm() < 1e-9 {
            (0.0, Vector3::x())
        } else {
            let nd = node.normalize();
            (nd.y.atan2(nd.x), nd)
        };
        let in_plane_y = normal.cross(&node_dir);
        let arg_latitude = radial.dot(&in_plane_y).atan2(radial.dot(&node_dir));
        let angular_rate = (EARTH_MU / (a * a * a)).sqrt();
        Self { prn, semi_major_axis: a, inclination, raan, arg_latitude, angular_rate, clk_bias, clk_drift }
    }

    pub fn orbital_period(&self) -> f64 {
        std::f64::consts::TAU / self.angular_rate
    }
}

/// Noise-free pseudorange prediction: geometric range plus the clock terms.
pub fn predict_pseudorange(x: &VehicleState, y: &SatelliteState) -> Result<f64, GnssError> {
    let range = (y.pos - x.pos).norm();
    if range <= 1.0e6 {
        return Err(GnssError::DegenerateGeometry(range));
    }
    Ok(range + x.clk_bias - y.clk_bias)
}

/// Vision-aided pseudorange variance: with `(b, a)` picked by comparing the
/// satellite's sky probability against the shared threshold and divided by
/// that probability (clamped at 1e-3), returns `sqrt(b + a / cn0_linear)`.
///
/// The source formula equates the variance to this square root; it is kept
/// verbatim and used as sigma^2 everywhere downstream.
pub fn pseudorange_variance(cn0_dbhz: f64, p_sky_at_sat: f64, coeffs: &VisionCoefficients) -> f64 {
    let p = p_sky_at_sat.max(1e-3);
    let (b, a) = if p > coeffs.eta {
        (coeffs.b_los, coeffs.a_los)
    } else {
        (coeffs.b_nlos, coeffs.a_nlos)
    };
    let cn0_linear = 10f64.powf(cn0_dbhz / 10.0);
    (b / p + a / (p * cn0_linear)).sqrt()
}

/// Position, velocity and clock of a satellite at time `t` from its circular
/// elements.
pub fn propagate_satellite(eph: &Ephemeris, t: f64) -> SatelliteState {
    let u = eph.arg_latitude + eph.angular_rate * t;
    let (su, cu) = u.sin_cos();
    let (so, co) = eph.raan.sin_cos();
    let (si, ci) = eph.inclination.sin_cos();
    let a = eph.semi_major_axis;
    let pos = Vector3::new(
        a * (cu * co - su * ci * so),
        a * (cu * so + su * ci * co),
        a * su * si,
    );
    let v = a * eph.angular_rate;
    let vel = Vector3::new(
        v * (-su * co - cu * ci * so),
        v * (-su * so + cu * ci * co),
        v * cu * si,
    );
    SatelliteState::new(pos, eph.clk_bias + eph.clk_drift * t, vel, eph.clk_drift)
}

/// Sky probability sampled at the satellite's image projection; returns 0
/// for below-horizon satellites and projections outside the frame.
pub fn satellite_los_probability(
    y: &SatelliteState,
    x: &VehicleState,
    mask: &SkyMask,
    intr: &CameraIntrinsics,
    level: &LevelFrame,
) -> f64 {
    let to_sat = y.pos - x.pos;
    let elevation_sin = to_sat.normalize().dot(&level.up());
    if elevation_sin <= 0.0 {
        return 0.0;
    }
    let cam_from_world = level.camera_to_world(&x.att).transpose();
    let p_cam = cam_from_world * to_sat;
    let Ok(pix) = camera::project(&p_cam, intr) else {
        return 0.0;
    };
    if !intr.contains(&pix) {
        return 0.0;
    }
    mask.probability_at(&Vector2::new(pix.x, pix.y)).unwrap_or(0.0)
}

/// Write one epoch of observations as `epoch,prn,rho,cn0` rows.
pub fn write_pseudoranges_csv<W: Write>(mut w: W, set: &PseudorangeSet) -> io::Result<()> {
    for obs in &set.observations {
        writeln!(w, "{},{},{},{}", set.epoch, obs.prn, obs.rho, obs.cn0)?;
    }
    Ok(())
}

/// Read `epoch,prn,rho,cn0` rows, grouping consecutive rows by epoch.
pub fn read_pseudoranges_csv<R: Read>(r: R) -> Result<Vec<PseudorangeSet>, GnssError> {
    let mut sets: Vec<PseudorangeSet> = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line.map_err(|e| GnssError::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(GnssError::Parse(format!("expected 4 fields, got {}", fields.len())));
        }
        let epoch: f64 = fields[0].trim().parse().map_err(|_| GnssError::Parse(line.into()))?;
        let prn: u32 = fields[1].trim().parse().map_err(|_| GnssError::Parse(line.into()))?;
        let rho: f64 = fields[2].trim().parse().map_err(|_| GnssError::Parse(line.into()))?;
        let cn0: f64 = fields[3].trim().parse().map_err(|_| GnssError::Parse(line.into()))?;
        match sets.last_mut() {
            Some(s) if s.epoch == epoch => s.observations.push(PseudorangeObs { prn, rho, cn0 }),
            _ => sets.push(PseudorangeSet {
                epoch,
                observations: vec![PseudorangeObs { prn, rho, cn0 }],
            }),
        }
    }
    Ok(sets)
}
