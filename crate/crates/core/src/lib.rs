//! GNSS + fish-eye vision fused localization with integrity monitoring.
//!
//! The crate estimates a vehicle state in ECEF by fusing GPS pseudoranges,
//! satellite ephemeris, a vehicle motion model and direct photometric
//! measurements from an upward-facing fish-eye camera inside a sliding-window
//! robust graph optimizer. Per-measurement fault statuses are derived from
//! residual statistics (GPS) and superpixel-wise RANSAC voting (vision), and
//! a position protection level is computed from the worst-case failure-mode
//! slope of the linearized estimator.
//!
//! Modules follow the processing order: [`camera`] and [`sky`] pre-process
//! imagery, [`gnss`] models pseudoranges, [`graph`] runs the windowed
//! optimization, [`fdi`] detects faults, [`integrity`] turns the fault mode
//! into a protection level, [`sim`] synthesizes test scenarios and
//! [`pipeline`] ties everything into batch runs.

pub mod camera;
pub mod fdi;
pub mod gnss;
pub mod graph;
pub mod grid;
pub mod integrity;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod sky;
pub mod stats;

pub use grid::Grid;
pub use model::{Dims, OverallState, PixelLandmark, SatelliteState, VehicleState};
