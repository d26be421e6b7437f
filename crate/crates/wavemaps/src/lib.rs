//! A desk-scale numerical laboratory for the nonlinear stability of the
//! explicit blowup family of co-rotational wave maps, studied in
//! hyperboloidal similarity coordinates.

pub mod cauchy;
pub mod config;
pub mod coords;
pub mod descent;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod fit;
pub mod grid;
pub mod hscflow;
pub mod linspec;
pub mod ode;
pub mod quad;
pub mod radial1d;
pub mod report;

pub use error::{Result, WmError};
