//! Numerics for Wick-rotated PT-symmetric optical resonators.
//!
//! The crate covers the full chain from a mirror profile to laser output:
//!
//! * [`lattice`] samples complex potentials and assembles the operator
//!   `H = -d²/dx² + V(x) - g0` on a Dirichlet grid.
//! * [`spectra`] computes its complex spectrum, locates the PT-breaking
//!   threshold and extracts the pair of modes with equal gain threshold.
//! * [`dynamics`] integrates `dψ/dt = -Hψ - |ψ|²ψ` from noise and classifies
//!   the output power as stationary or oscillatory.
//! * [`weaknl`] evaluates self/cross saturation and the two-mode amplitude
//!   equations near threshold.
//! * [`dimer`] covers the two-site reduced model, its polar form, the Adler
//!   phase equation and the extraction of reduced parameters.
//! * [`roundtrip`] implements the discrete resonator map and the
//!   physical-unit conversions.

pub mod dimer;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod lattice;
pub mod roundtrip;
pub mod spectra;
pub mod table;
pub mod weaknl;

pub use error::{Error, Result};
pub use num_complex::Complex64;
