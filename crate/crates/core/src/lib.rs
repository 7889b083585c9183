//! Vector magnetometry with nitrogen-vacancy (NV) centers in diamond.
//!
//! The crate goes from raw lock-in ODMR sweeps to a 3D field vector:
//!
//! - [`crystal`]: the cubic crystal frame, the four ⟨111⟩ NV axes and the
//!   spherical convention `(B_M, θ, φ)` with θ the latitude measured from the
//!   yz-plane towards +x and φ the longitude in the yz-plane measured from +y.
//! - [`spinmodel`]: the spin-1 ground-state Hamiltonian of each NV axis, its
//!   transition frequencies (including the −1 → +1 double-quantum line) and
//!   drive strengths.
//! - [`spectrum`]: derivative-Lorentzian spectra, synthetic traces and the
//!   shared-linewidth multi-resonance fit.
//! - [`inversion`]: bounded multistart least squares from four fitted
//!   resonance centers to `(B_M, θ, φ)`.
//! - [`noise`]: averaged amplitude spectral densities, band sensitivity,
//!   lock-in volts to field conversion and tone extraction.
//! - [`scanpipe`]: grid-scan ingest, the per-pixel pipeline, map output and
//!   the `nvmag` command line.
//!
//! Units: frequencies in MHz, fields in mT and angles in degrees unless a
//! function says otherwise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crystal;
pub mod error;
pub mod inversion;
pub mod lsq;
pub mod noise;
pub mod scanpipe;
pub mod spectrum;
pub mod spinmodel;

pub use error::{Error, Result};
