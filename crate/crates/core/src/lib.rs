//! Distortion-based lightweight security for linear dynamical systems.
//!
//! A transmitter (Alice) shares a short secret key with a receiver (Bob) and
//! encodes the state trajectory of a linear plant so that Bob decodes it
//! losslessly while a passive eavesdropper (Eve) is left with an ambiguity set
//! of far-apart candidate trajectories. The crate provides:
//!
//! * [`system`]: the plant `x' = A x + B u + w`, simulation and a KKT-based
//!   trajectory planner.
//! * [`distribution`]: Gaussian, random-walk and empirical trajectory laws,
//!   plus point-symmetry detection.
//! * [`mirror`]: key-indexed reflection encoders (1-bit and k-bit).
//! * [`shift_mirror`]: shifting+mirroring encoders for worst-case distortion
//!   and the window-width optimizer.
//! * [`adversary`]: Eve's posterior, MMSE estimate and every distortion
//!   evaluator (closed form, quadrature, Monte Carlo, worst case).
//! * [`bounds`]: input-to-state distortion bounds.
//! * [`experiments`]: the experiment runners behind the `distortia` CLI.

pub mod adversary;
pub mod bounds;
pub mod config;
pub mod distribution;
pub mod error;
pub mod experiments;
pub mod mirror;
pub mod numeric;
pub mod report;
pub mod shift_mirror;
pub mod system;

pub use error::{Error, Result};

/// A time-indexed sequence of state (or symbol) vectors `X_1..X_T`.
pub type Path = Vec<nalgebra::DVector<f64>>;
