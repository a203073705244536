//! Numerical laboratory for jump SDEs driven by symmetric α-stable-like noise
//! with Hölder drift.
//!
//! The crate is organised bottom-up: Lévy measures and their samplers,
//! periodic-grid Fourier analysis, the nonlocal operator and its resolvent,
//! the Zvonkin change of variables, and finally the path solvers (Picard,
//! Euler, Malliavin differences, random ODEs).

pub mod error;
pub mod fourier;
pub mod levy_model;
pub mod levy_sampler;
pub mod linalg;
pub mod nonlocal_op;
pub mod numerics;
pub mod pbp_ode;
pub mod resolvent;
pub mod sde_engine;
pub mod zvonkin;

pub use error::{Error, Result};
pub use linalg::{DMat, DVec};
