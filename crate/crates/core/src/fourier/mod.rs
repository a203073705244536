//! Periodic-grid fields, Littlewood–Paley blocks and the norms built on them.

pub mod dyadic;
pub mod field;
pub mod grid;
pub mod interp;
pub mod norms;
pub mod sample;

pub use dyadic::DyadicBlockSet;
pub use field::{FieldShape, GridField};
pub use grid::PeriodicGrid;
pub use interp::{InterpMode, Interpolant};
pub use norms::{norm, Norm};
pub use sample::{band_limited_field, holder_sample, holder_sample_vector};
