//! Brute-force reference implementations.
//!
//! Nothing in this crate shares code with `clifford-core`. Every routine works
//! on plain slices in the same memory layout as the production types
//! (blade-major, then channel, then row-major spatial) so results can be
//! compared element by element. Speed is not a goal; grids should stay small.

pub mod blades;
pub mod conv;
pub mod dft;
pub mod quat;
pub mod whiten;

pub use blades::{canonical_blades, oracle_gp, SymbolicBladeProduct};
pub use conv::{oracle_conv, Padding};
pub use dft::oracle_dft;
pub use quat::{hamilton, rotate_vector};
pub use whiten::{covariance, inv_sqrt_spd};
