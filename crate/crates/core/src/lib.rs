//! Boundary layer expansions for the linearized compressible Navier–Stokes–Fourier
//! system on the half plane, and a direct solver to check them against.

pub mod acoustic;
pub mod characteristic;
pub mod checks;
pub mod composer;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod io;
pub mod jet;
pub mod layers;
pub mod model;
pub mod prandtl;
pub mod reference;

pub use error::{Error, Result};
pub use field::StateField;
pub use grid::{Grid, GridSpec, LayerGrid, TimeGrid};
pub use model::{BackgroundState, EquationOfState, ViscosityScaling};
