//! Numerical groundstates and least-action nodal solutions of the Choquard
//! equation `-Δu + u = (I_α * |u|^p) |u|^{p-2} u` on a truncated periodic box.

pub mod diagnostics;
pub mod error;
mod fft;
pub mod functional;
pub mod grid;
pub mod io;
pub mod nehari;
pub mod params;
pub mod riesz;
pub mod solver;

pub use diagnostics::{DiagnosticsReport, ExploratoryReport};
pub use error::{Error, Result};
pub use functional::{Choquard, EnergyBreakdown};
pub use grid::{Field, Grid};
pub use nehari::{FiberingPoint, NodalProjection};
pub use params::Params;
pub use riesz::RieszKernel;
pub use solver::{Continuation, ContinuationRecord, SolveConfig, SolveReport, Solution};
