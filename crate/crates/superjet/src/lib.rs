//! Exact symbolic engine for graded differential polynomial algebras on jet
//! superspaces: Schouten brackets, super tau-covers of bihamiltonian
//! hierarchies and deformed Virasoro symmetries.

pub mod ansatz;
pub mod cli;
pub mod coeff;
pub mod diffpoly;
pub mod error;
pub mod frobenius;
pub mod linsolve;
pub mod parse;
pub mod superext;
pub mod variational;
pub mod virsolve;

pub use coeff::{Poly, Rf, Q};
pub use diffpoly::{Base, Ctx, DiffPoly, Generator, JetContext, Mono};
pub use error::{Error, Result};
