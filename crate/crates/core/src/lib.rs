//! Hermite expansions, needlet frames on the Hermite-zero tiling, weighted
//! Besov and Triebel–Lizorkin norms, and embedding diagnostics.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod expansion;
pub mod frames;
pub mod hermite;
pub mod io;
pub mod jet;
pub mod multipliers;
pub mod norms;
pub mod quadrature;
pub mod tiles;
pub mod weights;

pub use error::{Error, Result};
