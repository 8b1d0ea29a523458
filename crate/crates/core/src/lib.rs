//! Driven-dissipative Bose-Hubbard chains: mean field, Bogoliubov
//! fluctuations, higher-order correlation closures, truncated Wigner
//! sampling, and the resonance geometry of parametric scattering.

pub mod bogoliubov;
pub mod config;
pub mod contour;
pub mod disorder;
pub mod error;
pub mod grid;
pub mod hc;
pub mod hoc;
pub mod mean_field;
pub mod observables;
pub mod ode;
pub mod output;
pub mod params;
pub mod runner;
pub mod stats;
pub mod twa;

pub use error::{Error, ErrorFamily, Result};
pub use grid::Grid;
pub use params::{Branch, Detuning, Drive, ModelParams};
