//! Random products in the Lorentz group U(L,L) acting on the flag manifold of
//! isotropic frames, with Monte Carlo and perturbative tools for the
//! Lyapunov spectrum of randomly coupled wires.

pub mod cli;
pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod frame;
pub mod liealg;
pub mod matrix;
pub mod perturbation;
pub mod scenarios;
pub mod stats;
pub mod wires;

pub use dynamics::{act, run_chain, BirkhoffEstimate, LyapunovSpectrum, Sampling};
pub use ensembles::{sample_w, Ensemble, WignerSpec};
pub use error::{Error, Result};
pub use frame::IsotropicFrame;
pub use matrix::{ComplexMatrix, C64};
pub use stats::{Estimate, RunningStats};
pub use wires::{rotation_group, RotationGroup, WiresModel};
