//! Multifractal analysis of inhomogeneous Bernoulli products (coin tossing
//! measures) on the dyadic tree.
//!
//! * [`weights`]: weight sequences, block schedules, cylinder masses, sampling.
//! * [`spectrum`]: `τ(p, q)`, Cesàro partial spectra, Legendre transforms, `D_q`.
//! * [`gibbs`]: Gibbs transforms, entropy dimensions, dimension bounds, local dimensions.
//! * [`transitions`]: convex combinations of single-weight spectra, the local
//!   perturbation creating two phase transitions, and the dense construction.
//! * [`coarse`]: exact coarse singularity spectra by cylinder counting.

pub mod coarse;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod spectrum;
pub mod transitions;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use spectrum::{TauGrid, Window};
pub use transitions::ConvexCombo;
pub use weights::{BlockSchedule, Cylinder, Probability, WeightSequence};
