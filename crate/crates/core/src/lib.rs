//! Locally-balanced Markov jump processes on discrete and continuous spaces.

pub mod acceptance;
pub mod balancing;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod hitting;
pub mod instances;
pub mod io;
pub mod jumprate;
pub mod model;
pub mod nonrev;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod stats;

pub use balancing::Balancing;
pub use error::{Error, Result};
pub use model::{BaseKernel, RatioOracle, State, Target};
pub use rng::SeededStream;
