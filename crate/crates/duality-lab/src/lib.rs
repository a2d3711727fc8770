//! Simulation laboratory for a two-type spatial population system and its
//! dual processes: the discrete voter model with coalescing/annihilating
//! walk duals, a symbiotic-branching SPDE discretization with self- and
//! moment dualities, coloured-particle duals, and continuous-space
//! annihilating/coalescing Brownian particle systems with entrance-law
//! experiments. Every duality identity is wired up as an executable
//! two-sided statistical test.

pub mod accept;
pub mod colour;
pub mod error;
pub mod exp;
pub mod mc;
pub mod particles;
pub mod sbm;
pub mod stats;
pub mod stochastic;
pub mod voter;

pub use error::{Error, Result};
