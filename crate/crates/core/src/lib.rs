//! Varying-tree random hierarchy model: grammar generation, exact parsing,
//! analytic predictions, and a method-of-moments grammar learner.

pub mod analytics;
pub mod chart;
pub mod error;
pub mod grammar;
pub mod inside;
pub mod io;
pub mod learner;
pub mod rng;
pub mod snr;
pub mod splits;

pub use error::{Error, Result};
pub use grammar::{Derivation, Example, Grammar, GrammarParams, RuleLevel, Symbol};
pub use rng::{SeedStream, StreamKind};
