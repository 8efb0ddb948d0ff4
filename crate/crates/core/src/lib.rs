pub mod arith;
pub mod bfree;
pub mod error;
pub mod exponents;
pub mod expsum;
pub mod hecke;
pub mod kloosterman;
pub mod rational;
pub mod sieveweights;

pub use error::{Error, Result};
pub use rational::Rational;

pub use bfree::{BSet, IntervalReport, Tail};
pub use exponents::{ExponentPair, RhoHypothesis, ThetaFormula};
pub use hecke::{Coeff, HeckeForm, TauTable};
pub use sieveweights::{Variant, WeightParams, WeightSystem};
