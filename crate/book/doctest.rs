//! The guide's chapters, included so their listings run as doc-tests.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/reservoir.md")]
pub mod reservoir {}
#[doc = include_str!("src/trial.md")]
pub mod trial {}
#[doc = include_str!("src/linear.md")]
pub mod linear {}
#[doc = include_str!("src/bernoulli.md")]
pub mod bernoulli {}
#[doc = include_str!("src/systems.md")]
pub mod systems {}
#[doc = include_str!("src/hyperopt.md")]
pub mod hyperopt {}
#[doc = include_str!("src/harness.md")]
pub mod harness {}
