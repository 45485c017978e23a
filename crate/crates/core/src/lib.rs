//! Numerical toolkit for compiled tilted-CHSH games: Bell and compiled model
//! evaluation, sum-of-squares certificates, pseudo-expectations, robust
//! self-testing bounds, Naimark dilation and a two-round protocol simulator.

pub mod angle;
pub mod bell;
pub mod compiled;
pub mod dilation;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod monomial;
pub mod protocol;
pub mod pseudo;
pub mod qhe;
pub mod random;
pub mod selftest;
pub mod tilted;

pub use error::{Error, Result};
