//! Online system identification and control for finite partially observable
//! Markov decision processes.
//!
//! A finite POMDP excited by a fixed observation-conditioned behavior policy
//! is a hidden Markov model whose emissions are the extended observations
//! `(o, a, r)`. This crate implements the recursive estimators that exploit
//! that reduction, together with the policies built on top of them:
//!
//! * [`pomdp`] - the ground-truth model, behavior policy, and seedable
//!   step-by-step simulation;
//! * [`theta`] - the softmax-realized parameter vector, its box constraint
//!   set, and analytic derivatives of the emission likelihood and of the
//!   induced state chain;
//! * [`filter`] - the Bayesian belief predictor, its parameter-Jacobian
//!   recursion, the per-step log-likelihood, and the score vector;
//! * [`estim`] - the three concurrent recursive estimators: projected
//!   stochastic gradient ascent on the likelihood, belief-weighted Q-table
//!   updates, and joint transition estimation;
//! * [`baseline`] - classical tabular Q-learning under full and partial
//!   observation, a value-iteration oracle, and state-relabeling search;
//! * [`policy`] - the frozen-parameter dynamic policy (action-conditioned
//!   belief filter plus belief-weighted greedy actions) and the episodic
//!   evaluation protocol.
//!
//! All estimation state is held in plain value types; a run is advanced by
//! pure step functions, so runs with distinct seeds parallelize trivially.
//!
//! The crate is `no_std`-compatible (an allocator is required). Building
//! without `std` requires the `libm` feature for the float math.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

use alloc::string::String;
use core::fmt;

pub mod baseline;
pub mod estim;
pub mod filter;
mod math;
pub mod policy;
pub mod pomdp;
pub mod presets;
pub mod rng;
pub mod theta;

/// Errors produced by simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// The emission likelihood carries no mass under the current belief.
    DegenerateLikelihood,
    /// Exhaustive relabeling search refused; `I!` permutations is too many.
    TooManyStates(usize),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DegenerateLikelihood => {
                write!(f, "emission likelihood has no mass under the current belief")
            }
            Error::TooManyStates(n) => {
                write!(f, "refusing exhaustive permutation search over {n} states")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
