//! Certified truncation-error bounds for a quantum system coupled to a
//! chain-mapped bosonic bath.
//!
//! The crate builds the chain representation of a bath ([`spectral_chain`]),
//! propagates its quadratic dynamics exactly ([`quadratic_dynamics`]),
//! evaluates the chain-length truncation bound ([`spatial_bound`]), assembles
//! Fock-truncated Hamiltonians ([`fock_space`]) and computes the Fock
//! truncation bound together with the combined certificate ([`fock_bound`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fock_bound;
pub mod fock_space;
pub mod quadratic_dynamics;
pub mod quadrature;
pub mod spatial_bound;
pub mod spectral_chain;

pub use error::{Error, Result};
