//! Static-plus-profile analysis of GPU kernel disassembly.
//!
//! The pipeline runs listing text through [`sass::parse_listing`], splits it
//! into a control flow graph with [`cfg::build_cfg`], attaches offline
//! profile counts with [`cfg::attribute_profile`], and turns the result into
//! a [`matrix::TransitionMatrix`]. Matrices of different sizes are compared
//! after bilinear rescaling ([`matrix::normalize_pair`]) with the measures in
//! [`sim`], and kernels are grouped with Ward clustering in [`cluster`].

pub mod cfg;
pub mod cli;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod profile;
pub mod sass;
pub mod sim;

pub use error::{Error, Result};
