//! Command-line and HTTP front ends for the ecoloop toolkit.

pub mod api;
pub mod artifacts;
