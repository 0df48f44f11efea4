//! Energy-aware dynamic variability: concern models, energy profiles,
//! sustainability analysis, an adaptation loop and a Media Store simulator.

pub mod analysis;
pub mod bundled;
pub mod mediastore;
pub mod model;
mod pwl;
pub mod repository;
pub mod rules;
pub mod runtime;
pub mod sim;
