//! Random interlacements on `Z^d`: sampling, potential theory and numerical checks.

pub mod appendix;
pub mod continuum;
pub mod disconnection;
pub mod entropic;
pub mod error;
pub mod excursions;
pub mod lattice;
pub mod metrics;
pub mod shape;
pub mod stats;
pub mod verify;
pub mod special;
pub mod gauge;
pub mod green;
pub mod pointset;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod symmetry;
pub mod transport;

pub use error::{Error, Result};
pub use lattice::{blow_up, BlowUpPair, DiscreteBox, LatticePoint};
pub use shape::CompactSet;
