//! Library side of the `vctp` binary.

pub mod attack;
pub mod bench;
pub mod registry;
pub mod scenario;
