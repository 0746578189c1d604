//! Piecewise expanding interval maps, non-autonomous sequences and cylinders.

pub mod map;
pub mod mobius;
pub mod sequence;
pub mod spec;

pub use map::{Branch, MapKind, PiecewiseMap, SymbolSet};
pub use mobius::Mobius;
pub use sequence::{Assumption, Certificate, Chain, Cylinder, MapSequence};
pub use spec::{MapSpec, Schedule};
