pub mod connectivity;
pub mod error;
pub mod experiments;
pub mod iic;
pub mod invasion;
pub mod lattice;
pub mod scaling;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{AnnulusRegion, BoxRegion, DualEdge, Edge, Orientation, Region, Site};
pub use weights::{EdgeWeights, WeightField};
