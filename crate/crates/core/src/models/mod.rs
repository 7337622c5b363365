//! Closed-form `H(q)` families and their constraint sets.

mod bachelier;
mod digital;
mod twod;

pub use bachelier::{BachelierMaker, BachelierSpec};
pub use digital::{digital_constraint_interval, digital_h, digital_interval_gaps, digital_v, DigitalMaker, DigitalSpec};
pub use twod::{region_raster, twod_region_membership, Membership, RegionRaster, TwoDDigitalSpec};
