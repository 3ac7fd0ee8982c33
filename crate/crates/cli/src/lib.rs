//! Vector generation, replay and reporting around the dot product golden model.

pub mod gen;
pub mod report;
pub mod run;
pub mod vectors;
