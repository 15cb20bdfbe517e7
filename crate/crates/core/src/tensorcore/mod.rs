//! Grids, trapezoid quadrature and the data containers shared by the pipeline.

mod grid;
mod sample;
mod tensor;

pub use grid::{make_trapezoid_grid, weighted_inner_product, Grid1D};
pub use sample::FunctionalSample;
pub use tensor::{center, HybridTensor, MeanArray};
