//! Cellular sheaves on graphs and the linear operators built from them.

mod block;
mod cellular;
mod graph;
mod operators;
mod spectral;

pub use block::{BlockRef, BlockSparseBuilder, BlockSparseMatrix};
pub use cellular::{CellularSheaf, Cochain0, Cochain1, EdgeMaps, SheafEdgeRecord, SheafFile};
pub use graph::{Edge, Graph};
pub use operators::{
    apply, apply_power, coboundary, diffusion_alpha, diffusion_normalized, normalized_laplacian,
    sheaf_laplacian, sheaf_normalized_laplacian, SINGULAR_BLOCK_TOL,
};
pub use spectral::{
    fit_polynomial_filter, global_sections, polynomial_filter, spectral_convolve, SpectralBasis,
    SECTION_TOL,
};
