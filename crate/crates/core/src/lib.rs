//! Conditional kernels of determinantal point processes on finite ground
//! sets, with exact samplers, an enumeration oracle, and numerical checks of
//! the martingale, locality, variance, completeness and tail identities.

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod palm;
pub mod sampling;
pub mod verification;

pub use error::{DppError, Result};
pub use kernel::{
    compress, dilate_to_projection, discretize_kernel, kernel_column, range_projector,
    validate_kernel, Configuration, GroundSet, KernelMatrix, KernelTolerances, SiteSubset,
};

// The guide's snippets run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/kernels.md")]
    struct Kernels;
    #[doc = include_str!("../../../book/src/conditioning.md")]
    struct Conditioning;
    #[doc = include_str!("../../../book/src/sampling.md")]
    struct Sampling;
    #[doc = include_str!("../../../book/src/checks.md")]
    struct Checks;
}
