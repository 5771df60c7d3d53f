//! Parametric HDR illumination: equirectangular panoramas are split into a
//! low-frequency ambient part, stored as real spherical harmonics, and a
//! sparse set of light sources, stored as spherical Gaussians on fixed
//! Vogel-spiral anchors.

pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod params;
pub mod sg;
pub mod sh;
pub mod sparsity;
pub mod sphere;

pub use error::{Error, Result};
pub use image::EquirectImage;
pub use sh::ShCoeffs;
pub use sphere::{AnchorSet, GridGeometry, SphereDir, WeightingMode};
