//! Heat-kernel embeddings of compact Riemannian manifolds, their conformal
//! defect and first-order correction, the pointwise right inverses of the jet
//! operators, and Günther's fixed-point iteration to conformal immersions.

pub mod error;
pub mod geometry;
pub mod spectrum;
pub mod embedding;
pub mod freemap;
pub mod guenther;
pub mod analysis;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
