//! Sum-of-squares certificates of Zeno stability for polynomial hybrid systems.

pub mod poly;
pub mod sdp;
pub mod sos;
pub mod hybrid;
pub mod zeno;
pub mod scalar;

pub use scalar::Scalar;

/// Double-precision polynomial, the type used throughout the synthesis pipeline.
pub type Polynomial = poly::Poly<f64>;
pub type PolyVector = poly::PolyVec<f64>;
