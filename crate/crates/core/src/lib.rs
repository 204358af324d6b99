//! Depth-converted-scale convolution operators.
//!
//! Everything here works on dense `f64` NCHW tensors ([`Tensor4`]). Scale maps
//! derived from depth ([`geometry`]) steer the sampling grid of DcSConv
//! ([`conv`]); the attention fusion block ([`fusion`]) and the progressive
//! decoder ([`decoder`]) are built from those pieces. Every backward pass is
//! written by hand and verified against central finite differences
//! ([`gradcheck`]).

pub mod conv;
pub mod decoder;
pub mod dten;
mod error;
pub mod fusion;
pub mod geometry;
pub mod gradcheck;
pub mod oracle;
pub mod params;
pub mod pgm;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use params::ParamSet;
pub use tensor::{Shape4, Tensor4};
