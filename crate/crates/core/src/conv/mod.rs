//! Standard convolution, DcSConv, DMSF and GLSConv.

mod dcsconv;
mod dmsf;
mod glsconv;
mod kernel;
mod naive;
mod standard;

pub use dcsconv::{dcsconv_backward, dcsconv_forward, DcsConvGrads, ScaleGradient};
pub use dmsf::{dmsf_forward, dmsf_weights, DmsfParams, DEFAULT_SIGMA, DMSF_BRANCH_SIZES};
pub use glsconv::{
    glsconv_backward, glsconv_forward, DepthToScale, GlsConvGrads, ScaleHeadParams, DEFAULT_DEPTH_EPSILON,
};
pub(crate) use glsconv::sigmoid;
pub use kernel::ConvKernel;
pub use naive::conv2d_naive_oracle;
pub use standard::{conv2d, conv2d_backward, conv2d_standard};
