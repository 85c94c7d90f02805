//! Stereo feature-based FastSLAM.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod fastslam;
pub mod features;
pub mod frontend;
pub mod geom;
pub mod pipeline;
pub mod sim;
pub mod stereo;
