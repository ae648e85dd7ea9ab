// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod costmap;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod raster;
pub mod simcore;
pub mod terrain;
pub mod vision;
