mod basic;
mod conv;
mod dropout;
mod layout;
mod norm;
mod pool;

pub use basic::{add, log_softmax_lastdim, mean, mul, relu, scale, softmax_lastdim, sum};
pub use conv::{conv2d, conv_output_extent, depthwise_conv2d, depthwise_separable_conv, Conv2dSpec};
pub use dropout::{dropout_channel, dropout_elementwise};
pub use layout::{collapse_rows, uncollapse_rows};
pub use norm::{instance_norm, INSTANCE_NORM_EPS};
pub use pool::adaptive_max_pool_vertical;
