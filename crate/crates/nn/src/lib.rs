//! Dense tensor kernels and the RODNet-lite radar detection network, with
//! hand-written backward passes.

pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod layers;
pub mod loss;
pub mod model;
pub mod real;
pub mod tdc;
pub mod tensor;
pub mod train;

pub use conv::{conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward};
pub use conv::{Conv3dGrads, Conv3dKernel, ConvTranspose3dKernel};
pub use error::{NnError, Result};
pub use layers::{inception_forward, mnet_forward, Inception, Layer, MNet, TdcLayer};
pub use loss::{bce_loss, Reduction};
pub use model::{rodnet_forward, Backbone, ModelConfig, RodnetModel};
pub use real::Real;
pub use tdc::{tdc_backward, tdc_forward, TdcGrads};
pub use tensor::{Dims4, Tensor};
pub use train::{sgd_train, sgd_train_with, Dataset, TrainConfig, TrainOutcome};
