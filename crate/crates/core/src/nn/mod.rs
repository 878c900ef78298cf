//! From-scratch convolutional classifier.

mod checkpoint;
pub mod layers;
mod loss;
mod network;
mod optim;
mod tensor;
mod train;

pub use checkpoint::Checkpoint;
pub use layers::Mode;
pub use loss::{class_weights_from_frequencies, softmax, softmax_cross_entropy};
pub use network::{batch_loss, Cache, Gradients, Layer, LayerSpec, Network, NetworkSpec, ShapeRow};
pub use optim::sgdm_step;
pub use tensor::Tensor;
pub use train::{
    predict, train, write_curves_csv, CurvePoint, Split, TrainConfig, TrainOutcome,
};
