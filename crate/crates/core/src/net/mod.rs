//! A small reverse-mode autodiff core and the U-Net built on it.

pub mod adam;
pub mod checkpoint;
pub mod desk;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod tensor;
pub mod train;
pub mod unet;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;
pub use train::{infer_normals, train, EpochStats, TrainHistory, TrainOptions, TrainOutcome};
pub use unet::{UNet, UNetConfig};
