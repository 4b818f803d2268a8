//! Dense linear algebra and the differentiable pieces needed to train small
//! autoencoders with hand-derived gradients.

mod autoencoder;
pub mod checkpoint;
mod gradcheck;
mod matrix;
mod optim;

pub use autoencoder::{
    sigmoid, Activation, Autoencoder, AutoencoderSpec, ForwardCache, ForwardPass, Gradients, Layer,
    LayerGrad, Mode,
};
pub use gradcheck::{finite_diff_check, MIN_PROBED_COORDINATES};
pub use matrix::{axpy, dot, DenseMatrix};
pub use optim::{Optimizer, OptimizerKind};
