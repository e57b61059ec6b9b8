//! Dense and convolutional layers, reverse-mode gradients, ADAM and
//! complexity counting.

mod adam;
mod io;
mod layers;
mod model;

pub use adam::AdamState;
pub use io::{read_model, read_model_file, write_model, write_model_file};
pub use layers::{BlockStack, ConvLayer, DenseLayer, Layer, NeuralBlock, Padding, Shape, Upsample};
pub use model::{count_complexity, layer_complexity, mse_loss, Complexity, NetModel};
