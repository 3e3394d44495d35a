//! Layers, loss, and optimizer for the three classifier architectures:
//! embedding, dense blocks (affine → batch norm → relu → dropout), 1-D
//! convolution with max pooling, LSTM, GRU, additive self-attention,
//! class-weighted focal loss, and Adam.

mod adam;
mod init;
mod layers;
mod loss;
mod recurrent;

pub use adam::{Adam, AdamConfig};
pub use init::{glorot_uniform, orthogonal};
pub use layers::{
    global_maxpool, maxpool1d, AdditiveAttention, BatchNorm, Conv1d, Dense, DenseBlock, Embedding,
    Mode,
};
pub use loss::{cross_entropy, focal_loss, FocalLossConfig};
pub use recurrent::{Gru, Lstm};
