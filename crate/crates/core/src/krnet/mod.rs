//! Complex-valued dual-domain network with a hand-written reverse pass.

mod layers;
mod network;
mod scalar;
mod tensor;

pub use layers::{conv_param_count, cprelu, cv_conv, CPReLUParams, ConvLayerParams, SpectralPlans};
pub use network::{
    loss_l1, loss_l1_grad, ConvSlot, KrNet, NetworkConfig, PreluSlot, Tape, Variant, INIT_ETA, KR_BLOCKS,
};
pub use scalar::Real;
pub use tensor::ComplexTensor;
