//! Recognizer and auxiliary classifier forward passes.
//!
//! All functions place their computation on a caller-owned tape and look
//! parameters up by name in a [`Bound`](crate::autodiff::Bound), so the same
//! code serves training (trainable leaves), frozen sub-networks (constant
//! leaves), and inference.

mod config;
mod model;
mod schema;

pub use config::{AuxConfig, Conditioning, ConvSpec, EncoderConfig, ModelConfig};
pub use model::{
    aux_forward, cross_attention, fuse, mdd_forward, one_hot_conditioning, phoneme_encode, speech_encode,
    Attention, AuxOutput, MddInput, MddOutput, PhonemeEncoding, SpeechEncoding,
};
pub use schema::{aux_schema, init_params, is_aux_param, is_conv_param, mdd_schema, Init, ParamSpec, AUX_PREFIX};
