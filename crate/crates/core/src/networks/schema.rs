//! Parameter names, shapes, and initializers for each network.

use rand::Rng as _;

use super::config::{AuxConfig, EncoderConfig, ModelConfig};
use crate::autodiff::{ParamStore, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const AUX_PREFIX: &str = "aux.";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

#[derive(Default)]
struct Schema(Vec<ParamSpec>);

impl Schema {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) {
        self.0.push(ParamSpec { name, rows, cols, init });
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.add(format!("{prefix}.w"), d_in, d_out, Init::Uniform { fan_in: d_in });
        self.add(format!("{prefix}.b"), 1, d_out, Init::Zeros);
    }

    fn weight(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.add(format!("{prefix}.w"), d_in, d_out, Init::Uniform { fan_in: d_in });
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.add(format!("{prefix}.g"), 1, d, Init::Ones);
        self.add(format!("{prefix}.b"), 1, d, Init::Zeros);
    }

    fn encoder(&mut self, prefix: &str, cfg: &EncoderConfig) {
        let mut channels = cfg.input_dim;
        for (i, c) in cfg.conv.iter().enumerate() {
            self.linear(&format!("{prefix}.conv{i}"), c.kernel * channels, c.channels);
            channels = c.channels;
        }
        self.linear(&format!("{prefix}.proj"), channels, cfg.d_model);
        let d = cfg.d_model;
        for b in 0..cfg.blocks {
            let p = format!("{prefix}.block{b}");
            self.norm(&format!("{p}.ln1"), d);
            self.linear(&format!("{p}.attn.q"), d, d);
            self.weight(&format!("{p}.attn.k"), d, d);
            self.linear(&format!("{p}.attn.v"), d, d);
            self.linear(&format!("{p}.attn.o"), d, d);
            self.norm(&format!("{p}.ln2"), d);
            self.linear(&format!("{p}.ffn1"), d, cfg.ffn_dim);
            self.linear(&format!("{p}.ffn2"), cfg.ffn_dim, d);
        }
        self.norm(&format!("{prefix}.ln_f"), d);
    }

    fn lstm(&mut self, prefix: &str, d_in: usize, d_h: usize) {
        self.add(format!("{prefix}.wx"), d_in, 4 * d_h, Init::Uniform { fan_in: d_h });
        self.add(format!("{prefix}.wh"), d_h, 4 * d_h, Init::Uniform { fan_in: d_h });
        self.add(format!("{prefix}.b"), 1, 4 * d_h, Init::Zeros);
    }
}

/// Parameters of the primary recognizer. Aux parameters live separately.
pub fn mdd_schema(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = Schema::default();
    s.encoder("speech", &cfg.encoder);
    if cfg.phoneme_encoder {
        s.add("phon.emb".into(), cfg.num_phonemes, cfg.d_emb, Init::Uniform { fan_in: 1 });
        s.lstm("phon.fwd", cfg.d_emb, cfg.d_h);
        s.lstm("phon.bwd", cfg.d_emb, cfg.d_h);
        s.linear("xattn.q", cfg.encoder.d_model, cfg.d_attn);
        s.weight("xattn.k", 2 * cfg.d_h, cfg.d_attn);
        s.linear("xattn.v", 2 * cfg.d_h, cfg.d_attn);
    }
    s.linear("fuse.proj", cfg.d_fused(), cfg.projection_dim);
    s.linear("head", cfg.projection_dim, cfg.num_classes());
    s.0
}

/// Parameters of the auxiliary classifier, all under [`AUX_PREFIX`].
pub fn aux_schema(cfg: &AuxConfig) -> Vec<ParamSpec> {
    let mut s = Schema::default();
    s.encoder("aux.speech", &cfg.encoder);
    s.linear("aux.eps", cfg.encoder.d_model, cfg.d_eps);
    s.linear("aux.l1_head", cfg.d_eps, cfg.l1_classes.len());
    s.linear("aux.l2_head", cfg.d_eps, cfg.l2_classes.len());
    s.0
}

/// Draws every parameter in schema order from `rng`.
pub fn init_params<S: Scalar>(schema: &[ParamSpec], rng: &mut Rng) -> ParamStore<S> {
    let mut store = ParamStore::new();
    for p in schema {
        let n = p.rows * p.cols;
        let data: Vec<S> = match p.init {
            Init::Zeros => vec![S::zero(); n],
            Init::Ones => vec![S::one(); n],
            Init::Uniform { fan_in } => {
                let a = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| S::lit(rng.random_range(-a..a))).collect()
            }
        };
        store.insert(p.name.clone(), Tensor::matrix(p.rows, p.cols, data).expect("schema shape"));
    }
    store
}

/// Whether `name` is a convolution parameter of some speech encoder.
pub fn is_conv_param(name: &str) -> bool {
    name.split('.').any(|part| part.starts_with("conv") && part[4..].parse::<usize>().is_ok())
}

pub fn is_aux_param(name: &str) -> bool {
    name.starts_with(AUX_PREFIX)
}
