use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the recognizer is told about the speaker's languages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Conditioning {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "onehot-l2")]
    OneHotL2,
    #[serde(rename = "onehot-l1")]
    OneHotL1,
    #[serde(rename = "onehot-l1l2")]
    OneHotL1L2,
    /// Utterance embedding of the auxiliary language-identification network.
    #[serde(rename = "aux")]
    Aux,
}

impl Conditioning {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown conditioning mode {s:?}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Conditioning::None => "none",
            Conditioning::OneHotL2 => "onehot-l2",
            Conditioning::OneHotL1 => "onehot-l1",
            Conditioning::OneHotL1L2 => "onehot-l1l2",
            Conditioning::Aux => "aux",
        }
    }

    pub fn uses_l1(self) -> bool {
        matches!(self, Conditioning::OneHotL1 | Conditioning::OneHotL1L2)
    }

    pub fn uses_l2(self) -> bool {
        matches!(self, Conditioning::OneHotL2 | Conditioning::OneHotL1L2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Strided convolutions, a projection to `d_model`, and pre-norm
/// transformer blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub conv: Vec<ConvSpec>,
    pub blocks: usize,
    pub heads: usize,
    pub ffn_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 12,
            d_model: 64,
            conv: vec![
                ConvSpec {
                    channels: 32,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    channels: 32,
                    kernel: 3,
                    stride: 2,
                },
            ],
            blocks: 2,
            heads: 2,
            ffn_dim: 128,
        }
    }
}

impl EncoderConfig {
    /// A large-model-sized context network (24 blocks, width 1024).
    pub fn large(input_dim: usize) -> Self {
        Self {
            input_dim,
            d_model: 1024,
            conv: vec![
                ConvSpec {
                    channels: 512,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    channels: 512,
                    kernel: 3,
                    stride: 2,
                },
            ],
            blocks: 24,
            heads: 16,
            ffn_dim: 4096,
        }
    }

    pub fn total_stride(&self) -> usize {
        self.conv.iter().map(|c| c.stride).product()
    }

    /// Frames after the convolutions.
    pub fn output_frames(&self, input_frames: usize) -> usize {
        self.conv.iter().fold(input_frames, |t, c| t.div_ceil(c.stride))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.conv.iter().any(|c| c.channels == 0 || c.kernel == 0 || c.stride == 0) {
            return Err(Error::Config("conv layers need positive channels, kernel, and stride".into()));
        }
        Ok(())
    }
}

/// Primary recognizer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Size of the phoneme set the model reads and emits (blank excluded).
    pub num_phonemes: usize,
    pub d_emb: usize,
    pub d_h: usize,
    pub d_attn: usize,
    pub d_eps: usize,
    pub projection_dim: usize,
    pub conditioning: Conditioning,
    pub phoneme_encoder: bool,
    pub l1_classes: Vec<String>,
    pub l2_classes: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            num_phonemes: 36,
            d_emb: 32,
            d_h: 32,
            d_attn: 64,
            d_eps: 64,
            projection_dim: 64,
            conditioning: Conditioning::None,
            phoneme_encoder: true,
            l1_classes: vec!["es".into(), "hi".into(), "ko".into(), "ru".into()],
            l2_classes: vec!["ar".into(), "en".into(), "zh".into()],
        }
    }
}

impl ModelConfig {
    pub fn num_classes(&self) -> usize {
        self.num_phonemes + 1
    }

    pub fn blank_id(&self) -> usize {
        self.num_phonemes
    }

    pub fn d_cond(&self) -> usize {
        match self.conditioning {
            Conditioning::None => 0,
            Conditioning::OneHotL2 => self.l2_classes.len(),
            Conditioning::OneHotL1 => self.l1_classes.len(),
            Conditioning::OneHotL1L2 => self.l1_classes.len() + self.l2_classes.len(),
            Conditioning::Aux => self.d_eps,
        }
    }

    /// Width of the fused frame representation.
    pub fn d_fused(&self) -> usize {
        self.encoder.d_model + if self.phoneme_encoder { self.d_attn } else { 0 } + self.d_cond()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.num_phonemes == 0 || self.projection_dim == 0 {
            return Err(Error::Config("num_phonemes and projection_dim must be positive".into()));
        }
        if self.phoneme_encoder && (self.d_emb == 0 || self.d_h == 0 || self.d_attn == 0) {
            return Err(Error::Config("phoneme encoder dims must be positive".into()));
        }
        if self.conditioning == Conditioning::Aux && self.d_eps == 0 {
            return Err(Error::Config("aux conditioning needs d_eps > 0".into()));
        }
        if self.conditioning.uses_l1() && self.l1_classes.is_empty() {
            return Err(Error::Config("L1 conditioning needs a nonempty L1 class list".into()));
        }
        if self.conditioning.uses_l2() && self.l2_classes.is_empty() {
            return Err(Error::Config("L2 conditioning needs a nonempty L2 class list".into()));
        }
        Ok(())
    }
}

/// Auxiliary native / target language classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    pub encoder: EncoderConfig,
    pub d_eps: usize,
    pub l1_classes: Vec<String>,
    pub l2_classes: Vec<String>,
}

impl Default for AuxConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            encoder: EncoderConfig {
                blocks: 1,
                ..EncoderConfig::default()
            },
            d_eps: m.d_eps,
            l1_classes: m.l1_classes,
            l2_classes: m.l2_classes,
        }
    }
}

impl AuxConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.d_eps == 0 || self.l1_classes.is_empty() || self.l2_classes.is_empty() {
            return Err(Error::Config("aux model needs d_eps > 0 and nonempty class lists".into()));
        }
        Ok(())
    }
}
