#![allow(dead_code)]

use l1mdd::corpus::{prepare_examples, synthesize_default, Example, Split, SplitCounts, SynthConfig};
use l1mdd::networks::{AuxConfig, Conditioning, ConvSpec, EncoderConfig, ModelConfig};
use l1mdd::phonemes::PhonemeInventory;
use l1mdd::training::TrainConfig;

pub struct Data {
    pub inventory: PhonemeInventory,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        symbols_per_language: 6,
        feature_dim: 6,
        frames_per_phoneme: [4, 5],
        canonical_length: [2, 4],
        counts: SplitCounts {
            train: 24,
            valid: 8,
            test: 8,
        },
        seed,
        ..SynthConfig::default()
    }
}

pub fn data(cfg: &SynthConfig) -> Data {
    let corpus = synthesize_default(cfg).unwrap();
    let inv = corpus.inventory.clone();
    let m = ModelConfig::default();
    let prep = |s| prepare_examples(corpus.split(s), &inv, &m.l1_classes, &m.l2_classes).unwrap();
    Data {
        train: prep(Split::Train),
        valid: prep(Split::Valid),
        test: prep(Split::Test),
        inventory: inv,
    }
}

pub fn tiny_encoder(input_dim: usize) -> EncoderConfig {
    EncoderConfig {
        input_dim,
        d_model: 8,
        conv: vec![ConvSpec {
            channels: 6,
            kernel: 3,
            stride: 2,
        }],
        blocks: 1,
        heads: 2,
        ffn_dim: 16,
    }
}

pub fn tiny_model(input_dim: usize, num_phonemes: usize, conditioning: Conditioning) -> ModelConfig {
    ModelConfig {
        encoder: tiny_encoder(input_dim),
        num_phonemes,
        d_emb: 6,
        d_h: 6,
        d_attn: 8,
        d_eps: 6,
        projection_dim: 8,
        conditioning,
        phoneme_encoder: true,
        ..ModelConfig::default()
    }
}

pub fn tiny_aux(input_dim: usize) -> AuxConfig {
    AuxConfig {
        encoder: tiny_encoder(input_dim),
        d_eps: 6,
        ..AuxConfig::default()
    }
}

pub fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_epochs: epochs,
        patience: epochs,
        ..TrainConfig::default()
    }
}
