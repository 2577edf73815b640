//! Utterance records, feature files, batching, and the synthetic corpus.

pub mod batch;
pub mod features;
pub mod manifest;
pub mod synth;

pub use batch::{batch_order, make_batches, prepare_examples, Batch, Example};
pub use features::FeatureMatrix;
pub use manifest::{load_manifest, write_manifest, FeatureSource, UtteranceRecord};
pub use synth::{
    synthesize_corpus, synthesize_default, ConfusionModel, ConfusionRow, Split, SplitCounts, SynthConfig,
    SynthCorpus, WrittenCorpus,
};
