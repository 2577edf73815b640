use rand::seq::SliceRandom;

use super::manifest::UtteranceRecord;
use crate::error::{Error, Result};
use crate::phonemes::PhonemeInventory;
use crate::rng::SeedTree;
use crate::Tensor;

/// A record with features loaded and every label resolved to an index.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub utt_id: String,
    pub features: Tensor,
    pub canonical: Vec<String>,
    pub annotated: Vec<String>,
    pub canonical_ids: Vec<usize>,
    pub annotated_ids: Vec<usize>,
    pub l1: String,
    pub l2: String,
    pub l1_id: usize,
    pub l2_id: usize,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

fn class_index(classes: &[String], value: &str, what: &str, utt: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == value)
        .ok_or_else(|| Error::Data(format!("{utt}: {what} label {value} not in configured classes {classes:?}")))
}

/// Loads features and encodes labels for a list of records.
pub fn prepare_examples(
    records: &[UtteranceRecord],
    inventory: &PhonemeInventory,
    l1_classes: &[String],
    l2_classes: &[String],
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            r.validate(Some(inventory))?;
            let features = r.load_features()?.to_tensor();
            Ok(Example {
                utt_id: r.utt_id.clone(),
                features,
                canonical: r.canonical.clone(),
                annotated: r.annotated.clone(),
                canonical_ids: inventory.encode(&r.canonical)?,
                annotated_ids: inventory.encode(&r.annotated)?,
                l1: r.l1.clone(),
                l2: r.l2.clone(),
                l1_id: class_index(l1_classes, &r.l1, "L1", &r.utt_id)?,
                l2_id: class_index(l2_classes, &r.l2, "L2", &r.utt_id)?,
            })
        })
        .collect()
}

/// Padded mini-batch. Pad masks are `true` exactly at padded positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Positions of the items in the example list.
    pub indices: Vec<usize>,
    /// `B × T_max × D₀`.
    pub features: Tensor,
    pub frame_lengths: Vec<usize>,
    pub frame_pad_mask: Vec<bool>,
    /// `B × L_max`, padded with `pad_id`.
    pub canonical: Vec<usize>,
    pub canonical_lengths: Vec<usize>,
    pub canonical_pad_mask: Vec<bool>,
    pub annotated: Vec<usize>,
    pub annotated_lengths: Vec<usize>,
    pub annotated_pad_mask: Vec<bool>,
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
    pub pad_id: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_frames(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[2]
    }

    /// Unpadded `T_i × D₀` features of item `i`.
    pub fn item_features(&self, i: usize) -> Tensor {
        let (t_max, d) = (self.max_frames(), self.feature_dim());
        let start = i * t_max * d;
        let data = self.features.data()[start..start + self.frame_lengths[i] * d].to_vec();
        Tensor::matrix(self.frame_lengths[i], d, data).expect("nonempty item")
    }

    pub fn item_canonical(&self, i: usize) -> &[usize] {
        let l_max = self.canonical.len() / self.len();
        &self.canonical[i * l_max..i * l_max + self.canonical_lengths[i]]
    }

    pub fn item_annotated(&self, i: usize) -> &[usize] {
        let l_max = self.annotated.len() / self.len();
        &self.annotated[i * l_max..i * l_max + self.annotated_lengths[i]]
    }

    fn build(examples: &[Example], indices: Vec<usize>, pad_id: usize) -> Self {
        let items: Vec<&Example> = indices.iter().map(|&i| &examples[i]).collect();
        let d = items[0].features.cols();
        let t_max = items.iter().map(|e| e.frames()).max().unwrap_or(1);
        let mut features = vec![0.0; items.len() * t_max * d];
        let mut frame_pad_mask = vec![true; items.len() * t_max];
        for (b, e) in items.iter().enumerate() {
            let start = b * t_max * d;
            features[start..start + e.features.len()].copy_from_slice(e.features.data());
            frame_pad_mask[b * t_max..b * t_max + e.frames()].fill(false);
        }
        let pad = |seqs: Vec<&Vec<usize>>| {
            let l_max = seqs.iter().map(|s| s.len()).max().unwrap_or(1).max(1);
            let mut ids = vec![pad_id; seqs.len() * l_max];
            let mut mask = vec![true; seqs.len() * l_max];
            for (b, s) in seqs.iter().enumerate() {
                ids[b * l_max..b * l_max + s.len()].copy_from_slice(s);
                mask[b * l_max..b * l_max + s.len()].fill(false);
            }
            (ids, seqs.iter().map(|s| s.len()).collect::<Vec<_>>(), mask)
        };
        let (canonical, canonical_lengths, canonical_pad_mask) =
            pad(items.iter().map(|e| &e.canonical_ids).collect());
        let (annotated, annotated_lengths, annotated_pad_mask) =
            pad(items.iter().map(|e| &e.annotated_ids).collect());
        Batch {
            features: Tensor::new(vec![items.len(), t_max, d], features).expect("batch shape"),
            frame_lengths: items.iter().map(|e| e.frames()).collect(),
            frame_pad_mask,
            canonical,
            canonical_lengths,
            canonical_pad_mask,
            annotated,
            annotated_lengths,
            annotated_pad_mask,
            l1: items.iter().map(|e| e.l1_id).collect(),
            l2: items.iter().map(|e| e.l2_id).collect(),
            indices,
            pad_id,
        }
    }
}

/// Index partition of `0..n` into batches. With `shuffle`, the order is a
/// seeded permutation; otherwise input order.
pub fn batch_order(n: usize, batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut SeedTree::new(seed).rng("batch-order"));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Partitions the examples into padded batches, every example exactly once.
pub fn make_batches(
    examples: &[Example],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
    pad_id: usize,
) -> Result<Vec<Batch>> {
    Ok(batch_order(examples.len(), batch_size, seed, shuffle)?
        .into_iter()
        .map(|chunk| Batch::build(examples, chunk, pad_id))
        .collect())
}
