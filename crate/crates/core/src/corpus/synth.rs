//! Synthetic L1-conditioned corpus.
//!
//! Each utterance draws a canonical phoneme string from its target language,
//! passes it through the (L1, L2) confusion model (keep / substitute / delete)
//! to obtain what the speaker actually said, and then emits feature frames
//! for the spoken phonemes: prototype + L1 accent shift + Gaussian noise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest, FeatureSource, UtteranceRecord};
use crate::error::{Error, Result};
use crate::phonemes::PhonemeInventory;
use crate::rng::{Rng, SeedTree};

const SYMBOL_POOL: [&str; 64] = [
    "a", "i", "u", "e", "o", "p", "b", "t", "d", "k", "g", "m", "n", "s", "z", "f", "v", "l", "h",
    "j", "w", "ʃ", "ʒ", "θ", "ð", "ŋ", "ɹ", "ɻ", "ʂ", "ɕ", "ʕ", "ħ", "q", "ʔ", "χ", "ɣ", "æ", "ɑ",
    "ɔ", "ɛ", "ɪ", "ʊ", "ʌ", "ə", "ɚ", "ɨ", "y", "ø", "x", "r", "ɾ", "ʐ", "c", "ɟ", "ɲ", "ʎ", "β",
    "ɸ", "ç", "ʝ", "ɐ", "ɤ", "ɯ", "ɒ",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Explicit confusion row for one canonical phoneme under one (L1, L2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionRow {
    pub l1: String,
    pub l2: String,
    pub phoneme: String,
    pub keep: f64,
    pub delete: f64,
    #[serde(default)]
    pub substitute: BTreeMap<String, f64>,
}

impl ConfusionRow {
    fn total(&self) -> f64 {
        self.keep + self.delete + self.substitute.values().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub l2_languages: Vec<String>,
    pub l1_languages: Vec<String>,
    pub symbols_per_language: usize,
    /// Fraction of each language's symbols shared by all languages.
    pub overlap_fraction: f64,
    pub feature_dim: usize,
    pub frames_per_phoneme: [usize; 2],
    pub canonical_length: [usize; 2],
    /// σ of the per-frame Gaussian noise.
    pub noise: f64,
    /// Per-dimension σ of phoneme prototypes.
    pub prototype_scale: f64,
    /// Per-dimension σ separating the k-th language-specific phonemes of
    /// different languages, which share a base prototype.
    pub cross_language_offset: f64,
    /// Per-dimension σ of generated L1 accent shifts.
    pub accent_shift_scale: f64,
    /// Explicit accent shifts; languages missing here are generated.
    pub accent_shifts: BTreeMap<String, Vec<f64>>,
    /// Per-dimension σ of a shift shared by every utterance of one L2
    /// (recording conditions of that language's corpus).
    pub l2_shift_scale: f64,
    /// Per-dimension σ of an extra shift drawn for every (L1, phoneme) pair,
    /// so that an accent moves each phoneme differently.
    pub phoneme_accent_scale: f64,
    /// Generated confusions: how many phonemes of L2 each L1 mispronounces,
    /// and with which probabilities.
    pub confusable_per_pair: usize,
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    /// Substitute each confusable phoneme with its acoustically nearest
    /// neighbour in the L2 instead of a uniformly drawn one.
    pub substitute_nearest: bool,
    /// Explicit rows; these replace generated rows for the same key.
    pub confusions: Vec<ConfusionRow>,
    pub counts: SplitCounts,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            l2_languages: vec!["ar".into(), "en".into(), "zh".into()],
            l1_languages: vec!["es".into(), "hi".into(), "ko".into(), "ru".into()],
            symbols_per_language: 16,
            overlap_fraction: 0.5,
            feature_dim: 12,
            frames_per_phoneme: [8, 12],
            canonical_length: [4, 8],
            noise: 0.7,
            prototype_scale: 1.0,
            cross_language_offset: 1.0,
            accent_shift_scale: 0.3,
            accent_shifts: BTreeMap::new(),
            l2_shift_scale: 0.8,
            phoneme_accent_scale: 1.0,
            confusable_per_pair: 4,
            substitution_rate: 0.4,
            deletion_rate: 0.05,
            substitute_nearest: true,
            confusions: Vec::new(),
            counts: SplitCounts {
                train: 2000,
                valid: 200,
                test: 300,
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub inventory: PhonemeInventory,
    pub splits: BTreeMap<Split, Vec<UtteranceRecord>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WrittenCorpus {
    pub inventory: PathBuf,
    pub manifests: BTreeMap<Split, PathBuf>,
    pub feature_files: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
enum Outcome {
    Keep,
    Delete,
    Substitute(String),
}

/// Resolved per-(L1, L2, phoneme) outcome distributions. Absent keys keep.
#[derive(Clone, Debug, Default)]
pub struct ConfusionModel {
    rows: BTreeMap<(String, String, String), Vec<(Outcome, f64)>>,
}

impl ConfusionModel {
    fn sample(&self, l1: &str, l2: &str, phoneme: &str, rng: &mut Rng) -> Outcome {
        let Some(row) = self.rows.get(&(l1.to_string(), l2.to_string(), phoneme.to_string())) else {
            return Outcome::Keep;
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (outcome, p) in row {
            acc += p;
            if u < acc {
                return outcome.clone();
            }
        }
        row.last().map(|(o, _)| o.clone()).unwrap_or(Outcome::Keep)
    }

    /// Probability that `phoneme` survives unchanged for this speaker group.
    pub fn keep_probability(&self, l1: &str, l2: &str, phoneme: &str) -> f64 {
        self.rows
            .get(&(l1.to_string(), l2.to_string(), phoneme.to_string()))
            .map(|row| {
                row.iter()
                    .filter(|(o, _)| matches!(o, Outcome::Keep))
                    .map(|(_, p)| p)
                    .sum()
            })
            .unwrap_or(1.0)
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.l2_languages.is_empty() || self.l1_languages.is_empty() {
            return bad("synthesis needs at least one L1 and one L2 language".into());
        }
        if self.symbols_per_language == 0 {
            return bad("symbols_per_language must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction {} outside [0, 1]", self.overlap_fraction));
        }
        let shared = self.shared_count();
        let needed = shared + self.l2_languages.len() * (self.symbols_per_language - shared);
        if needed > SYMBOL_POOL.len() {
            return bad(format!("toy inventory needs {needed} symbols, pool has {}", SYMBOL_POOL.len()));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        let [fmin, fmax] = self.frames_per_phoneme;
        if fmin == 0 || fmin > fmax {
            return bad(format!("frames_per_phoneme {:?} invalid", self.frames_per_phoneme));
        }
        let [lmin, lmax] = self.canonical_length;
        if lmin == 0 || lmin > lmax {
            return bad(format!("canonical_length {:?} invalid", self.canonical_length));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("prototype_scale", self.prototype_scale),
            ("cross_language_offset", self.cross_language_offset),
            ("accent_shift_scale", self.accent_shift_scale),
            ("l2_shift_scale", self.l2_shift_scale),
            ("phoneme_accent_scale", self.phoneme_accent_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value ≥ 0, got {v}"));
            }
        }
        if self.substitution_rate < 0.0
            || self.deletion_rate < 0.0
            || self.substitution_rate + self.deletion_rate > 1.0
        {
            return bad("substitution_rate + deletion_rate must lie in [0, 1]".into());
        }
        if self.counts.train == 0 || self.counts.valid == 0 || self.counts.test == 0 {
            return bad("every split count must be at least 1".into());
        }
        for (l1, shift) in &self.accent_shifts {
            if shift.len() != self.feature_dim {
                return bad(format!("accent shift for {l1} has {} dims", shift.len()));
            }
        }
        for row in &self.confusions {
            if (row.total() - 1.0).abs() > 1e-9 {
                return bad(format!(
                    "confusion row ({}, {}, {}) sums to {}",
                    row.l1,
                    row.l2,
                    row.phoneme,
                    row.total()
                ));
            }
            if row.keep < 0.0 || row.delete < 0.0 || row.substitute.values().any(|p| *p < 0.0) {
                return bad("confusion probabilities must be nonnegative".into());
            }
        }
        Ok(())
    }

    fn shared_count(&self) -> usize {
        ((self.overlap_fraction * self.symbols_per_language as f64).round() as usize)
            .min(self.symbols_per_language)
    }

    /// Per-language symbol lists of the toy inventory. The first symbols are
    /// shared by all languages; the rest are specific to one language.
    pub fn language_symbols(&self) -> BTreeMap<String, Vec<String>> {
        let shared = self.shared_count();
        let specific = self.symbols_per_language - shared;
        let mut pool = SYMBOL_POOL.iter().map(|s| s.to_string());
        let common: Vec<String> = pool.by_ref().take(shared).collect();
        let mut out = BTreeMap::new();
        for lang in &self.l2_languages {
            let mut syms = common.clone();
            syms.extend(pool.by_ref().take(specific));
            out.insert(lang.clone(), syms);
        }
        out
    }

    pub fn inventory(&self) -> Result<PhonemeInventory> {
        self.validate()?;
        PhonemeInventory::build_union(&self.language_symbols())
    }

    fn gaussian_vec(&self, rng: &mut Rng, sigma: f64) -> Vec<f64> {
        if sigma == 0.0 {
            return vec![0.0; self.feature_dim];
        }
        let n = Normal::new(0.0, sigma).expect("validated sigma");
        (0..self.feature_dim).map(|_| n.sample(rng)).collect()
    }

    /// Prototype vector for each symbol of the toy inventory.
    pub fn prototypes(&self) -> BTreeMap<String, Vec<f64>> {
        let tree = SeedTree::new(self.seed).child("prototypes");
        let mut rng = tree.rng("draw");
        let shared = self.shared_count();
        let langs = self.language_symbols();
        let mut out = BTreeMap::new();
        for s in SYMBOL_POOL.iter().take(shared) {
            out.insert(s.to_string(), self.gaussian_vec(&mut rng, self.prototype_scale));
        }
        for k in 0..self.symbols_per_language - shared {
            let base = self.gaussian_vec(&mut rng, self.prototype_scale);
            for lang in &self.l2_languages {
                let offset = self.gaussian_vec(&mut rng, self.cross_language_offset);
                let sym = langs[lang][shared + k].clone();
                out.insert(sym, base.iter().zip(offset).map(|(b, o)| b + o).collect());
            }
        }
        out
    }

    pub fn accent_shift_vectors(&self) -> BTreeMap<String, Vec<f64>> {
        let tree = SeedTree::new(self.seed).child("accents");
        self.l1_languages
            .iter()
            .map(|l1| {
                let shift = self.accent_shifts.get(l1).cloned().unwrap_or_else(|| {
                    self.gaussian_vec(&mut tree.rng(l1), self.accent_shift_scale)
                });
                (l1.clone(), shift)
            })
            .collect()
    }

    pub fn l2_shift_vectors(&self) -> BTreeMap<String, Vec<f64>> {
        let tree = SeedTree::new(self.seed).child("l2-shifts");
        self.l2_languages
            .iter()
            .map(|l2| (l2.clone(), self.gaussian_vec(&mut tree.rng(l2), self.l2_shift_scale)))
            .collect()
    }

    /// Phoneme-specific part of each accent, keyed by (L1, symbol). Empty
    /// when `phoneme_accent_scale` is zero.
    pub fn phoneme_accent_vectors(&self) -> BTreeMap<(String, String), Vec<f64>> {
        let mut out = BTreeMap::new();
        if self.phoneme_accent_scale == 0.0 {
            return out;
        }
        let tree = SeedTree::new(self.seed).child("phoneme-accents");
        let symbols: std::collections::BTreeSet<String> = self.language_symbols().into_values().flatten().collect();
        for l1 in &self.l1_languages {
            let mut rng = tree.rng(l1);
            for sym in &symbols {
                out.insert((l1.clone(), sym.clone()), self.gaussian_vec(&mut rng, self.phoneme_accent_scale));
            }
        }
        out
    }

    /// Generated rows overlaid with the explicit ones, checked against `inv`.
    pub fn confusion_model(&self, inv: &PhonemeInventory) -> Result<ConfusionModel> {
        let langs = self.language_symbols();
        let prototypes = self.prototypes();
        let tree = SeedTree::new(self.seed).child("confusions");
        let mut model = ConfusionModel::default();
        if self.confusable_per_pair > 0 && self.substitution_rate + self.deletion_rate > 0.0 {
            for l1 in &self.l1_languages {
                for l2 in &self.l2_languages {
                    let mut rng = tree.rng(&format!("{l1}/{l2}"));
                    let syms = &langs[l2];
                    let picked =
                        rand::seq::index::sample(&mut rng, syms.len(), self.confusable_per_pair.min(syms.len()));
                    for i in picked.into_iter() {
                        let x = &syms[i];
                        let mut row = vec![(Outcome::Keep, 1.0 - self.substitution_rate - self.deletion_rate)];
                        if self.deletion_rate > 0.0 {
                            row.push((Outcome::Delete, self.deletion_rate));
                        }
                        if self.substitution_rate > 0.0 && syms.len() > 1 {
                            let mut j = rng.random_range(0..syms.len() - 1);
                            if j >= i {
                                j += 1;
                            }
                            if self.substitute_nearest {
                                j = nearest(&prototypes, syms, i);
                            }
                            row.push((Outcome::Substitute(syms[j].clone()), self.substitution_rate));
                        } else if let Some(first) = row.first_mut() {
                            first.1 += self.substitution_rate;
                        }
                        model.rows.insert((l1.clone(), l2.clone(), x.clone()), row);
                    }
                }
            }
        }
        for r in &self.confusions {
            if !self.l1_languages.contains(&r.l1) || !self.l2_languages.contains(&r.l2) {
                return Err(Error::Config(format!(
                    "confusion row references unknown language pair ({}, {})",
                    r.l1, r.l2
                )));
            }
            for sym in std::iter::once(&r.phoneme).chain(r.substitute.keys()) {
                if inv.code(sym).is_none() {
                    return Err(Error::Config(format!("confusion row references unknown phoneme {sym}")));
                }
            }
            let mut row = vec![(Outcome::Keep, r.keep), (Outcome::Delete, r.delete)];
            row.extend(r.substitute.iter().map(|(s, p)| (Outcome::Substitute(s.clone()), *p)));
            model.rows.insert((r.l1.clone(), r.l2.clone(), r.phoneme.clone()), row);
        }
        Ok(model)
    }
}

/// Index of the symbol in `syms` closest to `syms[i]`, other than itself.
fn nearest(prototypes: &BTreeMap<String, Vec<f64>>, syms: &[String], i: usize) -> usize {
    let x = &prototypes[&syms[i]];
    let dist = |j: usize| -> f64 { prototypes[&syms[j]].iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum() };
    (0..syms.len())
        .filter(|&j| j != i)
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .expect("at least two symbols")
}

fn round_f32(v: f64) -> f32 {
    v as f32
}

/// Generates all splits in memory with inline features.
pub fn synthesize_corpus(cfg: &SynthConfig, inv: &PhonemeInventory) -> Result<SynthCorpus> {
    cfg.validate()?;
    let langs = cfg.language_symbols();
    for (lang, syms) in &langs {
        if let Some(missing) = syms.iter().find(|s| inv.code(s).is_none()) {
            return Err(Error::Config(format!(
                "inventory lacks {missing} required by language {lang}"
            )));
        }
    }
    let confusion = cfg.confusion_model(inv)?;
    let prototypes = cfg.prototypes();
    let accents = cfg.accent_shift_vectors();
    let l2_shifts = cfg.l2_shift_vectors();
    let phoneme_accents = cfg.phoneme_accent_vectors();
    let tree = SeedTree::new(cfg.seed).child("utterances");
    let noise = (cfg.noise > 0.0).then(|| Normal::new(0.0, cfg.noise).expect("validated noise"));

    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let count = match split {
            Split::Train => cfg.counts.train,
            Split::Valid => cfg.counts.valid,
            Split::Test => cfg.counts.test,
        };
        let mut rng = tree.rng(split.name());
        let mut records = Vec::with_capacity(count);
        for i in 0..count {
            let l2 = &cfg.l2_languages[i % cfg.l2_languages.len()];
            let l1 = &cfg.l1_languages[(i / cfg.l2_languages.len()) % cfg.l1_languages.len()];
            let syms = &langs[l2];
            let len = rng.random_range(cfg.canonical_length[0]..=cfg.canonical_length[1]);
            // No immediate repeats: frames carry no boundary between two
            // copies of the same phoneme.
            let mut canonical: Vec<String> = Vec::with_capacity(len);
            for _ in 0..len {
                let mut k = rng.random_range(0..syms.len());
                if syms.len() > 1 {
                    if let Some(prev) = canonical.last().and_then(|p| syms.iter().position(|s| s == p)) {
                        k = rng.random_range(0..syms.len() - 1);
                        if k >= prev {
                            k += 1;
                        }
                    }
                }
                canonical.push(syms[k].clone());
            }
            let annotated = loop {
                let spoken: Vec<String> = canonical
                    .iter()
                    .filter_map(|x| match confusion.sample(l1, l2, x, &mut rng) {
                        Outcome::Keep => Some(x.clone()),
                        Outcome::Delete => None,
                        Outcome::Substitute(y) => Some(y),
                    })
                    .collect();
                if !spoken.is_empty() {
                    break spoken;
                }
            };
            let shift: Vec<f64> = accents[l1].iter().zip(&l2_shifts[l2]).map(|(a, b)| a + b).collect();
            let mut rows = Vec::new();
            for p in &annotated {
                let proto = &prototypes[p];
                let local = phoneme_accents.get(&(l1.clone(), p.clone()));
                let frames = rng.random_range(cfg.frames_per_phoneme[0]..=cfg.frames_per_phoneme[1]);
                for _ in 0..frames {
                    rows.push(
                        (0..cfg.feature_dim)
                            .map(|d| {
                                let eps = noise.map_or(0.0, |n| n.sample(&mut rng));
                                let extra = local.map_or(0.0, |v| v[d]);
                                round_f32(proto[d] + shift[d] + extra + eps)
                            })
                            .collect(),
                    );
                }
            }
            records.push(UtteranceRecord {
                utt_id: format!("{}-{:05}", split.name(), i),
                features: FeatureSource::Inline(rows),
                canonical,
                annotated,
                l1: l1.clone(),
                l2: l2.clone(),
            });
        }
        splits.insert(split, records);
    }
    Ok(SynthCorpus {
        inventory: inv.clone(),
        splits,
    })
}

impl SynthCorpus {
    pub fn split(&self, split: Split) -> &[UtteranceRecord] {
        &self.splits[&split]
    }

    /// Writes `inventory.json`, `feats/<utt>.l1md` and one manifest per split
    /// (`train.jsonl`, `valid.jsonl`, `test.jsonl`) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<WrittenCorpus> {
        let inventory = dir.join("inventory.json");
        self.inventory.save(&inventory)?;
        let mut manifests = BTreeMap::new();
        let mut feature_files = Vec::new();
        for (split, records) in &self.splits {
            let mut out = Vec::with_capacity(records.len());
            for r in records {
                let rel = PathBuf::from("feats").join(format!("{}.l1md", r.utt_id));
                let path = dir.join(&rel);
                r.load_features()?.save(&path)?;
                feature_files.push(path);
                out.push(UtteranceRecord {
                    features: FeatureSource::File(rel),
                    ..r.clone()
                });
            }
            let path = dir.join(format!("{}.jsonl", split.name()));
            write_manifest(&path, &out)?;
            manifests.insert(*split, path);
        }
        Ok(WrittenCorpus {
            inventory,
            manifests,
            feature_files,
        })
    }
}

/// Convenience: build the toy inventory and synthesize against it.
pub fn synthesize_default(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let inv = cfg.inventory()?;
    synthesize_corpus(cfg, &inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::manifest::load_manifest;

    fn small() -> SynthConfig {
        SynthConfig {
            counts: SplitCounts {
                train: 24,
                valid: 6,
                test: 6,
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_inventory_size_in_range() {
        let inv = SynthConfig::default().inventory().unwrap();
        assert!((30..=40).contains(&inv.len()), "{}", inv.len());
        assert_eq!(inv.languages().len(), 3);
    }

    #[test]
    fn identity_confusion_keeps_canonical() {
        let cfg = SynthConfig {
            substitution_rate: 0.0,
            deletion_rate: 0.0,
            ..small()
        };
        let corpus = synthesize_default(&cfg).unwrap();
        for records in corpus.splits.values() {
            for r in records {
                assert_eq!(r.annotated, r.canonical);
            }
        }
    }

    #[test]
    fn forced_substitution_applies_to_that_l1_only() {
        let base = small();
        let x = base.language_symbols()["en"][0].clone();
        let y = base.language_symbols()["en"][1].clone();
        let cfg = SynthConfig {
            substitution_rate: 0.0,
            deletion_rate: 0.0,
            confusions: vec![ConfusionRow {
                l1: "ko".into(),
                l2: "en".into(),
                phoneme: x.clone(),
                keep: 0.0,
                delete: 0.0,
                substitute: BTreeMap::from([(y.clone(), 1.0)]),
            }],
            counts: SplitCounts {
                train: 200,
                valid: 1,
                test: 1,
            },
            ..base
        };
        let corpus = synthesize_default(&cfg).unwrap();
        let mut hits = 0;
        for r in corpus.split(Split::Train) {
            for (c, a) in r.canonical.iter().zip(&r.annotated) {
                if *c == x {
                    if r.l1 == "ko" && r.l2 == "en" {
                        assert_eq!(*a, y);
                        hits += 1;
                    } else {
                        assert_eq!(*a, x);
                    }
                }
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn substitution_rate_is_honored_monte_carlo() {
        let base = small();
        let x = base.language_symbols()["en"][0].clone();
        let y = base.language_symbols()["en"][1].clone();
        let cfg = SynthConfig {
            l2_languages: vec!["en".into()],
            l1_languages: vec!["ko".into()],
            substitution_rate: 0.0,
            deletion_rate: 0.0,
            canonical_length: [1, 1],
            frames_per_phoneme: [1, 1],
            confusions: vec![ConfusionRow {
                l1: "ko".into(),
                l2: "en".into(),
                phoneme: x.clone(),
                keep: 0.8,
                delete: 0.0,
                substitute: BTreeMap::from([(y.clone(), 0.2)]),
            }],
            counts: SplitCounts {
                train: 10_000 * base.symbols_per_language,
                valid: 1,
                test: 1,
            },
            ..base
        };
        let corpus = synthesize_default(&cfg).unwrap();
        let (mut draws, mut subs) = (0usize, 0usize);
        for r in corpus.split(Split::Train) {
            if r.canonical[0] == x {
                draws += 1;
                subs += usize::from(r.annotated[0] == y);
            }
        }
        assert!(draws > 8000, "{draws}");
        let rate = subs as f64 / draws as f64;
        assert!((rate - 0.2).abs() < 0.02, "{rate}");
    }

    #[test]
    fn unknown_phoneme_in_confusion_is_config_error() {
        let cfg = SynthConfig {
            confusions: vec![ConfusionRow {
                l1: "ko".into(),
                l2: "en".into(),
                phoneme: "nope".into(),
                keep: 1.0,
                delete: 0.0,
                substitute: BTreeMap::new(),
            }],
            ..small()
        };
        assert!(matches!(synthesize_default(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn rows_must_be_stochastic() {
        let cfg = SynthConfig {
            confusions: vec![ConfusionRow {
                l1: "ko".into(),
                l2: "en".into(),
                phoneme: "a".into(),
                keep: 0.7,
                delete: 0.0,
                substitute: BTreeMap::new(),
            }],
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_byte_identical_on_disk() {
        let cfg = small();
        let a = synthesize_default(&cfg).unwrap();
        let b = synthesize_default(&cfg).unwrap();
        assert_eq!(a, b);
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let w1 = a.write(d1.path()).unwrap();
        let w2 = b.write(d2.path()).unwrap();
        for (p1, p2) in w1.feature_files.iter().zip(&w2.feature_files).chain(
            w1.manifests.values().zip(w2.manifests.values()),
        ) {
            assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
        }
        let loaded = load_manifest(&w1.manifests[&Split::Valid], Some(&a.inventory)).unwrap();
        for (r, orig) in loaded.iter().zip(a.split(Split::Valid)) {
            assert_eq!(r.load_features().unwrap(), orig.load_features().unwrap());
        }
        let other = synthesize_default(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(other, a);
    }
}
