//! The nine recognizer families compared in the ablation study.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{AuxTraining, TrainConfig};
use super::loops::{train_aux, train_mdd, AuxModel, AuxRun, TrainRun};
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::networks::{AuxConfig, Conditioning, ModelConfig};
use crate::phonemes::PhonemeInventory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "mono")]
    Mono,
    #[serde(rename = "mono-p")]
    MonoP,
    #[serde(rename = "multi")]
    Multi,
    #[serde(rename = "multi-p")]
    MultiP,
    #[serde(rename = "multi-p-l2")]
    MultiPL2,
    #[serde(rename = "l1-multi-p-l1")]
    L1MultiPL1,
    #[serde(rename = "l1-multi-p-l1l2")]
    L1MultiPL1L2,
    #[serde(rename = "l1-multi-p-eps")]
    L1MultiPEps,
    #[serde(rename = "l1-multi-p-eps-joint")]
    L1MultiPEpsJoint,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Mono,
        Variant::MonoP,
        Variant::Multi,
        Variant::MultiP,
        Variant::MultiPL2,
        Variant::L1MultiPL1,
        Variant::L1MultiPL1L2,
        Variant::L1MultiPEps,
        Variant::L1MultiPEpsJoint,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Variant::Mono => "mono",
            Variant::MonoP => "mono-p",
            Variant::Multi => "multi",
            Variant::MultiP => "multi-p",
            Variant::MultiPL2 => "multi-p-l2",
            Variant::L1MultiPL1 => "l1-multi-p-l1",
            Variant::L1MultiPL1L2 => "l1-multi-p-l1l2",
            Variant::L1MultiPEps => "l1-multi-p-eps",
            Variant::L1MultiPEpsJoint => "l1-multi-p-eps-joint",
        }
    }

    /// Row label in the comparison table.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Mono => "Mono",
            Variant::MonoP => "Mono:<p>",
            Variant::Multi => "Multi",
            Variant::MultiP => "Multi:<p>",
            Variant::MultiPL2 => "Multi:<p,O(L2)>",
            Variant::L1MultiPL1 => "L1-Multi:<p,O(L1)>",
            Variant::L1MultiPL1L2 => "L1-Multi:<p,O(L1,L2)>",
            Variant::L1MultiPEps => "L1-Multi:<p,eps>",
            Variant::L1MultiPEpsJoint => "L1-Multi:<p,eps*>",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    pub fn is_mono(self) -> bool {
        matches!(self, Variant::Mono | Variant::MonoP)
    }

    pub fn phoneme_encoder(self) -> bool {
        !matches!(self, Variant::Mono | Variant::Multi)
    }

    pub fn conditioning(self) -> Conditioning {
        match self {
            Variant::MultiPL2 => Conditioning::OneHotL2,
            Variant::L1MultiPL1 => Conditioning::OneHotL1,
            Variant::L1MultiPL1L2 => Conditioning::OneHotL1L2,
            Variant::L1MultiPEps | Variant::L1MultiPEpsJoint => Conditioning::Aux,
            _ => Conditioning::None,
        }
    }

    pub fn aux_training(self) -> AuxTraining {
        if self == Variant::L1MultiPEpsJoint {
            AuxTraining::Joint
        } else {
            AuxTraining::Sequential
        }
    }

    /// Recognizer config of this variant over an inventory of `num_phonemes`.
    pub fn model_config(self, base: &ModelConfig, num_phonemes: usize) -> ModelConfig {
        ModelConfig {
            num_phonemes,
            conditioning: self.conditioning(),
            phoneme_encoder: self.phoneme_encoder(),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub model: ModelConfig,
    pub aux: AuxConfig,
    pub train: TrainConfig,
    pub aux_train: TrainConfig,
    pub variants: Vec<Variant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            aux: AuxConfig::default(),
            train: TrainConfig::default(),
            aux_train: TrainConfig::default(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub name: String,
    /// Best validation epoch of each trained model (one per L2 for Mono).
    pub best_epochs: Vec<usize>,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Validation accuracies of the shared aux model, when one was trained.
    pub aux_accuracy: Option<[f64; 2]>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Fixed-width text table: PER in percent, F1 and FRR as percentages.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<24} {:>8} {:>8} {:>8}\n", "variant", "F1", "FRR", "PER");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:>8.2} {:>8.2} {:>8.2}",
                r.name,
                100.0 * r.report.f1(),
                100.0 * r.report.frr(),
                r.report.per()
            );
        }
        out
    }
}

/// Inputs of one ablation: examples prepared against the union inventory.
pub struct AblationData<'a> {
    pub inventory: &'a PhonemeInventory,
    pub train: &'a [Example],
    pub valid: &'a [Example],
    pub test: &'a [Example],
}

fn only_l2(examples: &[Example], l2: &str) -> Vec<Example> {
    examples.iter().filter(|e| e.l2 == l2).cloned().collect()
}

fn run_mono(variant: Variant, cfg: &AblationConfig, data: &AblationData<'_>) -> Result<AblationRow> {
    let mut results = Vec::new();
    let mut best_epochs = Vec::new();
    let mut languages: Vec<String> = data.test.iter().map(|e| e.l2.clone()).collect();
    languages.sort();
    languages.dedup();
    for l2 in &languages {
        let sub = data.inventory.sub_inventory(l2)?;
        let (train, valid, test) = (only_l2(data.train, l2), only_l2(data.valid, l2), only_l2(data.test, l2));
        if train.is_empty() || valid.is_empty() {
            return Err(Error::Data(format!("no train or valid utterances for L2 {l2}")));
        }
        let model_cfg = variant.model_config(&cfg.model, sub.len());
        let run = train_mdd(&train, &valid, &model_cfg, &sub, None, &cfg.train)?;
        best_epochs.push(run.best_epoch);
        results.extend(run.model.evaluate(&test)?.results);
    }
    Ok(AblationRow {
        variant,
        name: variant.display_name().into(),
        best_epochs,
        report: evaluate(&results)?,
    })
}

/// Trains and scores every configured variant on shared splits and seeds.
/// The aux classifier is pretrained once and shared by the aux variants.
pub fn run_ablation(cfg: &AblationConfig, data: &AblationData<'_>) -> Result<AblationTable> {
    if cfg.variants.is_empty() {
        return Err(Error::Config("ablation needs at least one variant".into()));
    }
    let mut seen = BTreeMap::new();
    for v in &cfg.variants {
        if seen.insert(*v, ()).is_some() {
            return Err(Error::Config(format!("variant {} listed twice", v.id())));
        }
    }
    let aux: Option<AuxRun> = if cfg.variants.iter().any(|v| v.conditioning() == Conditioning::Aux) {
        Some(train_aux(data.train, data.valid, &cfg.aux, &cfg.aux_train)?)
    } else {
        None
    };
    let aux_model: Option<&AuxModel> = aux.as_ref().map(|a| &a.model);
    let mut table = AblationTable {
        rows: Vec::new(),
        aux_accuracy: aux.as_ref().map(|a| [a.l1_accuracy, a.l2_accuracy]),
    };
    for &variant in &cfg.variants {
        log::info!("ablation: training {}", variant.id());
        let row = if variant.is_mono() {
            run_mono(variant, cfg, data)?
        } else {
            let model_cfg = variant.model_config(&cfg.model, data.inventory.len());
            let train_cfg = TrainConfig {
                aux_training: variant.aux_training(),
                ..cfg.train.clone()
            };
            let run: TrainRun = train_mdd(data.train, data.valid, &model_cfg, data.inventory, aux_model, &train_cfg)?;
            AblationRow {
                variant,
                name: variant.display_name().into(),
                best_epochs: vec![run.best_epoch],
                report: run.model.evaluate(data.test)?.report,
            }
        };
        table.rows.push(row);
    }
    Ok(table)
}
