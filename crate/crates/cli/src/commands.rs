use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use l1mdd::corpus::{load_manifest, prepare_examples, synthesize_default, Example, SynthConfig, UtteranceRecord};
use l1mdd::eval::{evaluate, MetricsReport, UtteranceResult};
use l1mdd::io::{sha256_file, write_atomic};
use l1mdd::networks::{AuxConfig, Conditioning, ModelConfig};
use l1mdd::phonemes::PhonemeInventory;
use l1mdd::training::{
    log_to_jsonl, run_ablation, train_aux as fit_aux, train_mdd, AblationConfig, AblationData, AuxModel,
    AuxTraining, Checkpoint, MddModel, TrainConfig, Variant,
};
use l1mdd::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::run_manifest::RunManifest;
use crate::{Common, OnOff, TrainFlags};

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn manifest_path(common: &Common, out: &Path) -> PathBuf {
    common.run_manifest.clone().unwrap_or_else(|| with_suffix(out, ".run.json"))
}

fn start(command: &str, common: &Common) -> Result<RunManifest> {
    let mut m = RunManifest::start(command, common.config.as_deref());
    if let Some(c) = &common.config {
        m.input(c)?;
    }
    Ok(m)
}

fn apply_flags(cfg: &mut TrainConfig, flags: &TrainFlags) {
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = flags.patience {
        cfg.patience = v;
    }
    if let Some(v) = flags.freeze_conv {
        cfg.freeze_conv = v.enabled();
    }
}

fn load_records(path: &Path, inventory: Option<&PhonemeInventory>, run: &mut RunManifest) -> Result<Vec<UtteranceRecord>> {
    run.input(path)?;
    load_manifest(path, inventory)
}

fn examples(
    path: &Path,
    inventory: &PhonemeInventory,
    l1: &[String],
    l2: &[String],
    run: &mut RunManifest,
) -> Result<Vec<Example>> {
    let records = load_records(path, Some(inventory), run)?;
    prepare_examples(&records, inventory, l1, l2)
}

/// Per-language symbol lists.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InventoryConfig {
    pub languages: BTreeMap<String, Vec<String>>,
}

pub fn build_inventory(common: &Common, langs: &[String], out: &Path) -> Result<()> {
    let mut run = start("build-inventory", common)?;
    let cfg: InventoryConfig = read_config(common.config.as_deref())?;
    let selected: BTreeMap<String, Vec<String>> = if langs.is_empty() {
        cfg.languages.clone()
    } else {
        langs
            .iter()
            .map(|l| {
                cfg.languages
                    .get(l)
                    .map(|s| (l.clone(), s.clone()))
                    .ok_or_else(|| Error::Config(format!("language {l} has no symbol list in the config")))
            })
            .collect::<Result<_>>()?
    };
    let inv = PhonemeInventory::build_union(&selected)?;
    inv.save(out)?;
    log::info!("inventory: {} symbols over {:?}", inv.len(), inv.languages());
    run.output(out)?;
    run.effective_config = serde_json::json!({"languages": selected});
    run.finish(&manifest_path(common, out))
}

pub fn synth(common: &Common, seed: Option<u64>, train_count: Option<usize>, out: &Path) -> Result<()> {
    let mut run = start("synth", common)?;
    let mut cfg: SynthConfig = read_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = train_count {
        cfg.counts.train = n;
    }
    cfg.validate()?;
    let corpus = synthesize_default(&cfg)?;
    let written = corpus.write(out)?;
    run.output(&written.inventory)?;
    for p in written.manifests.values() {
        run.output(p)?;
    }
    for p in &written.feature_files {
        run.output(p)?;
    }
    run.seed = Some(cfg.seed);
    run.effective_config = serde_json::to_value(&cfg)?;
    run.finish(&common.run_manifest.clone().unwrap_or_else(|| out.join("run.json")))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxRunConfig {
    pub aux: AuxConfig,
    pub train: TrainConfig,
}

pub fn train_aux(
    common: &Common,
    flags: &TrainFlags,
    train: &Path,
    valid: &Path,
    out: &Path,
    log: Option<&Path>,
) -> Result<()> {
    let mut run = start("train-aux", common)?;
    let mut cfg: AuxRunConfig = read_config(common.config.as_deref())?;
    apply_flags(&mut cfg.train, flags);
    cfg.train.validate()?;
    cfg.aux.validate()?;
    let prep = |p: &Path, run: &mut RunManifest| -> Result<Vec<Example>> {
        let records = load_records(p, None, run)?;
        let inv = records_inventory(&records)?;
        prepare_examples(&records, &inv, &cfg.aux.l1_classes, &cfg.aux.l2_classes)
    };
    let (tr, va) = (prep(train, &mut run)?, prep(valid, &mut run)?);
    let result = fit_aux(&tr, &va, &cfg.aux, &cfg.train)?;
    log::info!(
        "aux: best epoch {}, L1 accuracy {:.4}, L2 accuracy {:.4}",
        result.best_epoch,
        result.l1_accuracy,
        result.l2_accuracy
    );
    result.checkpoint.save(out)?;
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(out, ".log.jsonl"));
    write_atomic(&log_path, log_to_jsonl(&result.log)?.as_bytes())?;
    run.output(out)?;
    run.output(&log_path)?;
    run.seed = Some(cfg.train.seed);
    run.effective_config = serde_json::to_value(&cfg)?;
    run.finish(&manifest_path(common, out))
}

/// The aux classifier reads only features and labels; phoneme strings are
/// encoded against an inventory of whatever symbols the records use.
fn records_inventory(records: &[UtteranceRecord]) -> Result<PhonemeInventory> {
    let mut symbols: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for r in records {
        symbols.extend(r.canonical.iter().cloned());
        symbols.extend(r.annotated.iter().cloned());
    }
    let symbols: Vec<String> = symbols.into_iter().collect();
    let languages = records.iter().map(|r| (r.l2.clone(), symbols.clone())).collect();
    PhonemeInventory::build_union(&languages)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub struct TrainArgs<'a> {
    pub common: &'a Common,
    pub flags: &'a TrainFlags,
    pub inventory: &'a Path,
    pub train: &'a Path,
    pub valid: &'a Path,
    pub conditioning: Option<&'a str>,
    pub phoneme_encoder: Option<OnOff>,
    pub aux_checkpoint: Option<&'a Path>,
    pub aux_training: Option<&'a str>,
    pub alpha: Option<f64>,
    pub out: &'a Path,
    pub log: Option<&'a Path>,
}

fn parse_aux_training(s: &str) -> Result<AuxTraining> {
    match s {
        "sequential" | "seq" => Ok(AuxTraining::Sequential),
        "joint" => Ok(AuxTraining::Joint),
        other => Err(Error::Config(format!("unknown aux training mode {other:?}"))),
    }
}

pub fn train(a: TrainArgs<'_>) -> Result<()> {
    let mut run = start("train", a.common)?;
    let mut cfg: TrainRunConfig = read_config(a.common.config.as_deref())?;
    apply_flags(&mut cfg.train, a.flags);
    if let Some(c) = a.conditioning {
        cfg.model.conditioning = Conditioning::parse(c)?;
    }
    if let Some(p) = a.phoneme_encoder {
        cfg.model.phoneme_encoder = p.enabled();
    }
    if let Some(t) = a.aux_training {
        cfg.train.aux_training = parse_aux_training(t)?;
    }
    if let Some(alpha) = a.alpha {
        cfg.train.alpha = alpha;
    }
    run.input(a.inventory)?;
    let inventory = PhonemeInventory::load(a.inventory)?;
    cfg.model.num_phonemes = inventory.len();
    cfg.model.validate()?;
    cfg.train.validate()?;
    let aux = match (cfg.model.conditioning, a.aux_checkpoint) {
        (Conditioning::Aux, None) => {
            return Err(Error::Config("aux conditioning needs --aux-checkpoint".into()));
        }
        (Conditioning::Aux, Some(p)) => {
            run.input(p)?;
            Some(AuxModel::from_checkpoint(&Checkpoint::load(p)?)?)
        }
        _ => None,
    };
    let (l1, l2) = (&cfg.model.l1_classes, &cfg.model.l2_classes);
    let tr = examples(a.train, &inventory, l1, l2, &mut run)?;
    let va = examples(a.valid, &inventory, l1, l2, &mut run)?;
    let result = train_mdd(&tr, &va, &cfg.model, &inventory, aux.as_ref(), &cfg.train)?;
    log::info!(
        "train: best epoch {} of {}, validation PER {:.2}",
        result.best_epoch,
        result.epochs_run,
        result.checkpoint.best_metric.unwrap_or(f64::NAN)
    );
    result.checkpoint.save(a.out)?;
    let log_path = a.log.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(a.out, ".log.jsonl"));
    write_atomic(&log_path, log_to_jsonl(&result.log)?.as_bytes())?;
    run.output(a.out)?;
    run.output(&log_path)?;
    run.seed = Some(cfg.train.seed);
    run.effective_config = serde_json::to_value(&cfg)?;
    run.finish(&manifest_path(a.common, a.out))
}

fn load_model(path: &Path, run: &mut RunManifest) -> Result<MddModel> {
    run.input(path)?;
    MddModel::from_checkpoint(&Checkpoint::load(path)?)
}

fn model_examples(model: &MddModel, manifest: &Path, run: &mut RunManifest) -> Result<Vec<Example>> {
    let l1 = &model.config.l1_classes;
    let l2 = &model.config.l2_classes;
    examples(manifest, &model.inventory, l1, l2, run)
}

pub fn decode(common: &Common, checkpoint: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let mut run = start("decode", common)?;
    let model = load_model(checkpoint, &mut run)?;
    let exs = model_examples(&model, manifest, &mut run)?;
    let mut text = String::new();
    for ex in &exs {
        let r = UtteranceResult {
            utt_id: ex.utt_id.clone(),
            l2: ex.l2.clone(),
            canonical: ex.canonical.clone(),
            annotated: ex.annotated.clone(),
            predicted: model.decode(ex)?,
        };
        text.push_str(&serde_json::to_string(&r)?);
        text.push('\n');
    }
    write_atomic(out, text.as_bytes())?;
    run.output(out)?;
    run.effective_config = model.config_snapshot(None)?;
    run.finish(&manifest_path(common, out))
}

fn load_predictions(path: &Path) -> Result<Vec<UtteranceResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn eval(
    common: &Common,
    checkpoint: Option<&Path>,
    manifest: Option<&Path>,
    predictions: Option<&Path>,
    report_path: &Path,
) -> Result<()> {
    let mut run = start("eval", common)?;
    let mut identifiers = BTreeMap::new();
    let mut report: MetricsReport = match (checkpoint, manifest, predictions) {
        (_, _, Some(p)) => {
            run.input(p)?;
            identifiers.insert("predictions".into(), p.display().to_string());
            identifiers.insert("predictions_sha256".into(), sha256_file(p)?);
            evaluate(&load_predictions(p)?)?
        }
        (Some(c), Some(m), None) => {
            let model = load_model(c, &mut run)?;
            let exs = model_examples(&model, m, &mut run)?;
            identifiers.insert("checkpoint".into(), c.display().to_string());
            identifiers.insert("checkpoint_sha256".into(), sha256_file(c)?);
            identifiers.insert("manifest".into(), m.display().to_string());
            identifiers.insert("manifest_sha256".into(), sha256_file(m)?);
            identifiers.insert("conditioning".into(), model.config.conditioning.name().into());
            identifiers.insert("phoneme_encoder".into(), model.config.phoneme_encoder.to_string());
            run.effective_config = model.config_snapshot(None)?;
            model.evaluate(&exs)?.report
        }
        _ => return Err(Error::Input("eval needs --checkpoint with --manifest, or --predictions".into())),
    };
    report.identifiers = identifiers;
    report.save(report_path)?;
    run.output(report_path)?;
    run.finish(&manifest_path(common, report_path))
}

pub fn ablate(
    common: &Common,
    seed: Option<u64>,
    variants: &[String],
    inventory: &Path,
    splits: [&PathBuf; 3],
    out: &Path,
) -> Result<()> {
    let mut run = start("ablate", common)?;
    let mut cfg: AblationConfig = read_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.aux_train.seed = s;
    }
    if !variants.is_empty() {
        cfg.variants = variants.iter().map(|v| Variant::parse(v)).collect::<Result<_>>()?;
    }
    cfg.train.validate()?;
    cfg.aux_train.validate()?;
    run.input(inventory)?;
    let inv = PhonemeInventory::load(inventory)?;
    cfg.model.num_phonemes = inv.len();
    let (l1, l2) = (cfg.model.l1_classes.clone(), cfg.model.l2_classes.clone());
    let [tr, va, te] = splits.map(|p| examples(p, &inv, &l1, &l2, &mut run));
    let (tr, va, te) = (tr?, va?, te?);
    let table = run_ablation(
        &cfg,
        &AblationData {
            inventory: &inv,
            train: &tr,
            valid: &va,
            test: &te,
        },
    )?;
    let listed: Vec<Variant> = table.rows.iter().map(|r| r.variant).collect();
    if listed != cfg.variants {
        return Err(Error::Evaluation("ablation table does not list exactly the configured variants".into()));
    }
    write_atomic(out, table.to_json()?.as_bytes())?;
    let text_path = with_suffix(out, ".txt");
    write_atomic(&text_path, table.to_text().as_bytes())?;
    log::info!("ablation results:\n{}", table.to_text());
    run.output(out)?;
    run.output(&text_path)?;
    run.seed = Some(cfg.train.seed);
    run.effective_config = serde_json::to_value(&cfg)?;
    run.finish(&manifest_path(common, out))
}
