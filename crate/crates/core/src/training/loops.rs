use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::checkpoint::Checkpoint;
use super::config::{AuxTraining, EarlyStopping, LogRecord, LossBreakdown, TrainConfig};
use crate::autodiff::{cross_entropy, Bound, Var};
use crate::corpus::{batch_order, Example};
use crate::ctc::{ctc_loss_batch, greedy_decode, CtcTarget};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, UtteranceResult};
use crate::networks::{
    aux_forward, aux_schema, init_params, is_aux_param, is_conv_param, mdd_forward, mdd_schema, AuxConfig,
    Conditioning, MddInput, ModelConfig,
};
use crate::phonemes::PhonemeInventory;
use crate::rng::SeedTree;
use crate::{AdamState, ParamStore, Tape, Tensor};

fn class_of(classes: &[String], value: &str, what: &str, utt: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == value)
        .ok_or_else(|| Error::Data(format!("{utt}: {what} label {value} not in configured classes {classes:?}")))
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Option<Var>> {
    let Some((first, rest)) = vars.split_first() else {
        return Ok(None);
    };
    let mut total = *first;
    for v in rest {
        total = tape.add(total, *v)?;
    }
    Ok(Some(total))
}

fn mean_vars(tape: &mut Tape, vars: &[Var]) -> Result<Option<Var>> {
    Ok(sum_vars(tape, vars)?.map(|s| tape.scale(s, 1.0 / vars.len() as f64)))
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

/// Gradient-based update of the parameters whose names pass `trainable`.
fn apply_step(
    tape: &Tape,
    bound: &Bound,
    loss: Var,
    trainable: &dyn Fn(&str) -> bool,
    params: &mut ParamStore,
    adam: &mut AdamState,
) -> Result<()> {
    let grads = tape.backward(loss)?;
    let table: BTreeMap<String, Tensor> = bound
        .iter()
        .filter(|(name, _)| trainable(name))
        .map(|(name, v)| (name.to_string(), grads.wrt(v)))
        .collect();
    adam.step(params, &table)
}

fn epoch_order(cfg: &TrainConfig, n: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
    let seed = SeedTree::new(cfg.seed).child("epoch").child(&epoch.to_string()).seed();
    batch_order(n, cfg.batch_size, seed, cfg.shuffle)
}

fn mean_breakdown(steps: &[LossBreakdown]) -> LossBreakdown {
    let n = steps.len().max(1) as f64;
    let mut m = LossBreakdown::default();
    for s in steps {
        m.loss_pr += s.loss_pr / n;
        m.loss_l1 += s.loss_l1 / n;
        m.loss_l2 += s.loss_l2 / n;
        m.total += s.total / n;
    }
    m
}

fn inventory_value(inv: &PhonemeInventory) -> Result<Value> {
    Ok(serde_json::from_str(&inv.to_json()?)?)
}

fn config_field<T: serde::de::DeserializeOwned>(config: &Value, key: &str) -> Result<T> {
    let v = config
        .get(key)
        .ok_or_else(|| Error::Format(format!("checkpoint config lacks {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("checkpoint config {key:?}: {e}")))
}

/// Auxiliary L1 / L2 classifier with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxModel {
    pub config: AuxConfig,
    pub params: ParamStore,
}

impl AuxModel {
    pub fn init(config: &AuxConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeedTree::new(seed).rng("aux-init");
        Ok(Self {
            config: config.clone(),
            params: init_params(&aux_schema(config), &mut rng),
        })
    }

    /// Predicted (L1, L2) class indices.
    pub fn predict(&self, features: &Tensor) -> Result<(usize, usize)> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, &self.params, |_| false);
        let x = tape.constant(features.clone());
        let out = aux_forward(&mut tape, &bound, &self.config, x)?;
        Ok((argmax(tape.value(out.l1_logits).data()), argmax(tape.value(out.l2_logits).data())))
    }

    /// Fraction of correctly classified L1 and L2 labels.
    pub fn accuracy(&self, examples: &[Example]) -> Result<(f64, f64)> {
        if examples.is_empty() {
            return Err(Error::Data("accuracy over an empty set".into()));
        }
        let (mut c1, mut c2) = (0usize, 0usize);
        for ex in examples {
            let (p1, p2) = self.predict(&ex.features)?;
            c1 += usize::from(p1 == class_of(&self.config.l1_classes, &ex.l1, "L1", &ex.utt_id)?);
            c2 += usize::from(p2 == class_of(&self.config.l2_classes, &ex.l2, "L2", &ex.utt_id)?);
        }
        let n = examples.len() as f64;
        Ok((c1 as f64 / n, c2 as f64 / n))
    }

    pub fn config_snapshot(&self, train: Option<&TrainConfig>) -> Value {
        json!({"kind": "aux", "aux": self.config, "train": train})
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: AuxConfig = config_field(&ck.config, "aux")?;
        let params = ck.params.subset(crate::networks::AUX_PREFIX);
        let expected = aux_schema(&config);
        check_schema(&params, &expected)?;
        Ok(Self { config, params })
    }
}

fn check_schema(params: &ParamStore, schema: &[crate::networks::ParamSpec]) -> Result<()> {
    for spec in schema {
        match params.get(&spec.name) {
            Some(t) if t.shape() == [spec.rows, spec.cols] => {}
            Some(t) => {
                return Err(Error::Format(format!(
                    "parameter {} has shape {:?}, config expects [{}, {}]",
                    spec.name,
                    t.shape(),
                    spec.rows,
                    spec.cols
                )))
            }
            None => return Err(Error::Format(format!("checkpoint lacks parameter {}", spec.name))),
        }
    }
    if params.len() != schema.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameters, config expects {}",
            params.len(),
            schema.len()
        )));
    }
    Ok(())
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Recognizer weights with everything needed to run them.
#[derive(Clone, Debug, PartialEq)]
pub struct MddModel {
    pub config: ModelConfig,
    /// Present exactly when the conditioning is the aux embedding; the aux
    /// weights then live in `params` under the aux prefix.
    pub aux: Option<AuxConfig>,
    pub inventory: PhonemeInventory,
    pub params: ParamStore,
}

/// Held-out losses and detection metrics of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub results: Vec<UtteranceResult>,
    /// Means over utterances; CE terms are zero without an aux network.
    pub losses: LossBreakdown,
    pub infeasible: usize,
}

impl MddModel {
    /// Fresh recognizer over `inventory`. Aux conditioning copies the given
    /// aux weights in.
    pub fn init(config: &ModelConfig, inventory: &PhonemeInventory, aux: Option<&AuxModel>, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.num_phonemes != inventory.len() {
            return Err(Error::Config(format!(
                "model emits {} phonemes, inventory has {}",
                config.num_phonemes,
                inventory.len()
            )));
        }
        let mut rng = SeedTree::new(seed).rng("mdd-init");
        let mut params = init_params(&mdd_schema(config), &mut rng);
        let aux_cfg = if config.conditioning == Conditioning::Aux {
            let aux = aux.ok_or_else(|| Error::Config("aux conditioning needs a trained aux model".into()))?;
            if aux.config.d_eps != config.d_eps {
                return Err(Error::Config(format!(
                    "aux embedding has {} dims, recognizer expects {}",
                    aux.config.d_eps, config.d_eps
                )));
            }
            params.extend(aux.params.clone());
            Some(aux.config.clone())
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            aux: aux_cfg,
            inventory: inventory.clone(),
            params,
        })
    }

    pub fn aux_model(&self) -> Option<AuxModel> {
        self.aux.as_ref().map(|c| AuxModel {
            config: c.clone(),
            params: self.params.subset(crate::networks::AUX_PREFIX),
        })
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        ex: &Example,
        aux_embedding: Option<&Tensor>,
    ) -> Result<(Var, Vec<usize>, Option<crate::networks::AuxOutput>)> {
        let canonical = self.inventory.encode(&ex.canonical)?;
        let input = MddInput {
            features: &ex.features,
            canonical: &canonical,
            l1: &ex.l1,
            l2: &ex.l2,
            aux_embedding,
        };
        let out = mdd_forward(tape, bound, &self.config, self.aux.as_ref(), &input)?;
        let logp = tape.log_softmax_rows(out.logits);
        Ok((logp, self.inventory.encode(&ex.annotated)?, out.aux))
    }

    /// Aux embedding of each example under the current aux weights.
    fn aux_embeddings(&self, examples: &[Example]) -> Result<Vec<Tensor>> {
        let cfg = self.aux.as_ref().ok_or_else(|| Error::Config("model has no aux network".into()))?;
        examples
            .iter()
            .map(|ex| {
                let mut tape = Tape::new();
                let bound = Bound::bind(&mut tape, &self.params, |_| false);
                let x = tape.constant(ex.features.clone());
                let out = aux_forward(&mut tape, &bound, cfg, x)?;
                Ok(tape.value(out.embedding).clone())
            })
            .collect()
    }

    /// Frame-level log posteriors, `T × (|PS| + 1)`.
    pub fn log_probs(&self, ex: &Example) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, &self.params, |_| false);
        let (logp, _, _) = self.forward(&mut tape, &bound, ex, None)?;
        Ok(tape.value(logp).clone())
    }

    /// Greedy CTC decoding into phoneme symbols.
    pub fn decode(&self, ex: &Example) -> Result<Vec<String>> {
        let ids = greedy_decode(&self.log_probs(ex)?, self.config.blank_id());
        self.inventory.decode(&ids)
    }

    pub fn evaluate(&self, examples: &[Example]) -> Result<Evaluation> {
        if examples.is_empty() {
            return Err(Error::Data("evaluation over an empty set".into()));
        }
        let blank = self.config.blank_id();
        let mut results = Vec::with_capacity(examples.len());
        let (mut pr, mut l1, mut l2) = (Vec::new(), 0.0, 0.0);
        let mut infeasible = 0;
        for ex in examples {
            let mut tape = Tape::new();
            let bound = Bound::bind(&mut tape, &self.params, |_| false);
            let (logp, target, aux) = self.forward(&mut tape, &bound, ex, None)?;
            let loss = crate::ctc::ctc_loss(&mut tape, logp, &CtcTarget::new(target, blank)?)?;
            match loss.var() {
                Some(v) => pr.push(scalar(&tape, v)),
                None => infeasible += 1,
            }
            if let (Some(a), Some(cfg)) = (aux, self.aux.as_ref()) {
                let y1 = class_of(&cfg.l1_classes, &ex.l1, "L1", &ex.utt_id)?;
                let y2 = class_of(&cfg.l2_classes, &ex.l2, "L2", &ex.utt_id)?;
                let c1 = cross_entropy(&mut tape, a.l1_logits, y1)?;
                let c2 = cross_entropy(&mut tape, a.l2_logits, y2)?;
                l1 += scalar(&tape, c1);
                l2 += scalar(&tape, c2);
            }
            let ids = greedy_decode(tape.value(logp), blank);
            results.push(UtteranceResult {
                utt_id: ex.utt_id.clone(),
                l2: ex.l2.clone(),
                canonical: ex.canonical.clone(),
                annotated: ex.annotated.clone(),
                predicted: self.inventory.decode(&ids)?,
            });
        }
        let n = examples.len() as f64;
        let loss_pr = if pr.is_empty() {
            f64::INFINITY
        } else {
            pr.iter().sum::<f64>() / pr.len() as f64
        };
        Ok(Evaluation {
            report: evaluate(&results)?,
            results,
            losses: LossBreakdown {
                loss_pr,
                loss_l1: l1 / n,
                loss_l2: l2 / n,
                total: loss_pr,
            },
            infeasible,
        })
    }

    pub fn config_snapshot(&self, train: Option<&TrainConfig>) -> Result<Value> {
        Ok(json!({
            "kind": "mdd",
            "model": self.config,
            "aux": self.aux,
            "inventory": inventory_value(&self.inventory)?,
            "train": train,
        }))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.config.get("kind").and_then(Value::as_str) != Some("mdd") {
            return Err(Error::Format("checkpoint does not hold a recognizer".into()));
        }
        let config: ModelConfig = config_field(&ck.config, "model")?;
        let aux: Option<AuxConfig> = config_field(&ck.config, "aux")?;
        let inventory = PhonemeInventory::from_json(&config_field::<Value>(&ck.config, "inventory")?.to_string())?;
        let mut schema = mdd_schema(&config);
        if let Some(a) = &aux {
            schema.extend(aux_schema(a));
        }
        check_schema(&ck.params, &schema)?;
        Ok(Self {
            config,
            aux,
            inventory,
            params: ck.params.clone(),
        })
    }
}

/// Outcome of an MDD training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    /// Weights of the best validation epoch.
    pub model: MddModel,
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Outcome of aux pretraining.
#[derive(Clone, Debug)]
pub struct AuxRun {
    pub model: AuxModel,
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Validation accuracies of the returned weights.
    pub l1_accuracy: f64,
    pub l2_accuracy: f64,
}

/// Pretrains the aux classifier on `w₁·CE(L1) + w₂·CE(L2)`, stopping on the
/// mean of the two validation accuracies.
pub fn train_aux(train: &[Example], valid: &[Example], config: &AuxConfig, cfg: &TrainConfig) -> Result<AuxRun> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("aux training needs nonempty train and valid sets".into()));
    }
    let labels = |ex: &Example| -> Result<(usize, usize)> {
        Ok((
            class_of(&config.l1_classes, &ex.l1, "L1", &ex.utt_id)?,
            class_of(&config.l2_classes, &ex.l2, "L2", &ex.utt_id)?,
        ))
    };
    let train_labels = train.iter().map(labels).collect::<Result<Vec<_>>>()?;
    valid.iter().map(labels).collect::<Result<Vec<_>>>()?;

    let mut model = AuxModel::init(config, cfg.seed)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let freeze_conv = cfg.freeze_conv;
    let trainable = move |name: &str| !(freeze_conv && is_conv_param(name));
    let mut stopper = EarlyStopping::new(cfg.patience, false);
    let mut best: Option<(ParamStore, AdamState, f64, f64)> = None;
    let mut log = Vec::new();
    let mut step = 0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let mut steps = Vec::new();
        for batch in epoch_order(cfg, train.len(), epoch)? {
            let mut tape = Tape::new();
            let bound = Bound::bind(&mut tape, &model.params, trainable);
            let (mut ce1, mut ce2) = (Vec::new(), Vec::new());
            for &i in &batch {
                let x = tape.constant(train[i].features.clone());
                let out = aux_forward(&mut tape, &bound, config, x)?;
                let (y1, y2) = train_labels[i];
                ce1.push(cross_entropy(&mut tape, out.l1_logits, y1)?);
                ce2.push(cross_entropy(&mut tape, out.l2_logits, y2)?);
            }
            let m1 = mean_vars(&mut tape, &ce1)?.expect("nonempty batch");
            let m2 = mean_vars(&mut tape, &ce2)?.expect("nonempty batch");
            let w1 = tape.scale(m1, cfg.aux_weights[0]);
            let w2 = tape.scale(m2, cfg.aux_weights[1]);
            let total = tape.add(w1, w2)?;
            let breakdown = LossBreakdown::aux(scalar(&tape, m1), scalar(&tape, m2), cfg.aux_weights);
            apply_step(&tape, &bound, total, &trainable, &mut model.params, &mut adam)?;
            log.push(LogRecord {
                step: Some(step),
                ..LogRecord::losses(epoch, "train-step", &breakdown)
            });
            steps.push(breakdown);
            step += 1;
        }
        log.push(LogRecord::losses(epoch, "train", &mean_breakdown(&steps)));
        let (a1, a2) = model.accuracy(valid)?;
        log.push(LogRecord {
            epoch,
            split: "valid".into(),
            loss_pr: None,
            loss_l1: None,
            loss_l2: None,
            total: None,
            per: None,
            frr: None,
            step: None,
            l1_accuracy: Some(a1),
            l2_accuracy: Some(a2),
        });
        if stopper.observe(epoch, (a1 + a2) / 2.0) {
            best = Some((model.params.clone(), adam.clone(), a1, a2));
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }
    let (best_epoch, metric) = stopper.best().expect("at least one epoch");
    let (params, adam, l1_accuracy, l2_accuracy) = best.expect("best recorded");
    model.params = params;
    let checkpoint = Checkpoint {
        config: model.config_snapshot(Some(cfg)),
        epoch: best_epoch,
        best_metric: Some(metric),
        params: model.params.clone(),
        adam,
    };
    Ok(AuxRun {
        model,
        checkpoint,
        log,
        best_epoch,
        epochs_run,
        l1_accuracy,
        l2_accuracy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Objective {
    Recognition,
    Sequential,
    Joint,
}

/// Training examples with, under a frozen aux network, their embeddings.
struct TrainSet<'a> {
    examples: &'a [Example],
    aux_cache: Option<Vec<Tensor>>,
}

/// One optimizer step over a batch; returns the logged breakdown.
fn mdd_step(
    model: &mut MddModel,
    adam: &mut AdamState,
    data: &TrainSet<'_>,
    batch: &[usize],
    objective: Objective,
    cfg: &TrainConfig,
    trainable: &dyn Fn(&str) -> bool,
) -> Result<Option<LossBreakdown>> {
    let blank = model.config.blank_id();
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, &model.params, trainable);
    let mut items = Vec::with_capacity(batch.len());
    let (mut ce1, mut ce2) = (Vec::new(), Vec::new());
    for &i in batch {
        let ex = &data.examples[i];
        let cached = data.aux_cache.as_ref().map(|c| &c[i]);
        let (logp, target, aux) = model.forward(&mut tape, &bound, ex, cached)?;
        items.push((logp, CtcTarget::new(target, blank)?));
        if objective == Objective::Joint {
            let (a, acfg) = (aux.expect("aux output"), model.aux.as_ref().expect("aux config"));
            let y1 = class_of(&acfg.l1_classes, &ex.l1, "L1", &ex.utt_id)?;
            let y2 = class_of(&acfg.l2_classes, &ex.l2, "L2", &ex.utt_id)?;
            ce1.push(cross_entropy(&mut tape, a.l1_logits, y1)?);
            ce2.push(cross_entropy(&mut tape, a.l2_logits, y2)?);
        }
    }
    let ctc = ctc_loss_batch(&mut tape, &items)?;
    let Some(pr) = ctc.mean else {
        return Ok(None);
    };
    let (loss, breakdown) = if objective == Objective::Joint {
        let m1 = mean_vars(&mut tape, &ce1)?.expect("nonempty batch");
        let m2 = mean_vars(&mut tape, &ce2)?.expect("nonempty batch");
        let ce = tape.add(m1, m2)?;
        let a = tape.scale(pr, cfg.alpha);
        let b = tape.scale(ce, 1.0 - cfg.alpha);
        let total = tape.add(a, b)?;
        let bd = LossBreakdown::joint(scalar(&tape, pr), scalar(&tape, m1), scalar(&tape, m2), cfg.alpha);
        (total, bd)
    } else {
        (pr, LossBreakdown::recognition_only(scalar(&tape, pr)))
    };
    apply_step(&tape, &bound, loss, trainable, &mut model.params, adam)?;
    Ok(Some(breakdown))
}

fn train_loop(train: &[Example], valid: &[Example], mut model: MddModel, cfg: &TrainConfig, objective: Objective) -> Result<TrainRun> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("training needs nonempty train and valid sets".into()));
    }
    let freeze_conv = cfg.freeze_conv;
    let freeze_aux = objective == Objective::Sequential;
    let trainable = move |name: &str| !(freeze_conv && is_conv_param(name)) && !(freeze_aux && is_aux_param(name));
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience, true);
    let mut best: Option<(ParamStore, AdamState)> = None;
    let mut log = Vec::new();
    let mut step = 0;
    let mut epochs_run = 0;
    // Frozen aux weights give a fixed embedding per utterance.
    let data = TrainSet {
        examples: train,
        aux_cache: if freeze_aux {
            Some(model.aux_embeddings(train)?)
        } else {
            None
        },
    };
    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let mut steps = Vec::new();
        for batch in epoch_order(cfg, train.len(), epoch)? {
            if let Some(bd) = mdd_step(&mut model, &mut adam, &data, &batch, objective, cfg, &trainable)? {
                log.push(LogRecord {
                    step: Some(step),
                    ..LogRecord::losses(epoch, "train-step", &bd)
                });
                steps.push(bd);
            }
            step += 1;
        }
        log.push(LogRecord::losses(epoch, "train", &mean_breakdown(&steps)));
        let eval = model.evaluate(valid)?;
        let l = eval.losses;
        let losses = if objective == Objective::Joint {
            LossBreakdown::joint(l.loss_pr, l.loss_l1, l.loss_l2, cfg.alpha)
        } else {
            LossBreakdown::recognition_only(l.loss_pr)
        };
        let per = eval.report.per();
        log.push(LogRecord {
            per: Some(per),
            frr: Some(eval.report.frr()),
            ..LogRecord::losses(epoch, "valid", &losses)
        });
        if stopper.observe(epoch, per) {
            best = Some((model.params.clone(), adam.clone()));
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }
    let (best_epoch, metric) = stopper.best().expect("at least one epoch");
    let (params, adam) = best.expect("best recorded");
    model.params = params;
    let checkpoint = Checkpoint {
        config: model.config_snapshot(Some(cfg))?,
        epoch: best_epoch,
        best_metric: Some(metric),
        params: model.params.clone(),
        adam,
    };
    Ok(TrainRun {
        model,
        checkpoint,
        log,
        best_epoch,
        epochs_run,
    })
}

fn require_aux_mode(config: &ModelConfig) -> Result<()> {
    if config.conditioning != Conditioning::Aux {
        return Err(Error::Config(format!(
            "aux training strategies need aux conditioning, got {}",
            config.conditioning.name()
        )));
    }
    Ok(())
}

/// Recognizer trained on the CTC loss alone with the aux network frozen.
pub fn train_mdd_sequential(
    train: &[Example],
    valid: &[Example],
    config: &ModelConfig,
    inventory: &PhonemeInventory,
    aux: Option<&AuxModel>,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    require_aux_mode(config)?;
    let model = MddModel::init(config, inventory, aux, cfg.seed)?;
    train_loop(train, valid, model, cfg, Objective::Sequential)
}

/// Recognizer and aux network updated together on the combined loss,
/// starting from the pretrained aux weights.
pub fn train_mdd_joint(
    train: &[Example],
    valid: &[Example],
    config: &ModelConfig,
    inventory: &PhonemeInventory,
    aux: Option<&AuxModel>,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    require_aux_mode(config)?;
    let model = MddModel::init(config, inventory, aux, cfg.seed)?;
    train_loop(train, valid, model, cfg, Objective::Joint)
}

/// Dispatches on the conditioning mode: aux conditioning follows
/// `cfg.aux_training`, every other mode trains on the CTC loss.
pub fn train_mdd(
    train: &[Example],
    valid: &[Example],
    config: &ModelConfig,
    inventory: &PhonemeInventory,
    aux: Option<&AuxModel>,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    match (config.conditioning, cfg.aux_training) {
        (Conditioning::Aux, AuxTraining::Sequential) => train_mdd_sequential(train, valid, config, inventory, aux, cfg),
        (Conditioning::Aux, AuxTraining::Joint) => train_mdd_joint(train, valid, config, inventory, aux, cfg),
        _ => {
            let model = MddModel::init(config, inventory, None, cfg.seed)?;
            train_loop(train, valid, model, cfg, Objective::Recognition)
        }
    }
}

/// Continues training an existing model, with the objective implied by its
/// conditioning and `cfg.aux_training`.
pub fn train_from(
    train: &[Example],
    valid: &[Example],
    model: MddModel,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    let objective = match (model.config.conditioning, cfg.aux_training) {
        (Conditioning::Aux, AuxTraining::Sequential) => Objective::Sequential,
        (Conditioning::Aux, AuxTraining::Joint) => Objective::Joint,
        _ => Objective::Recognition,
    };
    train_loop(train, valid, model, cfg, objective)
}
