//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; `ACCEPTANCE_ONLY=1,3` selects a subset.

mod common;

use std::time::{Duration, Instant};

use rand::Rng as _;

use common::*;
use l1mdd::autodiff::{cross_entropy, finite_diff_check, Bound, Var};
use l1mdd::corpus::{load_manifest, prepare_examples, synthesize_default, Example, Split, SplitCounts, SynthConfig};
use l1mdd::ctc::{ctc_loss, CtcTarget};
use l1mdd::eval::{align, classify, detection_rates, per, Verdict, VerdictCounts};
use l1mdd::networks::{
    aux_forward, aux_schema, cross_attention, init_params, mdd_forward, mdd_schema, phoneme_encode, AuxConfig,
    Conditioning, ConvSpec, EncoderConfig, MddInput, ModelConfig,
};
use l1mdd::phonemes::PhonemeInventory;
use l1mdd::rng::SeedTree;
use l1mdd::training::*;
use l1mdd::{ParamStore, Tape, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (took < limit, format!("{:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut l1mdd::rng::Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// 1. CTC against path enumeration

/// `-ln Σ_paths Π_t p[t, path_t]` over every path collapsing to `target`.
fn enumerate_ctc(probs: &[Vec<f64>], target: &[usize], blank: usize) -> f64 {
    let (t_len, c) = (probs.len(), probs[0].len());
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    for code in 0..c.pow(t_len as u32) {
        let mut k = code;
        for slot in path.iter_mut() {
            *slot = k % c;
            k /= c;
        }
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &s in &path {
            if Some(s) != prev && s != blank {
                collapsed.push(s);
            }
            prev = Some(s);
        }
        if collapsed == target {
            total += path.iter().enumerate().map(|(t, &s)| probs[t][s]).product::<f64>();
        }
    }
    -total.ln()
}

fn all_targets(labels: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &frontier {
            for l in 0..labels {
                let mut e: Vec<usize> = t.clone();
                e.push(l);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn criterion_ctc_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = SeedTree::new(1).rng("ctc-oracle");
    let (mut cases, mut worst, mut mismatched_feasibility) = (0usize, 0.0f64, 0usize);
    for c in 1..=3usize {
        let blank = c - 1;
        let targets = all_targets(c - 1, 3);
        for t_len in 1..=4usize {
            for _ in 0..100 {
                let probs: Vec<Vec<f64>> = (0..t_len)
                    .map(|_| {
                        let row: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
                        let s: f64 = row.iter().sum();
                        row.into_iter().map(|p| p / s).collect()
                    })
                    .collect();
                let logp = Tensor::matrix(t_len, c, probs.iter().flatten().map(|p| p.ln()).collect()).unwrap();
                for target in &targets {
                    cases += 1;
                    let want = enumerate_ctc(&probs, target, blank);
                    let mut tape = Tape::new();
                    let lp = tape.constant(logp.clone());
                    let loss = ctc_loss(&mut tape, lp, &CtcTarget::new(target.clone(), blank).unwrap()).unwrap();
                    match loss.var() {
                        Some(v) => worst = worst.max((tape.value(v).data()[0] - want).abs()),
                        None if want.is_infinite() => {}
                        None => mismatched_feasibility += 1,
                    }
                }
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(30), started);
    outcome(
        worst < 1e-9 && mismatched_feasibility == 0 && fast,
        format!("{cases} cases, max |ctc − enumeration| {worst:.2e}, feasibility mismatches {mismatched_feasibility}, {time}"),
    )
}

// ---------------------------------------------------------------------------
// 2. Finite-difference gradients

fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> l1mdd::Result<Var> {
    let (r, c) = tape.shape(x);
    let w = tape.constant(uniform(r, c, -2.0, 2.0, &mut SeedTree::new(seed).rng("weights")));
    let m = tape.mul(x, w)?;
    Ok(tape.sum_all(m))
}

fn fd_error<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> l1mdd::Result<Var>,
{
    finite_diff_check(f, inputs, 1e-5).map(|r| r.max_rel_error).unwrap_or(f64::INFINITY)
}

fn primitive_error(name: &str, shapes: &[(usize, usize)], f: impl Fn(&mut Tape, &[Var]) -> l1mdd::Result<Var>) -> f64 {
    let mut rng = SeedTree::new(2).rng(name);
    let inputs: Vec<Tensor> = shapes.iter().map(|&(r, c)| uniform(r, c, -2.0, 2.0, &mut rng)).collect();
    fd_error(
        |tape, v| {
            let out = f(tape, v)?;
            weighted_sum(tape, out, 3)
        },
        &inputs,
    )
}

fn gradient_encoder() -> EncoderConfig {
    let conv = ConvSpec {
        channels: 8,
        kernel: 3,
        stride: 2,
    };
    EncoderConfig {
        input_dim: 8,
        d_model: 16,
        conv: vec![conv.clone(), conv],
        blocks: 1,
        heads: 2,
        ffn_dim: 32,
    }
}

fn gradient_model(conditioning: Conditioning, phoneme_encoder: bool) -> ModelConfig {
    ModelConfig {
        encoder: gradient_encoder(),
        num_phonemes: 5,
        d_emb: 8,
        d_h: 8,
        d_attn: 16,
        d_eps: 8,
        projection_dim: 16,
        conditioning,
        phoneme_encoder,
        ..ModelConfig::default()
    }
}

fn gradient_aux() -> AuxConfig {
    AuxConfig {
        encoder: gradient_encoder(),
        d_eps: 8,
        ..AuxConfig::default()
    }
}

fn store(schema: &[l1mdd::networks::ParamSpec], seed: u64) -> ParamStore {
    init_params(schema, &mut SeedTree::new(seed).rng("init"))
}

fn split_store(s: &ParamStore) -> (Vec<String>, Vec<Tensor>) {
    s.iter().map(|(n, t)| (n.to_string(), t.clone())).unzip()
}

fn bound_from(names: &[String], vars: &[Var]) -> Bound {
    Bound::from_vars(names.iter().map(String::as_str).zip(vars.iter().copied()))
}

fn criterion_gradients() -> Outcome {
    let started = Instant::now();
    let mut errors: Vec<(String, f64)> = Vec::new();
    let mut prim = |name: &str, shapes: &[(usize, usize)], f: &dyn Fn(&mut Tape, &[Var]) -> l1mdd::Result<Var>| {
        errors.push((name.into(), primitive_error(name, shapes, f)));
    };
    prim("add", &[(2, 3), (2, 3)], &|t, v| t.add(v[0], v[1]));
    prim("sub", &[(2, 3), (2, 3)], &|t, v| t.sub(v[0], v[1]));
    prim("mul", &[(2, 3), (2, 3)], &|t, v| t.mul(v[0], v[1]));
    prim("scale", &[(2, 3)], &|t, v| Ok(t.scale(v[0], 0.3)));
    prim("add_row", &[(3, 4), (1, 4)], &|t, v| t.add_row(v[0], v[1]));
    prim("mul_row", &[(3, 4), (1, 4)], &|t, v| t.mul_row(v[0], v[1]));
    prim("matmul", &[(3, 4), (4, 2)], &|t, v| t.matmul(v[0], v[1]));
    prim("transpose", &[(3, 2)], &|t, v| Ok(t.transpose(v[0])));
    prim("concat_cols", &[(2, 3), (2, 2)], &|t, v| t.concat_cols(&[v[0], v[1]]));
    prim("concat_rows", &[(2, 3), (1, 3)], &|t, v| t.concat_rows(&[v[0], v[1]]));
    prim("slice_cols", &[(3, 5)], &|t, v| t.slice_cols(v[0], 1, 4));
    prim("slice_rows", &[(4, 2)], &|t, v| t.slice_rows(v[0], 1, 3));
    prim("tile_rows", &[(1, 3)], &|t, v| t.tile_rows(v[0], 3));
    prim("tanh", &[(2, 3)], &|t, v| Ok(t.tanh(v[0])));
    prim("sigmoid", &[(2, 3)], &|t, v| Ok(t.sigmoid(v[0])));
    prim("relu", &[(3, 3)], &|t, v| Ok(t.relu(v[0])));
    prim("exp", &[(2, 3)], &|t, v| Ok(t.exp(v[0])));
    prim("log", &[(2, 3)], &|t, v| {
        let e = t.exp(v[0]);
        Ok(t.log(e))
    });
    prim("softmax_rows", &[(3, 4)], &|t, v| Ok(t.softmax_rows(v[0])));
    prim("log_softmax_rows", &[(3, 4)], &|t, v| Ok(t.log_softmax_rows(v[0])));
    prim("layer_norm_rows", &[(3, 5)], &|t, v| Ok(t.layer_norm_rows(v[0], 1e-5)));
    prim("mean_rows", &[(4, 3)], &|t, v| t.mean_rows(v[0]));
    prim("mean_rows_masked", &[(4, 3)], &|t, v| t.mean_rows_masked(v[0], vec![true, false, true, true]));
    prim("mean_cols", &[(4, 3)], &|t, v| Ok(t.mean_cols(v[0])));
    prim("sum_all", &[(2, 3)], &|t, v| Ok(t.sum_all(v[0])));
    prim("mask_rows", &[(3, 2)], &|t, v| t.mask_rows(v[0], vec![true, false, true]));
    prim("gather_rows", &[(4, 3)], &|t, v| t.gather_rows(v[0], &[2, 0, 2]));
    prim("gather_flat", &[(2, 3)], &|t, v| t.gather_flat(v[0], &[Some(4), Some(0), Some(4)]));
    prim("logsumexp", &[(2, 3), (2, 3)], &|t, v| t.logsumexp(&[v[0], v[1]]));
    prim("unfold", &[(7, 3)], &|t, v| t.unfold(v[0], 3, 2));
    prim("cross_entropy", &[(1, 5)], &|t, v| cross_entropy(t, v[0], 3));

    let cfg = gradient_model(Conditioning::Aux, true);
    let aux = gradient_aux();
    let mut rng = SeedTree::new(4).rng("grad-inputs");

    let (names, inputs) = split_store(&store(&mdd_schema(&cfg), 5).subset("phon."));
    errors.push((
        "phoneme_encode".into(),
        fd_error(
            |tape, vars| {
                let enc = phoneme_encode(tape, &bound_from(&names, vars), &cfg, &[1, 4, 0, 1])?;
                weighted_sum(tape, enc.contextual, 6)
            },
            &inputs,
        ),
    ));

    let (names, mut inputs) = split_store(&store(&mdd_schema(&cfg), 7).subset("xattn."));
    let n = names.len();
    inputs.push(uniform(5, 16, -2.0, 2.0, &mut rng));
    inputs.push(uniform(3, 16, -2.0, 2.0, &mut rng));
    errors.push((
        "cross_attention".into(),
        fd_error(
            |tape, vars| {
                let att = cross_attention(tape, &bound_from(&names, &vars[..n]), vars[n], vars[n + 1])?;
                weighted_sum(tape, att.output, 8)
            },
            &inputs,
        ),
    ));

    let (names, mut inputs) = split_store(&store(&aux_schema(&aux), 9));
    inputs.push(uniform(16, 8, -1.0, 1.0, &mut rng));
    errors.push((
        "aux_forward".into(),
        fd_error(
            |tape, vars| {
                let out = aux_forward(tape, &bound_from(&names, vars), &aux, *vars.last().unwrap())?;
                let l1 = cross_entropy(tape, out.l1_logits, 1)?;
                let l2 = cross_entropy(tape, out.l2_logits, 2)?;
                let e = weighted_sum(tape, out.embedding, 10)?;
                let s = tape.add(l1, l2)?;
                tape.add(s, e)
            },
            &inputs,
        ),
    ));

    let mut full = store(&mdd_schema(&cfg), 11);
    full.extend(store(&aux_schema(&aux), 12));
    let (names, inputs) = split_store(&full);
    let feats = uniform(16, 8, -1.0, 1.0, &mut rng);
    let target = CtcTarget::new(vec![2, 0], cfg.blank_id()).unwrap();
    errors.push((
        "mdd_forward∘ctc_loss".into(),
        fd_error(
            |tape, vars| {
                let input = MddInput {
                    features: &feats,
                    canonical: &[2, 3, 0],
                    l1: "hi",
                    l2: "en",
                    aux_embedding: None,
                };
                let out = mdd_forward(tape, &bound_from(&names, vars), &cfg, Some(&aux), &input)?;
                let lp = tape.log_softmax_rows(out.logits);
                Ok(ctc_loss(tape, lp, &target)?.var().expect("feasible target"))
            },
            &inputs,
        ),
    ));

    let (name, worst) = errors.iter().fold(("", 0.0f64), |w, (n, e)| if *e > w.1 { (n, *e) } else { w });
    let (fast, time) = within(Duration::from_secs(120), started);
    outcome(
        worst <= 1e-4 && fast,
        format!("{} checks, max relative error {worst:.2e} ({name}), {time}", errors.len()),
    )
}

// ---------------------------------------------------------------------------
// 3. Hand-derived scoring examples

fn s(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

fn criterion_metrics() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let a = align(&s(&["k", "æ", "t"]), &s(&["k", "ɑ", "t"]));
    check("align substitution", a.counts().substitutions == 1 && a.distance() == 1);
    let a = align(&s(&["a", "b"]), &s(&["a", "b"]));
    check("align identity", a.distance() == 0 && a.counts().matches == 2);
    let a = align(&s(&["a", "b"]), &s(&["a"]));
    check("align deletion", a.counts().deletions == 1 && a.distance() == 1);

    let v = classify(&s(&["p", "q"]), &s(&["p", "q"]), &s(&["p", "r"])).verdicts;
    check("classify TA FR", v == [Verdict::TrueAccept, Verdict::FalseRejection]);
    let v = classify(&s(&["p"]), &s(&["r"]), &s(&["r"])).verdicts;
    check("classify TR_CD", v == [Verdict::CorrectDiagnosis]);
    let v = classify(&s(&["p"]), &s(&["r"]), &s(&["p"])).verdicts;
    check("classify FA", v == [Verdict::FalseAcceptance]);
    let v = classify(&s(&["p"]), &s(&["r"]), &s(&["t"])).verdicts;
    check("classify TR_DE", v == [Verdict::DiagnosisError]);

    check("per identical", per(&s(&["a", "b"]), &s(&["a", "b"])).unwrap() == 0.0);
    check("per one substitution", close(per(&s(&["a", "b", "c"]), &s(&["a", "x", "c"])).unwrap(), 100.0 / 3.0));
    check("per insertions", close(per(&s(&["a"]), &s(&["a", "b", "c"])).unwrap(), 200.0));
    check("per empty reference", per::<String>(&[], &s(&["a"])).is_err());

    let r = detection_rates(&VerdictCounts {
        ta: 1,
        fr: 1,
        ..VerdictCounts::default()
    });
    check("frr", close(r.frr, 0.5));
    let r = detection_rates(&VerdictCounts {
        tr_cd: 1,
        tr_de: 1,
        fr: 1,
        fa: 1,
        ..VerdictCounts::default()
    });
    check(
        "precision recall f1",
        close(r.precision, 2.0 / 3.0) && close(r.recall, 2.0 / 3.0) && close(r.f1, 2.0 / 3.0),
    );
    let r = detection_rates(&VerdictCounts {
        ta: 4,
        ..VerdictCounts::default()
    });
    check(
        "degenerate rates",
        r.frr == 0.0 && r.precision == 0.0 && r.recall == 0.0 && r.undefined.contains(&"precision".to_string()),
    );
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "15 hand-derived examples reproduced".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------
// 4. Joint loss identity, 5. freeze contracts

fn criterion_loss_identity() -> Outcome {
    let d = data(&small_synth(41));
    let aux = AuxModel::init(&tiny_aux(6), 42).unwrap();
    let cfg = tiny_model(6, d.inventory.len(), Conditioning::Aux);
    let tc = TrainConfig {
        aux_training: AuxTraining::Joint,
        ..quick_train(3)
    };
    let run = train_mdd_joint(&d.train, &d.valid, &cfg, &d.inventory, Some(&aux), &tc).unwrap();
    let steps: Vec<_> = run.log.iter().filter(|r| r.split == "train-step").collect();
    let worst = steps
        .iter()
        .map(|r| {
            let (pr, l1, l2, t) = (r.loss_pr.unwrap(), r.loss_l1.unwrap(), r.loss_l2.unwrap(), r.total.unwrap());
            (t - (0.8 * pr + 0.2 * (l1 + l2))).abs()
        })
        .fold(0.0f64, f64::max);
    outcome(
        !steps.is_empty() && worst <= 1e-12,
        format!("{} joint steps, max |total − formula| {worst:.1e}", steps.len()),
    )
}

fn criterion_freeze() -> Outcome {
    let d = data(&small_synth(51));
    let aux = AuxModel::init(&tiny_aux(6), 52).unwrap();
    let cfg = tiny_model(6, d.inventory.len(), Conditioning::Aux);
    let tc = quick_train(2);
    let init = MddModel::init(&cfg, &d.inventory, Some(&aux), tc.seed).unwrap();
    let run = train_mdd_sequential(&d.train, &d.valid, &cfg, &d.inventory, Some(&aux), &tc).unwrap();
    let conv = |p: &ParamStore| {
        p.iter()
            .filter(|(n, _)| l1mdd::networks::is_conv_param(n) && !l1mdd::networks::is_aux_param(n))
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect::<Vec<_>>()
    };
    let aux_same = run.model.params.digest("aux.") == aux.params.digest("aux.");
    let conv_same = conv(&run.model.params) == conv(&init.params);
    let transformer_moved = run.model.params.digest("speech.block") != init.params.digest("speech.block");
    outcome(
        aux_same && conv_same && transformer_moved,
        format!("aux unchanged {aux_same}, conv unchanged {conv_same}, transformer changed {transformer_moved}"),
    )
}

// ---------------------------------------------------------------------------
// 6. Learnability, 7. ablation ordering

const LEARNING_RATE: f64 = 1e-3;

struct Full {
    inventory: PhonemeInventory,
    train: Vec<Example>,
    valid: Vec<Example>,
    test: Vec<Example>,
}

fn full_data(cfg: &SynthConfig) -> Full {
    let corpus = synthesize_default(cfg).unwrap();
    let m = ModelConfig::default();
    let prep = |s| prepare_examples(corpus.split(s), &corpus.inventory, &m.l1_classes, &m.l2_classes).unwrap();
    Full {
        train: prep(Split::Train),
        valid: prep(Split::Valid),
        test: prep(Split::Test),
        inventory: corpus.inventory,
    }
}

fn criterion_learnability() -> Outcome {
    let started = Instant::now();
    let synth = SynthConfig::default();
    let d = full_data(&synth);
    let inv_ok = (30..=40).contains(&d.inventory.len());
    let tc = TrainConfig {
        learning_rate: LEARNING_RATE,
        ..TrainConfig::default()
    };
    let cfg = Variant::MultiP.model_config(&ModelConfig::default(), d.inventory.len());
    let run = train_mdd(&d.train, &d.valid, &cfg, &d.inventory, None, &tc).unwrap();
    let test_per = run.model.evaluate(&d.test).unwrap().report.per();
    let aux = train_aux(&d.train, &d.valid, &AuxConfig::default(), &tc).unwrap();
    let (_, l2_acc) = aux.model.accuracy(&d.test).unwrap();
    let (fast, time) = within(Duration::from_secs(15 * 60), started);
    outcome(
        inv_ok && test_per < 15.0 && l2_acc > 0.95 && fast,
        format!(
            "|PS| {}, {} train utterances; Multi:<p> held-out PER {test_per:.2}% (best epoch {}), aux held-out L2 accuracy {:.3}; {time}",
            d.inventory.len(),
            d.train.len(),
            run.best_epoch,
            l2_acc
        ),
    )
}

const STATISTICAL: [usize; 2] = [6, 7];

const ABLATION_SEEDS: u64 = 5;
const ABLATION_TRAIN: usize = 1000;
const ABLATION_EPOCHS: usize = 20;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn criterion_ablation_order() -> Outcome {
    let variants = [
        Variant::Multi,
        Variant::MultiP,
        Variant::MultiPL2,
        Variant::L1MultiPL1L2,
        Variant::L1MultiPEps,
    ];
    let mut frr: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    for seed in 0..ABLATION_SEEDS {
        let synth = SynthConfig {
            seed,
            counts: SplitCounts {
                train: ABLATION_TRAIN,
                ..SynthConfig::default().counts
            },
            ..SynthConfig::default()
        };
        let d = full_data(&synth);
        let train = TrainConfig {
            learning_rate: LEARNING_RATE,
            max_epochs: ABLATION_EPOCHS,
            seed,
            ..TrainConfig::default()
        };
        let cfg = AblationConfig {
            train: train.clone(),
            aux_train: train,
            variants: variants.to_vec(),
            ..AblationConfig::default()
        };
        let data = AblationData {
            inventory: &d.inventory,
            train: &d.train,
            valid: &d.valid,
            test: &d.test,
        };
        let table = run_ablation(&cfg, &data).unwrap();
        for (i, v) in variants.iter().enumerate() {
            let r = &table.row(*v).unwrap().report;
            frr[i].push(r.frr());
            per[i].push(r.per());
        }
        println!("    seed {seed}:{}", summary(&variants, &frr, &per, |xs| *xs.last().unwrap()));
    }
    let mf: Vec<f64> = frr.into_iter().map(median).collect();
    let mp: Vec<f64> = per.into_iter().map(median).collect();
    let (multi, multi_p, l2, l1l2, eps) = (0, 1, 2, 3, 4);
    let ordered = |m: &[f64]| m[l1l2] < m[l2] && m[l2] < m[multi] && m[eps] < m[multi_p];
    let text = variants
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{} FRR {:.4} PER {:.2}", v.display_name(), mf[i], mp[i]))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(ordered(&mf) && ordered(&mp), format!("medians over {ABLATION_SEEDS} seeds: {text}"))
}

fn summary(variants: &[Variant], frr: &[Vec<f64>], per: &[Vec<f64>], pick: impl Fn(&Vec<f64>) -> f64) -> String {
    variants
        .iter()
        .enumerate()
        .map(|(i, v)| format!(" {} {:.4}/{:.2}", v.id(), pick(&frr[i]), pick(&per[i])))
        .collect()
}

// ---------------------------------------------------------------------------
// 8. Degenerate conditioning, 9. determinism

fn logits(cfg: &ModelConfig, aux: Option<&AuxConfig>, p: &ParamStore, feats: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, p, |_| false);
    let input = MddInput {
        features: feats,
        canonical: &[3, 1, 4],
        l1: "ko",
        l2: "zh",
        aux_embedding: None,
    };
    let out = mdd_forward(&mut tape, &bound, cfg, aux, &input).unwrap();
    tape.value(out.logits).clone()
}

/// Copies `base` into a store for `cfg`, padding the fusion projection with
/// zero rows for the extra conditioning inputs.
fn with_zero_conditioning(base: &ParamStore, cfg: &ModelConfig, extra: ParamStore) -> ParamStore {
    let mut out = base.clone();
    let w = base.get("fuse.proj.w").unwrap();
    let mut data = w.data().to_vec();
    data.extend(std::iter::repeat_n(0.0, cfg.d_cond() * w.cols()));
    out.insert("fuse.proj.w", Tensor::matrix(w.rows() + cfg.d_cond(), w.cols(), data).unwrap());
    out.extend(extra);
    out
}

fn criterion_degeneracy() -> Outcome {
    let feats = uniform(20, 8, -1.0, 1.0, &mut SeedTree::new(81).rng("feats"));
    let aux = gradient_aux();
    let mut results = Vec::new();
    for pe in [true, false] {
        let base_cfg = gradient_model(Conditioning::None, pe);
        let base = store(&mdd_schema(&base_cfg), 82);
        let reference = logits(&base_cfg, None, &base, &feats);
        for conditioning in [
            Conditioning::OneHotL2,
            Conditioning::OneHotL1,
            Conditioning::OneHotL1L2,
            Conditioning::Aux,
        ] {
            let cfg = gradient_model(conditioning, pe);
            let extra = if conditioning == Conditioning::Aux {
                store(&aux_schema(&aux), 83)
            } else {
                ParamStore::new()
            };
            let p = with_zero_conditioning(&base, &cfg, extra);
            let got = logits(&cfg, Some(&aux), &p, &feats);
            results.push(got.data().iter().zip(reference.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let empty = ModelConfig {
            l1_classes: vec![],
            l2_classes: vec![],
            ..base_cfg.clone()
        };
        results.push(logits(&empty, None, &base, &feats) == reference);
    }
    let same = results.iter().filter(|&&b| b).count();
    outcome(
        same == results.len(),
        format!("{same}/{} zero-width or zero-weight conditioning cases bitwise equal to Multi:<p> / Multi", results.len()),
    )
}

fn pipeline_report(dir: &std::path::Path) -> Vec<u8> {
    let synth = small_synth(91);
    let written = synthesize_default(&synth).unwrap().write(dir).unwrap();
    let inventory = PhonemeInventory::load(&written.inventory).unwrap();
    let m = ModelConfig::default();
    let load = |s: Split| {
        let records = load_manifest(&written.manifests[&s], Some(&inventory)).unwrap();
        prepare_examples(&records, &inventory, &m.l1_classes, &m.l2_classes).unwrap()
    };
    let (train, valid, test) = (load(Split::Train), load(Split::Valid), load(Split::Test));
    let cfg = tiny_model(6, inventory.len(), Conditioning::OneHotL1L2);
    let run = train_mdd(&train, &valid, &cfg, &inventory, None, &quick_train(3)).unwrap();
    let report = run.model.evaluate(&test).unwrap().report;
    report.to_json().unwrap().into_bytes()
}

fn criterion_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline_report(a.path()), pipeline_report(b.path()));
    outcome(ra == rb, format!("two synth → train → eval runs, reports of {} bytes, identical {}", ra.len(), ra == rb))
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 9] = [
        (1, "CTC matches path enumeration", criterion_ctc_oracle),
        (2, "finite-difference gradient suite", criterion_gradients),
        (3, "scoring reproduces hand-derived examples", criterion_metrics),
        (4, "joint loss identity at every step", criterion_loss_identity),
        (5, "freeze contracts", criterion_freeze),
        (6, "synthetic learnability", criterion_learnability),
        (7, "directional ablation ordering", criterion_ablation_order),
        (8, "degenerate conditioning equivalence", criterion_degeneracy),
        (9, "pipeline determinism", criterion_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let r = run();
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} [{verdict}] {name}: {} ({:.1}s)",
            r.detail,
            started.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        return;
    }
    println!("acceptance: failed criteria {failed:?}");
    // Training-statistics criteria report FAIL without failing the run unless strict.
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict || failed.iter().any(|id| !STATISTICAL.contains(id)) {
        std::process::exit(1);
    }
    println!("acceptance: only training-statistics criteria failed; set ACCEPTANCE_STRICT=1 to make this fatal");
}
