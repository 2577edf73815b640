use super::config::{AuxConfig, Conditioning, EncoderConfig, ModelConfig};
use crate::autodiff::{Bound, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

pub(crate) fn linear<S: Scalar>(tape: &mut Tape<S>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Key projections carry no bias: softmax is invariant to it.
fn project<S: Scalar>(tape: &mut Tape<S>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    tape.matmul(x, w)
}

fn layer_norm<S: Scalar>(tape: &mut Tape<S>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let g = p.var(&format!("{prefix}.g"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let n = tape.layer_norm_rows(x, S::lit(LN_EPS));
    let scaled = tape.mul_row(n, g)?;
    tape.add_row(scaled, b)
}

/// Scaled dot-product attention of `q` over `k`/`v`. Returns the output and
/// the row-stochastic weights.
fn attend<S: Scalar>(tape: &mut Tape<S>, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let d = tape.shape(q).1;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, S::lit(1.0 / (d as f64).sqrt()));
    let weights = tape.softmax_rows(scaled);
    Ok((tape.matmul(weights, v)?, weights))
}

fn self_attention<S: Scalar>(tape: &mut Tape<S>, p: &Bound, prefix: &str, x: Var, heads: usize) -> Result<Var> {
    let q = linear(tape, p, &format!("{prefix}.q"), x)?;
    let k = project(tape, p, &format!("{prefix}.k"), x)?;
    let v = linear(tape, p, &format!("{prefix}.v"), x)?;
    let d = tape.shape(x).1;
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (s, e) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, s, e)?;
        let kh = tape.slice_cols(k, s, e)?;
        let vh = tape.slice_cols(v, s, e)?;
        outs.push(attend(tape, qh, kh, vh)?.0);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    linear(tape, p, &format!("{prefix}.o"), cat)
}

fn transformer_block<S: Scalar>(tape: &mut Tape<S>, p: &Bound, prefix: &str, x: Var, heads: usize) -> Result<Var> {
    let n1 = layer_norm(tape, p, &format!("{prefix}.ln1"), x)?;
    let a = self_attention(tape, p, &format!("{prefix}.attn"), n1, heads)?;
    let h = tape.add(x, a)?;
    let n2 = layer_norm(tape, p, &format!("{prefix}.ln2"), h)?;
    let f1 = linear(tape, p, &format!("{prefix}.ffn1"), n2)?;
    let f1 = tape.relu(f1);
    let f2 = linear(tape, p, &format!("{prefix}.ffn2"), f1)?;
    tape.add(h, f2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpeechEncoding {
    /// `T × d_model` after convolution and projection.
    pub latent: Var,
    /// `T × d_model` after the transformer blocks.
    pub context: Var,
    pub frames: usize,
}

/// Convolutional front end followed by the transformer context network.
/// Parameters are looked up under `prefix` (`speech` or `aux.speech`).
pub fn speech_encode<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    prefix: &str,
    cfg: &EncoderConfig,
    features: Var,
) -> Result<SpeechEncoding> {
    let (t0, d0) = tape.shape(features);
    if d0 != cfg.input_dim {
        return Err(Error::Dimension(format!("features have {d0} dims, encoder expects {}", cfg.input_dim)));
    }
    if t0 < cfg.total_stride() {
        return Err(Error::Input(format!(
            "{t0} input frames is shorter than the total stride {}",
            cfg.total_stride()
        )));
    }
    let mut x = features;
    for (i, c) in cfg.conv.iter().enumerate() {
        let windows = tape.unfold(x, c.kernel, c.stride)?;
        let y = linear(tape, p, &format!("{prefix}.conv{i}"), windows)?;
        x = tape.relu(y);
    }
    let latent = linear(tape, p, &format!("{prefix}.proj"), x)?;
    let mut h = latent;
    for b in 0..cfg.blocks {
        h = transformer_block(tape, p, &format!("{prefix}.block{b}"), h, cfg.heads)?;
    }
    let context = layer_norm(tape, p, &format!("{prefix}.ln_f"), h)?;
    Ok(SpeechEncoding {
        latent,
        context,
        frames: tape.shape(context).0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhonemeEncoding {
    /// `L × d_emb`.
    pub embedded: Var,
    /// `L × 2·d_h`: forward stream then backward stream per position.
    pub contextual: Var,
}

/// One LSTM direction over the rows of `xw` (inputs already multiplied by
/// the input weights). Returns the hidden states in processing order.
fn lstm_pass<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    prefix: &str,
    xw: Var,
    order: &[usize],
    d_h: usize,
) -> Result<Vec<Var>> {
    let wh = p.var(&format!("{prefix}.wh"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let mut h = tape.constant(Tensor::zeros(&[1, d_h]));
    let mut c = h;
    let mut out = Vec::with_capacity(order.len());
    for &i in order {
        let xi = tape.slice_rows(xw, i, i + 1)?;
        let hw = tape.matmul(h, wh)?;
        let z = tape.add(xi, hw)?;
        let z = tape.add_row(z, b)?;
        let zi = tape.slice_cols(z, 0, d_h)?;
        let zf = tape.slice_cols(z, d_h, 2 * d_h)?;
        let zg = tape.slice_cols(z, 2 * d_h, 3 * d_h)?;
        let zo = tape.slice_cols(z, 3 * d_h, 4 * d_h)?;
        let (gi, gf, gg, go) = (tape.sigmoid(zi), tape.sigmoid(zf), tape.tanh(zg), tape.sigmoid(zo));
        let keep = tape.mul(gf, c)?;
        let write = tape.mul(gi, gg)?;
        c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        h = tape.mul(go, tc)?;
        out.push(h);
    }
    Ok(out)
}

/// Embedding lookup followed by a bidirectional LSTM.
pub fn phoneme_encode<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &ModelConfig,
    canonical: &[usize],
) -> Result<PhonemeEncoding> {
    if !cfg.phoneme_encoder {
        return Err(Error::Contract("phoneme encoder is disabled in this configuration".into()));
    }
    if canonical.is_empty() {
        return Err(Error::Input("empty canonical sequence".into()));
    }
    let emb = p.var("phon.emb")?;
    let embedded = tape.gather_rows(emb, canonical)?;
    let l = canonical.len();
    let forward: Vec<usize> = (0..l).collect();
    let backward: Vec<usize> = (0..l).rev().collect();
    let wx_f = p.var("phon.fwd.wx")?;
    let xw_f = tape.matmul(embedded, wx_f)?;
    let fwd = lstm_pass(tape, p, "phon.fwd", xw_f, &forward, cfg.d_h)?;
    let wx_b = p.var("phon.bwd.wx")?;
    let xw_b = tape.matmul(embedded, wx_b)?;
    let mut bwd = lstm_pass(tape, p, "phon.bwd", xw_b, &backward, cfg.d_h)?;
    bwd.reverse();
    let f = tape.concat_rows(&fwd)?;
    let b = tape.concat_rows(&bwd)?;
    let contextual = tape.concat_cols(&[f, b])?;
    Ok(PhonemeEncoding { embedded, contextual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attention {
    /// `T × d_attn`, one row per acoustic frame.
    pub output: Var,
    /// `T × L`, rows sum to one.
    pub weights: Var,
}

/// Single-head attention: frames query the canonical phoneme encodings.
pub fn cross_attention<S: Scalar>(tape: &mut Tape<S>, p: &Bound, context: Var, phon: Var) -> Result<Attention> {
    let q = linear(tape, p, "xattn.q", context)?;
    let k = project(tape, p, "xattn.k", phon)?;
    let v = linear(tape, p, "xattn.v", phon)?;
    let (output, weights) = attend(tape, q, k, v)?;
    Ok(Attention { output, weights })
}

fn class_position(classes: &[String], label: Option<&str>, what: &str) -> Result<usize> {
    let label = label.ok_or_else(|| Error::Config(format!("{what} conditioning requested but no {what} given")))?;
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::Config(format!("{what} {label:?} is not among {classes:?}")))
}

/// Concatenated one-hot blocks (L1 block first) for the requested mode.
/// Empty for modes without one-hot conditioning.
pub fn one_hot_conditioning<S: Scalar>(
    mode: Conditioning,
    l1: Option<&str>,
    l2: Option<&str>,
    l1_classes: &[String],
    l2_classes: &[String],
) -> Result<Vec<S>> {
    let mut out = Vec::new();
    if mode.uses_l1() {
        let mut block = vec![S::zero(); l1_classes.len()];
        block[class_position(l1_classes, l1, "L1")?] = S::one();
        out.extend(block);
    }
    if mode.uses_l2() {
        let mut block = vec![S::zero(); l2_classes.len()];
        block[class_position(l2_classes, l2, "L2")?] = S::one();
        out.extend(block);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxOutput {
    /// `1 × d_eps` utterance embedding.
    pub embedding: Var,
    pub l1_logits: Var,
    pub l2_logits: Var,
}

/// Encoder, mean over frames, projection to the embedding, and two heads.
pub fn aux_forward<S: Scalar>(tape: &mut Tape<S>, p: &Bound, cfg: &AuxConfig, features: Var) -> Result<AuxOutput> {
    let enc = speech_encode(tape, p, "aux.speech", &cfg.encoder, features)?;
    let pooled = tape.mean_rows(enc.context)?;
    let embedding = linear(tape, p, "aux.eps", pooled)?;
    let l1_logits = linear(tape, p, "aux.l1_head", embedding)?;
    let l2_logits = linear(tape, p, "aux.l2_head", embedding)?;
    Ok(AuxOutput {
        embedding,
        l1_logits,
        l2_logits,
    })
}

/// `[context ; attention ; conditioning]` per frame, the utterance-level
/// conditioning row repeated over all frames.
pub fn fuse<S: Scalar>(tape: &mut Tape<S>, context: Var, attn: Option<Var>, cond: Option<Var>) -> Result<Var> {
    let t = tape.shape(context).0;
    let mut parts = vec![context];
    if let Some(a) = attn {
        if tape.shape(a).0 != t {
            return Err(Error::Dimension(format!(
                "attention has {} rows, context has {t}",
                tape.shape(a).0
            )));
        }
        parts.push(a);
    }
    if let Some(c) = cond {
        if tape.shape(c).0 != 1 {
            return Err(Error::Dimension("conditioning must be a single row".into()));
        }
        parts.push(tape.tile_rows(c, t)?);
    }
    if parts.len() == 1 {
        return Ok(context);
    }
    tape.concat_cols(&parts)
}

/// One utterance as the recognizer sees it.
#[derive(Clone, Copy, Debug)]
pub struct MddInput<'a, S: Scalar> {
    pub features: &'a Tensor<S>,
    pub canonical: &'a [usize],
    pub l1: &'a str,
    pub l2: &'a str,
    /// Precomputed aux embedding (`1 × d_eps`), used instead of running the
    /// aux network when its parameters are frozen.
    pub aux_embedding: Option<&'a Tensor<S>>,
}

#[derive(Clone, Copy, Debug)]
pub struct MddOutput {
    /// `T × (num_phonemes + 1)`, blank last.
    pub logits: Var,
    pub fused: Var,
    pub speech: SpeechEncoding,
    pub phonemes: Option<PhonemeEncoding>,
    pub attention: Option<Attention>,
    pub aux: Option<AuxOutput>,
}

/// Full recognizer forward pass. With aux conditioning, `aux` must give the
/// aux config and `p` must hold its parameters.
pub fn mdd_forward<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &ModelConfig,
    aux: Option<&AuxConfig>,
    input: &MddInput<'_, S>,
) -> Result<MddOutput> {
    let features = tape.constant(input.features.clone());
    let speech = speech_encode(tape, p, "speech", &cfg.encoder, features)?;
    let (phonemes, attention) = if cfg.phoneme_encoder {
        let ph = phoneme_encode(tape, p, cfg, input.canonical)?;
        let at = cross_attention(tape, p, speech.context, ph.contextual)?;
        (Some(ph), Some(at))
    } else {
        (None, None)
    };
    let (cond, aux_out) = match cfg.conditioning {
        Conditioning::None => (None, None),
        Conditioning::Aux => {
            let aux_cfg = aux.ok_or_else(|| Error::Config("aux conditioning needs the aux model".into()))?;
            if aux_cfg.d_eps != cfg.d_eps {
                return Err(Error::Config(format!(
                    "aux embedding has {} dims, recognizer expects {}",
                    aux_cfg.d_eps, cfg.d_eps
                )));
            }
            if let Some(e) = input.aux_embedding {
                if e.shape() != [1, cfg.d_eps] {
                    return Err(Error::Contract(format!("cached aux embedding has shape {:?}", e.shape())));
                }
                (Some(tape.constant(e.clone())), None)
            } else {
                let out = aux_forward(tape, p, aux_cfg, features)?;
                (Some(out.embedding), Some(out))
            }
        }
        mode => {
            let v = one_hot_conditioning::<S>(mode, Some(input.l1), Some(input.l2), &cfg.l1_classes, &cfg.l2_classes)?;
            (Some(tape.constant(Tensor::row(v)?)), None)
        }
    };
    let fused = fuse(tape, speech.context, attention.map(|a| a.output), cond)?;
    let hidden = linear(tape, p, "fuse.proj", fused)?;
    let hidden = tape.relu(hidden);
    let logits = linear(tape, p, "head", hidden)?;
    Ok(MddOutput {
        logits,
        fused,
        speech,
        phonemes,
        attention,
        aux: aux_out,
    })
}
