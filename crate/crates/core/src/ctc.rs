//! Connectionist temporal classification: loss, exhaustive oracle, and
//! best-path decoding.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Label sequence plus the blank class it is scored against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtcTarget {
    labels: Vec<usize>,
    blank: usize,
}

impl CtcTarget {
    pub fn new(labels: Vec<usize>, blank: usize) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l == blank) {
            return Err(Error::Contract(format!("target position {pos} equals the blank id {blank}")));
        }
        Ok(Self { labels, blank })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    /// Fewest frames that can emit this target: one per label plus a blank
    /// between each pair of equal neighbours.
    pub fn min_frames(&self) -> usize {
        let repeats = self.labels.windows(2).filter(|w| w[0] == w[1]).count();
        self.labels.len() + repeats
    }

    fn extended(&self) -> Vec<usize> {
        let mut ext = Vec::with_capacity(2 * self.labels.len() + 1);
        ext.push(self.blank);
        for &l in &self.labels {
            ext.push(l);
            ext.push(self.blank);
        }
        ext
    }
}

/// Result of scoring one utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtcLoss {
    /// Scalar negative log-likelihood on the tape.
    Finite(Var),
    /// No alignment fits in the available frames; the loss is +∞.
    Infeasible { frames: usize, min_frames: usize },
}

impl CtcLoss {
    pub fn var(self) -> Option<Var> {
        match self {
            CtcLoss::Finite(v) => Some(v),
            CtcLoss::Infeasible { .. } => None,
        }
    }

    pub fn is_infeasible(self) -> bool {
        matches!(self, CtcLoss::Infeasible { .. })
    }
}

/// Negative log-probability of `target` under the `T × C` log-probability
/// rows `log_probs`, via the log-space forward recursion over the
/// blank-extended target.
pub fn ctc_loss<S: Scalar>(tape: &mut Tape<S>, log_probs: Var, target: &CtcTarget) -> Result<CtcLoss> {
    let (frames, classes) = tape.shape(log_probs);
    if target.blank >= classes {
        return Err(Error::Index(format!("blank id {} out of range for {classes} classes", target.blank)));
    }
    if let Some(&l) = target.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Index(format!("label {l} out of range for {classes} classes")));
    }
    let min_frames = target.min_frames();
    if min_frames > frames {
        return Ok(CtcLoss::Infeasible { frames, min_frames });
    }
    let ext = target.extended();
    let s_len = ext.len();
    let shift1: Vec<Option<usize>> = (0..s_len).map(|s| s.checked_sub(1)).collect();
    let shift2: Vec<Option<usize>> = (0..s_len)
        .map(|s| (s >= 2 && ext[s] != target.blank && ext[s] != ext[s - 2]).then(|| s - 2))
        .collect();
    let has_skip = shift2.iter().any(Option::is_some);
    let emit = |tape: &mut Tape<S>, t: usize| {
        let idx: Vec<Option<usize>> = ext.iter().map(|&c| Some(t * classes + c)).collect();
        tape.gather_flat(log_probs, &idx)
    };

    let init: Vec<Option<usize>> = (0..s_len).map(|s| (s < 2).then(|| ext[s])).collect();
    let mut alpha = tape.gather_flat(log_probs, &init)?;
    for t in 1..frames {
        let a1 = tape.gather_flat(alpha, &shift1)?;
        let mut parts = vec![alpha, a1];
        if has_skip {
            parts.push(tape.gather_flat(alpha, &shift2)?);
        }
        let reach = tape.logsumexp(&parts)?;
        let e = emit(tape, t)?;
        alpha = tape.add(reach, e)?;
    }
    let tail: Vec<Option<usize>> = if s_len == 1 {
        vec![Some(0)]
    } else {
        vec![Some(s_len - 1), Some(s_len - 2)]
    };
    let ends = tape.gather_flat(alpha, &tail)?;
    let parts: Vec<Var> = (0..tail.len())
        .map(|i| tape.gather_flat(ends, &[Some(i)]))
        .collect::<Result<_>>()?;
    let log_lik = tape.logsumexp(&parts)?;
    Ok(CtcLoss::Finite(tape.scale(log_lik, S::lit(-1.0))))
}

/// Mean loss over the feasible items of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchCtcLoss {
    /// `None` when every item is infeasible.
    pub mean: Option<Var>,
    pub per_item: Vec<CtcLoss>,
    pub infeasible: usize,
}

/// Per-item losses, averaged over the feasible ones in item order.
pub fn ctc_loss_batch<S: Scalar>(tape: &mut Tape<S>, items: &[(Var, CtcTarget)]) -> Result<BatchCtcLoss> {
    let mut per_item = Vec::with_capacity(items.len());
    for (lp, target) in items {
        per_item.push(ctc_loss(tape, *lp, target)?);
    }
    let feasible: Vec<Var> = per_item.iter().filter_map(|l| l.var()).collect();
    let infeasible = per_item.len() - feasible.len();
    if infeasible > 0 {
        log::warn!("{infeasible} of {} CTC targets are infeasible and were skipped", items.len());
    }
    let mean = match feasible.split_first() {
        None => None,
        Some((first, rest)) => {
            let mut total = *first;
            for v in rest {
                total = tape.add(total, *v)?;
            }
            Some(tape.scale(total, S::lit(1.0 / feasible.len() as f64)))
        }
    };
    Ok(BatchCtcLoss {
        mean,
        per_item,
        infeasible,
    })
}

/// Batched loss over padded inputs: `log_probs` stacks `B` blocks of `T_max`
/// rows; `targets` stacks `B` blocks of `L_max` ids. Only the first
/// `frame_lengths[b]` rows and `target_lengths[b]` ids of each block count.
pub fn ctc_loss_padded<S: Scalar>(
    tape: &mut Tape<S>,
    log_probs: Var,
    frame_lengths: &[usize],
    targets: &[usize],
    target_lengths: &[usize],
    blank: usize,
) -> Result<BatchCtcLoss> {
    let b = frame_lengths.len();
    let (rows, _) = tape.shape(log_probs);
    if b == 0 || !rows.is_multiple_of(b) || !targets.len().is_multiple_of(b) || target_lengths.len() != b {
        return Err(Error::Dimension(format!(
            "padded CTC batch of {b} items: {rows} rows, {} target ids, {} target lengths",
            targets.len(),
            target_lengths.len()
        )));
    }
    let (t_max, l_max) = (rows / b, targets.len() / b);
    let mut items = Vec::with_capacity(b);
    for i in 0..b {
        if frame_lengths[i] == 0 || frame_lengths[i] > t_max || target_lengths[i] > l_max {
            return Err(Error::Dimension(format!("item {i} lengths exceed the padded block")));
        }
        let lp = tape.slice_rows(log_probs, i * t_max, i * t_max + frame_lengths[i])?;
        let labels = targets[i * l_max..i * l_max + target_lengths[i]].to_vec();
        items.push((lp, CtcTarget::new(labels, blank)?));
    }
    ctc_loss_batch(tape, &items)
}

const ORACLE_CAP: f64 = 1e6;

/// Exhaustive path sum: every `C^T` frame labelling whose collapse equals
/// the target contributes its probability. Returns `-ln` of the total.
pub fn ctc_brute_force_oracle(probs: &Tensor<f64>, target: &CtcTarget) -> Result<f64> {
    let (frames, classes) = (probs.rows(), probs.cols());
    let paths = (classes as f64).powi(frames as i32);
    if paths > ORACLE_CAP {
        return Err(Error::Contract(format!(
            "{classes}^{frames} paths exceed the enumeration cap of {ORACLE_CAP}"
        )));
    }
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if collapse(&path, target.blank) == target.labels {
            total += path.iter().enumerate().map(|(t, &c)| probs.get(t, c)).product::<f64>();
        }
        let mut t = frames;
        loop {
            if t == 0 {
                return Ok(-total.ln());
            }
            t -= 1;
            path[t] += 1;
            if path[t] < classes {
                break;
            }
            path[t] = 0;
        }
    }
}

/// Merge consecutive repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != blank {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Best-path decoding: per-frame argmax (lowest index wins ties), collapsed.
pub fn greedy_decode<S: Scalar>(log_probs: &Tensor<S>, blank: usize) -> Vec<usize> {
    let best: Vec<usize> = (0..log_probs.rows())
        .map(|t| {
            let row = log_probs.row_slice(t);
            let mut arg = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = c;
                }
            }
            arg
        })
        .collect();
    collapse(&best, blank)
}
