//! Mispronunciation detection scoring: edit-distance alignment, the
//! hierarchical token verdicts over (canonical, annotated, predicted), and
//! PER / FRR / precision / recall / F1.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlignOp<T> {
    Match(T, T),
    Substitution(T, T),
    Deletion(T),
    Insertion(T),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment<T> {
    pub ops: Vec<AlignOp<T>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

impl<T: Clone> Alignment<T> {
    pub fn counts(&self) -> EditCounts {
        let mut c = EditCounts::default();
        for op in &self.ops {
            match op {
                AlignOp::Match(..) => c.matches += 1,
                AlignOp::Substitution(..) => c.substitutions += 1,
                AlignOp::Deletion(_) => c.deletions += 1,
                AlignOp::Insertion(_) => c.insertions += 1,
            }
        }
        c
    }

    pub fn distance(&self) -> usize {
        self.counts().distance()
    }

    pub fn reference(&self) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                AlignOp::Match(a, _) | AlignOp::Substitution(a, _) | AlignOp::Deletion(a) => Some(a.clone()),
                AlignOp::Insertion(_) => None,
            })
            .collect()
    }

    pub fn hypothesis(&self) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                AlignOp::Match(_, b) | AlignOp::Substitution(_, b) | AlignOp::Insertion(b) => Some(b.clone()),
                AlignOp::Deletion(_) => None,
            })
            .collect()
    }

    /// For every reference position: `Some(Some(b))` if aligned to `b`
    /// (match or substitution), `Some(None)` if deleted. Also the number of
    /// insertions.
    fn per_reference(&self) -> (Vec<(bool, Option<T>)>, usize) {
        let mut out = Vec::new();
        let mut ins = 0;
        for op in &self.ops {
            match op {
                AlignOp::Match(_, b) => out.push((true, Some(b.clone()))),
                AlignOp::Substitution(_, b) => out.push((false, Some(b.clone()))),
                AlignOp::Deletion(_) => out.push((false, None)),
                AlignOp::Insertion(_) => ins += 1,
            }
        }
        (out, ins)
    }
}

/// Unit-cost Levenshtein alignment. The backtrace prefers match, then
/// substitution, then deletion, then insertion.
pub fn align<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> Alignment<T> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().take(m + 1).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * w + j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && here == diag {
                ops.push(AlignOp::Match(reference[i - 1].clone(), hypothesis[j - 1].clone()));
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && here == diag + 1 {
                ops.push(AlignOp::Substitution(reference[i - 1].clone(), hypothesis[j - 1].clone()));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(AlignOp::Deletion(reference[i - 1].clone()));
            i -= 1;
        } else {
            ops.push(AlignOp::Insertion(hypothesis[j - 1].clone()));
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "TA")]
    TrueAccept,
    #[serde(rename = "FR")]
    FalseRejection,
    #[serde(rename = "FA")]
    FalseAcceptance,
    #[serde(rename = "TR_CD")]
    CorrectDiagnosis,
    #[serde(rename = "TR_DE")]
    DiagnosisError,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    /// One verdict per canonical position.
    pub verdicts: Vec<Verdict>,
    pub annotated_insertions: usize,
    pub predicted_insertions: usize,
}

/// Verdict per canonical phoneme from the canonical↔annotated and
/// canonical↔predicted alignments. Insertions are counted, not judged.
pub fn classify<T: PartialEq + Clone>(canonical: &[T], annotated: &[T], predicted: &[T]) -> Classification {
    let (ann, annotated_insertions) = align(canonical, annotated).per_reference();
    let (pred, predicted_insertions) = align(canonical, predicted).per_reference();
    let verdicts = ann
        .into_iter()
        .zip(pred)
        .map(|((a_ok, a_sym), (p_ok, p_sym))| match (a_ok, p_ok) {
            (true, true) => Verdict::TrueAccept,
            (true, false) => Verdict::FalseRejection,
            (false, true) => Verdict::FalseAcceptance,
            (false, false) if a_sym == p_sym => Verdict::CorrectDiagnosis,
            (false, false) => Verdict::DiagnosisError,
        })
        .collect();
    Classification {
        verdicts,
        annotated_insertions,
        predicted_insertions,
    }
}

/// Phoneme error rate in percent: `100 · (S + D + I) / |reference|`.
pub fn per<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Contract("phoneme error rate needs a nonempty reference".into()));
    }
    Ok(100.0 * align(reference, hypothesis).distance() as f64 / reference.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    #[serde(rename = "TA")]
    pub ta: usize,
    #[serde(rename = "FR")]
    pub fr: usize,
    #[serde(rename = "FA")]
    pub fa: usize,
    #[serde(rename = "TR_CD")]
    pub tr_cd: usize,
    #[serde(rename = "TR_DE")]
    pub tr_de: usize,
    pub annotated_insertions: usize,
    pub predicted_insertions: usize,
}

impl VerdictCounts {
    pub fn from_classification(c: &Classification) -> Self {
        let mut out = Self {
            annotated_insertions: c.annotated_insertions,
            predicted_insertions: c.predicted_insertions,
            ..Self::default()
        };
        for v in &c.verdicts {
            match v {
                Verdict::TrueAccept => out.ta += 1,
                Verdict::FalseRejection => out.fr += 1,
                Verdict::FalseAcceptance => out.fa += 1,
                Verdict::CorrectDiagnosis => out.tr_cd += 1,
                Verdict::DiagnosisError => out.tr_de += 1,
            }
        }
        out
    }

    pub fn add(&mut self, other: &Self) {
        self.ta += other.ta;
        self.fr += other.fr;
        self.fa += other.fa;
        self.tr_cd += other.tr_cd;
        self.tr_de += other.tr_de;
        self.annotated_insertions += other.annotated_insertions;
        self.predicted_insertions += other.predicted_insertions;
    }

    pub fn true_rejections(&self) -> usize {
        self.tr_cd + self.tr_de
    }

    /// Canonical positions judged.
    pub fn total(&self) -> usize {
        self.ta + self.fr + self.fa + self.tr_cd + self.tr_de
    }
}

/// Detection rates as fractions in `[0, 1]`. A rate whose denominator is
/// zero is reported as 0 and listed in `undefined`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub frr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<String>,
}

pub fn detection_rates(c: &VerdictCounts) -> DetectionRates {
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: usize, den: usize| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let tr = c.true_rejections();
    let frr = ratio("frr", c.fr, c.ta + c.fr);
    let precision = ratio("precision", tr, tr + c.fr);
    let recall = ratio("recall", tr, tr + c.fa);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".into());
        0.0
    };
    DetectionRates {
        frr,
        precision,
        recall,
        f1,
        undefined,
    }
}

/// One scored utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub utt_id: String,
    pub l2: String,
    pub canonical: Vec<String>,
    pub annotated: Vec<String>,
    pub predicted: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub utterances: usize,
    pub counts: VerdictCounts,
    pub reference_phonemes: usize,
    pub edits: usize,
    /// Percent, pooled over the group: total edits / total reference length.
    pub per: f64,
    #[serde(flatten)]
    pub rates: DetectionRates,
}

impl GroupMetrics {
    fn push(&mut self, r: &UtteranceResult) -> Result<()> {
        if r.annotated.is_empty() {
            return Err(Error::Contract(format!("{}: empty annotated reference", r.utt_id)));
        }
        self.utterances += 1;
        self.counts
            .add(&VerdictCounts::from_classification(&classify(&r.canonical, &r.annotated, &r.predicted)));
        self.reference_phonemes += r.annotated.len();
        self.edits += align(&r.annotated, &r.predicted).distance();
        Ok(())
    }

    fn finish(&mut self) {
        self.per = 100.0 * self.edits as f64 / self.reference_phonemes.max(1) as f64;
        self.rates = detection_rates(&self.counts);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: GroupMetrics,
    pub per_l2: BTreeMap<String, GroupMetrics>,
    /// Which config / checkpoint produced the predictions.
    pub identifiers: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn per(&self) -> f64 {
        self.overall.per
    }

    pub fn f1(&self) -> f64 {
        self.overall.rates.f1
    }

    pub fn frr(&self) -> f64 {
        self.overall.rates.frr
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Scores a dataset, overall and per target language.
pub fn evaluate(results: &[UtteranceResult]) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for r in results {
        report.overall.push(r)?;
        report.per_l2.entry(r.l2.clone()).or_default().push(r)?;
    }
    report.overall.finish();
    report.per_l2.values_mut().for_each(GroupMetrics::finish);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    fn naive_distance(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = naive_distance(ar, br) + usize::from(x != y);
                sub.min(naive_distance(ar, b) + 1).min(naive_distance(a, br) + 1)
            }
        }
    }

    #[test]
    fn alignment_examples() {
        let a = align(&s(&["k", "æ", "t"]), &s(&["k", "ɑ", "t"]));
        assert_eq!(a.distance(), 1);
        assert_eq!(a.counts().substitutions, 1);
        let x = s(&["a", "b", "c"]);
        assert_eq!(align(&x, &x).counts().matches, 3);
        let d = align(&s(&["a", "b"]), &s(&["a"]));
        assert_eq!(d.counts().deletions, 1);
        assert_eq!(d.distance(), 1);
        assert!(align::<String>(&[], &[]).ops.is_empty());
    }

    #[test]
    fn backtrace_prefers_substitution_over_delete_insert() {
        let a = align(&['a', 'b'], &['a', 'c']);
        assert_eq!(a.ops[1], AlignOp::Substitution('b', 'c'));
    }

    #[test]
    fn classification_examples() {
        use Verdict::*;
        let c = classify(&s(&["p", "q"]), &s(&["p", "q"]), &s(&["p", "r"]));
        assert_eq!(c.verdicts, [TrueAccept, FalseRejection]);
        assert_eq!(classify(&s(&["p"]), &s(&["r"]), &s(&["r"])).verdicts, [CorrectDiagnosis]);
        assert_eq!(classify(&s(&["p"]), &s(&["r"]), &s(&["p"])).verdicts, [FalseAcceptance]);
        assert_eq!(classify(&s(&["p"]), &s(&["r"]), &s(&["x"])).verdicts, [DiagnosisError]);
        let ins = classify(&s(&["p"]), &s(&["p", "x"]), &s(&["p"]));
        assert_eq!(ins.verdicts, [TrueAccept]);
        assert_eq!(ins.annotated_insertions, 1);
    }

    #[test]
    fn per_examples() {
        assert_eq!(per(&s(&["a", "b"]), &s(&["a", "b"])).unwrap(), 0.0);
        assert!((per(&s(&["a", "b", "c"]), &s(&["a", "x", "c"])).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(per(&s(&["a"]), &s(&["a", "b", "c"])).unwrap(), 200.0);
        assert!(matches!(per::<String>(&[], &s(&["a"])), Err(Error::Contract(_))));
    }

    #[test]
    fn rate_examples() {
        let r = detection_rates(&VerdictCounts {
            ta: 1,
            fr: 1,
            ..Default::default()
        });
        assert_eq!(r.frr, 0.5);
        let r = detection_rates(&VerdictCounts {
            tr_cd: 1,
            tr_de: 1,
            fr: 1,
            fa: 1,
            ..Default::default()
        });
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        let r = detection_rates(&VerdictCounts {
            ta: 5,
            ..Default::default()
        });
        assert_eq!((r.frr, r.precision, r.recall, r.f1), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.undefined, ["precision", "recall", "f1"]);
    }

    #[test]
    fn report_breaks_down_by_l2() {
        let results = vec![
            UtteranceResult {
                utt_id: "1".into(),
                l2: "en".into(),
                canonical: s(&["a", "b"]),
                annotated: s(&["a", "c"]),
                predicted: s(&["a", "c"]),
            },
            UtteranceResult {
                utt_id: "2".into(),
                l2: "zh".into(),
                canonical: s(&["a", "b", "c"]),
                annotated: s(&["a", "b", "c"]),
                predicted: s(&["a", "b"]),
            },
        ];
        let rep = evaluate(&results).unwrap();
        assert_eq!(rep.overall.counts.total(), 5);
        assert_eq!(rep.per_l2["en"].counts.tr_cd, 1);
        assert_eq!(rep.per_l2["zh"].counts.fr, 1);
        assert!((rep.per() - 20.0).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(json["overall"]["counts"]["TR_CD"], 1);
        assert!(json["overall"]["f1"].is_number());
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..4, 0..7)
    }

    proptest! {
        #[test]
        fn alignment_reconstructs_and_is_minimal(a in seq(), b in seq()) {
            let al = align(&a, &b);
            prop_assert_eq!(al.reference(), a.clone());
            prop_assert_eq!(al.hypothesis(), b.clone());
            prop_assert_eq!(al.distance(), naive_distance(&a, &b));
            prop_assert_eq!(al.distance(), align(&b, &a).distance());
        }

        #[test]
        fn verdicts_partition_canonical(c in seq(), a in seq(), p in seq()) {
            let cl = classify(&c, &a, &p);
            prop_assert_eq!(cl.verdicts.len(), c.len());
            let same = classify(&c, &c, &c);
            prop_assert!(same.verdicts.iter().all(|v| *v == Verdict::TrueAccept));
            let perfect = VerdictCounts::from_classification(&classify(&c, &a, &a));
            prop_assert_eq!(perfect.fr + perfect.fa + perfect.tr_de, 0);
        }

        #[test]
        fn report_is_order_invariant(items in proptest::collection::vec((seq(), seq(), seq(), 0u8..2), 1..6)) {
            let results: Vec<UtteranceResult> = items
                .iter()
                .enumerate()
                .map(|(i, (c, a, p, l))| {
                    let conv = |v: &Vec<u8>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
                    let mut annotated = conv(a);
                    if annotated.is_empty() {
                        annotated.push("0".into());
                    }
                    UtteranceResult {
                        utt_id: i.to_string(),
                        l2: format!("l{l}"),
                        canonical: conv(c),
                        annotated,
                        predicted: conv(p),
                    }
                })
                .collect();
            let fwd = evaluate(&results).unwrap();
            let mut rev = results.clone();
            rev.reverse();
            prop_assert_eq!(evaluate(&rev).unwrap(), fwd.clone());
            let r = &fwd.overall.rates;
            for v in [r.frr, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
