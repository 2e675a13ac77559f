//! Evidence statistics: chain length, answer containment, supporting-fact
//! overlap and multiple-choice accuracy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{lowered, Example};
use crate::error::{Error, Result};
use crate::graph::contains_run;
use crate::rng::digest;

/// Set precision, recall and F1 of `predicted` against `gold`.
pub fn supp_f1(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> (f64, f64, f64) {
    if predicted.is_empty() || gold.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let hits = predicted.intersection(gold).count() as f64;
    let p = hits / predicted.len() as f64;
    let r = hits / gold.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Whether any evidence sentence contains the answer tokens contiguously.
pub fn answer_found(example: &Example, evidence: &[usize]) -> bool {
    let answer = lowered(&example.answer_tokens);
    evidence.iter().any(|&g| {
        example
            .sentences
            .get(g)
            .is_some_and(|s| contains_run(&lowered(&s.tokens), &answer))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub avg_chain_length: f64,
    pub answer_found_rate: f64,
    pub supp_precision: f64,
    pub supp_recall: f64,
    pub supp_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_accuracy: Option<f64>,
    pub num_evaluated: usize,
    pub num_skipped: usize,
    /// Evaluated examples that carry supporting facts or a gold chain.
    pub num_with_gold: usize,
    /// Digest of the ids of every input example, evaluated or not.
    pub example_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub id: String,
    pub evidence: Vec<usize>,
    pub answer_found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supp: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// One row per evaluated example; `None` evidence marks a skipped example.
pub fn example_rows(
    examples: &[Example],
    evidence: &[Option<Vec<usize>>],
    predictions: Option<&[Option<usize>]>,
) -> Result<Vec<ExampleRow>> {
    if evidence.len() != examples.len() || predictions.is_some_and(|p| p.len() != examples.len()) {
        return Err(Error::Model(format!(
            "evidence for {} examples, expected {}",
            evidence.len(),
            examples.len()
        )));
    }
    Ok(examples
        .iter()
        .enumerate()
        .filter_map(|(k, ex)| {
            let ev = evidence[k].as_ref()?;
            let predicted: BTreeSet<usize> = ev.iter().copied().collect();
            let supp = ex.gold_evidence().map(|gold| {
                let (p, r, f) = supp_f1(&predicted, &gold.iter().copied().collect());
                [p, r, f]
            });
            let correct = predictions.map(|p| p[k].is_some() && p[k] == ex.answer_candidate());
            Some(ExampleRow {
                id: ex.id.clone(),
                evidence: ev.clone(),
                answer_found: answer_found(ex, ev),
                supp,
                correct,
            })
        })
        .collect())
}

/// Aggregates per-example evidence into a report.
pub fn chain_stats(
    examples: &[Example],
    evidence: &[Option<Vec<usize>>],
    predictions: Option<&[Option<usize>]>,
) -> Result<StatsReport> {
    let rows = example_rows(examples, evidence, predictions)?;
    Ok(aggregate(examples, &rows))
}

pub fn aggregate(examples: &[Example], rows: &[ExampleRow]) -> StatsReport {
    let evaluated = rows.len();
    let mean = |total: f64, count: usize| if count == 0 { 0.0 } else { total / count as f64 };
    let with_gold: Vec<[f64; 3]> = rows.iter().filter_map(|r| r.supp).collect();
    let supp = |k: usize| mean(with_gold.iter().map(|s| s[k]).sum(), with_gold.len());
    let qa_accuracy = if rows.iter().any(|r| r.correct.is_some()) {
        Some(mean(rows.iter().filter(|r| r.correct == Some(true)).count() as f64, evaluated))
    } else {
        None
    };
    StatsReport {
        avg_chain_length: mean(rows.iter().map(|r| r.evidence.len() as f64).sum(), evaluated),
        answer_found_rate: mean(rows.iter().filter(|r| r.answer_found).count() as f64, evaluated),
        supp_precision: supp(0),
        supp_recall: supp(1),
        supp_f1: supp(2),
        qa_accuracy,
        num_evaluated: evaluated,
        num_skipped: examples.len() - evaluated,
        num_with_gold: with_gold.len(),
        example_digest: digest(examples.iter().map(|e| e.id.as_str())),
    }
}

/// Extractor minus baseline, metric by metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub avg_chain_length: f64,
    pub answer_found_rate: f64,
    pub supp_precision: f64,
    pub supp_recall: f64,
    pub supp_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_accuracy: Option<f64>,
}

pub fn compare_ordered_unordered(extractor: &StatsReport, baseline: &StatsReport) -> Result<ReportDelta> {
    if extractor.example_digest != baseline.example_digest || extractor.num_evaluated != baseline.num_evaluated {
        return Err(Error::Model(
            "reports were computed on different example sets".into(),
        ));
    }
    Ok(ReportDelta {
        avg_chain_length: extractor.avg_chain_length - baseline.avg_chain_length,
        answer_found_rate: extractor.answer_found_rate - baseline.answer_found_rate,
        supp_precision: extractor.supp_precision - baseline.supp_precision,
        supp_recall: extractor.supp_recall - baseline.supp_recall,
        supp_f1: extractor.supp_f1 - baseline.supp_f1,
        qa_accuracy: extractor.qa_accuracy.zip(baseline.qa_accuracy).map(|(a, b)| a - b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_record;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn supp_f1_examples() {
        assert_eq!(supp_f1(&set(&[1, 4]), &set(&[1, 4])), (1.0, 1.0, 1.0));
        let (p, r, f) = supp_f1(&set(&[1, 2]), &set(&[2, 3, 4]));
        assert_eq!(p, 0.5);
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        assert!((f - 0.4).abs() < 1e-15);
        assert_eq!(supp_f1(&set(&[0]), &set(&[1])), (0.0, 0.0, 0.0));
        assert_eq!(supp_f1(&set(&[]), &set(&[1])), (0.0, 0.0, 0.0));
    }

    fn example(id: &str) -> Example {
        let json = format!(
            r#"{{"id":"{id}","question":"where did Kavo go ?","answer":"Pell Town","candidates":["Pell Town","Zed"],"paragraphs":[{{"sentences":["Kavo left .","He went to Pell Town ."]}},{{"sentences":["rain fell"]}}],"gold_chain":[0,1],"supporting_facts":[1]}}"#
        );
        Example::from_record(parse_record(&json, 1).unwrap(), 1).unwrap()
    }

    #[test]
    fn answer_found_needs_contiguous_tokens() {
        let ex = example("a");
        assert!(answer_found(&ex, &[1]));
        assert!(!answer_found(&ex, &[0, 2]));
        assert!(!answer_found(&ex, &[]));
    }

    #[test]
    fn stats_prefer_supporting_facts_and_skip_missing() {
        let exs = vec![example("a"), example("b"), example("c")];
        let evidence = vec![Some(vec![1]), Some(vec![0, 1]), None];
        let preds = vec![Some(0), Some(1), None];
        let r = chain_stats(&exs, &evidence, Some(&preds)).unwrap();
        assert_eq!(r.num_evaluated, 2);
        assert_eq!(r.num_skipped, 1);
        assert_eq!(r.avg_chain_length, 1.5);
        assert_eq!(r.answer_found_rate, 1.0);
        // gold = supporting facts {1}: (1,1,1) and (0.5,1,2/3)
        assert!((r.supp_precision - 0.75).abs() < 1e-15);
        assert_eq!(r.supp_recall, 1.0);
        assert!((r.supp_f1 - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(r.qa_accuracy, Some(0.5));
    }

    #[test]
    fn report_keys_have_fixed_order() {
        let exs = vec![example("a")];
        let r = chain_stats(&exs, &[Some(vec![1])], None).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let keys = [
            "avg_chain_length",
            "answer_found_rate",
            "supp_precision",
            "supp_recall",
            "supp_f1",
            "num_evaluated",
            "num_skipped",
            "num_with_gold",
            "example_digest",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(!json.contains("qa_accuracy"));
    }

    #[test]
    fn comparison_requires_same_examples() {
        let a = chain_stats(&[example("a")], &[Some(vec![1])], None).unwrap();
        let b = chain_stats(&[example("b")], &[Some(vec![1])], None).unwrap();
        assert!(compare_ordered_unordered(&a, &b).is_err());
        let d = compare_ordered_unordered(&a, &a).unwrap();
        assert_eq!(d.answer_found_rate, 0.0);
        assert_eq!(d.supp_f1, 0.0);
    }

    proptest! {
        #[test]
        fn supp_f1_swaps_precision_and_recall(
            a in proptest::collection::btree_set(0usize..12, 1..8),
            b in proptest::collection::btree_set(0usize..12, 1..8),
        ) {
            let (p, r, f) = supp_f1(&a, &b);
            let (p2, r2, f2) = supp_f1(&b, &a);
            prop_assert_eq!(p, r2);
            prop_assert_eq!(r, p2);
            prop_assert!((f - f2).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn deltas_are_antisymmetric(
            e1 in proptest::collection::vec(proptest::option::of(proptest::collection::vec(0usize..3, 0..3)), 3),
            e2 in proptest::collection::vec(proptest::option::of(proptest::collection::vec(0usize..3, 0..3)), 3),
        ) {
            let exs = vec![example("a"), example("b"), example("c")];
            let mut e2 = e2;
            for (x, y) in e1.iter().zip(e2.iter_mut()) {
                if x.is_some() != y.is_some() {
                    *y = x.clone();
                }
            }
            let a = chain_stats(&exs, &e1, None).unwrap();
            let b = chain_stats(&exs, &e2, None).unwrap();
            let ab = compare_ordered_unordered(&a, &b).unwrap();
            let ba = compare_ordered_unordered(&b, &a).unwrap();
            prop_assert_eq!(ab.answer_found_rate, -ba.answer_found_rate);
            prop_assert_eq!(ab.supp_f1, -ba.supp_f1);
            prop_assert_eq!(ab.avg_chain_length, -ba.avg_chain_length);
        }

        #[test]
        fn superset_evidence_keeps_answer(extra in proptest::collection::vec(0usize..3, 0..3), base in proptest::collection::vec(0usize..3, 0..3)) {
            let ex = example("a");
            let mut sup = base.clone();
            sup.extend(extra);
            prop_assert!(!answer_found(&ex, &base) || answer_found(&ex, &sup));
        }
    }
}
