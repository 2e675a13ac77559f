//! Per-sentence relevance baseline and the multiple-choice answer scorer.

use ndarray::{s, Array1, ArrayView1};

use super::encoder::{encode_tokens, max_pool, EncoderOutput};
use super::params::{ModelParams, SEP_ID};
use crate::corpus::Example;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Relevance logit `u · [s; q; s ⊙ q]` of one sentence vector.
pub(crate) fn relevance_logit(params: &ModelParams, s_i: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    let u = &params.tensors.relevance;
    let w = u.len() / 3;
    let (u_s, u_q, u_p) = (u.slice(s![..w]), u.slice(s![w..2 * w]), u.slice(s![2 * w..]));
    u_s.dot(&s_i) + u_q.dot(&q) + (&u_p * &s_i).dot(&q)
}

/// Independent relevance in (0, 1) for every sentence.
pub fn score_sentences_unordered(params: &ModelParams, enc: &EncoderOutput) -> Vec<f64> {
    let q = enc.question_rep.view();
    enc.sentence_reps
        .rows()
        .into_iter()
        .map(|s_i| sigmoid(relevance_logit(params, s_i, q)))
        .collect()
}

/// The `k` most relevant sentences (ties to the earlier sentence), returned
/// in document order.
pub fn top_k_relevant(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Token ids of `[question; SEP; evidence sentences...]`, or the question
/// alone when there is no evidence.
pub(crate) fn context_ids(params: &ModelParams, example: &Example, evidence: &[usize]) -> Vec<usize> {
    let mut ids = params.token_ids(&example.question_tokens);
    if !evidence.is_empty() {
        ids.push(SEP_ID);
        for &g in evidence {
            ids.extend(params.token_ids(&example.sentences[g].tokens));
        }
    }
    ids
}

pub(crate) fn check_candidates(example: &Example, evidence: &[usize]) -> Result<()> {
    match &example.candidates {
        Some(c) if !c.is_empty() => {}
        _ => {
            return Err(Error::Model(format!(
                "example `{}` has no candidates to score",
                example.id
            )))
        }
    }
    if let Some(&bad) = evidence.iter().find(|&&g| g >= example.num_sentences()) {
        return Err(Error::Model(format!(
            "evidence sentence {bad} out of range for example `{}`",
            example.id
        )));
    }
    Ok(())
}

/// Dot product between the pooled context and each pooled candidate.
pub fn score_candidates(params: &ModelParams, example: &Example, evidence: &[usize]) -> Result<Vec<f64>> {
    check_candidates(example, evidence)?;
    let (ctx, _) = encode_tokens(params, context_ids(params, example, evidence));
    let a = max_pool(ctx.view(), 0..ctx.nrows()).value;
    Ok(example
        .candidates
        .iter()
        .flatten()
        .map(|c| {
            let (states, _) = encode_tokens(params, params.token_ids(&c.tokens));
            max_pool(states.view(), 0..states.nrows()).value.dot(&a)
        })
        .collect())
}

/// Index of the best-scoring candidate; the first one wins ties.
pub fn predict_candidate(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn log_softmax(scores: &[f64]) -> Array1<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - log_z).collect()
}
