//! Bidirectional LSTM sentence encoder with max-pool span extraction.
//!
//! In [`EncoderMode::Para`] each paragraph is encoded once as
//! `[question; SEP; paragraph]` and every sentence vector is the elementwise
//! max over its own span. In [`EncoderMode::Sent`] every sentence gets its
//! own `[question; SEP; sentence]` run. The question vector always comes from
//! a standalone run over the question tokens.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::lstm::LstmCache;
use super::params::{ModelParams, Tensors, SEP_ID};
use crate::corpus::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    #[default]
    Para,
    Sent,
}

impl std::str::FromStr for EncoderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "para" => Ok(EncoderMode::Para),
            "sent" => Ok(EncoderMode::Sent),
            other => Err(format!("unknown encoder mode `{other}` (expected para|sent)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// One `2d` row per sentence, in global order.
    pub sentence_reps: Array2<f64>,
    pub question_rep: Array1<f64>,
    /// Contextual token states of each encoder run (`T × 2d`).
    pub token_states: Vec<Array2<f64>>,
}

/// Activations of one bidirectional run.
#[derive(Debug, Clone)]
pub struct RunCache {
    tokens: Vec<usize>,
    fwd: LstmCache,
    bwd: LstmCache,
}

/// Elementwise max over `rows` plus the winning row of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub value: Array1<f64>,
    pub argmax: Vec<usize>,
}

pub fn max_pool(states: ArrayView2<f64>, rows: Range<usize>) -> Pooled {
    assert!(!rows.is_empty(), "max-pool over an empty span");
    let width = states.ncols();
    let mut value = states.row(rows.start).to_owned();
    let mut argmax = vec![rows.start; width];
    for r in rows.start + 1..rows.end {
        let row = states.row(r);
        for k in 0..width {
            if row[k] > value[k] {
                value[k] = row[k];
                argmax[k] = r;
            }
        }
    }
    Pooled { value, argmax }
}

/// Routes a pooled gradient back to the winning rows.
pub fn max_pool_backward(pooled: &Pooled, grad: ArrayView1<f64>, d_states: &mut Array2<f64>) {
    for (k, &r) in pooled.argmax.iter().enumerate() {
        d_states[[r, k]] += grad[k];
    }
}

/// Runs the bidirectional encoder over token ids; returns `T × 2d` states.
pub fn encode_tokens(params: &ModelParams, tokens: Vec<usize>) -> (Array2<f64>, RunCache) {
    let t = &params.tensors;
    let d = params.hidden_dim;
    let steps = tokens.len();
    let mut x = Array2::zeros((steps, params.embed_dim));
    for (row, &id) in tokens.iter().enumerate() {
        x.row_mut(row).assign(&t.embedding.row(id));
    }
    let mut x_rev = x.clone();
    x_rev.invert_axis(Axis(0));
    let x_rev = x_rev.as_standard_layout().into_owned();

    let (hf, fwd) = t.enc_fwd.forward(x, Array1::zeros(d), Array1::zeros(d));
    let (hb, bwd) = t.enc_bwd.forward(x_rev, Array1::zeros(d), Array1::zeros(d));
    let mut states = Array2::zeros((steps, 2 * d));
    states.slice_mut(s![.., ..d]).assign(&hf);
    states
        .slice_mut(s![.., d..])
        .assign(&hb.slice(s![..;-1, ..]));
    (states, RunCache { tokens, fwd, bwd })
}

pub fn backward_tokens(
    params: &ModelParams,
    cache: &RunCache,
    d_states: ArrayView2<f64>,
    grads: &mut Tensors,
) {
    let t = &params.tensors;
    let d = params.hidden_dim;
    let d_fwd = d_states.slice(s![.., ..d]);
    let d_bwd = d_states.slice(s![..;-1, d..]).as_standard_layout().into_owned();
    let gf = t.enc_fwd.backward(&cache.fwd, d_fwd, &mut grads.enc_fwd);
    let gb = t.enc_bwd.backward(&cache.bwd, d_bwd.view(), &mut grads.enc_bwd);
    let steps = cache.tokens.len();
    for (row, &id) in cache.tokens.iter().enumerate() {
        let mut e = grads.embedding.row_mut(id);
        e += &gf.dx.row(row);
        e += &gb.dx.row(steps - 1 - row);
    }
}

pub(crate) struct SentenceSpan {
    run: usize,
    pooled: Pooled,
}

pub(crate) struct EncoderCache {
    runs: Vec<RunCache>,
    run_lengths: Vec<usize>,
    spans: Vec<SentenceSpan>,
    question: RunCache,
    question_pool: Pooled,
}

impl EncoderCache {
    /// Argmax rows of every pooled vector, for detecting kinks.
    pub(crate) fn pool_signature(&self) -> Vec<usize> {
        self.spans
            .iter()
            .flat_map(|s| s.pooled.argmax.iter().copied())
            .chain(self.question_pool.argmax.iter().copied())
            .collect()
    }
}

pub fn encode_example(params: &ModelParams, example: &Example, mode: EncoderMode) -> EncoderOutput {
    encode_example_cached(params, example, mode).0
}

pub(crate) fn encode_example_cached(
    params: &ModelParams,
    example: &Example,
    mode: EncoderMode,
) -> (EncoderOutput, EncoderCache) {
    let question_ids = params.token_ids(&example.question_tokens);
    let prefix = question_ids.len() + 1;
    let with_question = |body: Vec<usize>| {
        let mut ids = Vec::with_capacity(prefix + body.len());
        ids.extend_from_slice(&question_ids);
        ids.push(SEP_ID);
        ids.extend(body);
        ids
    };

    // (run token ids, [(global sentence, span within run)])
    let mut plans: Vec<(Vec<usize>, Vec<(usize, Range<usize>)>)> = Vec::new();
    match mode {
        EncoderMode::Para => {
            for para in &example.paragraphs {
                if para.sentences.is_empty() {
                    continue;
                }
                let mut body = Vec::new();
                let mut spans = Vec::new();
                for g in para.sentences.clone() {
                    let start = prefix + body.len();
                    body.extend(params.token_ids(&example.sentences[g].tokens));
                    spans.push((g, start..prefix + body.len()));
                }
                plans.push((with_question(body), spans));
            }
        }
        EncoderMode::Sent => {
            for s in &example.sentences {
                let body = params.token_ids(&s.tokens);
                let span = prefix..prefix + body.len();
                plans.push((with_question(body), vec![(s.global_index, span)]));
            }
        }
    }

    let n = example.num_sentences();
    let width = params.rep_dim();
    let mut sentence_reps = Array2::zeros((n, width));
    let mut spans: Vec<Option<SentenceSpan>> = (0..n).map(|_| None).collect();
    let mut runs = Vec::with_capacity(plans.len());
    let mut run_lengths = Vec::with_capacity(plans.len());
    let mut token_states = Vec::with_capacity(plans.len());
    for (run, (ids, sentence_spans)) in plans.into_iter().enumerate() {
        let (states, cache) = encode_tokens(params, ids);
        for (g, span) in sentence_spans {
            let pooled = max_pool(states.view(), span);
            sentence_reps.row_mut(g).assign(&pooled.value);
            spans[g] = Some(SentenceSpan { run, pooled });
        }
        run_lengths.push(states.nrows());
        token_states.push(states);
        runs.push(cache);
    }

    let (q_states, question) = encode_tokens(params, question_ids);
    let question_pool = max_pool(q_states.view(), 0..q_states.nrows());
    let output = EncoderOutput {
        sentence_reps,
        question_rep: question_pool.value.clone(),
        token_states,
    };
    let cache = EncoderCache {
        runs,
        run_lengths,
        spans: spans
            .into_iter()
            .map(|s| s.expect("every sentence belongs to a run"))
            .collect(),
        question,
        question_pool,
    };
    (output, cache)
}

/// Pushes gradients w.r.t. sentence vectors and the question vector back
/// into the encoder weights and embeddings.
pub(crate) fn backward_example(
    params: &ModelParams,
    cache: &EncoderCache,
    d_sentences: ArrayView2<f64>,
    d_question: ArrayView1<f64>,
    grads: &mut Tensors,
) {
    let width = params.rep_dim();
    let mut d_runs: Vec<Array2<f64>> = cache
        .run_lengths
        .iter()
        .map(|&len| Array2::zeros((len, width)))
        .collect();
    for (g, span) in cache.spans.iter().enumerate() {
        max_pool_backward(&span.pooled, d_sentences.row(g), &mut d_runs[span.run]);
    }
    for (run, d) in cache.runs.iter().zip(&d_runs) {
        backward_tokens(params, run, d.view(), grads);
    }
    let mut d_q = Array2::zeros((cache.question.tokens.len(), width));
    max_pool_backward(&cache.question_pool, d_question, &mut d_q);
    backward_tokens(params, &cache.question, d_q.view(), grads);
}
