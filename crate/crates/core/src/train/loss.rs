//! Per-example losses of the three objectives, each with an exact reverse
//! pass. The forward computations mirror the inference code in
//! [`crate::model`] step for step.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::model::decoder::{allowed_candidates, masked_log_softmax, pointer_logits, pointer_parts};
use crate::model::encoder::{
    backward_example, backward_tokens, encode_example_cached, encode_tokens, max_pool,
    max_pool_backward, EncoderMode,
};
use crate::model::params::{ModelParams, Tensors};
use crate::model::scorer::{check_candidates, context_ids, log_softmax, relevance_logit};

/// What a training example is supervised with.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Ordered chain for the pointer decoder; EOS is appended implicitly.
    Chain(Vec<usize>),
    /// Positive sentences for the unordered relevance classifier.
    Relevant(Vec<usize>),
    /// Evidence sentences for the answer scorer; the gold candidate is the
    /// one matching the example's answer.
    Answer(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub example: &'a Example,
    pub target: Target,
}

/// Loss plus the max-pool winners it depended on; two evaluations with the
/// same `kinks` lie on the same smooth piece of the loss surface.
pub(crate) struct Evaluated {
    pub loss: f64,
    pub kinks: Vec<usize>,
}

pub(crate) fn evaluate(
    params: &ModelParams,
    sample: &Sample,
    mode: EncoderMode,
    grads: Option<&mut Tensors>,
) -> Result<Evaluated> {
    match &sample.target {
        Target::Chain(chain) => chain_loss(params, sample.example, chain, mode, grads),
        Target::Relevant(pos) => unordered_loss(params, sample.example, pos, mode, grads),
        Target::Answer(evidence) => answer_loss(params, sample.example, evidence, grads),
    }
}

fn check_chain(example: &Example, chain: &[usize]) -> Result<()> {
    let n = example.num_sentences();
    if chain.is_empty() {
        return Err(Error::Model(format!("empty target chain for `{}`", example.id)));
    }
    for (k, &g) in chain.iter().enumerate() {
        if g >= n || chain[..k].contains(&g) {
            return Err(Error::Model(format!(
                "invalid sentence {g} in target chain for `{}`",
                example.id
            )));
        }
    }
    Ok(())
}

/// Teacher-forced negative log-likelihood of `chain` followed by EOS.
pub fn chain_nll_loss(params: &ModelParams, example: &Example, chain: &[usize], mode: EncoderMode) -> Result<f64> {
    Ok(chain_loss(params, example, chain, mode, None)?.loss)
}

/// Per-sentence binary cross-entropy, summed over the example's sentences.
pub fn unordered_bce_loss(
    params: &ModelParams,
    example: &Example,
    positives: &[usize],
    mode: EncoderMode,
) -> Result<f64> {
    Ok(unordered_loss(params, example, positives, mode, None)?.loss)
}

/// Cross-entropy of the gold candidate given `evidence`.
pub fn answer_ce_loss(params: &ModelParams, example: &Example, evidence: &[usize]) -> Result<f64> {
    Ok(answer_loss(params, example, evidence, None)?.loss)
}

fn chain_loss(
    params: &ModelParams,
    example: &Example,
    chain: &[usize],
    mode: EncoderMode,
    grads: Option<&mut Tensors>,
) -> Result<Evaluated> {
    check_chain(example, chain)?;
    let t = &params.tensors;
    let (enc, cache) = encode_example_cached(params, example, mode);
    let reps = enc.sentence_reps.view();
    let n = reps.nrows();
    let width = params.rep_dim();
    let steps = chain.len() + 1;

    let mut x = Array2::zeros((steps, width));
    x.row_mut(0).assign(&t.sos);
    for (k, &g) in chain.iter().enumerate() {
        x.row_mut(k + 1).assign(&reps.row(g));
    }
    let (hs, dec_cache) = t.decoder.forward(x, enc.question_rep.clone(), Array1::zeros(width));

    let mut mask = vec![false; n];
    let mut loss = 0.0;
    let mut d_logits = Vec::with_capacity(steps);
    for step in 0..steps {
        let logits = pointer_logits(params, hs.row(step), reps);
        let log_probs = masked_log_softmax(&logits, &allowed_candidates(&mask, true))
            .expect("EOS is always allowed during training");
        let target = chain.get(step).copied().unwrap_or(n);
        loss -= log_probs[target];
        let mut d: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        d[target] -= 1.0;
        d_logits.push(d);
        if let Some(&g) = chain.get(step) {
            mask[g] = true;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { tensor: "chain loss".into() });
    }

    if let Some(grads) = grads {
        let (w_h, w_s, w_p) = pointer_parts(&t.pointer);
        let mut d_reps = Array2::<f64>::zeros((n, width));
        let mut d_eos = Array1::<f64>::zeros(width);
        let mut d_hs = Array2::<f64>::zeros((steps, width));
        let mut d_ptr = Array1::<f64>::zeros(3 * width);
        for (step, d) in d_logits.iter().enumerate() {
            let h = hs.row(step);
            let d_sent = ArrayView1::from(&d[..n]);
            let d_eos_logit = d[n];
            let total: f64 = d.iter().sum();
            // Σ_i dα_i · s_i over sentences and EOS.
            let mut agg = reps.t().dot(&d_sent);
            agg.scaled_add(d_eos_logit, &t.eos);

            d_ptr.slice_mut(s![..width]).scaled_add(total, &h);
            d_ptr.slice_mut(s![width..2 * width]).scaled_add(1.0, &agg);
            let mut part = d_ptr.slice_mut(s![2 * width..]);
            part += &(&h * &agg);

            let mut dh = d_hs.row_mut(step);
            dh.scaled_add(total, &w_h);
            dh += &(&w_p * &agg);

            let v = &w_s + &(&w_p * &h);
            for (i, &di) in d_sent.iter().enumerate() {
                if di != 0.0 {
                    d_reps.row_mut(i).scaled_add(di, &v);
                }
            }
            d_eos.scaled_add(d_eos_logit, &v);
        }

        let dec = t.decoder.backward(&dec_cache, d_hs.view(), &mut grads.decoder);
        grads.sos += &dec.dx.row(0);
        for (k, &g) in chain.iter().enumerate() {
            let mut row = d_reps.row_mut(g);
            row += &dec.dx.row(k + 1);
        }
        grads.pointer += &d_ptr;
        grads.eos += &d_eos;
        backward_example(params, &cache, d_reps.view(), dec.dh0.view(), grads);
    }

    Ok(Evaluated {
        loss,
        kinks: cache.pool_signature(),
    })
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn unordered_loss(
    params: &ModelParams,
    example: &Example,
    positives: &[usize],
    mode: EncoderMode,
    grads: Option<&mut Tensors>,
) -> Result<Evaluated> {
    let n = example.num_sentences();
    if let Some(&bad) = positives.iter().find(|&&g| g >= n) {
        return Err(Error::Model(format!(
            "relevant sentence {bad} out of range for `{}`",
            example.id
        )));
    }
    let (enc, cache) = encode_example_cached(params, example, mode);
    let q = enc.question_rep.view();
    let mut loss = 0.0;
    let mut d_logit = Vec::with_capacity(n);
    for (i, s_i) in enc.sentence_reps.rows().into_iter().enumerate() {
        let z = relevance_logit(params, s_i, q);
        let y = if positives.contains(&i) { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        d_logit.push(sigmoid(z) - y);
    }

    if let Some(grads) = grads {
        let width = params.rep_dim();
        let u = &params.tensors.relevance;
        let (u_s, u_q, u_p) = (u.slice(s![..width]), u.slice(s![width..2 * width]), u.slice(s![2 * width..]));
        let mut d_reps = Array2::<f64>::zeros((n, width));
        let mut d_q = Array1::<f64>::zeros(width);
        let mut d_u = Array1::<f64>::zeros(3 * width);
        for (i, s_i) in enc.sentence_reps.rows().into_iter().enumerate() {
            let dz = d_logit[i];
            d_u.slice_mut(s![..width]).scaled_add(dz, &s_i);
            d_u.slice_mut(s![width..2 * width]).scaled_add(dz, &q);
            d_u.slice_mut(s![2 * width..]).scaled_add(dz, &(&s_i * &q));
            let mut ds = d_reps.row_mut(i);
            ds.scaled_add(dz, &u_s);
            ds += &(&u_p * &q).mapv(|v| v * dz);
            d_q.scaled_add(dz, &u_q);
            d_q += &(&u_p * &s_i).mapv(|v| v * dz);
        }
        grads.relevance += &d_u;
        backward_example(params, &cache, d_reps.view(), d_q.view(), grads);
    }

    Ok(Evaluated {
        loss,
        kinks: cache.pool_signature(),
    })
}

fn answer_loss(
    params: &ModelParams,
    example: &Example,
    evidence: &[usize],
    grads: Option<&mut Tensors>,
) -> Result<Evaluated> {
    check_candidates(example, evidence)?;
    let gold = example
        .answer_candidate()
        .ok_or_else(|| Error::Model(format!("no candidate matches the answer of `{}`", example.id)))?;
    let candidates = example.candidates.as_deref().unwrap_or_default();

    let (ctx, ctx_cache) = encode_tokens(params, context_ids(params, example, evidence));
    let ctx_pool = max_pool(ctx.view(), 0..ctx.nrows());
    let mut cand_runs = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    for c in candidates {
        let (states, cache) = encode_tokens(params, params.token_ids(&c.tokens));
        let pooled = max_pool(states.view(), 0..states.nrows());
        scores.push(pooled.value.dot(&ctx_pool.value));
        cand_runs.push((states.nrows(), cache, pooled));
    }
    let log_probs = log_softmax(&scores);
    let loss = -log_probs[gold];

    let mut kinks = ctx_pool.argmax.clone();
    for (_, _, pooled) in &cand_runs {
        kinks.extend_from_slice(&pooled.argmax);
    }

    if let Some(grads) = grads {
        let width = params.rep_dim();
        let mut d_scores = log_probs.mapv(f64::exp);
        d_scores[gold] -= 1.0;
        let mut d_ctx = Array1::<f64>::zeros(width);
        for ((rows, cache, pooled), &ds) in cand_runs.iter().zip(&d_scores) {
            d_ctx.scaled_add(ds, &pooled.value);
            let mut d_states = Array2::zeros((*rows, width));
            max_pool_backward(pooled, ctx_pool.value.mapv(|v| v * ds).view(), &mut d_states);
            backward_tokens(params, cache, d_states.view(), grads);
        }
        let mut d_states = Array2::zeros((ctx.nrows(), width));
        max_pool_backward(&ctx_pool, d_ctx.view(), &mut d_states);
        backward_tokens(params, &ctx_cache, d_states.view(), grads);
    }

    Ok(Evaluated { loss, kinks })
}

/// Mean loss over `batch` and its exact gradient. Per-example gradients are
/// summed in batch order, so the result does not depend on scheduling.
pub fn compute_gradients(params: &ModelParams, batch: &[Sample], mode: EncoderMode) -> Result<(f64, Tensors)> {
    if batch.is_empty() {
        return Err(Error::Model("cannot compute gradients of an empty batch".into()));
    }
    let mut grads = params.tensors.zeros_like();
    let mut total = 0.0;
    for sample in batch {
        total += evaluate(params, sample, mode, Some(&mut grads))?.loss;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    grads.check_finite()?;
    Ok((total * scale, grads))
}

pub(crate) fn mean_loss(params: &ModelParams, batch: &[Sample], mode: EncoderMode) -> Result<(f64, Vec<usize>)> {
    let mut total = 0.0;
    let mut kinks = Vec::new();
    for sample in batch {
        let e = evaluate(params, sample, mode, None)?;
        total += e.loss;
        kinks.extend(e.kinks);
    }
    Ok((total / batch.len() as f64, kinks))
}
