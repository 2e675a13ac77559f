//! Training of the chain extractor, the unordered baseline and the answer
//! scorer.
//!
//! Defaults are sized for small CPU runs: Adam at 1e-3 with β = (0.9, 0.999),
//! batches of 8 and 10 epochs. Gradients are clipped to a global norm of 5.
//! The checkpoint returned is the one with the best dev score (the earliest
//! epoch wins ties).

pub mod adam;
pub mod gradcheck;
pub mod loss;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Example, OracleStatus};
use crate::error::{Error, Result};
use crate::metrics::answer_found;
use crate::model::beam::{extract_chains, union_top_k, BeamConfig, DEFAULT_BEAM_SIZE, DEFAULT_UNION_CAP, DEFAULT_UNION_K};
use crate::model::encoder::{encode_example, EncoderMode};
use crate::model::params::{ModelParams, Vocab, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM};
use crate::model::scorer::{predict_candidate, score_candidates, score_sentences_unordered, top_k_relevant};
use crate::oracle::{derive_oracle, Criterion, OracleConfig};
use crate::rng::stream;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, OptState};
pub use loss::{answer_ce_loss, chain_nll_loss, compute_gradients, unordered_bce_loss, Sample, Target};

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Oracle used for examples that carry no precomputed oracle chain.
    pub criterion: Criterion,
    pub mode: EncoderMode,
    pub beam_size: usize,
    pub max_steps: usize,
    pub length_norm: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub clip_norm: f64,
    /// Chains merged into answer-scorer evidence, and the sentence cap.
    pub union_k: usize,
    pub union_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 10,
            batch_size: 8,
            seed: 13,
            criterion: Criterion::Shortest,
            mode: EncoderMode::Para,
            beam_size: DEFAULT_BEAM_SIZE,
            max_steps: crate::graph::DEFAULT_MAX_CHAIN_LEN,
            length_norm: false,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            clip_norm: DEFAULT_CLIP_NORM,
            union_k: DEFAULT_UNION_K,
            union_cap: DEFAULT_UNION_CAP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie strictly between 0 and 1");
        }
        if !(self.epsilon > 0.0) || !(self.clip_norm > 0.0) {
            return bad("epsilon and clip_norm must be positive");
        }
        if self.batch_size == 0 || self.beam_size == 0 || self.max_steps == 0 {
            return bad("batch_size, beam_size and max_steps must be at least 1");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.union_k == 0 || self.union_cap == 0 {
            return bad("dimensions and union sizes must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig {
            beam_size: self.beam_size,
            max_steps: self.max_steps,
            length_norm: self.length_norm,
        }
    }

    fn oracle(&self) -> OracleConfig {
        OracleConfig {
            criterion: self.criterion,
            ..OracleConfig::default()
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_exact: f64,
    pub dev_answer_found: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_qa_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// Training examples dropped because no target chain was available.
    pub skipped: usize,
}

/// The oracle chain a training example is supervised with: the annotated
/// one when present, otherwise derived with `criterion`.
pub fn target_chain(example: &Example, criterion: Criterion) -> Option<Vec<usize>> {
    match &example.oracle {
        Some(o) if o.status == OracleStatus::Unreachable => None,
        Some(o) if o.chain.is_some() => o.chain.clone(),
        _ => {
            let config = OracleConfig {
                criterion,
                ..OracleConfig::default()
            };
            derive_oracle(example, &config).chain
        }
    }
}

/// The chain dev predictions are compared against: the gold chain when
/// annotated, else the oracle.
pub fn reference_chain(example: &Example, criterion: Criterion) -> Option<Vec<usize>> {
    example.gold_chain.clone().or_else(|| target_chain(example, criterion))
}

struct DevScores {
    exact: f64,
    answer_found: f64,
    qa_accuracy: Option<f64>,
    selection: f64,
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn fit<'a>(
    config: &TrainConfig,
    stream_name: &str,
    mut params: ModelParams,
    samples: &[Sample<'a>],
    mut dev: impl FnMut(&ModelParams) -> Result<DevScores>,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    if samples.is_empty() {
        return Err(Error::Model("no usable training examples".into()));
    }
    let adam = config.adam();
    let mut opt = OptState::new(&params.tensors);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream(config.seed, stream_name, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, mut grads) = compute_gradients(&params, &batch, config.mode)?;
            total += loss * chunk.len() as f64;
            clip_grad_norm(&mut grads, config.clip_norm);
            adam_step(&mut params.tensors, &grads, &mut opt, &adam);
            params.tensors.check_finite()?;
        }
        let scores = dev(&params)?;
        log.push(EpochLog {
            epoch,
            train_loss: total / samples.len() as f64,
            dev_exact: scores.exact,
            dev_answer_found: scores.answer_found,
            dev_qa_accuracy: scores.qa_accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| scores.selection > *b) {
            best = Some((scores.selection, params.clone()));
        }
    }
    let (_, best) = best.expect("at least one epoch");
    Ok((best, log))
}

fn init_params(config: &TrainConfig, train: &[Example], stream_name: &str) -> ModelParams {
    let vocab = Vocab::build(train);
    ModelParams::init(
        vocab,
        config.embed_dim,
        config.hidden_dim,
        &mut stream(config.seed, stream_name, 0),
    )
}

fn chain_samples(train: &[Example], criterion: Criterion, relevance: bool) -> (Vec<Sample<'_>>, usize) {
    let mut skipped = 0;
    let samples = train
        .iter()
        .filter_map(|example| match target_chain(example, criterion) {
            Some(chain) => Some(Sample {
                example,
                target: if relevance {
                    Target::Relevant(chain)
                } else {
                    Target::Chain(chain)
                },
            }),
            None => {
                skipped += 1;
                None
            }
        })
        .collect();
    (samples, skipped)
}

/// Dev exact-match and top-1 answer-found of the extractor.
pub fn evaluate_extractor(params: &ModelParams, dev: &[Example], config: &TrainConfig) -> Result<(f64, f64)> {
    let beam = config.beam();
    let (mut exact, mut with_ref, mut found) = (0, 0, 0);
    for example in dev {
        let chains = extract_chains(params, example, config.mode, &beam)?;
        let top = &chains[0].sentences;
        if let Some(reference) = reference_chain(example, config.criterion) {
            with_ref += 1;
            exact += usize::from(*top == reference);
        }
        found += usize::from(answer_found(example, top));
    }
    Ok((rate(exact, with_ref), rate(found, dev.len())))
}

/// Sentences the unordered baseline keeps with an evidence budget of `k`.
pub fn unordered_evidence(params: &ModelParams, example: &Example, mode: EncoderMode, k: usize) -> Vec<usize> {
    let scores = score_sentences_unordered(params, &encode_example(params, example, mode));
    top_k_relevant(&scores, k)
}

pub fn train_extractor(config: &TrainConfig, train: &[Example], dev: &[Example]) -> Result<TrainOutcome> {
    config.validate()?;
    config.oracle().validate()?;
    let (samples, skipped) = chain_samples(train, config.criterion, false);
    let params = init_params(config, train, "init");
    let (params, log) = fit(config, "shuffle", params, &samples, |p| {
        let (exact, found) = evaluate_extractor(p, dev, config)?;
        Ok(DevScores {
            exact,
            answer_found: found,
            qa_accuracy: None,
            selection: exact,
        })
    })?;
    Ok(TrainOutcome { params, log, skipped })
}

/// Trains the per-sentence relevance classifier. Dev exact-match compares
/// the sentences scored above 0.5 with the reference set; answer-found uses
/// the `union_cap` most relevant sentences.
pub fn train_unordered(config: &TrainConfig, train: &[Example], dev: &[Example]) -> Result<TrainOutcome> {
    config.validate()?;
    let (samples, skipped) = chain_samples(train, config.criterion, true);
    let params = init_params(config, train, "init-unordered");
    let (params, log) = fit(config, "shuffle-unordered", params, &samples, |p| {
        let (mut exact, mut with_ref, mut found) = (0, 0, 0);
        for example in dev {
            let scores = score_sentences_unordered(p, &encode_example(p, example, config.mode));
            if let Some(mut reference) = reference_chain(example, config.criterion) {
                reference.sort_unstable();
                let picked: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.5).collect();
                with_ref += 1;
                exact += usize::from(picked == reference);
            }
            found += usize::from(answer_found(example, &top_k_relevant(&scores, config.union_cap)));
        }
        let exact = rate(exact, with_ref);
        Ok(DevScores {
            exact,
            answer_found: rate(found, dev.len()),
            qa_accuracy: None,
            selection: exact,
        })
    })?;
    Ok(TrainOutcome { params, log, skipped })
}

/// Evidence the answer scorer reads: the union of the extractor's top chains.
pub fn extractor_evidence(extractor: &ModelParams, example: &Example, config: &TrainConfig) -> Result<Vec<usize>> {
    let chains = extract_chains(extractor, example, config.mode, &config.beam())?;
    Ok(union_top_k(&chains, config.union_k, config.union_cap))
}

/// Trains the multiple-choice scorer on the frozen extractor's evidence.
/// Examples without candidates are skipped.
pub fn train_answer_scorer(
    config: &TrainConfig,
    extractor: &ModelParams,
    train: &[Example],
    dev: &[Example],
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut samples = Vec::new();
    let mut skipped = 0;
    for example in train {
        if example.answer_candidate().is_none() {
            skipped += 1;
            continue;
        }
        samples.push(Sample {
            example,
            target: Target::Answer(extractor_evidence(extractor, example, config)?),
        });
    }
    let dev_evidence: Vec<Vec<usize>> = dev
        .iter()
        .map(|ex| extractor_evidence(extractor, ex, config))
        .collect::<Result<_>>()?;
    let (exact, found) = evaluate_extractor(extractor, dev, config)?;

    let params = init_params(config, train, "init-scorer");
    let (params, log) = fit(config, "shuffle-scorer", params, &samples, |p| {
        let mut correct = 0;
        let mut scored = 0;
        for (example, evidence) in dev.iter().zip(&dev_evidence) {
            let Some(gold) = example.answer_candidate() else { continue };
            scored += 1;
            let scores = score_candidates(p, example, evidence)?;
            correct += usize::from(predict_candidate(&scores) == Some(gold));
        }
        let accuracy = rate(correct, scored);
        Ok(DevScores {
            exact,
            answer_found: found,
            qa_accuracy: Some(accuracy),
            selection: accuracy,
        })
    })?;
    Ok(TrainOutcome { params, log, skipped })
}
