//! Pointer-network decoder: one LSTM step, then a softmax over the
//! unselected sentences plus an end-of-chain candidate.
//!
//! Candidate `i` is scored as `w · [h_t; s_i; h_t ⊙ s_i]` where `h_t` is the
//! hidden state after consuming the previous selection (or SOS).

use ndarray::{s, Array1, ArrayView1, ArrayView2};

use super::encoder::EncoderOutput;
use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
    /// `mask[i]` is set once sentence `i` has been emitted.
    pub mask: Vec<bool>,
}

impl DecoderState {
    /// Hidden state from the pooled question, zero cell, nothing selected.
    pub fn initial(enc: &EncoderOutput) -> Self {
        DecoderState {
            h: enc.question_rep.clone(),
            c: Array1::zeros(enc.question_rep.len()),
            mask: vec![false; enc.sentence_reps.nrows()],
        }
    }

    pub fn select(&mut self, sentence: usize) {
        self.mask[sentence] = true;
    }

    pub fn num_unmasked(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }
}

/// Splits the pointer weights into the parts applied to `h`, `s` and `h ⊙ s`.
pub(crate) fn pointer_parts(pointer: &Array1<f64>) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
    let w = pointer.len() / 3;
    (
        pointer.slice(s![..w]),
        pointer.slice(s![w..2 * w]),
        pointer.slice(s![2 * w..]),
    )
}

/// Raw scores for every sentence and, last, the EOS candidate. Masking is
/// applied separately.
pub fn pointer_logits(
    params: &ModelParams,
    h: ArrayView1<f64>,
    sentence_reps: ArrayView2<f64>,
) -> Vec<f64> {
    let (w_h, w_s, w_p) = pointer_parts(&params.tensors.pointer);
    let v = &w_s + &(&w_p * &h);
    let base = w_h.dot(&h);
    let mut logits: Vec<f64> = sentence_reps.rows().into_iter().map(|s| base + s.dot(&v)).collect();
    logits.push(base + params.tensors.eos.dot(&v));
    logits
}

/// Log-softmax restricted to `allowed`; disallowed entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], allowed: &[bool]) -> Option<Vec<f64>> {
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let sum: f64 = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(&l, _)| (l - max).exp())
        .sum();
    let log_z = max + sum.ln();
    Some(
        logits
            .iter()
            .zip(allowed)
            .map(|(&l, &a)| if a { l - log_z } else { f64::NEG_INFINITY })
            .collect(),
    )
}

pub(crate) fn allowed_candidates(mask: &[bool], allow_eos: bool) -> Vec<bool> {
    mask.iter().map(|m| !m).chain([allow_eos]).collect()
}

/// Advances the decoder by one input and returns the log-probabilities over
/// `n + 1` candidates (sentences, then EOS) together with the new state.
pub fn decoder_step_log(
    params: &ModelParams,
    state: &DecoderState,
    prev_input: ArrayView1<f64>,
    sentence_reps: ArrayView2<f64>,
    allow_eos: bool,
) -> Result<(Vec<f64>, DecoderState)> {
    let (h, c) = params
        .tensors
        .decoder
        .step(prev_input, state.h.view(), state.c.view());
    let logits = pointer_logits(params, h.view(), sentence_reps);
    let allowed = allowed_candidates(&state.mask, allow_eos);
    let log_probs = masked_log_softmax(&logits, &allowed).ok_or_else(|| {
        Error::Model("decoder step with every candidate masked and EOS disallowed".into())
    })?;
    Ok((
        log_probs,
        DecoderState {
            h,
            c,
            mask: state.mask.clone(),
        },
    ))
}

/// Probability form of [`decoder_step_log`]; masked entries are exactly 0.
pub fn decoder_step(
    params: &ModelParams,
    state: &DecoderState,
    prev_input: ArrayView1<f64>,
    sentence_reps: ArrayView2<f64>,
    allow_eos: bool,
) -> Result<(Vec<f64>, DecoderState)> {
    let (log_probs, next) = decoder_step_log(params, state, prev_input, sentence_reps, allow_eos)?;
    Ok((log_probs.iter().map(|l| l.exp()).collect(), next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ModelParams, Vocab, SEP, UNK};
    use ndarray::{array, Array2};

    fn tiny(hidden_dim: usize) -> ModelParams {
        let vocab = Vocab::from_words(vec![UNK.into(), SEP.into()]).unwrap();
        ModelParams::zeros(vocab, 1, hidden_dim)
    }

    fn state(h: Array1<f64>, n: usize) -> DecoderState {
        DecoderState {
            c: Array1::zeros(h.len()),
            h,
            mask: vec![false; n],
        }
    }

    #[test]
    fn equal_reps_split_evenly() {
        let mut p = tiny(1);
        p.tensors.pointer = array![0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        let reps = array![[0.2, 0.4], [0.2, 0.4]];
        let (probs, _) =
            decoder_step(&p, &state(array![0.1, 0.2], 2), array![1.0, 0.0].view(), reps.view(), false)
                .unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-15);
        assert!((probs[1] - 0.5).abs() < 1e-15);
        assert_eq!(probs[2], 0.0);
    }

    #[test]
    fn masked_candidate_gets_zero() {
        let mut p = tiny(1);
        p.tensors.pointer = array![0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let reps = array![[0.3, 0.0], [5.0, 0.0], [-0.1, 0.0]];
        let mut st = state(array![0.0, 0.0], 3);
        st.select(1);
        let (probs, next) = decoder_step(&p, &st, array![0.0, 0.0].view(), reps.view(), false).unwrap();
        assert_eq!(probs[1], 0.0);
        assert_eq!(probs[3], 0.0);
        assert!((probs[0] - 0.5987).abs() < 5e-5);
        assert!((probs[2] - 0.4013).abs() < 5e-5);
        assert_eq!(next.mask, vec![false, true, false]);
    }

    /// d = 1 fixture: every weight pinned, expected values evaluated by hand
    /// with scalar arithmetic independent of the vectorized code.
    #[test]
    fn pinned_fixture() {
        let mut p = tiny(1);
        let dec = &mut p.tensors.decoder;
        // Only gate rows 2 (candidate) and 3 (output) of unit 0 are active,
        // and the input gate of unit 0.
        dec.w_x = Array2::zeros((8, 2));
        dec.w_h = Array2::zeros((8, 2));
        dec.bias = Array1::zeros(8);
        dec.w_x[[0, 0]] = 1.0; // input gate, unit 0
        dec.w_x[[4, 0]] = 0.5; // candidate, unit 0
        dec.w_h[[6, 1]] = -1.0; // output gate, unit 0
        dec.bias[6] = 0.2;
        p.tensors.pointer = array![0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        p.tensors.eos = array![-1.0, 0.0];

        let h_prev = array![0.0, 0.4];
        let x = array![0.8, 0.0];
        let reps = array![[0.1, 0.0], [-0.3, 0.0]];
        let (probs, next) =
            decoder_step(&p, &state(h_prev, 2), x.view(), reps.view(), true).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i0 = sig(0.8);
        let g0 = (0.5f64 * 0.8).tanh();
        let c0 = 0.5 * 0.0 + i0 * g0; // forget gate sig(0)=0.5 times c_prev=0
        let o0 = sig(-0.4 + 0.2);
        let h0 = o0 * c0.tanh();
        // unit 1: i=f=o=0.5, g=0 → c=0, h=0
        assert!((next.h[0] - h0).abs() < 1e-15);
        assert_eq!(next.h[1], 0.0);
        // alpha_i = s_i[0] + 2 h0 s_i[0]
        let alpha = [0.1 + 2.0 * h0 * 0.1, -0.3 + 2.0 * h0 * -0.3, -1.0 + 2.0 * h0 * -1.0];
        let z: f64 = alpha.iter().map(|a| a.exp()).sum();
        for (k, a) in alpha.iter().enumerate() {
            assert!((probs[k] - a.exp() / z).abs() < 1e-15);
        }
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_are_uniform() {
        let p = tiny(2);
        let reps = Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let mut st = state(array![0.3, 0.1, -0.2, 0.5], 4);
        st.select(2);
        let (probs, _) = decoder_step(&p, &st, Array1::zeros(4).view(), reps.view(), true).unwrap();
        for (k, pr) in probs.iter().enumerate() {
            let want = if k == 2 { 0.0 } else { 0.25 };
            assert!((pr - want).abs() < 1e-15);
        }
    }

    #[test]
    fn fully_masked_without_eos_is_an_error() {
        let p = tiny(1);
        let mut st = state(array![0.0, 0.0], 1);
        st.select(0);
        let reps = array![[1.0, 0.0]];
        assert!(decoder_step(&p, &st, array![0.0, 0.0].view(), reps.view(), false).is_err());
        let (probs, _) = decoder_step(&p, &st, array![0.0, 0.0].view(), reps.view(), true).unwrap();
        assert_eq!(probs, vec![0.0, 1.0]);
    }
}
