//! Central finite-difference check of the analytic gradients.

use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{compute_gradients, mean_loss, Sample};
use crate::error::{Error, Result};
use crate::model::encoder::EncoderMode;
use crate::model::params::{ModelParams, Tensors};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub tensor: &'static str,
    /// Row-major offset into the tensor.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub coord: Coordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// The perturbation moved a max-pool winner, so the loss is not smooth
    /// across `θ ± ε` and the comparison is meaningless.
    pub crosses_kink: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

fn value_mut<'a>(tensors: &'a mut Tensors, coord: &Coordinate) -> Result<&'a mut f64> {
    let slot = tensors
        .named_mut()
        .into_iter()
        .find(|(name, _)| *name == coord.tensor)
        .map(|(_, view)| view)
        .ok_or_else(|| Error::Model(format!("unknown tensor `{}`", coord.tensor)))?;
    let slice = slot.into_slice().expect("tensors are contiguous");
    slice
        .get_mut(coord.index)
        .ok_or_else(|| Error::Model(format!("index {} out of range in `{}`", coord.index, coord.tensor)))
}

fn value(tensors: &Tensors, coord: &Coordinate) -> f64 {
    let (_, view) = tensors
        .named()
        .into_iter()
        .find(|(name, _)| *name == coord.tensor)
        .expect("coordinate validated");
    view.as_slice().expect("tensors are contiguous")[coord.index]
}

/// Draws `count` coordinates, cycling through `tensors` in a shuffled
/// order. Embedding coordinates are taken from `embedding_rows` only, since
/// every other row has a zero gradient by construction.
pub fn sample_coordinates(
    params: &ModelParams,
    tensors: &[&'static str],
    embedding_rows: &[usize],
    count: usize,
    rng: &mut impl Rng,
) -> Vec<Coordinate> {
    let shapes: Vec<(&'static str, Vec<usize>)> = params
        .tensors
        .named()
        .into_iter()
        .map(|(n, v)| (n, v.shape().to_vec()))
        .collect();
    let mut order = tensors.to_vec();
    order.shuffle(rng);
    (0..count)
        .map(|k| {
            let tensor = order[k % order.len()];
            let shape = &shapes.iter().find(|(n, _)| *n == tensor).expect("known tensor").1;
            let len: usize = shape.iter().product();
            let index = if tensor == "embedding" && !embedding_rows.is_empty() {
                let row = *embedding_rows.choose(rng).expect("non-empty");
                row * shape[1] + rng.gen_range(0..shape[1])
            } else {
                rng.gen_range(0..len)
            };
            Coordinate { tensor, index }
        })
        .collect()
}

/// Compares analytic gradients of the mean batch loss against
/// `(L(θ+ε) − L(θ−ε)) / 2ε` at each coordinate.
pub fn gradcheck(
    params: &ModelParams,
    batch: &[Sample],
    mode: EncoderMode,
    coords: &[Coordinate],
    eps: f64,
) -> Result<Vec<CoordCheck>> {
    let (_, grads) = compute_gradients(params, batch, mode)?;
    let (_, base_kinks) = mean_loss(params, batch, mode)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(coords.len());
    for coord in coords {
        let original = *value_mut(&mut probe.tensors, coord)?;
        *value_mut(&mut probe.tensors, coord)? = original + eps;
        let (plus, plus_kinks) = mean_loss(&probe, batch, mode)?;
        *value_mut(&mut probe.tensors, coord)? = original - eps;
        let (minus, minus_kinks) = mean_loss(&probe, batch, mode)?;
        *value_mut(&mut probe.tensors, coord)? = original;

        let analytic = value(&grads, coord);
        let numeric = (plus - minus) / (2.0 * eps);
        out.push(CoordCheck {
            coord: *coord,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
            crosses_kink: plus_kinks != base_kinks || minus_kinks != base_kinks,
        });
    }
    Ok(out)
}
