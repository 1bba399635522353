//! Building blocks shared by the architectures. Field embeddings travel as
//! `[B × F × d]` blocks; per-example scalars as `[B × 1]` columns.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

/// All `(i, j)` with `i < j < fields`, in row-major order.
pub fn field_pairs(fields: usize) -> (Vec<usize>, Vec<usize>) {
    (0..fields)
        .flat_map(|i| (i + 1..fields).map(move |j| (i, j)))
        .unzip()
}

/// `F(F − 1) / 2`.
pub fn num_pairs(fields: usize) -> usize {
    fields * fields.saturating_sub(1) / 2
}

/// Second-order FM term `½ Σ_k [(Σ_f e_fk)² − Σ_f e_fk²]` as a `[B × 1]` column.
pub fn fm_pairwise(tape: &mut Tape, e: Var) -> Result<Var> {
    let b = tape.shape(e)[0];
    let sum_f = tape.sum(e, Some(1))?;
    let square_of_sum = tape.square(sum_f);
    let squares = tape.square(e);
    let sum_of_squares = tape.sum(squares, Some(1))?;
    let diff = tape.sub(square_of_sum, sum_of_squares)?;
    let total = tape.sum(diff, Some(1))?;
    let half = tape.scale(total, 0.5);
    tape.reshape(half, &[b, 1])
}

/// FM logit: `bias + first_order + pairwise(e)`, all `[B × 1]` except `bias: [1]`.
pub fn fm_logit(tape: &mut Tape, first_order: Var, e: Var, bias: Var) -> Result<Var> {
    let pair = fm_pairwise(tape, e)?;
    let lin = tape.add(first_order, pair)?;
    tape.add(lin, bias)
}

/// One cross layer: `x0 ⊙ (xl · w) + b + xl`, with `w, b: [D]`.
pub fn cross_layer(tape: &mut Tape, x0: Var, xl: Var, w: Var, b: Var) -> Result<Var> {
    let d = tape.shape(w)[0];
    let w_col = tape.reshape(w, &[d, 1])?;
    let s = tape.matmul(xl, w_col)?;
    let scaled = tape.scale_rows(x0, s)?;
    let biased = tape.add(scaled, b)?;
    tape.add(biased, xl)
}

/// Squeeze-excitation over fields: `z = mean_d(e)`, `a = relu(relu(z W₁) W₂)`,
/// each field embedding scaled by its weight.
pub fn senet(tape: &mut Tape, e: Var, w1: Var, w2: Var) -> Result<Var> {
    let shape = tape.shape(e).to_vec();
    let (b, f, d) = (shape[0], shape[1], shape[2]);
    let z = tape.mean(e, Some(2))?;
    let h = tape.matmul(z, w1)?;
    let h = tape.relu(h);
    let a = tape.matmul(h, w2)?;
    let a = tape.relu(a);
    let rows = tape.reshape(e, &[b * f, d])?;
    let weights = tape.reshape(a, &[b * f])?;
    let scaled = tape.scale_rows(rows, weights)?;
    tape.reshape(scaled, &[b, f, d])
}

/// Field-all bilinear interaction: `p_ij = (e_i W) ⊙ e_j` for `i < j`,
/// returned as `[B × P × d]`.
pub fn bilinear_interaction(tape: &mut Tape, e: Var, w: Var) -> Result<Var> {
    let shape = tape.shape(e).to_vec();
    let (b, f, d) = (shape[0], shape[1], shape[2]);
    let (is, js) = field_pairs(f);
    let rows = tape.reshape(e, &[b * f, d])?;
    let ew = tape.matmul(rows, w)?;
    let ew = tape.reshape(ew, &[b, f, d])?;
    let left = tape.index_select(ew, 1, &is)?;
    let right = tape.index_select(e, 1, &js)?;
    tape.mul(left, right)
}

/// Inner products `e_i · e_j` for `i < j`, as `[B × P]`.
pub fn inner_products(tape: &mut Tape, e: Var) -> Result<Var> {
    let f = tape.shape(e)[1];
    let (is, js) = field_pairs(f);
    let left = tape.index_select(e, 1, &is)?;
    let right = tape.index_select(e, 1, &js)?;
    let prod = tape.mul(left, right)?;
    tape.sum(prod, Some(2))
}

/// Hidden layers with relu. `layers` holds `(weight, bias)` vars.
pub fn mlp(tape: &mut Tape, x: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut h = x;
    for &(w, b) in layers {
        let z = tape.matmul(h, w)?;
        let z = tape.add(z, b)?;
        h = tape.relu(z);
    }
    Ok(h)
}

/// Flattens `[B × …]` to `[B × rest]`.
pub fn flatten(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let rest = shape[1..].iter().product();
    tape.reshape(x, &[shape[0], rest])
}

/// A `[B × 1]` constant column.
pub fn column(tape: &mut Tape, values: Vec<f64>) -> Var {
    let n = values.len();
    tape.constant(Tensor::from_parts(vec![n, 1], values))
}
