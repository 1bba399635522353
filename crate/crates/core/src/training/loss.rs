use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::eval::PROB_EPS;

fn same_length(op: &'static str, tape: &Tape, a: Var, b: Var) -> Result<usize> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa.len() != 1 || sa != sb {
        return Err(Error::shape(op, format!("expected two equal vectors, got {sa:?} and {sb:?}")));
    }
    Ok(sa[0])
}

/// Mean binary cross-entropy of probabilities `p` against `labels`, with `p`
/// clamped into `[PROB_EPS, 1 − PROB_EPS]`.
pub fn bce_loss(tape: &mut Tape, labels: &[f64], p: Var) -> Result<Var> {
    let shape = tape.shape(p);
    if shape != [labels.len()] {
        return Err(Error::shape(
            "bce_loss",
            format!("{} labels for predictions of shape {shape:?}", labels.len()),
        ));
    }
    let y = tape.constant(Tensor::new(vec![labels.len()], labels.to_vec())?);
    let not_y = tape.constant(Tensor::new(vec![labels.len()], labels.iter().map(|l| 1.0 - l).collect())?);
    let pc = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let log_p = tape.log(pc)?;
    let neg = tape.scale(pc, -1.0);
    let q = tape.offset(neg, 1.0);
    let log_q = tape.log(q)?;
    let pos_part = tape.mul(y, log_p)?;
    let neg_part = tape.mul(not_y, log_q)?;
    let ll = tape.add(pos_part, neg_part)?;
    let mean = tape.mean(ll, None)?;
    Ok(tape.scale(mean, -1.0))
}

/// Mean squared difference of two prediction vectors.
pub fn mse_loss(tape: &mut Tape, p1: Var, p2: Var) -> Result<Var> {
    same_length("mse_loss", tape, p1, p2)?;
    let d = tape.sub(p1, p2)?;
    let sq = tape.square(d);
    tape.mean(sq, None)
}

/// Average squared disagreement of model `n` with its peers,
/// `1/(N−1) Σ_{i≠n} mse(p_i, p_n)`. Peers are detached when `detach` is set.
pub fn mutual_term(tape: &mut Tape, n: usize, predictions: &[Var], detach: bool) -> Result<Var> {
    let count = predictions.len();
    if count < 2 {
        return Err(Error::Config(format!("mutual term needs at least two models, got {count}")));
    }
    if n >= count {
        return Err(Error::Index {
            what: "model".into(),
            index: n,
            size: count,
        });
    }
    let own = predictions[n];
    let mut terms = Vec::with_capacity(count - 1);
    for (i, &peer) in predictions.iter().enumerate() {
        if i == n {
            continue;
        }
        let peer = if detach { tape.detach(peer) } else { peer };
        terms.push(mse_loss(tape, peer, own)?);
    }
    let all = tape.concat(&terms, 0)?;
    tape.mean(all, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(tape: &mut Tape, v: &[f64]) -> Var {
        tape.constant(Tensor::new(vec![v.len()], v.to_vec()).unwrap())
    }

    fn item(tape: &Tape, v: Var) -> f64 {
        tape.value(v).data()[0]
    }

    #[test]
    fn bce_values() {
        let mut t = Tape::new();
        let p = vector(&mut t, &[0.5]);
        let l = bce_loss(&mut t, &[1.0], p).unwrap();
        assert!((item(&t, l) - std::f64::consts::LN_2).abs() < 1e-15);

        let p = vector(&mut t, &[1.0 - 1e-12]);
        let l = bce_loss(&mut t, &[0.0], p).unwrap();
        assert!((item(&t, l) - 16.11809565095832).abs() < 1e-6);

        // constant predictor at the empirical rate 1/4: −(ln ¼ + 3 ln ¾)/4
        let p = vector(&mut t, &[0.25; 4]);
        let l = bce_loss(&mut t, &[1.0, 0.0, 0.0, 0.0], p).unwrap();
        assert!((item(&t, l) - 0.5623351446188083).abs() < 1e-12);

        assert!(bce_loss(&mut t, &[1.0, 0.0], p).is_err());
    }

    #[test]
    fn mse_values() {
        let mut t = Tape::new();
        let a = vector(&mut t, &[0.2]);
        let b = vector(&mut t, &[0.8]);
        let l = mse_loss(&mut t, a, b).unwrap();
        assert!((item(&t, l) - 0.36).abs() < 1e-15);
        let l = mse_loss(&mut t, a, a).unwrap();
        assert_eq!(item(&t, l), 0.0);
        let c = vector(&mut t, &[0.1, 0.2]);
        assert!(mse_loss(&mut t, a, c).is_err());
    }

    #[test]
    fn mutual_term_cases() {
        let mut t = Tape::new();
        let p: Vec<Var> = [0.2, 0.4, 0.8].iter().map(|&v| vector(&mut t, &[v])).collect();
        let m = mutual_term(&mut t, 0, &p, true).unwrap();
        assert!((item(&t, m) - 0.2).abs() < 1e-15);
        let bce = bce_loss(&mut t, &[1.0], p[0]).unwrap();
        let total = t.add(bce, m).unwrap();
        assert!((item(&t, total) - 1.80944).abs() < 1e-5);

        let two = mutual_term(&mut t, 1, &p[..2], true).unwrap();
        let plain = mse_loss(&mut t, p[0], p[1]).unwrap();
        assert_eq!(item(&t, two), item(&t, plain));

        assert!(mutual_term(&mut t, 0, &p[..1], true).is_err());
        assert!(mutual_term(&mut t, 3, &p, true).is_err());
    }
}
