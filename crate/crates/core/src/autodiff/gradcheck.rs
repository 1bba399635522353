use super::{bind, Parameter, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter id and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences, coordinate by coordinate.
pub fn grad_check<F>(f: F, params: &[Parameter], epsilon: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let eval = |ps: &[Parameter]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, ps);
        let out = f(&mut tape, &vars)?;
        tape.value(out)
            .item()
            .ok_or_else(|| Error::shape("grad_check", "function must return a scalar"))
    };

    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut work = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for pi in 0..work.len() {
        let analytic = grads
            .get(&work[pi].id)
            .expect("every bound parameter has a gradient")
            .clone();
        for j in 0..work[pi].tensor.len() {
            let orig = work[pi].tensor.data()[j];
            work[pi].tensor.data_mut()[j] = orig + epsilon;
            let up = eval(&work)?;
            work[pi].tensor.data_mut()[j] = orig - epsilon;
            let down = eval(&work)?;
            work[pi].tensor.data_mut()[j] = orig;

            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.data()[j];
            let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
            let err = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((work[pi].id.clone(), j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{L2Group, Tensor};

    fn scalar_param(v: f64) -> Vec<Parameter> {
        vec![Parameter::new("x", Tensor::scalar(v), L2Group::None)]
    }

    #[test]
    fn square_is_exact() {
        let r = grad_check(
            |t, v| {
                let s = t.square(v[0]);
                t.sum(s, None)
            },
            &scalar_param(2.0),
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn relu_away_from_kink() {
        let params = vec![Parameter::new(
            "x",
            Tensor::vector(vec![-1.3, -0.4, 0.7, 2.1, -2.5, 0.05]).unwrap(),
            L2Group::None,
        )];
        let r = grad_check(
            |t, v| {
                let r = t.relu(v[0]);
                let s = t.square(r);
                t.sum(s, None)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn wrong_adjoint_is_caught() {
        // d/dx sin(x) reported as sin(x) instead of cos(x)
        let r = grad_check(
            |t, v| {
                let s = t.map(v[0], f64::sin, f64::sin);
                t.sum(s, None)
            },
            &scalar_param(0.3),
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");

        let ok = grad_check(
            |t, v| {
                let s = t.map(v[0], f64::sin, f64::cos);
                t.sum(s, None)
            },
            &scalar_param(0.3),
            1e-5,
        )
        .unwrap();
        assert!(ok.max_rel_error < 1e-9);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(grad_check(|t, v| t.sum(v[0], None), &scalar_param(1.0), 0.0).is_err());
    }
}
