use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_relative_error: f64,
    /// `(input, coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
}

/// Checks the gradient of a scalar function of `inputs` at every coordinate.
///
/// `f` builds the function on a fresh graph each time it is called; the
/// inputs are passed to it as trainable leaves in order.
pub fn grad_check<F>(f: F, inputs: &[Tensor], epsilon: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "grad_check epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |xs: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };

    let (graph, vars, out) = eval(inputs)?;
    if !graph.value(out).is_finite() {
        return Err(Error::NonFiniteValue {
            input: 0,
            coordinate: 0,
        });
    }
    let grads = graph.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(&graph, v)).collect();

    let mut probe = inputs.to_vec();
    let mut best = GradCheck {
        max_relative_error: 0.0,
        worst: (0, 0),
    };
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            let mut at = |x: f64| -> Result<f64> {
                probe[i].data_mut()[j] = x;
                let (g, _, o) = eval(&probe)?;
                let v = g.value(o).item();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteValue {
                        input: i,
                        coordinate: j,
                    })
                }
            };
            let plus = at(orig + epsilon)?;
            let minus = at(orig - epsilon)?;
            probe[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[i].data()[j];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if err > best.max_relative_error {
                best = GradCheck {
                    max_relative_error: err,
                    worst: (i, j),
                };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_one() {
        let r = grad_check(
            |g, x| {
                let sq = g.mul(x[0], x[0])?;
                Ok(g.sum(sq))
            },
            &[Tensor::scalar(1.0)],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn epsilon_out_of_range() {
        let r = grad_check(|g, x| Ok(g.sum(x[0])), &[Tensor::scalar(1.0)], 0.1);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_reports_coordinate() {
        // ln(x) with x = [1, 5e-6]: the minus probe of coordinate 1 hits ln(-5e-6).
        let x = Tensor::row(vec![1.0, 5e-6]).unwrap();
        let r = grad_check(
            |g, v| {
                let l = g.ln(v[0]);
                Ok(g.sum(l))
            },
            &[x],
            1e-5,
        );
        match r {
            Err(Error::NonFiniteValue { input, coordinate }) => {
                assert_eq!((input, coordinate), (0, 1))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detects_wrong_gradient() {
        // reverse_gradient changes only the backward pass, so the check must fail.
        let r = grad_check(
            |g, x| {
                let y = g.reverse_gradient(x[0], 1.0);
                Ok(g.sum(y))
            },
            &[Tensor::row(vec![0.1, 0.2]).unwrap()],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error > 1.0);
    }
}
