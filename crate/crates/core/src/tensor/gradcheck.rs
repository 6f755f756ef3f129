use super::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(param, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares recorded gradients of a scalar closure with central differences
/// of step `h`. Relative error is `|a - c| / max(1e-8, |c|)`.
pub fn grad_check<F>(params: &[Matrix], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values.iter().map(|v| tape.param(v.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars = params.iter().map(|v| tape.param(v.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out);

    let mut work = params.to_vec();
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, coordinates: 0 };
    for (p, var) in vars.iter().enumerate() {
        for idx in 0..params[p].len() {
            let base = params[p].data()[idx];
            work[p].data_mut()[idx] = base + h;
            let up = eval(&work)?;
            work[p].data_mut()[idx] = base - h;
            let down = eval(&work)?;
            work[p].data_mut()[idx] = base;
            let central = (up - down) / (2.0 * h);
            let analytic = grads.get(*var).map_or(0.0, |g| g.data()[idx]);
            let rel = (analytic - central).abs() / central.abs().max(1e-8);
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p, idx));
            }
        }
    }
    Ok(report)
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let m = tape.value(v);
    if m.shape() != (1, 1) {
        return Err(Error::Shape { op: "grad_check", detail: format!("closure returned {:?}", m.shape()) });
    }
    let x = m.get(0, 0);
    if !x.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Matrix::from_rows(&[vec![0.3, -1.2, 2.5]]);
        let r = grad_check(&[x], 1e-5, |t, v| quad(t, v[0]))
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    fn quad(t: &mut Tape, x: Var) -> Result<Var> {
        // 0.5 * sum_c x_c^2, each square as a recorded scalar product.
        let dot = {
            let n = t.value(x).cols();
            let mut acc = None;
            for c in 0..n {
                let mut mask = vec![0.0; n];
                mask[c] = 1.0;
                let picked = t.mul_const(x, std::sync::Arc::new(mask))?;
                let s = t.sum(picked)?;
                let sq = t.scale_by(s, s)?;
                acc = Some(match acc {
                    None => sq,
                    Some(a) => t.add(a, sq)?,
                });
            }
            acc.unwrap()
        };
        t.scale(dot, 0.5)
    }
}
