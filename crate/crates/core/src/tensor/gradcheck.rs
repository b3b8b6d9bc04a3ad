use super::{Tape, Tensor, TensorError, Var};

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape and the input recorded on it, and returns the
/// scalar output. Returns the maximum [`relative_error`] over all coordinates
/// of `x`. `f` must be smooth at `x`; see [`nudge_from_kinks`] for inputs fed
/// through `relu`, `abs` or `clamp`.
pub fn grad_check<F, E>(mut f: F, x: &Tensor, eps: f64) -> Result<f64, E>
where
    F: FnMut(&mut Tape, Var) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = match tape.grad(xv) {
        Some(g) => g.to_vec(),
        None => vec![0.0; x.len()],
    };

    let mut eval = |probe: Tensor| -> Result<f64, E> {
        let mut tape = Tape::new();
        let xv = tape.param(probe);
        let out = f(&mut tape, xv)?;
        Ok(tape.value(out).item())
    };

    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// Moves every coordinate lying within `margin` of one of `kinks` to
/// `kink ± margin`, keeping its side.
pub fn nudge_from_kinks(x: &mut Tensor, kinks: &[f64], margin: f64) {
    for v in x.data_mut() {
        for &k in kinks {
            if (*v - k).abs() < margin {
                *v = if *v >= k { k + margin } else { k - margin };
            }
        }
    }
}
