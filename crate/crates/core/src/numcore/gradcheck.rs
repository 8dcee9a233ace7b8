//! Central finite-difference verification of tape gradients.

use super::{NumError, Tape, Tensor, Var};

/// Compare tape gradients against central differences for every tensor in
/// `inputs` that requires a gradient. `f` must be a pure function of the
/// bound leaves. Returns the maximum absolute discrepancy over all checked
/// coordinates.
pub fn finite_diff_check_multi(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) -> Result<f64, NumError> {
    let eval = |tensors: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| {
                // value-only pass: gradients not needed
                let mut plain = t.clone();
                plain.requires_grad = false;
                tape.leaf(&plain)
            })
            .collect();
        let loss = f(&mut tape, &vars);
        tape.scalar_value(loss)
    };

    // analytic pass
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&mut tape, &vars);
    if tape.shape(loss).iter().product::<usize>() != 1 {
        return Err(NumError::Contract {
            what: "finite_diff_check requires a scalar-valued function".into(),
        });
    }
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        if !t.requires_grad {
            continue;
        }
        let analytic = grads.get_or_zeros(vars[ti], t.numel());
        #[allow(clippy::needless_range_loop)]
        for ci in 0..t.numel() {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + h;
            let f_plus = eval(&work);
            work[ti].data_mut()[ci] = orig - h;
            let f_minus = eval(&work);
            work[ti].data_mut()[ci] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            worst = worst.max((numeric - analytic[ci]).abs());
        }
    }
    Ok(worst)
}

/// Single-tensor form of [`finite_diff_check_multi`].
pub fn finite_diff_check(
    x: &Tensor,
    h: f64,
    f: impl Fn(&mut Tape, Var) -> Var,
) -> Result<f64, NumError> {
    let mut input = x.clone();
    input.requires_grad = true;
    finite_diff_check_multi(&[input], h, |tape, vars| f(tape, vars[0]))
}
