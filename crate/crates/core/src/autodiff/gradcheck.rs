//! Central finite-difference comparison against reverse-mode gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat element index)` of the worst coordinate.
    pub worst_coordinate: (usize, usize),
    pub analytic: Vec<Tensor<f64>>,
    pub numeric: Vec<Tensor<f64>>,
}

/// Gradients smaller than this are compared absolutely: central differences
/// carry roundoff of order `ε·|f| / h`, about 1e-11 for `h = 1e-5`.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the tape gradient of `f` at `inputs` with central differences of
/// step `h`. `f` builds a scalar on the given tape from the bound inputs.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("function value {v} is not finite")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).data()[0].is_finite() {
        return Err(Error::Evaluation("function value is not finite".into()));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut worst = (0.0f64, (0, 0));
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut num = Tensor::zeros(input.shape());
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let d = (plus - minus) / (2.0 * h);
            num.data_mut()[j] = d;
            let e = rel_error(analytic[i].data()[j], d);
            if e > worst.0 {
                worst = (e, (i, j));
            }
        }
        numeric.push(num);
    }

    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_coordinate: worst.1,
        analytic,
        numeric,
    })
}
