use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `−log softmax(logits)[label]` for a single row of logits.
pub fn cross_entropy<S: Scalar>(tape: &mut Tape<S>, logits: Var, label: usize) -> Result<Var> {
    let (rows, classes) = tape.shape(logits);
    if rows != 1 {
        return Err(Error::Dimension(format!(
            "cross_entropy expects one row of logits, got {rows}"
        )));
    }
    if label >= classes {
        return Err(Error::Index(format!("label {label} out of range for {classes} classes")));
    }
    let logp = tape.log_softmax_rows(logits);
    let picked = tape.gather_flat(logp, &[Some(label)])?;
    Ok(tape.scale(picked, -S::one()))
}
