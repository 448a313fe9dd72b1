use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

/// Mean over masked rows of `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: &Tensor, targets: &[u32], mask: &[bool]) -> Result<f64> {
    Ok(cross_entropy_with_grad(logits, targets, mask)?.0)
}

/// Loss and its gradient w.r.t. `logits` (zero on unmasked rows).
pub fn cross_entropy_with_grad(logits: &Tensor, targets: &[u32], mask: &[bool]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.rows() != targets.len() || targets.len() != mask.len() {
        return dim_err(format!(
            "cross_entropy: logits {:?}, {} targets, {} mask entries",
            logits.shape(),
            targets.len(),
            mask.len()
        ));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Argument("cross_entropy: mask selects no position".into()));
    }
    let v = logits.cols();
    let mut grad = logits.zeros_like();
    let mut total = 0.0;
    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        let t = t as usize;
        if t >= v {
            return Err(Error::Argument(format!("target {t} outside vocabulary of {v}")));
        }
        let row = logits.row(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - mx).exp()).sum();
        total += z.ln() + mx - row[t];
        let g = grad.row_mut(r);
        for (gi, x) in g.iter_mut().zip(row) {
            *gi = (x - mx).exp() / z / n as f64;
        }
        g[t] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}
