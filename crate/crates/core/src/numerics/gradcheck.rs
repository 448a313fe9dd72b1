use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

/// Largest relative error between `analytic` and a central difference of
/// `f` at `params`, over every coordinate.
///
/// Per coordinate the error is
/// `|analytic - central| / max(1e-12, |analytic| + |central|)`.
pub fn grad_check<F>(f: F, params: &Tensor, analytic: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let coords: Vec<usize> = (0..params.len()).collect();
    grad_check_coords(f, params, analytic, h, &coords)
}

/// [`grad_check`] restricted to the listed flat coordinates.
pub fn grad_check_coords<F>(
    mut f: F,
    params: &Tensor,
    analytic: &Tensor,
    h: f64,
    coords: &[usize],
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step h must be > 0, got {h}")));
    }
    if params.shape() != analytic.shape() {
        return dim_err(format!(
            "grad_check: params {:?} vs gradient {:?}",
            params.shape(),
            analytic.shape()
        ));
    }
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for &i in coords {
        if i >= params.len() {
            return dim_err(format!("coordinate {i} out of range {}", params.len()));
        }
        let x0 = params.data()[i];
        probe.data_mut()[i] = x0 + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = x0 - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = x0;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite at coordinate {i}: f(+h)={fp}, f(-h)={fm}"
            )));
        }
        let central = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - central).abs() / (a.abs() + central.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::scalar(3.0);
        let e = grad_check(|p| Ok(p.data()[0].powi(2)), &x, &Tensor::scalar(6.0), 1e-5).unwrap();
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn linear_sum() {
        let x = Tensor::vector(&[0.5, -1.0, 2.0, 7.0]);
        let g = Tensor::full(&[4], 1.0);
        let e = grad_check(|p| Ok(p.sum()), &x, &g, 1e-5).unwrap();
        assert!(e < 1e-9, "{e}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let x = Tensor::scalar(3.0);
        let e = grad_check(|p| Ok(p.data()[0].powi(2)), &x, &Tensor::scalar(5.0), 1e-5).unwrap();
        assert!(e > 0.05);
    }

    #[test]
    fn non_finite_objective_errors() {
        let x = Tensor::scalar(0.0);
        let r = grad_check(|p| Ok(1.0 / (p.data()[0] - 1e-5)), &x, &Tensor::scalar(1.0), 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
