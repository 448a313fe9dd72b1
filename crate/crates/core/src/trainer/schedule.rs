use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of linear-warmup steps, `round(warmup_ratio * total_steps)`.
pub fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    (warmup_ratio * total_steps as f64).round() as usize
}

/// Linear warmup to `peak`, then cosine decay to zero at `total_steps`.
pub fn cosine_with_warmup(step: usize, peak: f64, total_steps: usize, warmup_ratio: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Argument(format!("step {step} beyond total {total_steps}")));
    }
    let warm = warmup_steps(total_steps, warmup_ratio);
    if step < warm {
        return Ok(peak * (step + 1) as f64 / warm as f64);
    }
    if total_steps == warm {
        return Ok(0.0);
    }
    let progress = (step - warm) as f64 / (total_steps - warm) as f64;
    Ok(peak * 0.5 * (1.0 + (PI * progress).cos()))
}
