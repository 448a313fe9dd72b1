use crate::error::{dim_err, Result};
use crate::layers::Linear;
use crate::numerics::{gelu, gelu_backward, Rng, Tensor};
use crate::params::{join, Parameters};
use crate::vision::FeatureGrid;

/// Token-wise two-layer MLP `fc2(gelu(fc1(x)))` from `d_vis` to `d_model`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct ProjectorCache {
    x: Tensor,
    u: Tensor,
    a: Tensor,
}

impl Projector {
    pub fn init(d_vis: usize, d_model: usize, rng: &mut Rng) -> Self {
        Self {
            fc1: Linear::init(d_vis, d_model, 1.0 / (d_vis as f64).sqrt(), rng),
            fc2: Linear::init(d_model, d_model, 1.0 / (d_model as f64).sqrt(), rng),
        }
    }

    /// Apply to a `[N x d_vis]` token matrix.
    pub fn forward_tokens(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ProjectorCache)> {
        if x.cols() != self.fc1.in_dim() {
            return dim_err(format!(
                "projector expects width {}, got {}",
                self.fc1.in_dim(),
                x.cols()
            ));
        }
        let u = self.fc1.forward(x)?;
        let a = gelu(&u);
        let y = self.fc2.forward(&a)?;
        Ok((y, ProjectorCache { x: x.clone(), u, a }))
    }

    pub fn backward(&self, cache: &ProjectorCache, dy: &Tensor, grad: &mut Projector) -> Result<Tensor> {
        let da = self.fc2.backward(&cache.a, dy, &mut grad.fc2)?;
        let du = gelu_backward(&cache.u, &da);
        self.fc1.backward(&cache.x, &du, &mut grad.fc1)
    }

    /// Project every token of a grid, keeping `(T, w, h)`.
    pub fn project(&self, grid: &FeatureGrid) -> Result<FeatureGrid> {
        let (t, w, h, _) = grid.dims();
        FeatureGrid::from_tokens(t, w, h, self.forward_tokens(&grid.tokens())?)
    }
}

impl Parameters for Projector {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.fc1.collect_params(&join(prefix, "fc1"), out);
        self.fc2.collect_params(&join(prefix, "fc2"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.fc1.collect_params_mut(&join(prefix, "fc1"), out);
        self.fc2.collect_params_mut(&join(prefix, "fc2"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut p = Projector::init(4, 6, &mut Rng::new(0));
        for (_, t) in p.named_params_mut() {
            t.data_mut().fill(0.0);
        }
        let x = Tensor::randn(&[3, 4], 1.0, &mut Rng::new(1));
        assert!(p.forward_tokens(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tokenwise_and_batch_consistent() {
        let p = Projector::init(4, 6, &mut Rng::new(2));
        let x = Tensor::randn(&[5, 4], 1.0, &mut Rng::new(3));
        let batch = p.forward_tokens(&x).unwrap();
        for r in 0..5 {
            let single = p.forward_tokens(&x.slice_rows(r, r + 1).unwrap()).unwrap();
            let diff = single
                .data()
                .iter()
                .zip(batch.row(r))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
        let mut perm = x.clone();
        let (r0, r4) = (x.row(0).to_vec(), x.row(4).to_vec());
        perm.row_mut(0).copy_from_slice(&r4);
        perm.row_mut(4).copy_from_slice(&r0);
        let out = p.forward_tokens(&perm).unwrap();
        assert_eq!(out.row(0), batch.row(4));
        assert_eq!(out.row(4), batch.row(0));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let p = Projector::init(4, 6, &mut Rng::new(2));
        assert!(p.forward_tokens(&Tensor::zeros(&[2, 5])).is_err());
    }

    #[test]
    fn backward_passes_grad_check() {
        let mut rng = Rng::new(4);
        let p = Projector::init(3, 4, &mut rng);
        let mut p = p;
        for (_, t) in p.named_params_mut() {
            *t = Tensor::randn(t.shape(), 0.7, &mut rng);
        }
        let x = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let w = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let obj = |p: &Projector, x: &Tensor| -> Result<f64> {
            let y = p.forward_tokens(x)?;
            Ok(y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
        };
        let (_, cache) = p.forward_cached(&x).unwrap();
        let mut g = p.zeroed();
        let dx = p.backward(&cache, &w, &mut g).unwrap();
        assert!(grad_check(|t| obj(&p, t), &x, &dx, 1e-5).unwrap() < 1e-4);
        let names: Vec<String> = p.named_params().into_iter().map(|(n, _)| n).collect();
        for (i, name) in names.iter().enumerate() {
            let base = p.named_params()[i].1.clone();
            let grad = g.named_params()[i].1.clone();
            let e = grad_check(
                |t| {
                    let mut q = p.clone();
                    *q.named_params_mut()[i].1 = t.clone();
                    obj(&q, &x)
                },
                &base,
                &grad,
                1e-5,
            )
            .unwrap();
            assert!(e < 1e-4, "{name}: {e}");
        }
    }
}
