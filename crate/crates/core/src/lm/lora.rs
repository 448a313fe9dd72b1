use crate::error::{dim_err, Result};
use crate::layers::accumulate_weight_grad;
use crate::numerics::{matmul, matmul_nt, Rng, Tensor};
use crate::params::{join, Parameters};

/// Frozen base weight plus a scaled low-rank update:
/// `h = W0 x + (alpha / rank) * B (A x)`.
///
/// `W0: [out x in]`, `A: [rank x in]`, `B: [out x rank]`. The product `B A`
/// is never formed on the forward or backward path.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraLinear {
    pub w0: Tensor,
    pub a: Tensor,
    pub b: Tensor,
    pub alpha: f64,
}

impl LoraLinear {
    pub fn new(w0: Tensor, a: Tensor, b: Tensor, alpha: f64) -> Result<Self> {
        if w0.rank() != 2 || a.rank() != 2 || b.rank() != 2 {
            return dim_err("LoRA tensors must be matrices");
        }
        let (out, input) = (w0.shape()[0], w0.shape()[1]);
        let rank = a.shape()[0];
        if a.shape()[1] != input || b.shape() != [out, rank] {
            return dim_err(format!(
                "LoRA shapes W0 {:?}, A {:?}, B {:?} do not line up",
                w0.shape(),
                a.shape(),
                b.shape()
            ));
        }
        if rank > out.min(input) {
            return dim_err(format!("LoRA rank {rank} exceeds min({out}, {input})"));
        }
        Ok(Self { w0, a, b, alpha })
    }

    /// Base weight from `N(0, base_std)`, `A` from `N(0, 1/sqrt(in))`, `B = 0`.
    pub fn init(input: usize, output: usize, rank: usize, alpha: f64, base_std: f64, rng: &mut Rng) -> Self {
        let w0 = Tensor::randn(&[output, input], base_std, rng);
        let a = Tensor::randn(&[rank, input], 1.0 / (input as f64).sqrt(), rng);
        let b = Tensor::zeros(&[output, rank]);
        Self::new(w0, a, b, alpha).expect("consistent LoRA init")
    }

    pub fn rank(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w0.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w0.shape()[0]
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Also returns `u = x A^T`, needed by [`LoraLinear::backward`].
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.cols() != self.in_dim() {
            return dim_err(format!(
                "LoRA layer expects width {}, got input {:?}",
                self.in_dim(),
                x.shape()
            ));
        }
        let mut y = matmul_nt(x, &self.w0)?;
        let u = matmul_nt(x, &self.a)?;
        if self.alpha != 0.0 {
            let delta = matmul_nt(&u, &self.b)?;
            y.axpy(self.scale(), &delta)?;
        }
        Ok((y, u))
    }

    /// Accumulates `A`/`B` gradients (and `W0` when `base_grad`) into `grad`;
    /// returns `dx`.
    pub fn backward(
        &self,
        x: &Tensor,
        u: &Tensor,
        dy: &Tensor,
        grad: &mut LoraLinear,
        base_grad: bool,
    ) -> Result<Tensor> {
        let s = self.scale();
        let mut dx = matmul(dy, &self.w0)?;
        if base_grad {
            accumulate_weight_grad(x, dy, &mut grad.w0);
        }
        let sdy = dy.scale(s);
        accumulate_weight_grad(u, &sdy, &mut grad.b);
        let du = matmul(&sdy, &self.b)?;
        accumulate_weight_grad(x, &du, &mut grad.a);
        dx.add_assign(&matmul(&du, &self.a)?)?;
        Ok(dx)
    }
}

impl Parameters for LoraLinear {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "w0"), &self.w0));
        out.push((join(prefix, "a"), &self.a));
        out.push((join(prefix, "b"), &self.b));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "w0"), &mut self.w0));
        out.push((join(prefix, "a"), &mut self.a));
        out.push((join(prefix, "b"), &mut self.b));
    }
}

/// Names of the low-rank factors among `names`: `P.a` / `P.b` where `P.w0`
/// is also present.
pub fn is_lora_factor(name: &str, all: &[String]) -> bool {
    let Some(parent) = name.strip_suffix(".a").or_else(|| name.strip_suffix(".b")) else {
        return false;
    };
    let w0 = format!("{parent}.w0");
    all.contains(&w0)
}
