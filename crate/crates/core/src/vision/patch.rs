use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

/// Cut a `[C x H x W]` frame into non-overlapping `patch_px` squares.
///
/// Returns `[(H/p * W/p) x (C*p*p)]`: patches in row-major grid order, and
/// within a patch channel-major then row-major pixel order.
pub fn patchify(frame: &Tensor, patch_px: usize) -> Result<Tensor> {
    if frame.rank() != 3 {
        return dim_err(format!("frame must be [C x H x W], got {:?}", frame.shape()));
    }
    let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
    if patch_px == 0 || h % patch_px != 0 || w % patch_px != 0 {
        return dim_err(format!(
            "frame {h}x{w} px is not divisible into {patch_px}-px patches"
        ));
    }
    let p = patch_px;
    let (gh, gw) = (h / p, w / p);
    let width = c * p * p;
    let mut out = Vec::with_capacity(gh * gw * width);
    for pr in 0..gh {
        for pc in 0..gw {
            for ch in 0..c {
                for dy in 0..p {
                    let row = (ch * h + pr * p + dy) * w + pc * p;
                    out.extend_from_slice(&frame.data()[row..row + p]);
                }
            }
        }
    }
    Tensor::new(vec![gh * gw, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_arithmetic() {
        let f = Tensor::zeros(&[3, 4, 4]);
        assert_eq!(patchify(&f, 2).unwrap().shape(), &[4, 12]);
    }

    #[test]
    fn constant_frame_gives_identical_patches() {
        let p = patchify(&Tensor::full(&[3, 8, 8], 0.3), 4).unwrap();
        for r in 1..p.rows() {
            assert_eq!(p.row(r), p.row(0));
        }
    }

    #[test]
    fn single_pixel_lands_in_one_patch() {
        let mut f = Tensor::zeros(&[3, 4, 4]);
        // channel 1, pixel (3, 2): patch (1, 1), offset 1*4 + 1*2 + 0
        f.data_mut()[16 + 3 * 4 + 2] = 1.0;
        let p = patchify(&f, 2).unwrap();
        let nonzero: Vec<usize> = (0..4).filter(|&r| p.row(r).iter().any(|&v| v != 0.0)).collect();
        assert_eq!(nonzero, vec![3]);
        assert_eq!(p.row(3)[4 + 2], 1.0);
    }

    #[test]
    fn non_divisible_is_an_error() {
        assert!(patchify(&Tensor::zeros(&[3, 5, 4]), 2).is_err());
    }
}
