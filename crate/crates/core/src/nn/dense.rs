//! Fully connected layer: `y = x W + b` over `[N, D] x [D, K]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::LayerGrad;

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.dims().len() != 2 || w.dims().len() != 2 {
        return Err(Error::Shape(format!(
            "dense expects [N,D] x [D,K], got {} and {}",
            x.shape(),
            w.shape()
        )));
    }
    let k = w.dims()[1];
    if b.dims() != [k] {
        return Err(Error::Shape(format!(
            "dense bias shape {} does not match output width {k}",
            b.shape()
        )));
    }
    let y = Tensor::matmul(x, w)?;
    y.add(b)
}

/// Gradients of the affine map given `upstream = dL/dy`.
pub fn dense_backward(x: &Tensor, w: &Tensor, upstream: &Tensor) -> Result<LayerGrad> {
    let (n, _d) = (x.dims()[0], x.dims()[1]);
    let k = w.dims()[1];
    if upstream.dims() != [n, k] {
        return Err(Error::Shape(format!(
            "dense upstream shape {} does not match output [{n}, {k}]",
            upstream.shape()
        )));
    }
    let d_input = Tensor::matmul(upstream, &w.transpose2d()?)?;
    let d_w = Tensor::matmul(&x.transpose2d()?, upstream)?;
    let mut d_b = vec![0.0f32; k];
    for row in upstream.data().chunks_exact(k) {
        for (acc, &g) in d_b.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(LayerGrad {
        d_input,
        d_params: vec![
            ("weight".into(), d_w),
            ("bias".into(), Tensor::new(&[k], d_b)?),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = dense_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_computed_affine() {
        let x = Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2], vec![0.5, 0.5]).unwrap();
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[4.5, 6.5]);
    }

    #[test]
    fn backward_shapes_match_params() {
        let x = Tensor::filled(&[3, 4], 0.5);
        let w = Tensor::filled(&[4, 2], 0.25);
        let up = Tensor::filled(&[3, 2], 1.0);
        let g = dense_backward(&x, &w, &up).unwrap();
        assert_eq!(g.d_input.dims(), x.dims());
        assert_eq!(g.d_params[0].1.dims(), w.dims());
        assert_eq!(g.d_params[1].1.dims(), &[2]);
        // db = column sums of upstream = N
        assert_eq!(g.d_params[1].1.data(), &[3.0, 3.0]);
    }
}
