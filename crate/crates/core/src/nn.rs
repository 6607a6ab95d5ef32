//! Small shared building blocks for the differentiable parts of the model:
//! activations and an affine layer with accumulate-style backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Mat};

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        libm::expm1(x)
    }
}

/// ELU derivative recovered from the pre-activation sign and the output
/// (exp(x) = out + 1 on the negative branch), avoiding a second exp.
pub fn elu_grad_from_out(pre: f64, out: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        out + 1.0
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Affine map y = x·W + b with row-vector samples; W is (in x out).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Mat::zeros(d_in, d_out),
            b: vec![0.0; d_out],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear::zeros(self.d_in(), self.d_out())
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = Mat::zeros(x.rows(), self.d_out());
        matmul_acc(x, &self.w, &mut y);
        y.add_row_bias(&self.b);
        y
    }

    /// Accumulates parameter gradients and, when given, the input gradient.
    pub fn backward(&self, x: &Mat, dout: &Mat, grads: &mut Linear, dx: Option<&mut Mat>) {
        matmul_tn_acc(x, dout, &mut grads.w);
        for i in 0..dout.rows() {
            for (g, d) in grads.b.iter_mut().zip(dout.row(i)) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            matmul_nt_acc(dout, &self.w, dx);
        }
    }

    /// Mutable views over all parameter storage, for optimizers.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut(), self.b.as_mut_slice()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_matches_definition() {
        assert_eq!(elu(2.0), 2.0);
        assert!((elu(-1.0) - (libm::exp(-1.0) - 1.0)).abs() < 1e-15);
        assert_eq!(elu(0.0), libm::expm1(0.0));
        let pre = -0.7;
        let out = elu(pre);
        assert!((elu_grad_from_out(pre, out) - libm::exp(pre)).abs() < 1e-15);
        assert_eq!(elu_grad_from_out(3.0, 3.0), 1.0);
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(700.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(-700.0) < 1e-300 * 1e300 * 1e-3);
        for x in [-3.0, -0.5, 0.2, 4.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_forward_matches_hand_example() {
        let lin = Linear {
            w: Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            b: vec![10.0, 20.0],
        };
        let x = Mat::from_vec(1, 2, vec![1.0, 1.0]);
        let y = lin.forward(&x);
        assert_eq!(y.row(0), &[14.0, 26.0]);
    }

    #[test]
    fn linear_backward_accumulates_all_gradients() {
        let lin = Linear {
            w: Mat::from_vec(2, 1, vec![2.0, -1.0]),
            b: vec![0.5],
        };
        let x = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 3.0]);
        let dout = Mat::from_vec(2, 1, vec![1.0, 2.0]);
        let mut grads = lin.zeros_like();
        let mut dx = Mat::zeros(2, 2);
        lin.backward(&x, &dout, &mut grads, Some(&mut dx));
        // dW = x^T dout = [[1],[6]]; db = 3; dx = dout W^T.
        assert_eq!(grads.w.data(), &[1.0, 6.0]);
        assert_eq!(grads.b, vec![3.0]);
        assert_eq!(dx.data(), &[2.0, -1.0, 4.0, -2.0]);
    }
}
