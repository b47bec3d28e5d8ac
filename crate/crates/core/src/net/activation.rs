//! Scalar activations and robust losses used by the small MLPs.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// Smooth ReLU: ln(1 + exp(beta x)) / beta.
    Softplus { beta: f64 },
    Sigmoid,
}

impl Activation {
    /// Value and derivative at `x`.
    #[inline]
    pub fn eval<S: Real>(&self, x: S) -> (S, S) {
        match *self {
            Activation::Identity => (x, S::one()),
            Activation::Relu => {
                if x > S::zero() {
                    (x, S::one())
                } else {
                    (S::zero(), S::zero())
                }
            }
            Activation::Softplus { beta } => {
                let b = S::from_f64_(beta);
                let bx = b * x;
                // overflow-safe: for large bx, softplus -> x, deriv -> 1
                let v = if bx > S::from_f64_(30.0) {
                    x
                } else {
                    (S::one() + bx.exp()).ln() / b
                };
                (v, sigmoid(bx))
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                (s, s * (S::one() - s))
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Softplus with sharpness `beta`; equals ln(2)/beta at 0.
#[inline]
pub fn softplus<S: Real>(x: S, beta: f64) -> S {
    Activation::Softplus { beta }.eval(x).0
}

/// Huber loss value and derivative w.r.t. the residual `r`.
#[inline]
pub fn huber<S: Real>(r: S, delta: S) -> (S, S) {
    let a = r.abs();
    if a <= delta {
        (S::half() * r * r, r)
    } else {
        (delta * (a - S::half() * delta), delta * r.signum())
    }
}

/// Mean Huber loss over matching batches.
pub fn huber_loss<S: Real>(pred: &[S], target: &[S], delta: S) -> crate::error::Result<S> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(crate::error::Error::shape(
            "huber_loss needs matching nonempty batches",
        ));
    }
    let mut acc = S::zero();
    for (p, t) in pred.iter().zip(target) {
        acc += huber(*p - *t, delta).0;
    }
    Ok(acc / S::from_usize_(pred.len()))
}
