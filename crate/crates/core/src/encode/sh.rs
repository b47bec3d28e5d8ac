//! Real spherical harmonics basis for unit directions, degrees 1..=4
//! (outputs degree^2 coefficients).

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

pub const MAX_SH_DEGREE: usize = 4;

/// Evaluate the real SH basis at unit direction `d`, bands l = 0..degree,
/// ordered by ascending l then ascending m.
pub fn sh_encode<S: Real>(d: Vec3<S>, degree: usize) -> Result<Vec<S>> {
    if degree == 0 || degree > MAX_SH_DEGREE {
        return Err(Error::invalid(format!(
            "sh degree must be in 1..={MAX_SH_DEGREE}, got {degree}"
        )));
    }
    if (d.norm() - S::one()).abs().to_f64_() > 1e-6 {
        return Err(Error::invalid("sh_encode direction must be unit length"));
    }
    let (x, y, z) = (d.x.to_f64_(), d.y.to_f64_(), d.z.to_f64_());
    let mut out = Vec::with_capacity(degree * degree);
    let mut push = |v: f64| out.push(S::from_f64_(v));
    // l = 0
    push(0.28209479177387814);
    if degree > 1 {
        // l = 1, m = -1, 0, 1
        push(-0.4886025119029199 * y);
        push(0.4886025119029199 * z);
        push(-0.4886025119029199 * x);
    }
    if degree > 2 {
        // l = 2, m = -2..2
        push(1.0925484305920792 * x * y);
        push(-1.0925484305920792 * y * z);
        push(0.31539156525252005 * (3.0 * z * z - 1.0));
        push(-1.0925484305920792 * x * z);
        push(0.5462742152960396 * (x * x - y * y));
    }
    if degree > 3 {
        // l = 3, m = -3..3
        push(-0.5900435899266435 * y * (3.0 * x * x - y * y));
        push(2.890611442640554 * x * y * z);
        push(-0.4570457994644658 * y * (5.0 * z * z - 1.0));
        push(0.3731763325901154 * z * (5.0 * z * z - 3.0));
        push(-0.4570457994644658 * x * (5.0 * z * z - 1.0));
        push(1.445305721320277 * z * (x * x - y * y));
        push(-0.5900435899266435 * x * (x * x - 3.0 * y * y));
    }
    Ok(out)
}
