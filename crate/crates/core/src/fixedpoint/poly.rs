//! Quadratic approximation of the tanh derivative.
//!
//! With `u = gamma x`, the shape `1 - tanh^2(u)` is fitted on `u ∈ [-3, 3]` by
//! least squares in the basis `{u^2, |u|, 1}`. Folding `gamma` into the
//! coefficients gives
//!
//! ```text
//! gamma (1 - tanh^2(gamma x)) ≈ A x^2 + B |x| + C,
//!     A = a gamma^3,  B = b gamma^2,  C = c gamma
//! ```
//!
//! which costs one square, two multiplies and two adds. Outside
//! `|x| < 3 / gamma` the result is clamped to zero, as it is anywhere the
//! polynomial dips below zero.

use super::{Fixed, FixedFormat, FxUnit};

/// `(a, b, c)` for `a u^2 + b |u| + c`.
pub const DTANH_FIT: (f64, f64, f64) = (0.167_187_67, -0.864_561_39, 1.126_964_00);

/// Half-width of the fit interval in `u = gamma x`.
pub const DTANH_FIT_SPAN: f64 = 3.0;

/// Largest absolute error of the clamped fit over the interval, in units of `gamma`.
pub const DTANH_FIT_MAX_ERROR: f64 = 0.1270;

/// Floating-point evaluation of the clamped polynomial.
pub fn poly_dtanh(x: f64, gamma: f64) -> f64 {
    let u = (gamma * x).abs();
    if u >= DTANH_FIT_SPAN {
        return 0.0;
    }
    let (a, b, c) = DTANH_FIT;
    (gamma * (a * u * u + b * u + c)).max(0.0)
}

/// Coefficients quantized for one `gamma` and format.
#[derive(Clone, Copy, Debug)]
pub struct PolyDtanh {
    a: Fixed,
    b: Fixed,
    c: Fixed,
    x_max: Fixed,
}

impl PolyDtanh {
    pub fn new(gamma: f64, unit: &mut FxUnit) -> Self {
        let (a, b, c) = DTANH_FIT;
        Self {
            a: unit.quantize(a * gamma.powi(3)),
            b: unit.quantize(b * gamma * gamma),
            c: unit.quantize(c * gamma),
            x_max: unit.quantize(DTANH_FIT_SPAN / gamma),
        }
    }

    #[inline]
    pub fn eval(&self, x: Fixed, unit: &mut FxUnit) -> Fixed {
        let ax = Fixed(x.0.abs());
        if ax >= self.x_max {
            return Fixed(0);
        }
        let x2 = unit.square(ax);
        let quad = unit.mul(self.a, x2);
        let lin = unit.mul(self.b, ax);
        let sum = unit.add(quad, lin);
        let r = unit.add(sum, self.c);
        Fixed(r.0.max(0))
    }
}

/// Fixed-point evaluation of the clamped quadratic approximation to `gamma (1 - tanh^2(gamma x))`.
pub fn fx_poly_dtanh(x: Fixed, gamma: f64, fmt: &FixedFormat) -> Fixed {
    let mut unit = FxUnit::new(*fmt);
    PolyDtanh::new(gamma, &mut unit).eval(x, &mut unit)
}
