//! Fixed-point emulation of the annealer datapath and its cycle-cost model.
//!
//! Values are two's-complement integers scaled by `2^frac_bits`, rounded to
//! nearest with ties to even and saturated at the format limits. Saturation
//! is not an error: every clamp is counted so callers can report it.

mod anneal;
mod cycles;
mod poly;

pub use anneal::{fx_anneal, FxProblem};
pub use cycles::{cycle_estimate, state_machine_trace, CycleCount, CycleEstimate, CycleLedger, LedgerEntry, CLK_NS};
pub use poly::{fx_poly_dtanh, poly_dtanh, PolyDtanh, DTANH_FIT, DTANH_FIT_MAX_ERROR, DTANH_FIT_SPAN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-point word: the raw scaled integer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(pub i64);

/// Word layout. Rounding is round-to-nearest-even and overflow saturates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedFormat {
    /// Q16.16 in a 32-bit word.
    fn default() -> Self {
        Self { total_bits: 32, frac_bits: 16 }
    }
}

impl FixedFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let fmt = Self { total_bits, frac_bits };
        fmt.validate()?;
        Ok(fmt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frac_bits == 0 || self.frac_bits >= self.total_bits || self.total_bits > 64 {
            return Err(Error::InvalidConfig(format!(
                "fixed format needs 0 < frac_bits < total_bits <= 64, got Q{}.{}",
                self.total_bits.saturating_sub(self.frac_bits),
                self.frac_bits
            )));
        }
        Ok(())
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.total_bits - 1)) - 1) as i64
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.total_bits - 1))) as i64
    }

    fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    /// Largest representable value.
    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 / self.scale()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 / self.scale()
    }

    /// Value of one unit in the last place.
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }

    pub fn contains(&self, x: f64) -> bool {
        x <= self.max_value() && x >= self.min_value()
    }
}

/// Nearest representable value (ties to even), saturating at the format limits.
pub fn fx_quantize(x: f64, fmt: &FixedFormat) -> Fixed {
    FxUnit::new(*fmt).quantize(x)
}

pub fn fx_to_real(value: Fixed, fmt: &FixedFormat) -> f64 {
    value.0 as f64 / fmt.scale()
}

/// Arithmetic in one format, counting saturation events.
#[derive(Clone, Debug)]
pub struct FxUnit {
    fmt: FixedFormat,
    saturations: u64,
}

impl FxUnit {
    pub fn new(fmt: FixedFormat) -> Self {
        Self { fmt, saturations: 0 }
    }

    pub fn format(&self) -> &FixedFormat {
        &self.fmt
    }

    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    #[inline]
    fn clamp(&mut self, raw: i128) -> Fixed {
        let (lo, hi) = (self.fmt.min_raw() as i128, self.fmt.max_raw() as i128);
        if raw > hi {
            self.saturations += 1;
            Fixed(hi as i64)
        } else if raw < lo {
            self.saturations += 1;
            Fixed(lo as i64)
        } else {
            Fixed(raw as i64)
        }
    }

    pub fn quantize(&mut self, x: f64) -> Fixed {
        let scaled = (x * self.fmt.scale()).round_ties_even();
        if scaled.is_nan() {
            return Fixed(0);
        }
        // i128 covers every 64-bit word; larger magnitudes saturate below.
        let raw = if scaled >= i128::MAX as f64 {
            i128::MAX
        } else if scaled <= i128::MIN as f64 {
            i128::MIN
        } else {
            scaled as i128
        };
        self.clamp(raw)
    }

    pub fn to_real(&self, v: Fixed) -> f64 {
        fx_to_real(v, &self.fmt)
    }

    #[inline]
    pub fn add(&mut self, a: Fixed, b: Fixed) -> Fixed {
        self.clamp(a.0 as i128 + b.0 as i128)
    }

    #[inline]
    pub fn sub(&mut self, a: Fixed, b: Fixed) -> Fixed {
        self.clamp(a.0 as i128 - b.0 as i128)
    }

    #[inline]
    pub fn neg(&mut self, a: Fixed) -> Fixed {
        self.clamp(-(a.0 as i128))
    }

    /// Product rescaled by `2^-frac_bits`, rounded to nearest even.
    #[inline]
    pub fn mul(&mut self, a: Fixed, b: Fixed) -> Fixed {
        let prod = a.0 as i128 * b.0 as i128;
        let raw = shift_round_even(prod, self.fmt.frac_bits);
        self.clamp(raw)
    }

    #[inline]
    pub fn square(&mut self, a: Fixed) -> Fixed {
        self.mul(a, a)
    }

    /// Saturates a wide accumulator (raw units) into the format.
    #[inline]
    pub fn narrow(&mut self, raw: i128) -> Fixed {
        self.clamp(raw)
    }
}

/// `value / 2^shift`, rounding half to even.
fn shift_round_even(value: i128, shift: u32) -> i128 {
    if shift == 0 {
        return value;
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}
