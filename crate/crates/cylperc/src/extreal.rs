// Extended-precision reals for the scale-sequence arithmetic.
//
// The renormalization scales a_n = a0^((7/6)^n) leave f64 range after a
// handful of levels (a0 = 288^6 gives a_20 ~ 10^319), and the induction
// checks compare quantities like (8c)^168. This module wraps astro-float's
// BigFloat at a fixed 192-bit precision (~57 decimal digits) behind the
// handful of operations the renormalization module needs.

use std::cell::RefCell;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode};

/// Working precision in bits; ~57 significant decimal digits.
pub const PREC: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constants cache"));
}

fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// An extended-precision real number.
#[derive(Clone, Debug)]
pub struct Ext(BigFloat);

impl Ext {
    pub fn from_f64(v: f64) -> Ext {
        Ext(BigFloat::from_f64(v, PREC))
    }

    pub fn from_i64(v: i64) -> Ext {
        Ext(BigFloat::from_i64(v, PREC))
    }

    /// Exact small rational v = num/den.
    pub fn from_ratio(num: i64, den: i64) -> Ext {
        Ext(BigFloat::from_i64(num, PREC).div(&BigFloat::from_i64(den, PREC), PREC, RM))
    }

    pub fn zero() -> Ext {
        Ext(BigFloat::from_i64(0, PREC))
    }

    pub fn add(&self, o: &Ext) -> Ext {
        Ext(self.0.add(&o.0, PREC, RM))
    }

    pub fn sub(&self, o: &Ext) -> Ext {
        Ext(self.0.sub(&o.0, PREC, RM))
    }

    pub fn mul(&self, o: &Ext) -> Ext {
        Ext(self.0.mul(&o.0, PREC, RM))
    }

    pub fn div(&self, o: &Ext) -> Ext {
        Ext(self.0.div(&o.0, PREC, RM))
    }

    pub fn powi(&self, n: usize) -> Ext {
        Ext(self.0.powi(n, PREC, RM))
    }

    /// self^e for arbitrary real exponent (self > 0).
    pub fn pow(&self, e: &Ext) -> Ext {
        Ext(with_consts(|cc| self.0.pow(&e.0, PREC, RM, cc)))
    }

    /// self^(num/den) with the exponent formed exactly.
    pub fn pow_ratio(&self, num: i64, den: i64) -> Ext {
        self.pow(&Ext::from_ratio(num, den))
    }

    pub fn ln(&self) -> Ext {
        Ext(with_consts(|cc| self.0.ln(PREC, RM, cc)))
    }

    pub fn exp(&self) -> Ext {
        Ext(with_consts(|cc| self.0.exp(PREC, RM, cc)))
    }

    pub fn log10(&self) -> Ext {
        Ext(with_consts(|cc| self.0.log10(PREC, RM, cc)))
    }

    pub fn is_nan(&self) -> bool {
        self.0.is_nan()
    }

    /// Nearest f64; values beyond f64 range collapse to ±inf / 0.
    pub fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if self.0.is_zero() {
            return 0.0;
        }
        let (words, _n, sign, exp, _inexact) = self.0.as_raw_parts().expect("finite value");
        // Words are little-endian; the mantissa is normalized so the value is
        // sign * (mantissa fraction in [1/2, 1)) * 2^exp.
        let k = words.len();
        let hi = words[k - 1] as f64;
        let lo = if k >= 2 { words[k - 2] as f64 } else { 0.0 };
        let frac = hi / 2f64.powi(64) + lo / 2f64.powi(128);
        let s = if sign.is_negative() { -1.0 } else { 1.0 };
        if exp > 1030 {
            return s * f64::INFINITY;
        }
        if exp < -1070 {
            return 0.0;
        }
        s * frac * 2f64.powi(exp)
    }
}

impl PartialEq for Ext {
    fn eq(&self, o: &Ext) -> bool {
        self.0.cmp(&o.0) == Some(0)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, o: &Ext) -> Option<std::cmp::Ordering> {
        self.0.cmp(&o.0).map(|s| s.cmp(&0))
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
