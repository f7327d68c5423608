//! Exact dyadic rationals `m·2^e` for evaluating sums and products of
//! doubles without intermediate rounding.

use core::cmp::Ordering;
use core::ops::{Add, Mul, Sub};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug)]
pub(crate) struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub(crate) fn zero() -> Self {
        Dyadic { mant: BigInt::zero(), exp: 0 }
    }

    pub(crate) fn one() -> Self {
        Dyadic { mant: BigInt::one(), exp: 0 }
    }

    pub(crate) fn from_int(n: i64) -> Self {
        Dyadic { mant: BigInt::from(n), exp: 0 }
    }

    /// Exact value of a finite double.
    pub(crate) fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "dyadic value of a non-finite double");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let mant = if negative { -BigInt::from(m) } else { BigInt::from(m) };
        Dyadic { mant, exp: e }.normalized()
    }

    fn normalized(mut self) -> Self {
        if self.mant.is_zero() {
            self.exp = 0;
            return self;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant >>= tz as usize;
            self.exp += tz as i64;
        }
        self
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub(crate) fn pow(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Exact quotient when it is itself dyadic.
    pub(crate) fn checked_div(&self, rhs: &Dyadic) -> Option<Dyadic> {
        if rhs.is_zero() {
            return None;
        }
        let tz = rhs.mant.trailing_zeros().unwrap_or(0);
        let odd = &rhs.mant >> tz as usize;
        let (q, r) = self.mant.div_rem(&odd);
        if !r.is_zero() {
            return None;
        }
        Some(Dyadic { mant: q, exp: self.exp - rhs.exp - tz as i64 }.normalized())
    }

    /// Correctly rounded (ties to even) conversion to a double.
    pub(crate) fn to_f64(&self) -> f64 {
        if self.mant.is_zero() {
            return 0.0;
        }
        let negative = self.mant.sign() == Sign::Minus;
        let mag = self.mant.abs();
        let bits = mag.bits() as i64;
        let (q, exp) = if bits > 53 {
            let shift = (bits - 53) as usize;
            let mut q = &mag >> shift;
            let rem = &mag - (&q << shift);
            let half = BigInt::one() << (shift - 1);
            match rem.cmp(&half) {
                Ordering::Greater => q += 1,
                Ordering::Equal if q.is_odd() => q += 1,
                _ => {}
            }
            (q, self.exp + shift as i64)
        } else {
            (mag, self.exp)
        };
        let q = q.to_f64().expect("at most 54 bits");
        let exp = exp.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
        let v = libm::scalbn(q, exp);
        if negative {
            -v
        } else {
            v
        }
    }

    fn aligned(&self, rhs: &Dyadic) -> (BigInt, BigInt, i64) {
        let e = self.exp.min(rhs.exp);
        let a = &self.mant << (self.exp - e) as usize;
        let b = &rhs.mant << (rhs.exp - e) as usize;
        (a, b, e)
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(rhs);
        Dyadic { mant: a + b, exp: e }.normalized()
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(rhs);
        Dyadic { mant: a - b, exp: e }.normalized()
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic { mant: &self.mant * &rhs.mant, exp: self.exp + rhs.exp }.normalized()
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Dyadic {}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubles_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1, 1e300, -3e-310, f64::MIN_POSITIVE, 123456.789] {
            assert_eq!(Dyadic::from_f64(x).to_f64(), x);
        }
    }

    #[test]
    fn exact_arithmetic_beats_double_rounding() {
        let a = Dyadic::from_f64(0.1);
        let b = Dyadic::from_f64(0.2);
        let s = &a + &b;
        assert_eq!(s.to_f64(), 0.30000000000000004);
        let big = Dyadic::from_f64(1e16);
        let tiny = Dyadic::one();
        assert_eq!((&(&big + &tiny) - &big).to_f64(), 1.0);
    }

    #[test]
    fn rounding_is_ties_to_even() {
        let two53 = Dyadic { mant: BigInt::one() << 53usize, exp: 0 };
        let plus_one = &two53 + &Dyadic::one();
        assert_eq!(plus_one.to_f64(), 9007199254740992.0);
        let plus_three = &two53 + &Dyadic::from_int(3);
        assert_eq!(plus_three.to_f64(), 9007199254740996.0);
    }

    #[test]
    fn division_is_exact_or_refused() {
        let n = Dyadic::from_f64(63.0 / 64.0);
        let d = Dyadic::from_f64(0.75);
        assert_eq!(n.checked_div(&d).unwrap().to_f64(), 1.3125);
        assert!(Dyadic::one().checked_div(&Dyadic::from_int(3)).is_none());
        assert!(Dyadic::one().checked_div(&Dyadic::zero()).is_none());
    }

    #[test]
    fn ordering() {
        assert!(Dyadic::from_f64(-1.0) < Dyadic::from_f64(0.5));
        assert_eq!(Dyadic::from_f64(0.5), Dyadic { mant: BigInt::from(4), exp: -3 });
        assert_eq!(Dyadic::from_f64(3.0).pow(4).to_f64(), 81.0);
    }
}
