//! Extended-precision Mittag-Leffler series for half-integer parameters.
//!
//! Values are fixed-point integers scaled by `10^digits`. Gamma at integer
//! and half-integer arguments is exact up to the single factor `sqrt(pi)`,
//! which is computed to full working precision from Machin's formula, so the
//! only error sources are the fixed-point truncations (about `n * 10^-digits`
//! after `n` terms) and the series tail, which is summed until terms fall
//! below `10^(guard - digits)`.

#![allow(dead_code)]

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub struct Fixed {
    digits: u32,
    scale: BigInt,
}

impl Fixed {
    pub fn new(digits: u32) -> Self {
        Fixed {
            digits,
            scale: BigInt::from(10u32).pow(digits),
        }
    }

    pub fn one(&self) -> BigInt {
        self.scale.clone()
    }

    /// Exact conversion of a double (a dyadic rational), rounded to the
    /// fixed-point grid.
    pub fn of_f64(&self, x: f64) -> BigInt {
        if x == 0.0 {
            return BigInt::zero();
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let m = BigInt::from(mant) * &self.scale;
        let v = if e >= 0 {
            m << (e as usize)
        } else {
            let d = BigInt::one() << ((-e) as usize);
            round_div(&m, &d)
        };
        v * sign
    }

    pub fn of_ratio(&self, num: i64, den: i64) -> BigInt {
        round_div(&(BigInt::from(num) * &self.scale), &BigInt::from(den))
    }

    /// Correctly rounded (up to a 25-digit pre-rounding) conversion.
    pub fn to_f64(&self, v: &BigInt) -> f64 {
        let neg = v.sign() == Sign::Minus;
        let mag = v.abs();
        let num_digits = mag.to_string().len() as i64;
        let want = 25_i64;
        let shift = num_digits - want;
        let (m, e10) = if shift > 0 {
            let d = BigInt::from(10u32).pow(shift as u32);
            (round_div(&mag, &d), shift - self.digits as i64)
        } else {
            (mag.clone(), -(self.digits as i64))
        };
        let val: f64 = format!("{m}e{e10}").parse().unwrap();
        if neg {
            -val
        } else {
            val
        }
    }

    pub fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        round_div(&(a * b), &self.scale)
    }

    pub fn div(&self, a: &BigInt, b: &BigInt) -> BigInt {
        round_div(&(a * &self.scale), b)
    }

    pub fn sqrt(&self, a: &BigInt) -> BigInt {
        (a * &self.scale).sqrt()
    }

    fn arctan_inv(&self, n: u32) -> BigInt {
        // atan(1/n) = sum (-1)^k / ((2k+1) n^{2k+1})
        let n2 = BigInt::from(n) * BigInt::from(n);
        let mut power = &self.scale / BigInt::from(n);
        let mut sum = BigInt::zero();
        let mut k = 0u32;
        while !power.is_zero() {
            let term = &power / BigInt::from(2 * k + 1);
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
            power /= &n2;
            k += 1;
        }
        sum
    }

    pub fn pi(&self) -> BigInt {
        BigInt::from(16) * self.arctan_inv(5) - BigInt::from(4) * self.arctan_inv(239)
    }
}

fn round_div(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_rem(b);
    let twice = r.abs() * 2;
    if twice >= b.abs() {
        if (a.sign() == Sign::Minus) ^ (b.sign() == Sign::Minus) {
            q - 1
        } else {
            q + 1
        }
    } else {
        q
    }
}

/// Extended-precision evaluator of `E_{a/2, b/2}(z)` for positive integers
/// `a` (so `alpha` in `{1/2, 1, 3/2, 2}`) and `b`.
pub struct HalfIntegerMl {
    fx: Fixed,
    alpha2: u64,
    beta2: u64,
    factorials: Vec<BigInt>,
    sqrt_pi: BigInt,
}

impl HalfIntegerMl {
    pub fn new(alpha2: u64, beta2: u64, digits: u32) -> Self {
        assert!(alpha2 >= 1 && beta2 >= 1);
        let fx = Fixed::new(digits);
        let pi = fx.pi();
        let sqrt_pi = fx.sqrt(&pi);
        HalfIntegerMl {
            fx,
            alpha2,
            beta2,
            factorials: vec![BigInt::one()],
            sqrt_pi,
        }
    }

    fn factorial(&mut self, n: usize) -> BigInt {
        while self.factorials.len() <= n {
            let k = self.factorials.len();
            let next = &self.factorials[k - 1] * BigInt::from(k);
            self.factorials.push(next);
        }
        self.factorials[n].clone()
    }

    /// `v / Gamma(x2 / 2)` for fixed-point `v`.
    fn div_gamma_half(&mut self, v: &BigInt, x2: u64) -> BigInt {
        if x2 % 2 == 0 {
            let k = (x2 / 2) as usize;
            let f = self.factorial(k - 1);
            round_div(v, &f)
        } else {
            // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!)
            let k = ((x2 - 1) / 2) as usize;
            let num = v * &self.fx.scale * (BigInt::one() << (2 * k)) * self.factorial(k);
            let den = self.factorial(2 * k) * &self.sqrt_pi;
            round_div(&num, &den)
        }
    }

    /// Sum of the series at the exact value of the double `z`; returns the
    /// value and the number of terms used.
    pub fn eval(&mut self, z: f64) -> (f64, usize) {
        let (v, n) = self.eval_fixed(&self.fx.of_f64(z));
        (self.fx.to_f64(&v), n)
    }

    pub fn eval_fixed(&mut self, z: &BigInt) -> (BigInt, usize) {
        let guard = BigInt::from(10u32).pow(8);
        let mut sum = BigInt::zero();
        let mut zn = self.fx.one();
        let mut prev_mag: Option<BigInt> = None;
        let mut n = 0usize;
        loop {
            let x2 = self.alpha2 * n as u64 + self.beta2;
            let term = self.div_gamma_half(&zn, x2);
            let mag = term.abs();
            sum += &term;
            let decreasing = prev_mag.as_ref().is_some_and(|p| mag <= *p);
            if decreasing && mag < guard && n > 4 {
                break;
            }
            prev_mag = Some(mag);
            zn = self.fx.mul(&zn, z);
            n += 1;
            assert!(n < 100_000, "series did not converge");
        }
        (sum, n + 1)
    }

    pub fn fixed(&self) -> &Fixed {
        &self.fx
    }
}

/// Convenience wrapper: `E_{alpha,beta}(z)` for half-integer `alpha`, `beta`.
pub fn ml_hp(alpha: f64, beta: f64, z: f64, digits: u32) -> f64 {
    let a2 = (2.0 * alpha).round();
    let b2 = (2.0 * beta).round();
    assert!((a2 - 2.0 * alpha).abs() < 1e-15 && (b2 - 2.0 * beta).abs() < 1e-15);
    HalfIntegerMl::new(a2 as u64, b2 as u64, digits).eval(z).0
}

/// Digits needed so that the largest series term `~exp(|z|^(1/alpha))`
/// leaves at least 40 correct digits.
pub fn digits_for(alpha: f64, z: f64) -> u32 {
    let peak = z.abs().powf(1.0 / alpha) / std::f64::consts::LN_10;
    (peak.ceil() as u32) + 60
}
