//! Arithmetic in `Z_d` for prime `d` and exact phases `ω^k`, `ω = e^{2πi/d}`.
//!
//! Everything above the dense state vector works with exponents only; a phase
//! becomes a floating point complex number in [`PhaseExp::to_complex`] and
//! nowhere else.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulus. Keeps every product of two residues inside `u64`.
pub const MAX_MODULUS: u64 = u32::MAX as u64;

/// Trial division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 {
        return false;
    }
    let mut f = 3u64;
    while f * f <= n {
        if n % f == 0 {
            return false;
        }
        f += 2;
    }
    true
}

/// Smallest prime strictly greater than `x`.
pub fn next_prime_above(x: u64) -> u64 {
    let mut c = x + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// A validated prime modulus `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Modulus(u64);

impl Modulus {
    pub fn new(d: u64) -> Result<Self> {
        if d > MAX_MODULUS {
            return Err(Error::Config(format!("modulus {d} exceeds {MAX_MODULUS}")));
        }
        if !is_prime(d) {
            return Err(Error::Config(format!("modulus {d} is not prime")));
        }
        Ok(Modulus(d))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_odd(self) -> bool {
        self.0 != 2
    }

    #[inline]
    pub fn reduce(self, x: u64) -> u64 {
        x % self.0
    }

    /// Canonical representative of a signed integer.
    #[inline]
    pub fn reduce_signed(self, x: i64) -> u64 {
        x.rem_euclid(self.0 as i64) as u64
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.0 {
            s - self.0
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.0 - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        (a * b) % self.0
    }

    pub fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.0;
        base %= self.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem. `a` must be nonzero.
    pub fn inv(self, a: u64) -> u64 {
        debug_assert!(a % self.0 != 0, "zero has no inverse");
        self.pow(a, self.0 - 2)
    }

    /// `a(a-1)/2 mod d`, the phase multiplier that appears when raising
    /// `X^x Z^z` to the `a`-th power.
    pub fn triangular(self, a: u64) -> u64 {
        let a = a as u128;
        let t = a * (a.saturating_sub(1)) / 2;
        (t % self.0 as u128) as u64
    }
}

impl TryFrom<u64> for Modulus {
    type Error = Error;
    fn try_from(d: u64) -> Result<Self> {
        Modulus::new(d)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.0
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An element of `Z_d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModInt {
    value: u64,
    modulus: Modulus,
}

impl ModInt {
    pub fn new(value: u64, modulus: Modulus) -> Self {
        ModInt {
            value: modulus.reduce(value),
            modulus,
        }
    }

    pub fn zero(modulus: Modulus) -> Self {
        ModInt { value: 0, modulus }
    }

    pub fn from_signed(x: i64, modulus: Modulus) -> Self {
        ModInt {
            value: modulus.reduce_signed(x),
            modulus,
        }
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> Modulus {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn pow(self, exp: u64) -> Self {
        ModInt {
            value: self.modulus.pow(self.value, exp),
            modulus: self.modulus,
        }
    }

    /// `None` for zero.
    pub fn inv(self) -> Option<Self> {
        (self.value != 0).then(|| ModInt {
            value: self.modulus.inv(self.value),
            modulus: self.modulus,
        })
    }

    fn check(self, other: Self) {
        assert_eq!(
            self.modulus, other.modulus,
            "mixed moduli in modular arithmetic"
        );
    }
}

impl fmt::Display for ModInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl Add for ModInt {
    type Output = ModInt;
    fn add(self, rhs: ModInt) -> ModInt {
        self.check(rhs);
        ModInt {
            value: self.modulus.add(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Sub for ModInt {
    type Output = ModInt;
    fn sub(self, rhs: ModInt) -> ModInt {
        self.check(rhs);
        ModInt {
            value: self.modulus.sub(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Mul for ModInt {
    type Output = ModInt;
    fn mul(self, rhs: ModInt) -> ModInt {
        self.check(rhs);
        ModInt {
            value: self.modulus.mul(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Neg for ModInt {
    type Output = ModInt;
    fn neg(self) -> ModInt {
        ModInt {
            value: self.modulus.neg(self.value),
            modulus: self.modulus,
        }
    }
}

/// Reduce a signed exponent into `Z_d`, validating that `d` is prime.
pub fn reduce_exponent(x: i64, d: u64) -> Result<ModInt> {
    let m = Modulus::new(d)?;
    Ok(ModInt::from_signed(x, m))
}

/// The root of unity power `ω^exponent`, kept symbolic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhaseExp(pub ModInt);

impl PhaseExp {
    pub fn one(modulus: Modulus) -> Self {
        PhaseExp(ModInt::zero(modulus))
    }

    pub fn exponent(self) -> ModInt {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        omega_pow(self.0.value(), self.0.modulus().get())
    }
}

/// `ω^a · ω^b = ω^{a+b}`.
impl Mul for PhaseExp {
    type Output = PhaseExp;
    fn mul(self, rhs: PhaseExp) -> PhaseExp {
        PhaseExp(self.0 + rhs.0)
    }
}

/// `e^{2πi k/d}` with the exponent reduced first so large `k` lose no precision.
pub fn omega_pow(k: u64, d: u64) -> Complex64 {
    let theta = 2.0 * std::f64::consts::PI * ((k % d) as f64) / (d as f64);
    Complex64::from_polar(1.0, theta)
}

/// All powers `ω^0 .. ω^{d-1}`.
pub fn omega_table(d: u64) -> Vec<Complex64> {
    (0..d).map(|k| omega_pow(k, d)).collect()
}

/// `Σ_{j=0}^{d-1} ω^{jx}`: `d` when `x ≡ 0`, otherwise zero.
pub fn phase_sum_over_group(x: ModInt) -> u64 {
    if x.is_zero() {
        x.modulus().get()
    } else {
        0
    }
}
