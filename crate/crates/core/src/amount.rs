//! Exact integer amounts and small rationals.
//!
//! Ledger paths never touch floating point. Every comparison between an
//! amount and a product of rationals is evaluated by cross-multiplication in
//! `u128`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Base units per whole ZEC.
pub const ZATOSHI_PER_ZEC: u64 = 100_000_000;

/// A non-negative quantity in base units of some currency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn new(value: u64) -> Self {
        Amount(value)
    }

    /// `whole` units of a currency with 10^8 base units.
    pub const fn coins(whole: u64) -> Self {
        Amount(whole * ZATOSHI_PER_ZEC)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_add(rhs.0).map(Amount)
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Amount {
    type Output = Amount;

    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("amount overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        *self = *self + rhs;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, |acc, a| acc + a)
    }
}

impl<'a> Sum<&'a Amount> for Amount {
    fn sum<I: Iterator<Item = &'a Amount>>(iter: I) -> Amount {
        iter.copied().sum()
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FractionError {
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("malformed rational `{0}`, expected `num/den` or an integer")]
    Malformed(String),
}

/// A non-negative rational `num/den` with `den > 0`.
///
/// Not normalised; equality and ordering compare values, not representations.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self, FractionError> {
        if den == 0 {
            return Err(FractionError::ZeroDenominator);
        }
        Ok(Fraction { num, den })
    }

    pub const fn integer(n: u64) -> Self {
        Fraction { num: n, den: 1 }
    }

    pub const fn zero() -> Self {
        Fraction { num: 0, den: 1 }
    }

    pub const fn one() -> Self {
        Fraction { num: 1, den: 1 }
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// `1 - self`, or `None` when `self > 1`.
    pub fn complement(self) -> Option<Fraction> {
        self.den.checked_sub(self.num).map(|num| Fraction { num, den: self.den })
    }

    /// `floor(amount * self)`.
    pub fn mul_floor(self, amount: Amount) -> Amount {
        let v = amount.0 as u128 * self.num as u128 / self.den as u128;
        Amount(u64::try_from(v).expect("amount overflow"))
    }

    /// `ceil(amount * self)`.
    pub fn mul_ceil(self, amount: Amount) -> Amount {
        let p = amount.0 as u128 * self.num as u128;
        let v = p.div_ceil(self.den as u128);
        Amount(u64::try_from(v).expect("amount overflow"))
    }
}

impl PartialEq for Fraction {
    fn eq(&self, other: &Self) -> bool {
        self.num as u128 * other.den as u128 == other.num as u128 * self.den as u128
    }
}

impl Eq for Fraction {}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = FractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let malformed = || FractionError::Malformed(s.to_string());
        match s.split_once('/') {
            Some((n, d)) => {
                let num = n.trim().parse().map_err(|_| malformed())?;
                let den = d.trim().parse().map_err(|_| malformed())?;
                Fraction::new(num, den)
            }
            None => Ok(Fraction::integer(s.parse().map_err(|_| malformed())?)),
        }
    }
}

/// `amount * a * b * c` as an exact rational `num/den` in `u128`.
///
/// Used to compare collateral against products like `v_max * (1 - f) * sigma * xr`.
pub fn scaled_product(amount: Amount, factors: &[Fraction]) -> (u128, u128) {
    factors.iter().fold((amount.0 as u128, 1u128), |(n, d), f| {
        (n * f.num as u128, d * f.den as u128)
    })
}

/// `lhs >= amount * factors` exactly.
pub fn covers(lhs: Amount, amount: Amount, factors: &[Fraction]) -> bool {
    let (n, d) = scaled_product(amount, factors);
    lhs.0 as u128 * d >= n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_compare() {
        let f: Fraction = "2/100".parse().unwrap();
        assert_eq!(f, Fraction::new(1, 50).unwrap());
        assert!("3/0".parse::<Fraction>().is_err());
        assert!("x/2".parse::<Fraction>().is_err());
        assert_eq!("7".parse::<Fraction>().unwrap(), Fraction::integer(7));
        assert!(Fraction::new(3, 2).unwrap() > Fraction::one());
    }

    #[test]
    fn floor_and_ceil() {
        let keep = Fraction::new(98, 100).unwrap();
        assert_eq!(keep.mul_floor(Amount(50)), Amount(49));
        assert_eq!(keep.mul_floor(Amount::coins(49)), Amount(4_802_000_000));
        assert_eq!(Fraction::new(1, 3).unwrap().mul_ceil(Amount(10)), Amount(4));
        assert_eq!(Fraction::new(1, 3).unwrap().mul_floor(Amount(10)), Amount(3));
    }

    #[test]
    fn covers_boundary() {
        let factors = [
            Fraction::new(98, 100).unwrap(),
            Fraction::new(3, 2).unwrap(),
            Fraction::integer(2),
        ];
        assert!(covers(Amount(294), Amount(100), &factors));
        assert!(!covers(Amount(293), Amount(100), &factors));
    }
}
