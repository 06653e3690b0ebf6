//! Scripted exchange-rate feed.
//!
//! A rate is the number of issuing-chain base units worth one ZEC base unit,
//! kept as an exact fraction.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::amount::Fraction;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("exchange rate must be positive")]
    NonPositiveRate,
    #[error("no exchange rate available at tick {0}")]
    FeedUnavailable(u64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RateFeed {
    series: BTreeMap<u64, Fraction>,
}

impl RateFeed {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_rate(&mut self, tick: u64, rate: Fraction) -> Result<(), OracleError> {
        if rate.is_zero() {
            return Err(OracleError::NonPositiveRate);
        }
        self.series.insert(tick, rate);
        Ok(())
    }

    pub fn get_rate(&self, tick: u64) -> Result<Fraction, OracleError> {
        self.series
            .range(..=tick)
            .next_back()
            .map(|(_, r)| *r)
            .ok_or(OracleError::FeedUnavailable(tick))
    }

    pub fn series(&self) -> impl Iterator<Item = (u64, Fraction)> + '_ {
        self.series.iter().map(|(t, r)| (*t, *r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u64, d: u64) -> Fraction {
        Fraction::new(n, d).unwrap()
    }

    #[test]
    fn latest_rate_at_or_before_tick() {
        let mut feed = RateFeed::new();
        assert_eq!(feed.get_rate(0), Err(OracleError::FeedUnavailable(0)));
        feed.set_rate(0, r(2, 1)).unwrap();
        assert_eq!(feed.get_rate(5), Ok(r(2, 1)));
        feed.set_rate(10, r(3, 1)).unwrap();
        assert_eq!(feed.get_rate(9), Ok(r(2, 1)));
        assert_eq!(feed.get_rate(10), Ok(r(3, 1)));
        assert_eq!(feed.set_rate(11, r(0, 1)), Err(OracleError::NonPositiveRate));
    }
}
