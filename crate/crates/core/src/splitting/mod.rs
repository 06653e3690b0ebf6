//! Amount splitting for private transfers across `k` vaults.
//!
//! A total `t` is cut into `k` pieces, each zero or a power of two, with a
//! small remainder withheld. Every random choice of the procedure is a
//! single draw `i` from a contiguous range, so [`SplitPlan`] exposes the
//! whole outcome space and the inference code enumerates it exactly.

mod bounds;
mod inference;

pub use bounds::{
    check_bounds, check_lemma1, check_structure, lemma1_ones, BoundRow, BOUNDS_CSV_HEADER, GAP_REGION, INDEX_CONVENTION, BoundsReport, Lemma1Report, StructureViolation,
    Verdict,
};
pub use inference::{
    exact_conditional_expectation, marginal_expectation, posterior, posterior_ratio, ConditionalTable,
    PieceDistribution,
};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("k = {0} is not a power of two at least 2")]
    BadK(u32),
    #[error("h = {h}, k = {k} gives m = {m}, need m >= max(1, k/2)")]
    TooFewBits { h: u32, k: u32, m: i64 },
    #[error("h = {0} is outside 1..=62")]
    BadH(u32),
    #[error("total {t} outside [1, 2^{h} - 1]")]
    OutOfRange { t: u64, h: u32 },
    #[error("piece value {0} is neither zero nor a power of two up to 2^m")]
    BadPiece(u64),
    #[error("piece value {0} never occurs under this configuration")]
    UndefinedRatio(u64),
}

/// Parameters `(h, k)` with derived `m = h + 1 - log2 k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitConfig {
    h: u32,
    k: u32,
}

impl SplitConfig {
    pub fn new(h: u32, k: u32) -> Result<Self, SplitError> {
        if !(1..=62).contains(&h) {
            return Err(SplitError::BadH(h));
        }
        if k < 2 || !k.is_power_of_two() {
            return Err(SplitError::BadK(k));
        }
        let m = h as i64 + 1 - k.trailing_zeros() as i64;
        // the gap branch uses e = 2^(m - k/2)
        if m < 1 || m < (k / 2) as i64 {
            return Err(SplitError::TooFewBits { h, k, m });
        }
        Ok(SplitConfig { h, k })
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn log2_k(&self) -> u32 {
        self.k.trailing_zeros()
    }

    pub fn m(&self) -> u32 {
        self.h + 1 - self.log2_k()
    }

    /// Largest total in range.
    pub fn max_total(&self) -> u64 {
        (1u64 << self.h) - 1
    }

    /// Number of piece indices, `m + 2` (sizes 0, 1, 2, ..., 2^m).
    pub fn indices(&self) -> usize {
        self.m() as usize + 2
    }

    fn check_total(&self, t: u64) -> Result<(), SplitError> {
        if t == 0 || t > self.max_total() {
            return Err(SplitError::OutOfRange { t, h: self.h });
        }
        Ok(())
    }
}

/// Index of a piece value: 0 for 0, `j` for `2^(j-1)`.
pub fn piece_index(v: u64) -> Option<usize> {
    match v {
        0 => Some(0),
        v if v.is_power_of_two() => Some(v.trailing_zeros() as usize + 1),
        _ => None,
    }
}

/// Piece value of index `j`.
pub fn piece_value(j: usize) -> u64 {
    if j == 0 {
        0
    } else {
        1u64 << (j - 1)
    }
}

/// `floor(log2 t)` for `t >= 1`.
pub fn scale(t: u64) -> u32 {
    63 - t.leading_zeros()
}

/// Prior probability of total `t`: `(1/h) * 2^-floor(log2 t)`.
pub fn prior_pmf(h: u32, t: u64) -> Result<BigRational, SplitError> {
    if !(1..=62).contains(&h) {
        return Err(SplitError::BadH(h));
    }
    if t == 0 || t >= 1u64 << h {
        return Err(SplitError::OutOfRange { t, h });
    }
    let den = BigInt::from(h) * (BigInt::from(1u8) << scale(t));
    Ok(BigRational::new(BigInt::from(1u8), den))
}

/// Draws `T = 2^N + A` with `N` uniform on `[0, h-1]` and `A` uniform on `[0, 2^N - 1]`.
pub fn sample_prior<R: Rng + ?Sized>(h: u32, rng: &mut R) -> u64 {
    let n = rng.gen_range(0..h);
    let a = rng.gen_range(0..1u64 << n);
    (1u64 << n) + a
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    /// Exactly `k` values, nonzero pieces first in the order produced.
    pub pieces: Vec<u64>,
    pub withheld: u64,
}

impl SplitResult {
    pub fn nonzero(&self) -> usize {
        self.pieces.iter().filter(|p| **p != 0).count()
    }
}

/// Deterministic part of the procedure for one total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub k: u32,
    /// Granularity of the random split.
    pub e: u64,
    /// Pieces of size `2^m` fixed before the draw.
    pub fixed: Vec<u64>,
    /// Amount divided by the draw: `e*i` and `rest - e*i`.
    pub rest: u64,
    pub withheld: u64,
    /// `i` is uniform on `[0, max_draw]`.
    pub max_draw: u64,
}

impl SplitPlan {
    pub fn new(t: u64, cfg: &SplitConfig) -> Result<Self, SplitError> {
        cfg.check_total(t)?;
        let m = cfg.m();
        let k = cfg.k as u64;
        if t < 1u64 << m {
            let ex = scale(t) as i64 + 1 - (k / 2) as i64;
            let e = if ex > 0 { 1u64 << ex } else { 1 };
            let q = t / e;
            Ok(SplitPlan { k: cfg.k, e, fixed: vec![], rest: e * q, withheld: t - e * q, max_draw: q })
        } else {
            // also covers [2^m, 2^(m+1) - 1], where d clamps to 0
            let d = (t >> m).saturating_sub(1);
            let c = (k - d) / 2;
            let e = 1u64 << (m as u64 - c);
            let kept = e * (t / e);
            let rest = kept - d * (1u64 << m);
            Ok(SplitPlan {
                k: cfg.k,
                e,
                fixed: vec![1u64 << m; d as usize],
                rest,
                withheld: t - kept,
                max_draw: rest / e,
            })
        }
    }

    pub fn draws(&self) -> u64 {
        self.max_draw + 1
    }

    /// Outcome for draw `i`; `i` must be at most `max_draw`.
    pub fn outcome(&self, i: u64) -> SplitResult {
        assert!(i <= self.max_draw, "draw {i} outside [0, {}]", self.max_draw);
        let mut pieces = self.fixed.clone();
        let a = self.e * i;
        for part in [a, self.rest - a] {
            push_binary(part, &mut pieces);
        }
        // the piece-count law is checked separately; never truncate here
        while pieces.len() < self.k as usize {
            pieces.push(0);
        }
        SplitResult { pieces, withheld: self.withheld }
    }
}

fn push_binary(mut v: u64, out: &mut Vec<u64>) {
    let mut bit = 0;
    while v != 0 {
        if v & 1 == 1 {
            out.push(1u64 << bit);
        }
        v >>= 1;
        bit += 1;
    }
}

/// Splits `t` with a fresh draw from `rng`.
pub fn split<R: Rng + ?Sized>(t: u64, cfg: &SplitConfig, rng: &mut R) -> Result<SplitResult, SplitError> {
    let plan = SplitPlan::new(t, cfg)?;
    let i = rng.gen_range(0..=plan.max_draw);
    Ok(plan.outcome(i))
}
