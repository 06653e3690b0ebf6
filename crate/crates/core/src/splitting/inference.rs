//! Exact forward and posterior probabilities over piece sizes.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{piece_index, prior_pmf, SplitConfig, SplitError, SplitPlan};

/// One rational per piece index `0..=m+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieceDistribution {
    pub values: Vec<BigRational>,
}

impl PieceDistribution {
    pub fn zeros(len: usize) -> Self {
        PieceDistribution { values: vec![BigRational::zero(); len] }
    }

    pub fn get(&self, j: usize) -> &BigRational {
        &self.values[j]
    }

    pub fn sum(&self) -> BigRational {
        self.values.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Integer piece counts for every draw, as `(count per index, number of draws)`.
fn index_counts(t: u64, cfg: &SplitConfig) -> Result<(Vec<u64>, u64), SplitError> {
    let plan = SplitPlan::new(t, cfg)?;
    let mut counts = vec![0u64; cfg.indices()];
    for i in 0..plan.draws() {
        for p in plan.outcome(i).pieces {
            let j = piece_index(p).ok_or(SplitError::BadPiece(p))?;
            *counts.get_mut(j).ok_or(SplitError::BadPiece(p))? += 1;
        }
    }
    Ok((counts, plan.draws()))
}

/// `E[X_j | T = t]` for every index, enumerating all equiprobable draws.
pub fn exact_conditional_expectation(t: u64, cfg: &SplitConfig) -> Result<PieceDistribution, SplitError> {
    let (counts, draws) = index_counts(t, cfg)?;
    let den = BigInt::from(draws);
    Ok(PieceDistribution {
        values: counts.into_iter().map(|c| BigRational::new(BigInt::from(c), den.clone())).collect(),
    })
}

/// Conditional expectations for every total in range, plus the marginals.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    pub cfg: SplitConfig,
    pub rows: BTreeMap<u64, PieceDistribution>,
    pub marginal: PieceDistribution,
}

impl ConditionalTable {
    pub fn build(cfg: &SplitConfig) -> Result<Self, SplitError> {
        let mut rows = BTreeMap::new();
        let mut marginal = PieceDistribution::zeros(cfg.indices());
        for t in 1..=cfg.max_total() {
            let row = exact_conditional_expectation(t, cfg)?;
            let p = prior_pmf(cfg.h(), t)?;
            for (acc, v) in marginal.values.iter_mut().zip(&row.values) {
                *acc += &p * v;
            }
            rows.insert(t, row);
        }
        Ok(ConditionalTable { cfg: *cfg, rows, marginal })
    }

    pub fn conditional(&self, t: u64) -> &PieceDistribution {
        &self.rows[&t]
    }

    /// `E[X_j | T=t] / E[X_j]`.
    pub fn ratio(&self, t: u64, j: usize) -> Result<BigRational, SplitError> {
        let m = &self.marginal.values[j];
        if m.is_zero() {
            return Err(SplitError::UndefinedRatio(super::piece_value(j)));
        }
        Ok(&self.rows[&t].values[j] / m)
    }
}

/// `E[X_j] = sum_t Pr[T=t] E[X_j | T=t]`.
pub fn marginal_expectation(cfg: &SplitConfig) -> Result<PieceDistribution, SplitError> {
    Ok(ConditionalTable::build(cfg)?.marginal)
}

/// `Pr[T=t | V=v] / Pr[T=t]`, with `V` the piece seen by one random vault.
pub fn posterior_ratio(t: u64, v: u64, cfg: &SplitConfig) -> Result<BigRational, SplitError> {
    let j = piece_index(v).filter(|j| *j < cfg.indices()).ok_or(SplitError::BadPiece(v))?;
    let marginal = marginal_expectation(cfg)?;
    if marginal.values[j].is_zero() {
        return Err(SplitError::UndefinedRatio(v));
    }
    let cond = exact_conditional_expectation(t, cfg)?;
    Ok(&cond.values[j] / &marginal.values[j])
}

/// Full posterior `Pr[T = t | V = v]` over every total, from a prebuilt table.
pub fn posterior(table: &ConditionalTable, v: u64) -> Result<BTreeMap<u64, BigRational>, SplitError> {
    let j = piece_index(v).filter(|j| *j < table.cfg.indices()).ok_or(SplitError::BadPiece(v))?;
    let mut out = BTreeMap::new();
    for t in table.rows.keys() {
        let r = table.ratio(*t, j)?;
        out.insert(*t, prior_pmf(table.cfg.h(), *t)? * r);
    }
    Ok(out)
}
