//! Vault registry on the issuing chain.
//!
//! Public records hold collateral and availability. ZEC obligations and the
//! request history behind them live in a separate private store that the
//! simulated verifier reads when checking capacity, balance and insolvency
//! statements; nothing in it is serialisable.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::amount::{covers, Amount, Fraction};
use crate::issuing_chain::CurrencyLedger;
use crate::notes::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VaultId(pub u32);

impl std::fmt::Display for VaultId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "vault{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown vault {0}")]
    UnknownVault(VaultId),
    #[error("collateral must be positive")]
    ZeroCollateral,
    #[error("statement witness does not match the vault's private record")]
    InconsistentWitness,
    #[error("free collateral does not cover v_max at the standard rate")]
    CapacityViolated,
    #[error("collateral does not back obligations at the standard rate")]
    Undercollateralized,
    #[error("obligations are not below v_max")]
    NotInsolvent,
    #[error("no warranty collateral locked for request {0}")]
    NothingLocked(u64),
    #[error("invalid parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegistryParams {
    pub v_max: Amount,
    pub f: Fraction,
    pub sigma_std: Fraction,
    pub i_w: Amount,
    pub poc_validity: u64,
    pub pob_period: u64,
    pub liq_margin: Fraction,
}

impl Default for RegistryParams {
    fn default() -> Self {
        RegistryParams {
            v_max: Amount::coins(100),
            f: Fraction::new(2, 100).expect("nonzero"),
            sigma_std: Fraction::new(3, 2).expect("nonzero"),
            i_w: Amount::coins(1),
            poc_validity: 100,
            pob_period: 100,
            liq_margin: Fraction::new(1, 10).expect("nonzero"),
        }
    }
}

impl RegistryParams {
    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.f >= Fraction::one() {
            return Err(RegistryError::BadParams("fee must be below 1"));
        }
        if self.sigma_std < Fraction::one() {
            return Err(RegistryError::BadParams("sigma_std must be at least 1"));
        }
        Ok(())
    }

    /// `1 - f`.
    pub fn keep(&self) -> Fraction {
        self.f.complement().expect("validated f < 1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum IssueStatus {
    VaultRegistered,
    IssueStart,
    NotIssuing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RedeemStatus {
    RedeemStart,
    NotRedeeming,
}

/// One change to a vault's obligations, as replayed by a proof of balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObligationEvent {
    Issued(Amount),
    Redeemed(Amount),
    Liquidated(Amount),
}

pub fn replay(history: &[ObligationEvent]) -> Amount {
    history.iter().fold(Amount::ZERO, |acc, e| match e {
        ObligationEvent::Issued(a) => acc + *a,
        ObligationEvent::Redeemed(a) | ObligationEvent::Liquidated(a) => acc.saturating_sub(*a),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VaultRecord {
    pub id: VaultId,
    pub address: Address,
    pub collateral: Amount,
    pub issue_status: IssueStatus,
    pub redeem_status: RedeemStatus,
    pub poc_tick: Option<u64>,
    pub xr_cap: Option<Fraction>,
    pub poi_tick: Option<u64>,
    pub statement_tick: u64,
    pub statement_rate: Fraction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct PrivateRecord {
    obligations: Amount,
    history: Vec<ObligationEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Liquidation {
    pub obligations: Amount,
    pub collateral: Amount,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LiquidationPool {
    pub collateral: Amount,
    #[serde(skip)]
    pub obligations: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Party {
    User(String),
    Vault(VaultId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlashSource {
    /// The warranty a user locked for a request.
    Warranty(u64),
    Vault(VaultId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultRegistry {
    params: RegistryParams,
    vaults: BTreeMap<VaultId, VaultRecord>,
    private: BTreeMap<VaultId, PrivateRecord>,
    pool: LiquidationPool,
}

impl VaultRegistry {
    pub fn new(params: RegistryParams) -> Result<Self, RegistryError> {
        params.validate()?;
        Ok(VaultRegistry { params, vaults: BTreeMap::new(), private: BTreeMap::new(), pool: LiquidationPool::default() })
    }

    pub fn params(&self) -> &RegistryParams {
        &self.params
    }

    pub fn vault(&self, id: VaultId) -> Result<&VaultRecord, RegistryError> {
        self.vaults.get(&id).ok_or(RegistryError::UnknownVault(id))
    }

    fn vault_mut(&mut self, id: VaultId) -> Result<&mut VaultRecord, RegistryError> {
        self.vaults.get_mut(&id).ok_or(RegistryError::UnknownVault(id))
    }

    pub fn vaults(&self) -> impl Iterator<Item = &VaultRecord> {
        self.vaults.values()
    }

    pub fn pool(&self) -> LiquidationPool {
        self.pool
    }

    /// Witness-side read used by honest provers and by invariant checks.
    pub fn obligations(&self, id: VaultId) -> Result<Amount, RegistryError> {
        self.private.get(&id).map(|p| p.obligations).ok_or(RegistryError::UnknownVault(id))
    }

    pub fn history(&self, id: VaultId) -> Result<Vec<ObligationEvent>, RegistryError> {
        self.private.get(&id).map(|p| p.history.clone()).ok_or(RegistryError::UnknownVault(id))
    }

    pub fn total_collateral(&self) -> Amount {
        self.vaults.values().map(|v| v.collateral).sum()
    }

    pub fn register_vault(
        &mut self,
        collateral: Amount,
        address: Address,
        now: u64,
        rate: Fraction,
    ) -> Result<VaultId, RegistryError> {
        if collateral.is_zero() {
            return Err(RegistryError::ZeroCollateral);
        }
        let id = VaultId(self.vaults.len() as u32);
        self.vaults.insert(
            id,
            VaultRecord {
                id,
                address,
                collateral,
                issue_status: IssueStatus::VaultRegistered,
                redeem_status: RedeemStatus::RedeemStart,
                poc_tick: None,
                xr_cap: None,
                poi_tick: None,
                statement_tick: now,
                statement_rate: rate,
            },
        );
        self.private.insert(id, PrivateRecord::default());
        Ok(id)
    }

    /// Capacity inequality with free-collateral semantics:
    /// `collateral - O*sigma*xr >= v_max*(1-f)*sigma*xr`.
    pub fn capacity_holds(&self, collateral: Amount, obligations: Amount, rate: Fraction) -> bool {
        let p = &self.params;
        let keep = p.keep();
        // collateral * sd * xd * kd >= sn * xn * (O*kd + v_max*kn)
        let lhs = collateral.0 as u128 * p.sigma_std.den() as u128 * rate.den() as u128 * keep.den() as u128;
        let inner = obligations.0 as u128 * keep.den() as u128 + p.v_max.0 as u128 * keep.num() as u128;
        let rhs = p.sigma_std.num() as u128 * rate.num() as u128 * inner;
        lhs >= rhs
    }

    pub fn submit_poc(&mut self, id: VaultId, witness: Amount, now: u64, rate: Fraction) -> Result<(), RegistryError> {
        let obligations = self.obligations(id)?;
        if witness != obligations {
            return Err(RegistryError::InconsistentWitness);
        }
        let collateral = self.vault(id)?.collateral;
        if !self.capacity_holds(collateral, obligations, rate) {
            return Err(RegistryError::CapacityViolated);
        }
        let v = self.vault_mut(id)?;
        v.issue_status = IssueStatus::IssueStart;
        v.poc_tick = Some(now);
        v.xr_cap = Some(rate);
        v.statement_tick = now;
        v.statement_rate = rate;
        Ok(())
    }

    pub fn submit_pob(
        &mut self,
        id: VaultId,
        witness: &[ObligationEvent],
        now: u64,
        rate: Fraction,
    ) -> Result<(), RegistryError> {
        let private = self.private.get(&id).ok_or(RegistryError::UnknownVault(id))?;
        if witness != private.history.as_slice() || replay(witness) != private.obligations {
            return Err(RegistryError::InconsistentWitness);
        }
        let obligations = private.obligations;
        let collateral = self.vault(id)?.collateral;
        if !covers(collateral, obligations, &[self.params.sigma_std, rate]) {
            return Err(RegistryError::Undercollateralized);
        }
        let v = self.vault_mut(id)?;
        v.issue_status = IssueStatus::NotIssuing;
        v.statement_tick = now;
        v.statement_rate = rate;
        Ok(())
    }

    pub fn submit_poi(&mut self, id: VaultId, witness: Amount, now: u64) -> Result<(), RegistryError> {
        let obligations = self.obligations(id)?;
        if witness != obligations {
            return Err(RegistryError::InconsistentWitness);
        }
        if obligations >= self.params.v_max {
            return Err(RegistryError::NotInsolvent);
        }
        let v = self.vault_mut(id)?;
        v.redeem_status = RedeemStatus::NotRedeeming;
        v.poi_tick = Some(now);
        Ok(())
    }

    pub fn is_issue_available(&self, id: VaultId, now: u64) -> bool {
        self.vaults.get(&id).is_some_and(|v| {
            v.issue_status == IssueStatus::IssueStart
                && v.poc_tick.is_some_and(|t| now <= t + self.params.poc_validity)
        })
    }

    pub fn is_redeem_exempt(&self, id: VaultId, now: u64) -> bool {
        self.vaults.get(&id).is_some_and(|v| {
            v.redeem_status == RedeemStatus::NotRedeeming
                && v.poi_tick.is_some_and(|t| now <= t + self.params.poc_validity)
        })
    }

    /// The vault's capacity was consumed by a lock request.
    pub fn consume_capacity(&mut self, id: VaultId) -> Result<(), RegistryError> {
        self.vault_mut(id)?.issue_status = IssueStatus::NotIssuing;
        Ok(())
    }

    /// A completed issue: obligations grow and any insolvency exemption lapses.
    pub fn record_issue(&mut self, id: VaultId, amount: Amount) -> Result<(), RegistryError> {
        let p = self.private.get_mut(&id).ok_or(RegistryError::UnknownVault(id))?;
        p.obligations += amount;
        p.history.push(ObligationEvent::Issued(amount));
        self.vault_mut(id)?.redeem_status = RedeemStatus::RedeemStart;
        Ok(())
    }

    pub fn record_redeem(&mut self, id: VaultId, amount: Amount) -> Result<(), RegistryError> {
        let p = self.private.get_mut(&id).ok_or(RegistryError::UnknownVault(id))?;
        p.obligations = p.obligations.saturating_sub(amount);
        p.history.push(ObligationEvent::Redeemed(amount));
        Ok(())
    }

    pub fn credit_collateral(&mut self, id: VaultId, amount: Amount) -> Result<(), RegistryError> {
        let v = self.vault_mut(id)?;
        v.collateral += amount;
        Ok(())
    }

    /// Removes up to `amount` of collateral and returns what was removed.
    pub fn debit_collateral(&mut self, id: VaultId, amount: Amount) -> Result<Amount, RegistryError> {
        let v = self.vault_mut(id)?;
        let taken = amount.min(v.collateral);
        v.collateral = v.collateral.saturating_sub(taken);
        Ok(taken)
    }

    /// Moves warranty collateral and returns the amount moved.
    pub fn slash_warranty(
        &mut self,
        ledger: &mut CurrencyLedger,
        from: SlashSource,
        amount: Amount,
        to: Party,
    ) -> Result<Amount, RegistryError> {
        let moved = match from {
            SlashSource::Warranty(request) => {
                let (_, locked) = ledger.take_warranty(request).ok_or(RegistryError::NothingLocked(request))?;
                locked
            }
            SlashSource::Vault(v) => self.debit_collateral(v, amount)?,
        };
        match to {
            Party::User(u) => ledger.credit(&u, moved),
            Party::Vault(v) => self.credit_collateral(v, moved)?,
        }
        Ok(moved)
    }

    /// Partial liquidation once the last statement is older than the balance
    /// period and the rate has moved by more than the margin since.
    pub fn check_liquidation(&mut self, id: VaultId, now: u64, rate: Fraction) -> Result<Option<Liquidation>, RegistryError> {
        let p = self.params;
        let v = self.vault(id)?;
        if now.saturating_sub(v.statement_tick) < p.pob_period {
            return Ok(None);
        }
        let last = v.statement_rate;
        // |rate - last| > margin * last, cross-multiplied
        let r = rate.num() as u128 * last.den() as u128;
        let l = last.num() as u128 * rate.den() as u128;
        let moved = r.abs_diff(l) * p.liq_margin.den() as u128;
        let threshold = p.liq_margin.num() as u128 * l;
        if moved <= threshold {
            return Ok(None);
        }
        let collateral = v.collateral;
        let obligations = self.obligations(id)?;
        let liq = liquidation_amounts(collateral, obligations, p.sigma_std, rate);
        let v = self.vault_mut(id)?;
        v.statement_tick = now;
        v.statement_rate = rate;
        let Some(liq) = liq else { return Ok(None) };
        v.collateral = v.collateral.saturating_sub(liq.collateral);
        let priv_ = self.private.get_mut(&id).expect("vault exists");
        priv_.obligations = priv_.obligations.saturating_sub(liq.obligations);
        priv_.history.push(ObligationEvent::Liquidated(liq.obligations));
        self.pool.collateral += liq.collateral;
        self.pool.obligations += liq.obligations;
        Ok(Some(liq))
    }
}

/// Smallest obligation transfer that restores `C >= O*sigma*xr`, with the
/// collateral seized at the current rate. `None` when already backed.
pub fn liquidation_amounts(collateral: Amount, obligations: Amount, sigma: Fraction, rate: Fraction) -> Option<Liquidation> {
    if covers(collateral, obligations, &[sigma, rate]) {
        return None;
    }
    let (sn, sd) = (sigma.num() as u128, sigma.den() as u128);
    let (xn, xd) = (rate.num() as u128, rate.den() as u128);
    let moved = if sn == sd {
        obligations
    } else {
        // ceil((O*sn*xn - C*sd*xd) / (xn*(sn - sd)))
        let deficit = obligations.0 as u128 * sn * xn - collateral.0 as u128 * sd * xd;
        let per_unit = xn * (sn - sd);
        let m = deficit.div_ceil(per_unit);
        Amount(m.min(obligations.0 as u128) as u64)
    };
    let seized = rate.mul_floor(moved).min(collateral);
    Some(Liquidation { obligations: moved, collateral: seized })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(n: u64, d: u64) -> Fraction {
        Fraction::new(n, d).unwrap()
    }

    fn addr() -> Address {
        Address { diversifier: [0; 11], pk_d: [1; 32] }
    }

    fn registry() -> VaultRegistry {
        VaultRegistry::new(RegistryParams::default()).unwrap()
    }

    #[test]
    fn capacity_boundary() {
        let mut reg = registry();
        let xr = frac(2, 1);
        let ok = reg.register_vault(Amount::coins(294), addr(), 0, xr).unwrap();
        let short = reg.register_vault(Amount::coins(293), addr(), 0, xr).unwrap();
        assert_ne!(ok, short);
        assert_eq!(reg.submit_poc(ok, Amount::ZERO, 0, xr), Ok(()));
        assert!(reg.is_issue_available(ok, 100));
        assert!(!reg.is_issue_available(ok, 101));
        assert_eq!(reg.submit_poc(short, Amount::ZERO, 0, xr), Err(RegistryError::CapacityViolated));
        assert_eq!(reg.vault(short).unwrap().issue_status, IssueStatus::VaultRegistered);
        // one base unit below the threshold also fails
        assert!(!reg.capacity_holds(Amount(Amount::coins(294).0 - 1), Amount::ZERO, xr));
        assert_eq!(reg.register_vault(Amount::ZERO, addr(), 0, xr), Err(RegistryError::ZeroCollateral));
    }

    #[test]
    fn capacity_with_existing_obligations() {
        let mut reg = registry();
        let xr = frac(2, 1);
        let v = reg.register_vault(Amount::coins(294), addr(), 0, xr).unwrap();
        reg.record_issue(v, Amount::coins(50)).unwrap();
        assert_eq!(reg.submit_poc(v, Amount::coins(50), 0, xr), Err(RegistryError::CapacityViolated));
        assert_eq!(reg.submit_poc(v, Amount::ZERO, 0, xr), Err(RegistryError::InconsistentWitness));
    }

    #[test]
    fn balance_boundary_and_history() {
        let mut reg = registry();
        let xr = frac(2, 1);
        let a = reg.register_vault(Amount::coins(147), addr(), 0, xr).unwrap();
        let b = reg.register_vault(Amount::coins(146), addr(), 0, xr).unwrap();
        for v in [a, b] {
            reg.record_issue(v, Amount::coins(49)).unwrap();
        }
        let hist = reg.history(a).unwrap();
        assert_eq!(reg.submit_pob(a, &hist, 1, xr), Ok(()));
        assert_eq!(reg.vault(a).unwrap().issue_status, IssueStatus::NotIssuing);
        assert_eq!(reg.submit_pob(b, &hist, 1, xr), Err(RegistryError::Undercollateralized));
        assert_eq!(reg.submit_pob(a, &[], 1, xr), Err(RegistryError::InconsistentWitness));
    }

    #[test]
    fn insolvency_is_strict_and_lapses_on_issue() {
        let mut reg = registry();
        let v = reg.register_vault(Amount::coins(500), addr(), 0, frac(2, 1)).unwrap();
        assert_eq!(reg.submit_poi(v, Amount::ZERO, 0), Ok(()));
        assert!(reg.is_redeem_exempt(v, 5));
        reg.record_issue(v, Amount::coins(100)).unwrap();
        assert!(!reg.is_redeem_exempt(v, 5));
        assert_eq!(reg.submit_poi(v, Amount::coins(100), 6), Err(RegistryError::NotInsolvent));
    }

    #[test]
    fn liquidation_restores_ratio() {
        let mut reg = registry();
        let xr = frac(2, 1);
        let v = reg.register_vault(Amount::coins(150), addr(), 0, xr).unwrap();
        reg.record_issue(v, Amount::coins(50)).unwrap();
        // fresh statement
        assert_eq!(reg.check_liquidation(v, 50, frac(3, 1)), Ok(None));
        // stale, rate unchanged
        assert_eq!(reg.check_liquidation(v, 100, xr), Ok(None));
        let liq = reg.check_liquidation(v, 100, frac(3, 1)).unwrap().unwrap();
        let c = reg.vault(v).unwrap().collateral;
        let o = reg.obligations(v).unwrap();
        assert!(covers(c, o, &[frac(3, 2), frac(3, 1)]));
        // one unit less moved would not restore it
        let less = Amount(liq.obligations.0 - 1);
        let c2 = Amount::coins(150).saturating_sub(frac(3, 1).mul_floor(less));
        assert!(!covers(c2, Amount::coins(50).saturating_sub(less), &[frac(3, 2), frac(3, 1)]));
        assert_eq!(reg.pool().collateral, liq.collateral);
    }

    #[test]
    fn warranty_slashing_moves_funds() {
        let mut reg = registry();
        let v = reg.register_vault(Amount(10), addr(), 0, frac(1, 1)).unwrap();
        let mut ledger = CurrencyLedger::default();
        ledger.credit("alice", Amount(5));
        ledger.lock_warranty("alice", 7, Amount(3)).unwrap();
        assert_eq!(reg.slash_warranty(&mut ledger, SlashSource::Warranty(7), Amount(3), Party::Vault(v)), Ok(Amount(3)));
        assert_eq!(reg.vault(v).unwrap().collateral, Amount(13));
        assert_eq!(
            reg.slash_warranty(&mut ledger, SlashSource::Warranty(7), Amount(3), Party::Vault(v)),
            Err(RegistryError::NothingLocked(7))
        );
        reg.slash_warranty(&mut ledger, SlashSource::Vault(v), Amount(4), Party::User("alice".into())).unwrap();
        assert_eq!(ledger.balance("alice"), Amount(6));
        assert_eq!(reg.vault(v).unwrap().collateral, Amount(9));
    }
}
