//! Cross-chain migration of shielded ZEC through collateralised vaults,
//! simulated over two ledgers, plus the amount-splitting privacy analysis.

pub mod amount;
pub mod issuing_chain;
pub mod merkle;
pub mod notes;
pub mod oracle;
pub mod primitives;
pub mod relay;
pub mod shielded;
pub mod vault_registry;
pub mod wallet;
pub mod zcash_chain;
pub mod splitting;
pub mod protocol;
