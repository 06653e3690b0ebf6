//! Private-mining race against the relay.
//!
//! An adversary with hash-rate share `alpha` mines a secret branch and
//! publishes it to both Zcash and the relay once it is longer than the
//! honest chain and deep enough to undo a relay-final block. Honest blocks
//! reach the relay as soon as they are mined.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::relay::Relay;
use crate::zcash_chain::{Miner, ZcashChain, ZcashConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceConfig {
    pub alpha: f64,
    pub blocks: u64,
    pub k: u64,
    pub seed: u64,
    /// The adversary restarts from the tip once this many blocks behind.
    pub give_up: u64,
}

impl RaceConfig {
    pub fn new(alpha: f64, blocks: u64, k: u64, seed: u64) -> Self {
        RaceConfig { alpha, blocks, k, seed, give_up: k }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RaceOutcome {
    pub honest_blocks: u64,
    pub adversary_blocks: u64,
    pub reveals: u64,
    pub deepest_reorg: u64,
    /// Relay-final blocks later dropped from the relay's best chain.
    pub finality_reversions: u64,
}

pub fn run_race(cfg: RaceConfig) -> RaceOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain = ZcashChain::new(ZcashConfig::default(), Vec::new()).expect("empty genesis");
    let mut relay = Relay::new(*chain.genesis(), cfg.k);
    let mut out = RaceOutcome::default();
    let mut fork_height = 0u64;
    let mut adv_len = 0u64;
    chain.fork_adversary(chain.tip()).expect("genesis on main");
    for _ in 0..cfg.blocks {
        if rng.gen_bool(cfg.alpha) {
            let h = chain.mine_block(Miner::Adversary);
            out.adversary_blocks += 1;
            adv_len = h.height - fork_height;
        } else {
            let h = chain.mine_block(Miner::Honest);
            relay.submit_header(h).expect("extends known tip");
            out.honest_blocks += 1;
        }
        let main_len = chain.height() - fork_height;
        if adv_len > main_len && main_len > cfg.k {
            let tip = chain.adversary_tip().expect("branch exists");
            let report = chain.reorg_to(tip).expect("branch is heavier");
            out.reveals += 1;
            out.deepest_reorg = out.deepest_reorg.max(report.depth);
            let mut headers = Vec::new();
            let mut cursor = tip;
            while !relay.contains(&cursor) {
                let h = *chain.header(&cursor).expect("mined");
                headers.push(h);
                cursor = h.parent;
            }
            for h in headers.into_iter().rev() {
                relay.submit_header(h).expect("parent known");
            }
        }
        let behind = chain.height().saturating_sub(fork_height + adv_len);
        if chain.adversary_tip().is_none_or(|t| t == chain.tip()) || behind > cfg.give_up {
            chain.fork_adversary(chain.tip()).expect("tip on main");
            fork_height = chain.height();
            adv_len = 0;
        }
    }
    out.finality_reversions = relay.finality_reversions();
    out
}
