//! Typed scenario configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::protocol::{BridgeConfig, Deltas};
use zclaim_core::relay::DEFAULT_FINALITY_DEPTH;
use zclaim_core::splitting::SplitConfig;
use zclaim_core::vault_registry::RegistryParams;
use zclaim_core::zcash_chain::ZcashConfig;

use crate::config::{parse_f64, parse_fraction, parse_u64, Entry, RawConfig};
use crate::SimError;

macro_rules! strategies {
    ($name:ident { $first:ident => $first_text:literal, $($(#[$vdoc:meta])* $variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
        pub enum $name {
            #[default]
            $first,
            $($(#[$vdoc])* $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$name::$first, $($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $name::$first => $first_text,
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $first_text => Ok($name::$first),
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "unknown strategy `{s}` (expected one of: {})",
                        [$first_text, $($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

strategies!(IssuerStrategy {
    Honest => "honest",
    WrongCiphertext => "wrong_ciphertext",
    CorruptedCiphertext => "corrupted_ciphertext",
    RandomRcm => "random_rcm",
    /// Mints against the lock of its first request on every later one.
    ReplayLock => "replay_lock",
    NoLock => "no_lock",
    /// Locks on the adversary's private branch.
    PrivateLock => "private_lock",
});

strategies!(RedeemerStrategy {
    Honest => "honest",
    CorruptedCiphertext => "corrupted_ciphertext",
    /// Asks again for the note it was paid in its previous redeem.
    ReuseReleaseNote => "reuse_release_note",
});

strategies!(VaultStrategy {
    Honest => "honest",
    /// Keeps its capacity proofs current but never confirms nor releases.
    Silent => "silent",
    WrongRelease => "wrong_release",
    /// Tries an earlier release proof before paying out.
    ReplayProof => "replay_proof",
    /// Challenges every request once with its true secret before acting honestly.
    FalseChallenge => "false_challenge",
    /// Stops proving capacity or balance once it holds obligations.
    Lapsed => "lapsed",
});

strategies!(AdversaryStrategy {
    None => "none",
    PrivateMining => "private_mining",
    Eclipse => "eclipse",
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSpec {
    pub zec: Amount,
    pub i: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultSpec {
    pub collateral: Amount,
    pub strategy: VaultStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuerSpec {
    pub user: String,
    pub vault: String,
    pub amount: Amount,
    pub start: u64,
    pub count: u64,
    pub strategy: IssuerStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedeemerSpec {
    pub user: String,
    pub vault: String,
    pub amount: Amount,
    pub start: u64,
    pub count: u64,
    pub strategy: RedeemerStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub strategy: AdversaryStrategy,
    /// Share of all Zcash blocks the adversary mines.
    pub alpha: f64,
    pub start: u64,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            strategy: AdversaryStrategy::None,
            alpha: 0.0,
            start: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Eq,
    AtLeast,
    AtMost,
}

/// `expect.<metric> = [>=|<=]value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub metric: String,
    pub cmp: Comparison,
    pub value: u64,
    pub line: usize,
}

impl Expectation {
    pub fn holds(&self, actual: u64) -> bool {
        match self.cmp {
            Comparison::Eq => actual == self.value,
            Comparison::AtLeast => actual >= self.value,
            Comparison::AtMost => actual <= self.value,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Comparison::Eq => "==",
            Comparison::AtLeast => ">=",
            Comparison::AtMost => "<=",
        };
        write!(f, "{} {op} {}", self.metric, self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub horizon: u64,
    pub params: RegistryParams,
    pub relay_k: u64,
    pub honest_relayer: bool,
    pub zcash: ZcashConfig,
    pub zc_block_interval: u64,
    pub deltas: Deltas,
    pub rates: BTreeMap<u64, Fraction>,
    pub users: BTreeMap<String, UserSpec>,
    pub vaults: BTreeMap<String, VaultSpec>,
    pub issuers: BTreeMap<String, IssuerSpec>,
    pub redeemers: BTreeMap<String, RedeemerSpec>,
    pub adversary: AdversarySpec,
    pub split: Option<SplitConfig>,
    pub expectations: Vec<Expectation>,
}

/// Metric names accepted by `expect.*`, beyond the protocol metrics.
pub const EXTRA_METRICS: [&str; 2] = ["backing", "backing_deficit"];

const TOP_KEYS: [&str; 3] = ["name", "seed", "horizon"];
const SECTIONS: [&str; 11] = [
    "relay",
    "zcash",
    "params",
    "deltas",
    "oracle",
    "user",
    "vault",
    "issuer",
    "redeemer",
    "adversary",
    "split",
];

fn strategy<T: FromStr<Err = String>>(e: Option<&Entry>) -> Result<T, SimError>
where
    T: Default,
{
    match e {
        Some(e) => e.value.parse().map_err(|m| SimError::config(e.line, m)),
        None => Ok(T::default()),
    }
}

/// Splits `role.<name>.<field>` entries into per-name field maps.
fn actors<'a>(
    raw: &'a RawConfig,
    role: &'a str,
) -> Result<BTreeMap<String, BTreeMap<&'a str, &'a Entry>>, SimError> {
    let mut out: BTreeMap<String, BTreeMap<&str, &Entry>> = BTreeMap::new();
    for (rest, e) in raw.section(role) {
        let (name, field) = rest
            .split_once('.')
            .ok_or_else(|| SimError::config(e.line, format!("expected `{role}.<name>.<field>`")))?;
        out.entry(name.to_string()).or_default().insert(field, e);
    }
    Ok(out)
}

fn check_fields(
    fields: &BTreeMap<&str, &Entry>,
    allowed: &[&str],
    role: &str,
) -> Result<(), SimError> {
    for (f, e) in fields {
        if !allowed.contains(f) {
            return Err(SimError::config(
                e.line,
                format!(
                    "unknown {role} field `{f}` (expected one of: {})",
                    allowed.join(", ")
                ),
            ));
        }
    }
    Ok(())
}

fn required<'a>(
    fields: &BTreeMap<&str, &'a Entry>,
    f: &str,
    role: &str,
    name: &str,
) -> Result<&'a Entry, SimError> {
    fields
        .get(f)
        .copied()
        .ok_or_else(|| SimError::config(0, format!("{role} `{name}` needs `{f}`")))
}

fn field_u64(fields: &BTreeMap<&str, &Entry>, f: &str, default: u64) -> Result<u64, SimError> {
    fields.get(f).map_or(Ok(default), |e| parse_u64(e))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, SimError> {
        for (key, e) in raw.iter() {
            let head = key.split('.').next().unwrap_or_default();
            let known = if key.contains('.') {
                SECTIONS.contains(&head) || head == "expect"
            } else {
                TOP_KEYS.contains(&head)
            };
            if !known {
                return Err(SimError::config(e.line, format!("unknown key `{key}`")));
            }
        }
        let seed = raw
            .get("seed")
            .ok_or_else(|| SimError::config(0, "`seed` is mandatory"))?;
        let seed = parse_u64(seed)?;
        let name = raw
            .get("name")
            .map(|e| e.value.clone())
            .unwrap_or_else(|| "scenario".into());
        let horizon = raw.u64_or("horizon", 100)?;

        let d = RegistryParams::default();
        let params = RegistryParams {
            v_max: raw.amount_or("params.v_max", d.v_max)?,
            f: raw.fraction_or("params.f", d.f)?,
            sigma_std: raw.fraction_or("params.sigma_std", d.sigma_std)?,
            i_w: raw.amount_or("params.i_w", d.i_w)?,
            poc_validity: raw.u64_or("params.poc_validity", d.poc_validity)?,
            pob_period: raw.u64_or("params.pob_period", d.pob_period)?,
            liq_margin: raw.fraction_or("params.liq_margin", d.liq_margin)?,
        };
        for (f, e) in raw.section("params") {
            if ![
                "v_max",
                "f",
                "sigma_std",
                "i_w",
                "poc_validity",
                "pob_period",
                "liq_margin",
            ]
            .contains(&f)
            {
                return Err(SimError::config(e.line, format!("unknown parameter `{f}`")));
            }
        }
        params
            .validate()
            .map_err(|err| SimError::config(0, err.to_string()))?;

        let relay_k = raw.u64_or("relay.k", DEFAULT_FINALITY_DEPTH)?;
        let honest_relayer = raw.bool_or("relay.honest", true)?;
        let zd = ZcashConfig::default();
        let zcash = ZcashConfig {
            tree_depth: raw
                .u64_or("zcash.tree_depth", zd.tree_depth as u64)?
                .try_into()
                .unwrap_or(u8::MAX),
            fee: raw.amount_or("zcash.fee", zd.fee)?,
        };
        let zc_block_interval = raw.u64_or("zcash.block_interval", 1)?.max(1);
        let dd = Deltas::for_finality(relay_k, zc_block_interval);
        let deltas = Deltas {
            mint: raw.u64_or("deltas.mint", dd.mint)?,
            confirm_issue: raw.u64_or("deltas.confirm_issue", dd.confirm_issue)?,
            confirm_redeem: raw.u64_or("deltas.confirm_redeem", dd.confirm_redeem)?,
        };

        let mut rates = BTreeMap::new();
        for (rest, e) in raw.section("oracle") {
            let tick = rest
                .strip_prefix("rate.")
                .and_then(|t| t.parse::<u64>().ok())
                .ok_or_else(|| {
                    SimError::config(e.line, "expected `oracle.rate.<tick> = num/den`")
                })?;
            rates.insert(tick, parse_fraction(e)?);
        }
        if !rates.contains_key(&0) {
            rates.insert(0, Fraction::one());
        }

        let mut users = BTreeMap::new();
        for (name, f) in actors(raw, "user")? {
            check_fields(&f, &["zec", "i"], "user")?;
            users.insert(
                name,
                UserSpec {
                    zec: Amount(field_u64(&f, "zec", 0)?),
                    i: Amount(field_u64(&f, "i", 0)?),
                },
            );
        }
        let mut vaults = BTreeMap::new();
        for (name, f) in actors(raw, "vault")? {
            check_fields(&f, &["collateral", "strategy"], "vault")?;
            let collateral = Amount(parse_u64(required(&f, "collateral", "vault", &name)?)?);
            vaults.insert(
                name,
                VaultSpec {
                    collateral,
                    strategy: strategy(f.get("strategy").copied())?,
                },
            );
        }
        let lookup = |fields: &BTreeMap<&str, &Entry>,
                      role: &str,
                      name: &str|
         -> Result<(String, String), SimError> {
            let user = fields
                .get("user")
                .map(|e| e.value.clone())
                .unwrap_or_else(|| name.to_string());
            if !users.contains_key(&user) {
                let line = fields.get("user").map_or(0, |e| e.line);
                return Err(SimError::config(
                    line,
                    format!("{role} `{name}` refers to unknown user `{user}`"),
                ));
            }
            let v = required(fields, "vault", role, name)?;
            if !vaults.contains_key(&v.value) {
                return Err(SimError::config(
                    v.line,
                    format!("unknown vault `{}`", v.value),
                ));
            }
            Ok((user, v.value.clone()))
        };
        let mut issuers = BTreeMap::new();
        for (name, f) in actors(raw, "issuer")? {
            check_fields(
                &f,
                &["user", "vault", "amount", "start", "count", "strategy"],
                "issuer",
            )?;
            let (user, vault) = lookup(&f, "issuer", &name)?;
            let amount = Amount(parse_u64(required(&f, "amount", "issuer", &name)?)?);
            let spec = IssuerSpec {
                user,
                vault,
                amount,
                start: field_u64(&f, "start", 1)?,
                count: field_u64(&f, "count", 1)?,
                strategy: strategy(f.get("strategy").copied())?,
            };
            issuers.insert(name, spec);
        }
        let mut redeemers = BTreeMap::new();
        for (name, f) in actors(raw, "redeemer")? {
            check_fields(
                &f,
                &["user", "vault", "amount", "start", "count", "strategy"],
                "redeemer",
            )?;
            let (user, vault) = lookup(&f, "redeemer", &name)?;
            let amount = Amount(parse_u64(required(&f, "amount", "redeemer", &name)?)?);
            let spec = RedeemerSpec {
                user,
                vault,
                amount,
                start: field_u64(&f, "start", 1)?,
                count: field_u64(&f, "count", 1)?,
                strategy: strategy(f.get("strategy").copied())?,
            };
            redeemers.insert(name, spec);
        }

        let mut adversary = AdversarySpec {
            strategy: strategy(raw.get("adversary.strategy"))?,
            ..Default::default()
        };
        for (f, e) in raw.section("adversary") {
            match f {
                "strategy" => {}
                "alpha" => adversary.alpha = parse_f64(e)?,
                "start" => adversary.start = parse_u64(e)?,
                _ => {
                    return Err(SimError::config(
                        e.line,
                        format!("unknown adversary field `{f}`"),
                    ))
                }
            }
        }

        let split = match (raw.get("split.h"), raw.get("split.k")) {
            (None, None) => None,
            (Some(h), Some(k)) => {
                let cfg = SplitConfig::new(parse_u64(h)? as u32, parse_u64(k)? as u32)
                    .map_err(|err| SimError::config(h.line, err.to_string()))?;
                Some(cfg)
            }
            (Some(e), None) | (None, Some(e)) => {
                return Err(SimError::config(
                    e.line,
                    "`split.h` and `split.k` go together",
                ));
            }
        };

        let mut expectations = Vec::new();
        for (metric, e) in raw.section("expect") {
            let known = zclaim_core::protocol::Metrics::default()
                .csv()
                .lines()
                .skip(1)
                .any(|l| l.split(',').next() == Some(metric))
                || EXTRA_METRICS.contains(&metric);
            if !known {
                return Err(SimError::config(
                    e.line,
                    format!("unknown metric `{metric}`"),
                ));
            }
            let (cmp, rest) = if let Some(r) = e.value.strip_prefix(">=") {
                (Comparison::AtLeast, r)
            } else if let Some(r) = e.value.strip_prefix("<=") {
                (Comparison::AtMost, r)
            } else {
                (Comparison::Eq, e.value.as_str())
            };
            let value = parse_u64(&Entry {
                line: e.line,
                value: rest.trim().to_string(),
            })?;
            expectations.push(Expectation {
                metric: metric.to_string(),
                cmp,
                value,
                line: e.line,
            });
        }

        Ok(ScenarioConfig {
            name,
            seed,
            horizon,
            params,
            relay_k,
            honest_relayer,
            zcash,
            zc_block_interval,
            deltas,
            rates,
            users,
            vaults,
            issuers,
            redeemers,
            adversary,
            split,
            expectations,
        })
    }

    pub fn bridge_config(&self) -> BridgeConfig {
        BridgeConfig {
            params: self.params,
            relay_k: self.relay_k,
            zcash: self.zcash,
            zc_block_interval: self.zc_block_interval,
            deltas: self.deltas,
            honest_relayer: self.honest_relayer,
            seed: self.seed,
            ..Default::default()
        }
    }
}
