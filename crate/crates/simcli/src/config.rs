//! Flat `key = value` scenario files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use dotted
//! sections (`vault.v0.collateral`). Integers may contain `_`, rationals
//! are written `num/den`.

use std::collections::BTreeMap;

use zclaim_core::amount::{Amount, Fraction};

use crate::SimError;

/// A value together with the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                SimError::parse(line, format!("expected `key = value`, found `{body}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.split('.').any(str::is_empty) {
                return Err(SimError::parse(line, format!("malformed key `{key}`")));
            }
            if !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
            {
                return Err(SimError::parse(
                    line,
                    format!("key `{key}` has characters outside [A-Za-z0-9._-]"),
                ));
            }
            if value.is_empty() {
                return Err(SimError::parse(line, format!("`{key}` has no value")));
            }
            let entry = Entry {
                line,
                value: value.to_string(),
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(SimError::parse(
                    line,
                    format!("`{key}` already set on line {}", prev.line),
                ));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a Entry)> + 'a {
        self.entries.iter().filter_map(move |(k, e)| {
            k.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, e))
        })
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, SimError> {
        self.get(key).map_or(Ok(default), parse_u64)
    }

    pub fn amount_or(&self, key: &str, default: Amount) -> Result<Amount, SimError> {
        self.get(key)
            .map_or(Ok(default), |e| parse_u64(e).map(Amount))
    }

    pub fn fraction_or(&self, key: &str, default: Fraction) -> Result<Fraction, SimError> {
        self.get(key).map_or(Ok(default), parse_fraction)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, SimError> {
        self.get(key).map_or(Ok(default), parse_bool)
    }
}

pub fn parse_u64(e: &Entry) -> Result<u64, SimError> {
    e.value.replace('_', "").parse().map_err(|_| {
        SimError::parse(
            e.line,
            format!("`{}` is not a non-negative integer", e.value),
        )
    })
}

pub fn parse_fraction(e: &Entry) -> Result<Fraction, SimError> {
    let bad = || SimError::parse(e.line, format!("`{}` is not a rational `num/den`", e.value));
    let (n, d) = e.value.split_once('/').unwrap_or((&e.value, "1"));
    let n: u64 = n.trim().replace('_', "").parse().map_err(|_| bad())?;
    let d: u64 = d.trim().replace('_', "").parse().map_err(|_| bad())?;
    Fraction::new(n, d).map_err(|_| bad())
}

pub fn parse_f64(e: &Entry) -> Result<f64, SimError> {
    let bad = || SimError::parse(e.line, format!("`{}` is not a probability", e.value));
    let p = match e.value.split_once('/') {
        Some(_) => {
            let f = parse_fraction(e)?;
            f.num() as f64 / f.den() as f64
        }
        None => e.value.parse::<f64>().map_err(|_| bad())?,
    };
    if (0.0..1.0).contains(&p) {
        Ok(p)
    } else {
        Err(bad())
    }
}

pub fn parse_bool(e: &Entry) -> Result<bool, SimError> {
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(SimError::parse(
            e.line,
            format!("`{other}` is not a boolean"),
        )),
    }
}
