//! `key=value` parameters from a config file and the command line.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Marker for errors that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

#[derive(Debug, Default)]
pub struct Params {
    raw: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

fn split_pair(item: &str) -> Result<(String, String)> {
    let (k, v) = item.split_once('=').ok_or_else(|| usage(format!("expected key=value, got {item:?}")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(usage(format!("empty key in {item:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Parses a number, accepting fractions `a/b`, `inf` and multiples of pi such as `4pi`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || usage(format!("cannot parse {s:?} as a number"));
    if let Some((a, b)) = s.split_once('/') {
        let b = parse_number(b)?;
        if b == 0.0 {
            return Err(bad());
        }
        return Ok(parse_number(a)? / b);
    }
    if let Some(m) = s.strip_suffix("pi") {
        return Ok(match m {
            "" => PI,
            "-" => -PI,
            m => m.parse::<f64>().map_err(|_| bad())? * PI,
        });
    }
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse::<f64>().map_err(|_| bad()),
    }
}

impl Params {
    /// Config-file entries first, command-line entries override them.
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(|e| usage(format!("{e:#}")))?;
            for line in text.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if !line.is_empty() {
                    let (k, v) = split_pair(line)?;
                    raw.insert(k, v);
                }
            }
        }
        for item in overrides {
            let (k, v) = split_pair(item)?;
            raw.insert(k, v);
        }
        Ok(Self { raw, resolved: RefCell::default() })
    }

    pub fn set_default(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.raw.insert(key.to_string(), v);
        }
    }

    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self.raw.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
        if !unknown.is_empty() {
            bail!(UsageError(format!("unknown parameter(s) {}; allowed: {}", unknown.join(", "), allowed.join(", "))));
        }
        Ok(())
    }

    /// Effective values of every parameter read so far, defaults included.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    fn take(&self, key: &str, default: &str) -> String {
        let v = self.raw.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        v
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.take(key, default)
    }

    pub fn required(&self, key: &str) -> Result<String> {
        if !self.raw.contains_key(key) {
            return Err(usage(format!("missing required parameter {key}")));
        }
        Ok(self.take(key, ""))
    }

    pub fn number(&self, key: &str, default: &str) -> Result<f64> {
        parse_number(&self.take(key, default)).map_err(|e| usage(format!("{key}: {e}")))
    }

    pub fn count(&self, key: &str, default: &str) -> Result<usize> {
        let v = self.take(key, default);
        v.parse::<usize>().map_err(|_| usage(format!("{key}: {v:?} is not a nonnegative integer")))
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.take(key, if default { "true" } else { "false" }).as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(usage(format!("{key}: {other:?} is not a boolean"))),
        }
    }

    pub fn numbers(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        let v = self.take(key, default);
        v.split(',').map(|x| parse_number(x).map_err(|e| usage(format!("{key}: {e}")))).collect()
    }

    pub fn counts(&self, key: &str, default: &str) -> Result<Vec<usize>> {
        let v = self.take(key, default);
        v.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| usage(format!("{key}: {x:?} is not an integer"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_fractions_and_pi() {
        assert_eq!(parse_number("3/4").unwrap(), 0.75);
        assert_eq!(parse_number("-1/8").unwrap(), -0.125);
        assert_eq!(parse_number("2pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("inf").unwrap(), f64::INFINITY);
        assert!(parse_number("x").is_err());
        assert!(parse_number("1/0").is_err());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\ns = 1/4\nr=1 # trailing\n").unwrap();
        let p = Params::load(Some(&path), &["r=2".to_string()]).unwrap();
        assert_eq!(p.number("s", "0").unwrap(), 0.25);
        assert_eq!(p.number("r", "0").unwrap(), 2.0);
        assert_eq!(p.count("n", "64").unwrap(), 64);
        assert_eq!(p.resolved().get("n").map(String::as_str), Some("64"));
        assert!(p.reject_unknown(&["s", "r"]).is_ok());
        let err = p.reject_unknown(&["s"]).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(Params::load(None, &["novalue".to_string()]).is_err());
    }
}
