//! `key = value` configuration with flag overrides.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;

/// Bad input from the user; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Resolved settings for one subcommand. Values stay strings until a
/// command asks for them with a type.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key = value, got {raw:?}", i + 1));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Config {
    /// File values first, then flags on top. Keys outside `allowed` are
    /// rejected.
    pub fn resolve(
        file: Option<&Path>,
        flags: impl IntoIterator<Item = (String, String)>,
        allowed: &[&str],
    ) -> anyhow::Result<Config> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in flags {
            values.insert(k, v);
        }
        if let Some(k) = values.keys().find(|k| !allowed.contains(&k.as_str())) {
            return usage(format!("unknown key: {k}"));
        }
        Ok(Config { values })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Config {
        Config { values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Records a default so the report shows the value actually used.
    fn fill(&mut self, key: &str, default: &str) -> String {
        self.values.entry(key.to_string()).or_insert_with(|| default.to_string()).clone()
    }

    fn raw(&mut self, key: &str, default: Option<&str>) -> anyhow::Result<String> {
        match (self.values.get(key), default) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(d)) => Ok(self.fill(key, d)),
            (None, None) => usage(format!("missing required key: {key}")),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn string(&mut self, key: &str, default: &str) -> anyhow::Result<String> {
        self.raw(key, Some(default))
    }

    pub fn f64(&mut self, key: &str, default: Option<&str>) -> anyhow::Result<f64> {
        let v = self.raw(key, default)?;
        parse_f64(&v).ok_or_else(|| UsageError(format!("invalid value for {key}: {v:?}")).into())
    }

    pub fn positive(&mut self, key: &str, default: Option<&str>) -> anyhow::Result<f64> {
        let x = self.f64(key, default)?;
        if !(x > 0.0) {
            return usage(format!("{key} must be positive, got {x}"));
        }
        Ok(x)
    }

    pub fn u64(&mut self, key: &str, default: &str) -> anyhow::Result<u64> {
        let v = self.raw(key, Some(default))?;
        v.parse().map_err(|_| UsageError(format!("invalid value for {key}: {v:?}")).into())
    }

    pub fn count(&mut self, key: &str, default: &str) -> anyhow::Result<usize> {
        let v = self.raw(key, Some(default))?;
        match parse_f64(&v) {
            Some(x) if x >= 1.0 && x.fract() == 0.0 => Ok(x as usize),
            _ => usage(format!("{key} must be a positive integer, got {v:?}")),
        }
    }

    pub fn f64_list(&mut self, key: &str, default: &str) -> anyhow::Result<Vec<f64>> {
        let v = self.raw(key, Some(default))?;
        let xs: Option<Vec<f64>> = split_list(&v).map(parse_f64).collect();
        match xs {
            Some(xs) if !xs.is_empty() => Ok(xs),
            _ => usage(format!("invalid list for {key}: {v:?}")),
        }
    }

    pub fn count_list(&mut self, key: &str, default: &str) -> anyhow::Result<Vec<usize>> {
        let xs = self.f64_list(key, default)?;
        if xs.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
            return usage(format!("{key} must list positive integers"));
        }
        Ok(xs.into_iter().map(|x| x as usize).collect())
    }

    pub fn complex_list(&mut self, key: &str, default: &str) -> anyhow::Result<Vec<Complex64>> {
        let v = self.raw(key, Some(default))?;
        let zs: Option<Vec<Complex64>> = split_list(&v).map(parse_complex).collect();
        match zs {
            Some(zs) if !zs.is_empty() => Ok(zs),
            _ => usage(format!("invalid complex list for {key}: {v:?}")),
        }
    }

    pub fn choice(&mut self, key: &str, default: &str, options: &[&str]) -> anyhow::Result<String> {
        let v = self.raw(key, Some(default))?;
        if !options.contains(&v.as_str()) {
            return usage(format!("{key} must be one of {}, got {v:?}", options.join("|")));
        }
        Ok(v)
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split([',', ' ']).map(str::trim).filter(|s| !s.is_empty())
}

/// Accepts plain decimals and simple fractions like `8/3`.
pub fn parse_f64(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let (n, d): (f64, f64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (d != 0.0).then_some(n / d);
    }
    s.parse().ok().filter(|x: &f64| x.is_finite())
}

/// `x`, `yi`, `x+yi`, `x-yi`, with `i` alone meaning one.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = s.strip_suffix('i') else {
        return parse_f64(&s).map(|x| Complex64::new(x, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (parse_f64(&body[..k])?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => parse_f64(t)?,
    };
    Some(Complex64::new(re, im))
}
