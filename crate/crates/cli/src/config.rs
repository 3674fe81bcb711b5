use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Resolves settings from explicit flags over a key=value file over
/// defaults, remembering every resolved value for `run.meta`.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

pub fn parse_key_values(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", origin.display(), n + 1);
        };
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
                parse_key_values(&text, p)?
            }
            None => BTreeMap::new(),
        };
        Ok(Resolver {
            file,
            resolved: Vec::new(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}: cannot parse {v:?}: {e}")),
            None => Ok(None),
        }
    }

    /// Flag, then config file, then `default`.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Self::get`] without a default.
    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn get_bool(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.record(key, &v);
        Ok(v)
    }

    pub fn record(&mut self, key: &str, value: &dyn Display) {
        self.resolved.retain(|(k, _)| k != key);
        self.resolved.push((key.to_string(), value.to_string()));
    }

    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// Fails on config keys that no setting of this command consumed.
    pub fn check_unused(&self, allowed_extra: &[&str]) -> Result<()> {
        for key in self.file.keys() {
            let used = self.resolved.iter().any(|(k, _)| k == key);
            if !used && !allowed_extra.contains(&key.as_str()) {
                bail!("unknown config key {key}");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut r = Resolver {
            file: parse_key_values("epochs=5\nlr = 0.5\n# note\n", Path::new("cfg")).unwrap(),
            resolved: Vec::new(),
        };
        assert_eq!(r.get("epochs", Some(9usize), 1).unwrap(), 9);
        assert_eq!(r.get("lr", None, 1.0f64).unwrap(), 0.5);
        assert_eq!(r.get("h", None, 64usize).unwrap(), 64);
        assert!(r.check_unused(&[]).is_ok());
    }

    #[test]
    fn bad_lines_and_keys() {
        assert!(parse_key_values("epochs", Path::new("cfg")).is_err());
        let r = Resolver {
            file: parse_key_values("bogus=1", Path::new("cfg")).unwrap(),
            resolved: Vec::new(),
        };
        assert!(r.check_unused(&[]).is_err());
    }
}
