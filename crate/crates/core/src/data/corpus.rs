use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const ITEMS_FILE: &str = "items.tsv";

/// Item descriptions keyed by item id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemCorpus {
    texts: BTreeMap<usize, String>,
}

impl ItemCorpus {
    pub fn new(texts: BTreeMap<usize, String>) -> Self {
        ItemCorpus { texts }
    }

    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut texts = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, desc) = line.split_once('\t').unwrap_or((line, ""));
            let id: usize = id.trim().parse().map_err(|_| {
                Error::parse(origin, lineno + 1, format!("expected an item id, found `{id}`"))
            })?;
            if texts.insert(id, desc.trim_end().to_string()).is_some() {
                return Err(Error::parse(origin, lineno + 1, format!("duplicate item id {id}")));
            }
        }
        Ok(ItemCorpus { texts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    /// Description of `item`, empty if absent.
    pub fn text(&self, item: usize) -> &str {
        self.texts.get(&item).map_or("", String::as_str)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn max_id(&self) -> Option<usize> {
        self.texts.keys().next_back().copied()
    }

    /// Ids whose description is empty.
    pub fn empty_ids(&self) -> Vec<usize> {
        self.texts
            .iter()
            .filter(|(_, t)| t.trim().is_empty())
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.texts.iter().map(|(&i, t)| (i, t.as_str()))
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for (id, t) in &self.texts {
            let _ = writeln!(out, "{id}\t{t}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.format()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_flags_empty() {
        let c = ItemCorpus::parse_str("0\tred fox\n2\t\n", Path::new("items.tsv")).unwrap();
        assert_eq!(c.text(0), "red fox");
        assert_eq!(c.text(1), "");
        assert_eq!(c.empty_ids(), vec![2]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(ItemCorpus::parse_str("0\ta\n0\tb\n", Path::new("items.tsv")).is_err());
    }
}
