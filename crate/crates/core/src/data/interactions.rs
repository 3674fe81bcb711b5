//! Per-user interaction lists and their train/valid/test/cold-start splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const COLD_HISTORY_FILE: &str = "cold_history.txt";
pub const COLD_TEST_FILE: &str = "cold_test.txt";

/// Which held-out list an evaluation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Valid,
    Test,
    ColdStart,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Valid => "valid",
            Split::Test => "test",
            Split::ColdStart => "cold_start",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "cold_start" | "cold-start" => Ok(Split::ColdStart),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One parsed split file: sparse map from user id to sorted item ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitFile {
    pub lists: BTreeMap<usize, Vec<usize>>,
    pub duplicates_collapsed: usize,
}

impl SplitFile {
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut lists: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut fields = line.split([' ', '\t']).filter(|f| !f.is_empty());
            let Some(user) = fields.next() else { continue };
            let user = parse_id(user, origin, lineno + 1)?;
            let entry = lists.entry(user).or_default();
            for f in fields {
                entry.push(parse_id(f, origin, lineno + 1)?);
            }
        }
        let mut duplicates_collapsed = 0;
        for items in lists.values_mut() {
            items.sort_unstable();
            let before = items.len();
            items.dedup();
            duplicates_collapsed += before - items.len();
        }
        Ok(SplitFile {
            lists,
            duplicates_collapsed,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    fn max_user(&self) -> Option<usize> {
        self.lists.keys().next_back().copied()
    }

    fn max_item(&self) -> Option<usize> {
        self.lists.values().filter_map(|v| v.last().copied()).max()
    }
}

fn parse_id(field: &str, origin: &Path, line: usize) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::parse(origin, line, format!("expected a non-negative integer id, found `{field}`")))
}

/// Per-user lists are dense vectors indexed by user id; absent users have
/// empty lists.
pub type UserLists = Vec<Vec<usize>>;

/// Cold-start users: held-out history used to build the representation and
/// the items to predict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColdStart {
    pub history: UserLists,
    pub test: UserLists,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionStore {
    num_users: usize,
    num_items: usize,
    train: UserLists,
    valid: Option<UserLists>,
    test: Option<UserLists>,
    cold: Option<ColdStart>,
    duplicates_collapsed: usize,
}

/// Raw split inputs for [`InteractionStore::from_splits`].
#[derive(Clone, Debug, Default)]
pub struct SplitSet {
    pub train: SplitFile,
    pub valid: Option<SplitFile>,
    pub test: Option<SplitFile>,
    pub cold_history: Option<SplitFile>,
    pub cold_test: Option<SplitFile>,
}

impl InteractionStore {
    /// Validates and densifies a set of splits. `min_items` widens the item
    /// catalog beyond the largest interacted id (e.g. items only present in
    /// the corpus or the KG).
    pub fn from_splits(splits: SplitSet, min_items: usize) -> Result<Self> {
        if splits.cold_history.is_some() != splits.cold_test.is_some() {
            return Err(Error::Invalid(
                "cold-start history and test files must be supplied together".into(),
            ));
        }
        let all: Vec<&SplitFile> = std::iter::once(&splits.train)
            .chain(splits.valid.iter())
            .chain(splits.test.iter())
            .chain(splits.cold_history.iter())
            .chain(splits.cold_test.iter())
            .collect();
        let num_users = all.iter().filter_map(|s| s.max_user()).max().map_or(0, |m| m + 1);
        let num_items = all
            .iter()
            .filter_map(|s| s.max_item())
            .max()
            .map_or(0, |m| m + 1)
            .max(min_items);
        let duplicates_collapsed = all.iter().map(|s| s.duplicates_collapsed).sum();

        let mut seen = vec![false; num_users];
        for s in &all {
            for &u in s.lists.keys() {
                seen[u] = true;
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::NonDenseUsers(u));
        }

        let densify = |s: &SplitFile| -> UserLists {
            let mut out = vec![Vec::new(); num_users];
            for (&u, items) in &s.lists {
                out[u] = items.clone();
            }
            out
        };
        let store = InteractionStore {
            num_users,
            num_items,
            train: densify(&splits.train),
            valid: splits.valid.as_ref().map(densify),
            test: splits.test.as_ref().map(densify),
            cold: match (&splits.cold_history, &splits.cold_test) {
                (Some(h), Some(t)) => Some(ColdStart {
                    history: densify(h),
                    test: densify(t),
                }),
                _ => None,
            },
            duplicates_collapsed,
        };
        store.validate()?;
        Ok(store)
    }

    /// Builds a store directly from dense lists, sorting and deduplicating.
    pub fn from_lists(
        num_items: usize,
        train: UserLists,
        valid: Option<UserLists>,
        test: Option<UserLists>,
        cold: Option<ColdStart>,
    ) -> Result<Self> {
        let to_split = |lists: &UserLists| SplitFile {
            lists: lists
                .iter()
                .enumerate()
                .filter(|(_, l)| !l.is_empty())
                .map(|(u, l)| {
                    let mut l = l.clone();
                    l.sort_unstable();
                    l.dedup();
                    (u, l)
                })
                .collect(),
            duplicates_collapsed: 0,
        };
        let mut store = Self::from_splits(
            SplitSet {
                train: to_split(&train),
                valid: valid.as_ref().map(to_split),
                test: test.as_ref().map(to_split),
                cold_history: cold.as_ref().map(|c| to_split(&c.history)),
                cold_test: cold.as_ref().map(|c| to_split(&c.test)),
            },
            num_items,
        )?;
        // Users with all-empty lists were dropped by the sparse view; restore
        // the caller's user count.
        let n = train.len();
        if n > store.num_users {
            store.num_users = n;
            store.train.resize(n, Vec::new());
            for l in [&mut store.valid, &mut store.test].into_iter().flatten() {
                l.resize(n, Vec::new());
            }
            if let Some(c) = &mut store.cold {
                c.history.resize(n, Vec::new());
                c.test.resize(n, Vec::new());
            }
        }
        Ok(store)
    }

    /// Reads a single `user item*` file as the train split.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_splits(
            SplitSet {
                train: SplitFile::read(path)?,
                ..SplitSet::default()
            },
            0,
        )
    }

    /// Reads the split files of a dataset directory. `train.txt` is required,
    /// the others are optional.
    pub fn load_dir(dir: &Path, min_items: usize) -> Result<Self> {
        let optional = |name: &str| -> Result<Option<SplitFile>> {
            let p = dir.join(name);
            if p.exists() {
                SplitFile::read(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        Self::from_splits(
            SplitSet {
                train: SplitFile::read(&dir.join(TRAIN_FILE))?,
                valid: optional(VALID_FILE)?,
                test: optional(TEST_FILE)?,
                cold_history: optional(COLD_HISTORY_FILE)?,
                cold_test: optional(COLD_TEST_FILE)?,
            },
            min_items,
        )
    }

    fn validate(&self) -> Result<()> {
        let named: Vec<(&'static str, &UserLists)> = std::iter::once(("train", &self.train))
            .chain(self.valid.as_ref().map(|v| ("valid", v)))
            .chain(self.test.as_ref().map(|v| ("test", v)))
            .collect();
        for (a_idx, (a_name, a)) in named.iter().enumerate() {
            for (b_name, b) in named.iter().skip(a_idx + 1) {
                for u in 0..self.num_users {
                    if let Some(item) = first_common(&a[u], &b[u]) {
                        return Err(Error::SplitOverlap {
                            user: u,
                            item,
                            first: a_name,
                            second: b_name,
                        });
                    }
                }
            }
        }
        if let Some(cold) = &self.cold {
            for u in 0..self.num_users {
                if cold.history[u].is_empty() && cold.test[u].is_empty() {
                    continue;
                }
                for (name, lists) in &named {
                    if !lists[u].is_empty() {
                        return Err(Error::ColdStartLeak { user: u, split: name });
                    }
                }
                if let Some(item) = first_common(&cold.history[u], &cold.test[u]) {
                    return Err(Error::SplitOverlap {
                        user: u,
                        item,
                        first: "cold_history",
                        second: "cold_test",
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates_collapsed
    }

    pub fn train(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    pub fn train_lists(&self) -> &UserLists {
        &self.train
    }

    pub fn valid_lists(&self) -> Option<&UserLists> {
        self.valid.as_ref()
    }

    pub fn test_lists(&self) -> Option<&UserLists> {
        self.test.as_ref()
    }

    pub fn cold_start(&self) -> Option<&ColdStart> {
        self.cold.as_ref()
    }

    /// Held-out lists for a split, or [`Error::SplitAbsent`].
    pub fn held_out(&self, split: Split) -> Result<&UserLists> {
        match split {
            Split::Valid => self.valid.as_ref().ok_or(Error::SplitAbsent("valid")),
            Split::Test => self.test.as_ref().ok_or(Error::SplitAbsent("test")),
            Split::ColdStart => self
                .cold
                .as_ref()
                .map(|c| &c.test)
                .ok_or(Error::SplitAbsent("cold_start")),
        }
    }

    /// All `(user, item)` train pairs in user-major order.
    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
            .collect()
    }

    pub fn num_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    /// Total interactions over every split present.
    pub fn num_interactions(&self) -> usize {
        let count = |l: &UserLists| l.iter().map(Vec::len).sum::<usize>();
        count(&self.train)
            + self.valid.as_ref().map_or(0, count)
            + self.test.as_ref().map_or(0, count)
            + self
                .cold
                .as_ref()
                .map_or(0, |c| count(&c.history) + count(&c.test))
    }

    /// Train interaction count per item.
    pub fn item_train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for items in &self.train {
            for &i in items {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Users with at least one train item.
    pub fn trainable_users(&self) -> Vec<usize> {
        (0..self.num_users).filter(|&u| !self.train[u].is_empty()).collect()
    }

    /// Writes every present split into `dir` using the standard file names.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_lists(&dir.join(TRAIN_FILE), &self.train)?;
        if let Some(v) = &self.valid {
            write_lists(&dir.join(VALID_FILE), v)?;
        }
        if let Some(t) = &self.test {
            write_lists(&dir.join(TEST_FILE), t)?;
        }
        if let Some(c) = &self.cold {
            write_lists(&dir.join(COLD_HISTORY_FILE), &c.history)?;
            write_lists(&dir.join(COLD_TEST_FILE), &c.test)?;
        }
        Ok(())
    }
}

fn first_common(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return Some(a[i]),
        }
    }
    None
}

/// Renders lists as `user item item ...` lines, skipping empty users.
pub fn format_lists(lists: &UserLists) -> String {
    let mut out = String::new();
    for (u, items) in lists.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let _ = write!(out, "{u}");
        for i in items {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    out
}

pub fn write_lists(path: &Path, lists: &UserLists) -> Result<()> {
    fs::write(path, format_lists(lists)).map_err(|e| Error::io(path, e))
}
