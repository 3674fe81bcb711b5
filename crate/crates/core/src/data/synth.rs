//! Deterministic clustered datasets for desk-scale runs.
//!
//! Users and items are split into clusters. A user trains mostly on items of
//! its own cluster, with item popularity inside a cluster following a Zipf
//! profile. Each item cluster owns a disjoint set of attribute entities in
//! the KG and a private token pool for item descriptions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ColdStart, Dataset, InteractionStore, ItemCorpus, KnowledgeGraph, UserLists};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub num_clusters: usize,
    /// Attribute entities owned by each item cluster.
    pub attrs_per_cluster: usize,
    /// KG links per item.
    pub attrs_per_item: usize,
    pub num_relations_raw: usize,
    /// Expected fraction of a cluster's items a user trains on.
    pub density: f64,
    /// Probability an interaction is replaced by an out-of-cluster item.
    pub noise: f64,
    /// Fraction of each user's interactions held out for valid + test.
    pub heldout_fraction: f64,
    /// Fraction of users moved to the cold-start set.
    pub cold_start_fraction: f64,
    /// Zipf exponent of within-cluster popularity.
    pub popularity_skew: f64,
    pub tokens_per_item: usize,
    pub cluster_vocab: usize,
    pub shared_vocab: usize,
    /// Probability a description token comes from the cluster pool.
    pub cluster_token_ratio: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_users: 200,
            num_items: 300,
            num_clusters: 4,
            attrs_per_cluster: 6,
            attrs_per_item: 2,
            num_relations_raw: 2,
            density: 0.1,
            noise: 0.1,
            heldout_fraction: 0.2,
            cold_start_fraction: 0.03,
            popularity_skew: 1.0,
            tokens_per_item: 12,
            cluster_vocab: 24,
            shared_vocab: 40,
            cluster_token_ratio: 0.6,
        }
    }
}

/// Bookkeeping from generation, for cross-checking loaders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
    pub cold_users: Vec<usize>,
    pub num_entities: usize,
    pub num_triplets: usize,
    pub num_interactions: usize,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("infeasible synthetic spec: {m}")));
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(&format!("density {} not in (0, 1]", self.density));
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_users || self.num_clusters > self.num_items {
            return bad("cluster count must be in [1, min(users, items)]");
        }
        if self.num_clusters == self.num_items && self.noise > 0.0 {
            return bad("noise needs items outside each cluster");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("cold_start_fraction", self.cold_start_fraction),
            ("cluster_token_ratio", self.cluster_token_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} {v} not in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad("heldout_fraction must be in [0, 1)");
        }
        if self.attrs_per_cluster == 0 || self.num_relations_raw == 0 {
            return bad("need at least one attribute per cluster and one relation");
        }
        if self.attrs_per_item > self.attrs_per_cluster {
            return bad("attrs_per_item exceeds attrs_per_cluster");
        }
        if self.tokens_per_item > 0 && self.cluster_vocab == 0 {
            return bad("cluster_vocab must be positive");
        }
        if self.cluster_token_ratio < 1.0 && self.tokens_per_item > 0 && self.shared_vocab == 0 {
            return bad("shared_vocab must be positive");
        }
        Ok(())
    }

    pub fn item_cluster(&self, item: usize) -> usize {
        item * self.num_clusters / self.num_items
    }

    pub fn user_cluster(&self, user: usize) -> usize {
        user % self.num_clusters
    }
}

/// Weighted draw without replacement by repeated rejection.
fn draw_distinct<R: Rng>(
    rng: &mut R,
    pool: &[usize],
    cumulative: &[f64],
    taken: &BTreeSet<usize>,
) -> Option<usize> {
    let available = pool.iter().filter(|i| !taken.contains(i)).count();
    if available == 0 {
        return None;
    }
    let total = *cumulative.last()?;
    for _ in 0..64 {
        let x = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= x).min(pool.len() - 1);
        if !taken.contains(&pool[idx]) {
            return Some(pool[idx]);
        }
    }
    let free: Vec<usize> = pool.iter().copied().filter(|i| !taken.contains(i)).collect();
    Some(free[rng.random_range(0..free.len())])
}

pub fn make_synthetic_dataset(spec: &SynthSpec, seed: u64) -> Result<(Dataset, SynthSummary)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = spec.num_items;
    let n_clusters = spec.num_clusters;

    let item_cluster: Vec<usize> = (0..n_items).map(|i| spec.item_cluster(i)).collect();
    let user_cluster: Vec<usize> = (0..spec.num_users).map(|u| spec.user_cluster(u)).collect();

    // Popularity: a random within-cluster rank gets weight 1/(rank+1)^s.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &c) in item_cluster.iter().enumerate() {
        pools[c].push(i);
    }
    let mut cumulative: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
        let mut acc = 0.0;
        cumulative.push(
            (0..pool.len())
                .map(|rank| {
                    acc += 1.0 / ((rank + 1) as f64).powf(spec.popularity_skew);
                    acc
                })
                .collect(),
        );
    }

    let pick = |rng: &mut ChaCha8Rng, c: usize, taken: &BTreeSet<usize>| -> Option<usize> {
        if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
            let outside: Vec<usize> = (0..n_items)
                .filter(|&i| item_cluster[i] != c && !taken.contains(&i))
                .collect();
            if !outside.is_empty() {
                return Some(outside[rng.random_range(0..outside.len())]);
            }
        }
        draw_distinct(rng, &pools[c], &cumulative[c], taken)
    };

    let mut train: UserLists = vec![Vec::new(); spec.num_users];
    let mut valid: UserLists = vec![Vec::new(); spec.num_users];
    let mut test: UserLists = vec![Vec::new(); spec.num_users];
    for u in 0..spec.num_users {
        let c = user_cluster[u];
        let cluster_size = pools[c].len();
        let n_train = (0..cluster_size)
            .filter(|_| rng.random::<f64>() < spec.density)
            .count()
            .max(1);
        let n_hold = if spec.heldout_fraction > 0.0 {
            ((n_train as f64) * spec.heldout_fraction / (1.0 - spec.heldout_fraction))
                .round()
                .max(1.0) as usize
        } else {
            0
        };
        let mut taken = BTreeSet::new();
        let mut order = Vec::with_capacity(n_train + n_hold);
        for _ in 0..n_train + n_hold {
            match pick(&mut rng, c, &taken) {
                Some(i) => {
                    taken.insert(i);
                    order.push(i);
                }
                None => break,
            }
        }
        let n_train = n_train.min(order.len());
        let held = &order[n_train..];
        let n_valid = held.len() / 2;
        train[u] = order[..n_train].to_vec();
        valid[u] = held[..n_valid].to_vec();
        test[u] = held[n_valid..].to_vec();
        for l in [&mut train[u], &mut valid[u], &mut test[u]] {
            l.sort_unstable();
        }
    }

    let n_cold = (spec.cold_start_fraction * spec.num_users as f64).round() as usize;
    let mut user_order: Vec<usize> = (0..spec.num_users).collect();
    user_order.shuffle(&mut rng);
    let mut cold_users: Vec<usize> = user_order[..n_cold.min(spec.num_users.saturating_sub(1))].to_vec();
    cold_users.sort_unstable();
    let cold = (!cold_users.is_empty()).then(|| {
        let mut history = vec![Vec::new(); spec.num_users];
        let mut cold_test = vec![Vec::new(); spec.num_users];
        for &u in &cold_users {
            history[u] = std::mem::take(&mut train[u]);
            let mut t: Vec<usize> = std::mem::take(&mut valid[u]);
            t.append(&mut test[u]);
            t.sort_unstable();
            cold_test[u] = t;
        }
        ColdStart {
            history,
            test: cold_test,
        }
    });

    // KG: items link to attributes of their own cluster.
    let attr_base = n_items;
    let num_entities = n_items + n_clusters * spec.attrs_per_cluster;
    let mut triplets = Vec::new();
    for (i, &c) in item_cluster.iter().enumerate() {
        let mut attrs: Vec<usize> = (0..spec.attrs_per_cluster).collect();
        attrs.shuffle(&mut rng);
        for &a in &attrs[..spec.attrs_per_item] {
            let r = rng.random_range(0..spec.num_relations_raw);
            triplets.push((i, r, attr_base + c * spec.attrs_per_cluster + a));
        }
    }
    let kg = KnowledgeGraph::from_triplets(num_entities, spec.num_relations_raw, triplets)?;

    let mut texts = BTreeMap::new();
    for (i, &c) in item_cluster.iter().enumerate() {
        let words: Vec<String> = (0..spec.tokens_per_item)
            .map(|_| {
                if rng.random::<f64>() < spec.cluster_token_ratio {
                    format!("c{c}tok{}", rng.random_range(0..spec.cluster_vocab))
                } else {
                    format!("common{}", rng.random_range(0..spec.shared_vocab))
                }
            })
            .collect();
        texts.insert(i, words.join(" "));
    }

    let interactions = InteractionStore::from_lists(n_items, train, Some(valid), Some(test), cold)?;
    let summary = SynthSummary {
        user_cluster,
        item_cluster,
        cold_users,
        num_entities,
        num_triplets: kg.triplets().len(),
        num_interactions: interactions.num_interactions(),
    };
    let dataset = Dataset::new(interactions, kg, ItemCorpus::new(texts))?;
    Ok((dataset, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_density_gives_expected_train_size() {
        let (ds, summary) = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
        let trainable = ds.interactions.trainable_users();
        let mean = ds.interactions.num_train_interactions() as f64 / trainable.len() as f64;
        // Binomial(75, 0.1) has mean 7.5.
        assert!((6.5..=8.5).contains(&mean), "mean train size {mean}");
        assert_eq!(summary.cold_users.len(), 6);
        assert_eq!(ds.kg.num_entities(), 300 + 4 * 6);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
        let b = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic_dataset(&SynthSpec::default(), 8).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let spec = SynthSpec {
            density: 1.5,
            ..SynthSpec::default()
        };
        assert!(make_synthetic_dataset(&spec, 7).is_err());
        let spec = SynthSpec {
            num_clusters: 500,
            ..SynthSpec::default()
        };
        assert!(make_synthetic_dataset(&spec, 7).is_err());
    }

    #[test]
    fn users_mostly_in_cluster() {
        let spec = SynthSpec::default();
        let (ds, summary) = make_synthetic_dataset(&spec, 3).unwrap();
        let (mut inside, mut total) = (0, 0);
        for (u, items) in ds.interactions.train_lists().iter().enumerate() {
            for &i in items {
                total += 1;
                inside += usize::from(summary.item_cluster[i] == summary.user_cluster[u]);
            }
        }
        assert!(inside as f64 / total as f64 > 0.8);
    }
}
