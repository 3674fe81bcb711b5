//! Full-catalog ranking and top-K metrics.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::data::{InteractionStore, KnowledgeGraph, Split};
use crate::error::{Error, Result};
use crate::model::{cold_start_user, full_embeddings, KmpnParams};
use crate::tensor::{dot, Matrix};

pub const DEFAULT_KS: [usize; 3] = [20, 60, 100];

/// Top-K ids; `exhausted` is set when fewer than K unmasked items exist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub exhausted: bool,
}

/// Ranks by descending score, ties by ascending id, skipping `mask`
/// (sorted ascending).
pub fn rank_by_scores(scores: &[f64], mask: &[usize], k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Config("K must be ≥ 1".into()));
    }
    let mut ids: Vec<usize> = (0..scores.len()).filter(|i| mask.binary_search(i).is_err()).collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let exhausted = ids.len() < k;
    if !exhausted && k < ids.len() {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_unstable_by(cmp);
    Ok(RankedList { items: ids, exhausted })
}

/// Scores every item row against `user` and ranks.
pub fn rank_items(user: &[f64], items: &Matrix, mask: &[usize], k: usize) -> Result<RankedList> {
    if user.len() != items.cols() {
        return Err(Error::shape("user embedding", items.cols(), user.len()));
    }
    let scores: Vec<f64> = items.iter_rows().map(|row| dot(user, row)).collect();
    rank_by_scores(&scores, mask, k)
}

fn hits(topk: &[usize], test: &[usize]) -> Result<usize> {
    if test.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    Ok(topk.iter().filter(|i| test.contains(i)).count())
}

/// `|topk ∩ test| / |test|`; `test` is treated as a set.
pub fn recall_at_k(topk: &[usize], test: &[usize]) -> Result<f64> {
    Ok(hits(topk, test)? as f64 / test.len() as f64)
}

pub fn hit_ratio_at_k(topk: &[usize], test: &[usize]) -> Result<f64> {
    Ok(if hits(topk, test)? > 0 { 1.0 } else { 0.0 })
}

/// Binary-relevance NDCG of the first `k` entries of `topk`.
pub fn ndcg_at_k(topk: &[usize], test: &[usize], k: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    let discount = |r: usize| 1.0 / ((r + 1) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(test.len())).map(discount).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub split: Split,
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub hit_ratio: Vec<f64>,
    pub users_evaluated: usize,
    /// Users with an empty held-out list for this split.
    pub users_skipped: usize,
}

impl MetricsReport {
    fn index(&self, k: usize) -> Option<usize> {
        self.ks.iter().position(|&x| x == k)
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.index(k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.index(k).map(|i| self.ndcg[i])
    }

    pub fn hit_ratio_at(&self, k: usize) -> Option<f64> {
        self.index(k).map(|i| self.hit_ratio[i])
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric\tK\tvalue")?;
        for (name, vals) in [("recall", &self.recall), ("ndcg", &self.ndcg), ("hit_ratio", &self.hit_ratio)] {
            for (k, v) in self.ks.iter().zip(vals.iter()) {
                writeln!(f, "{name}\t{k}\t{v:.6}")?;
            }
        }
        writeln!(f)?;
        writeln!(f, "split={}", self.split.name())?;
        writeln!(f, "users_evaluated={}", self.users_evaluated)?;
        writeln!(f, "users_skipped={}", self.users_skipped)?;
        for (name, vals) in [("recall", &self.recall), ("ndcg", &self.ndcg), ("hit_ratio", &self.hit_ratio)] {
            for (k, v) in self.ks.iter().zip(vals.iter()) {
                writeln!(f, "{name}@{k}={v}")?;
            }
        }
        Ok(())
    }
}

/// Per-user metrics at each K, in the order of `ks`.
fn user_metrics(user: &[f64], items: &Matrix, mask: &[usize], test: &[usize], ks: &[usize]) -> Result<Vec<[f64; 3]>> {
    let k_max = *ks.iter().max().expect("non-empty ks");
    let ranked = rank_items(user, items, mask, k_max)?;
    ks.iter()
        .map(|&k| {
            let top = &ranked.items[..k.min(ranked.items.len())];
            Ok([recall_at_k(top, test)?, ndcg_at_k(top, test, k)?, hit_ratio_at_k(top, test)?])
        })
        .collect()
}

/// Evaluates fixed user and item embeddings. Row `u` of `users` is the
/// embedding used for user `u` on this split.
pub fn evaluate_embeddings(
    users: &Matrix,
    items: &Matrix,
    interactions: &InteractionStore,
    split: Split,
    ks: &[usize],
) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("K values must be ≥ 1".into()));
    }
    if items.rows() != interactions.num_items() {
        return Err(Error::shape("item embeddings", interactions.num_items(), items.rows()));
    }
    let held_out = interactions.held_out(split)?;
    if users.rows() < held_out.len() {
        return Err(Error::shape("user embeddings", held_out.len(), users.rows()));
    }
    let masks = match split {
        Split::ColdStart => &interactions.cold_start().expect("cold split present").history,
        _ => interactions.train_lists(),
    };
    let evaluated: Vec<usize> = (0..held_out.len()).filter(|&u| !held_out[u].is_empty()).collect();
    let per_user: Vec<Vec<[f64; 3]>> = evaluated
        .par_iter()
        .map(|&u| user_metrics(users.row(u), items, &masks[u], &held_out[u], ks))
        .collect::<Result<_>>()?;
    let n = per_user.len();
    let mut sums = vec![[0.0; 3]; ks.len()];
    for user in &per_user {
        for (s, m) in sums.iter_mut().zip(user) {
            for c in 0..3 {
                s[c] += m[c];
            }
        }
    }
    let mean = |c: usize| -> Vec<f64> {
        sums.iter()
            .map(|s| if n == 0 { 0.0 } else { s[c] / n as f64 })
            .collect()
    };
    Ok(MetricsReport {
        split,
        ks: ks.to_vec(),
        recall: mean(0),
        ndcg: mean(1),
        hit_ratio: mean(2),
        users_evaluated: n,
        users_skipped: held_out.len() - n,
    })
}

/// User embeddings a trained model assigns for `split`: the trained users'
/// embeddings for valid/test, and history-only embeddings for cold-start.
pub fn kmpn_split_embeddings(
    params: &KmpnParams,
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    split: Split,
) -> Result<(Matrix, Matrix)> {
    let (users, items, entity, pref) = full_embeddings(params, graph, interactions)?;
    if split != Split::ColdStart {
        return Ok((users, items));
    }
    let cold = interactions.cold_start().ok_or(Error::SplitAbsent(split.name()))?;
    let mut out = Matrix::zeros(interactions.num_users(), params.dims.hidden);
    for (u, history) in cold.history.iter().enumerate() {
        if !history.is_empty() {
            out.row_mut(u).copy_from_slice(&cold_start_user(history, &entity, &pref)?);
        }
    }
    Ok((out, items))
}

pub fn evaluate_kmpn(
    params: &KmpnParams,
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    split: Split,
    ks: &[usize],
) -> Result<MetricsReport> {
    interactions.held_out(split)?;
    let (users, items) = kmpn_split_embeddings(params, graph, interactions, split)?;
    evaluate_embeddings(&users, &items, interactions, split, ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_examples() {
        let s = [0.1, 0.9, 0.5];
        assert_eq!(rank_by_scores(&s, &[], 2).unwrap().items, vec![1, 2]);
        assert_eq!(rank_by_scores(&s, &[1], 2).unwrap().items, vec![2, 0]);
        assert_eq!(rank_by_scores(&[0.0; 5], &[], 3).unwrap().items, vec![0, 1, 2]);
        let r = rank_by_scores(&s, &[0], 5).unwrap();
        assert!(r.exhausted);
        assert_eq!(r.items, vec![1, 2]);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(recall_at_k(&[1, 2, 3], &[2, 3, 8, 9]).unwrap(), 0.5);
        assert_eq!(recall_at_k(&[1], &[2]).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&[4, 1], &[4], 2).unwrap(), 1.0);
        assert!((ndcg_at_k(&[1, 4], &[4], 2).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(hit_ratio_at_k(&[1, 4], &[4]).unwrap(), 1.0);
        assert_eq!(hit_ratio_at_k(&[1, 5], &[4]).unwrap(), 0.0);
        assert!(recall_at_k(&[1], &[]).is_err());
        assert!(ndcg_at_k(&[1], &[], 1).is_err());
    }
}
