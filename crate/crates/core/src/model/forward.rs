//! Gated path graph convolution, preference composition and the
//! preference-attentive user aggregation.

use crate::data::{InteractionStore, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, sigmoid, softmax_in_place, Matrix};

use super::params::KmpnParams;

/// Message gate `σ(e_head · e_rel)`.
#[inline]
pub fn gate(head: &[f64], relation: &[f64]) -> f64 {
    sigmoid(dot(head, relation))
}

/// Dot-product rating.
#[inline]
pub fn score(user: &[f64], item: &[f64]) -> f64 {
    dot(user, item)
}

/// One convolution layer. Node `i` receives the mean over its out-edges
/// `(r, j)` of `γ_ij · (e_r ⊙ prev_j)`, with `γ_ij` gated on `prev_i`.
/// Isolated nodes output zero. Returns the layer output and the gate of
/// every edge in adjacency order.
pub fn conv_layer(prev: &Matrix, graph: &KnowledgeGraph, relation_emb: &Matrix) -> (Matrix, Vec<f64>) {
    let h = prev.cols();
    let mut out = Matrix::zeros(prev.rows(), h);
    let mut gates = Vec::with_capacity(graph.num_edges());
    for i in 0..graph.num_entities() {
        let degree = graph.degree(i);
        if degree == 0 {
            continue;
        }
        let head = prev.row(i);
        let inv = 1.0 / degree as f64;
        let row = out.row_mut(i);
        for (r, j) in graph.neighbors(i) {
            let rel = relation_emb.row(r);
            let g = gate(head, rel);
            gates.push(g);
            let w = g * inv;
            for ((o, &rv), &xv) in row.iter_mut().zip(rel).zip(prev.row(j)) {
                *o += w * rv * xv;
            }
        }
    }
    (out, gates)
}

/// Elementwise sum of the given layers.
pub fn aggregate_layers(layers: &[Matrix]) -> Result<Matrix> {
    let first = layers
        .first()
        .ok_or_else(|| Error::Invalid("aggregate_layers needs at least one layer".into()))?;
    let mut acc = first.clone();
    for m in &layers[1..] {
        acc.add_assign(m)?;
    }
    Ok(acc)
}

/// Cached entity-side activations.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityTrace {
    /// `e^(0) … e^(L)`.
    pub layers: Vec<Matrix>,
    /// `Σ_l e^(l)`.
    pub aggregated: Matrix,
    /// Per layer, the gate of each edge in adjacency order.
    pub gates: Vec<Vec<f64>>,
}

impl EntityTrace {
    /// Aggregated embedding after `l` layers, i.e. `Σ_{l' ≤ l} e^(l')`.
    pub fn prefix(&self, l: usize) -> Result<Matrix> {
        aggregate_layers(&self.layers[..=l])
    }
}

pub fn entity_forward(params: &KmpnParams, graph: &KnowledgeGraph) -> Result<EntityTrace> {
    if params.num_entities() != graph.num_entities() {
        return Err(Error::shape("entity_emb rows", graph.num_entities(), params.num_entities()));
    }
    if params.num_relations() != graph.num_relations() {
        return Err(Error::shape("relation_emb rows", graph.num_relations(), params.num_relations()));
    }
    let mut layers = Vec::with_capacity(params.dims.layers + 1);
    let mut gates = Vec::with_capacity(params.dims.layers);
    layers.push(params.entity_emb.clone());
    for l in 0..params.dims.layers {
        let (next, g) = conv_layer(&layers[l], graph, &params.relation_emb);
        layers.push(next);
        gates.push(g);
    }
    let aggregated = aggregate_layers(&layers)?;
    Ok(EntityTrace {
        layers,
        aggregated,
        gates,
    })
}

/// Softmax mixture weights `β` (`N_p × N_m`) and preference embeddings
/// `e_p = β · e_m` (`N_p × h`).
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceTrace {
    pub beta: Matrix,
    pub pref: Matrix,
}

pub fn preference_embeddings(params: &KmpnParams) -> Result<PreferenceTrace> {
    let mut beta = params.pref_logits.clone();
    for p in 0..beta.rows() {
        softmax_in_place(beta.row_mut(p));
    }
    let pref = beta.matmul(&params.meta_pref_emb)?;
    Ok(PreferenceTrace { beta, pref })
}

/// Cached user-side activations for a set of users.
#[derive(Clone, Debug, PartialEq)]
pub struct UserTrace {
    /// Users in row order.
    pub users: Vec<usize>,
    /// `n × N_p` attention over preferences.
    pub attention: Matrix,
    /// `n × h` attention-weighted preference `Σ_p α_p e_p`.
    pub mixed_pref: Matrix,
    /// `n × h` mean of the aggregated embeddings of each user's train items.
    pub history_mean: Matrix,
    /// Per layer, `n × h` user embeddings `e_u^(l)`.
    pub layers: Vec<Matrix>,
    /// `n × h` final user embeddings `Σ_l e_u^(l)`.
    pub aggregated: Matrix,
}

impl UserTrace {
    pub fn row_of(&self, user: usize) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }
}

fn mean_rows(source: &Matrix, items: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    let inv = 1.0 / items.len() as f64;
    for &i in items {
        axpy(inv, source.row(i), out);
    }
}

/// Builds user embeddings from train histories. `users` must be sorted and
/// unique. With preferences `e_p` and attention `α_p(u) = softmax_p(e_p·e_u)`,
/// `e_u^(l) = Σ_p α_p · mean_{i ∈ train(u)} (e_i^(l) ⊙ e_p)`.
pub fn user_forward(
    entity: &EntityTrace,
    pref: &PreferenceTrace,
    params: &KmpnParams,
    interactions: &InteractionStore,
    users: &[usize],
) -> Result<UserTrace> {
    let h = params.dims.hidden;
    let n_p = params.dims.n_pref;
    let n = users.len();
    let mut attention = Matrix::zeros(n, n_p);
    let mut mixed_pref = Matrix::zeros(n, h);
    let mut history_mean = Matrix::zeros(n, h);
    let mut layers = vec![Matrix::zeros(n, h); entity.layers.len()];
    let mut aggregated = Matrix::zeros(n, h);
    for (row, &u) in users.iter().enumerate() {
        if u >= params.num_users() {
            return Err(Error::Invalid(format!("user {u} ≥ user count {}", params.num_users())));
        }
        let history = interactions.train(u);
        if history.is_empty() {
            return Err(Error::Invalid(format!("user {u} has no train interactions")));
        }
        let query = params.user_emb.row(u);
        let att = attention.row_mut(row);
        for (p, a) in att.iter_mut().enumerate() {
            *a = dot(pref.pref.row(p), query);
        }
        softmax_in_place(att);
        let q = mixed_pref.row_mut(row);
        for p in 0..n_p {
            axpy(attention.get(row, p), pref.pref.row(p), q);
        }
        let q = mixed_pref.row(row).to_vec();
        let mut buf = vec![0.0; h];
        for (l, layer) in entity.layers.iter().enumerate() {
            mean_rows(layer, history, &mut buf);
            for ((o, &m), &qv) in layers[l].row_mut(row).iter_mut().zip(&buf).zip(&q) {
                *o = m * qv;
            }
        }
        mean_rows(&entity.aggregated, history, history_mean.row_mut(row));
        let agg = aggregated.row_mut(row);
        for layer in &layers {
            axpy(1.0, layer.row(row), agg);
        }
    }
    Ok(UserTrace {
        users: users.to_vec(),
        attention,
        mixed_pref,
        history_mean,
        layers,
        aggregated,
    })
}

/// Embedding for a user unseen in training: the user-aggregation formula
/// with uniform attention over preferences.
pub fn cold_start_user(history: &[usize], entity: &EntityTrace, pref: &PreferenceTrace) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::Invalid("cold-start user has an empty history".into()));
    }
    let h = entity.aggregated.cols();
    let n_p = pref.pref.rows();
    let mut q = vec![0.0; h];
    for p in 0..n_p {
        axpy(1.0 / n_p as f64, pref.pref.row(p), &mut q);
    }
    let mut out = vec![0.0; h];
    let mut buf = vec![0.0; h];
    for layer in &entity.layers {
        mean_rows(layer, history, &mut buf);
        for ((o, &m), &qv) in out.iter_mut().zip(&buf).zip(&q) {
            *o += m * qv;
        }
    }
    Ok(out)
}

/// A training triple `(user, positive item, negative item)`.
pub type Triple = (usize, usize, usize);

/// Full forward state for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub entity: EntityTrace,
    pub pref: PreferenceTrace,
    pub users: UserTrace,
}

impl ForwardTrace {
    pub fn user_embedding(&self, user: usize) -> Option<&[f64]> {
        self.users.row_of(user).map(|r| self.users.aggregated.row(r))
    }

    /// Final item embedding (items are entities `0..N_i`).
    pub fn item_embedding(&self, item: usize) -> &[f64] {
        self.entity.aggregated.row(item)
    }
}

/// Positive and negative scores per triple.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchScores {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

pub fn forward(
    params: &KmpnParams,
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    batch: &[Triple],
) -> Result<(ForwardTrace, BatchScores)> {
    for &(_, i, j) in batch {
        for item in [i, j] {
            if item >= interactions.num_items() {
                return Err(Error::ItemOutOfRange {
                    item,
                    limit: interactions.num_items(),
                });
            }
        }
    }
    let entity = entity_forward(params, graph)?;
    let pref = preference_embeddings(params)?;
    let mut users: Vec<usize> = batch.iter().map(|t| t.0).collect();
    users.sort_unstable();
    users.dedup();
    let users = user_forward(&entity, &pref, params, interactions, &users)?;
    let trace = ForwardTrace { entity, pref, users };
    let mut scores = BatchScores {
        pos: Vec::with_capacity(batch.len()),
        neg: Vec::with_capacity(batch.len()),
    };
    for &(u, i, j) in batch {
        let ue = trace.user_embedding(u).expect("batch user present in trace");
        scores.pos.push(score(ue, trace.item_embedding(i)));
        scores.neg.push(score(ue, trace.item_embedding(j)));
    }
    Ok((trace, scores))
}
