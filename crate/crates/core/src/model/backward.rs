//! Analytic reverse pass matching [`super::forward`].

use crate::data::{InteractionStore, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, softmax_backward, Matrix};

use super::forward::{EntityTrace, ForwardTrace};
use super::params::KmpnParams;

/// Gradients of the loss with respect to the forward outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct UpstreamGrads {
    /// Rows aligned with `trace.users.users`.
    pub user_agg: Matrix,
    /// `N_v × h` gradient on the aggregated entity embeddings.
    pub entity_agg: Matrix,
    /// Optional `N_p × h` gradient on the preference embeddings.
    pub pref: Option<Matrix>,
}

impl UpstreamGrads {
    pub fn zeros(trace: &ForwardTrace) -> Self {
        let h = trace.entity.aggregated.cols();
        UpstreamGrads {
            user_agg: Matrix::zeros(trace.users.users.len(), h),
            entity_agg: Matrix::zeros(trace.entity.aggregated.rows(), h),
            pref: None,
        }
    }
}

/// Reverse of one convolution layer. `upstream` is the gradient on the layer
/// output; gradients on its input and on the relation embeddings are
/// accumulated into `d_prev` and `d_rel`.
pub fn conv_layer_backward(
    prev: &Matrix,
    gates: &[f64],
    graph: &KnowledgeGraph,
    relation_emb: &Matrix,
    upstream: &Matrix,
    d_prev: &mut Matrix,
    d_rel: &mut Matrix,
) {
    let h = prev.cols();
    let mut edge = 0;
    let mut g = vec![0.0; h];
    for i in 0..graph.num_entities() {
        let degree = graph.degree(i);
        if degree == 0 {
            continue;
        }
        let inv = 1.0 / degree as f64;
        for (gv, &u) in g.iter_mut().zip(upstream.row(i)) {
            *gv = u * inv;
        }
        for (r, j) in graph.neighbors(i) {
            let gamma = gates[edge];
            edge += 1;
            let rel = relation_emb.row(r);
            let xj = prev.row(j);
            let mut d_gamma = 0.0;
            {
                let dj = d_prev.row_mut(j);
                for k in 0..h {
                    d_gamma += g[k] * rel[k] * xj[k];
                    dj[k] += gamma * rel[k] * g[k];
                }
            }
            let dz = d_gamma * gamma * (1.0 - gamma);
            {
                let dr = d_rel.row_mut(r);
                let xi = prev.row(i);
                for k in 0..h {
                    dr[k] += gamma * xj[k] * g[k] + dz * xi[k];
                }
            }
            axpy(dz, rel, d_prev.row_mut(i));
        }
    }
}

fn entity_backward(
    trace: &EntityTrace,
    graph: &KnowledgeGraph,
    params: &KmpnParams,
    d_agg: &Matrix,
    grads: &mut KmpnParams,
) {
    // Every layer feeds the aggregate directly, so each layer's gradient
    // starts from d_agg plus whatever flows back from the layer above.
    let mut d_current = d_agg.clone();
    for l in (0..trace.gates.len()).rev() {
        let mut d_prev = d_agg.clone();
        conv_layer_backward(
            &trace.layers[l],
            &trace.gates[l],
            graph,
            &params.relation_emb,
            &d_current,
            &mut d_prev,
            &mut grads.relation_emb,
        );
        d_current = d_prev;
    }
    axpy(1.0, d_current.as_slice(), grads.entity_emb.as_mut_slice());
}

/// Exact gradients for every tensor of [`KmpnParams`] given upstream
/// gradients on the forward outputs.
pub fn backward(
    params: &KmpnParams,
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    trace: &ForwardTrace,
    upstream: &UpstreamGrads,
) -> Result<KmpnParams> {
    let h = params.dims.hidden;
    let n_p = params.dims.n_pref;
    let users = &trace.users;
    if upstream.user_agg.shape() != (users.users.len(), h) {
        return Err(Error::shape(
            "upstream user gradient",
            format!("{:?}", (users.users.len(), h)),
            format!("{:?}", upstream.user_agg.shape()),
        ));
    }
    if upstream.entity_agg.shape() != trace.entity.aggregated.shape() {
        return Err(Error::shape(
            "upstream entity gradient",
            format!("{:?}", trace.entity.aggregated.shape()),
            format!("{:?}", upstream.entity_agg.shape()),
        ));
    }
    let mut grads = params.zeros_like();
    let mut d_entity_agg = upstream.entity_agg.clone();
    let mut d_pref = match &upstream.pref {
        Some(p) if p.shape() == (n_p, h) => p.clone(),
        Some(p) => {
            return Err(Error::shape("upstream preference gradient", format!("{:?}", (n_p, h)), format!("{:?}", p.shape())))
        }
        None => Matrix::zeros(n_p, h),
    };

    // user_agg = q ⊙ s with q = Σ_p α_p e_p and s = mean_{i ∈ train(u)} e_i^L.
    let mut d_q = vec![0.0; h];
    for (row, &u) in users.users.iter().enumerate() {
        let g = upstream.user_agg.row(row);
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let q = users.mixed_pref.row(row);
        let s = users.history_mean.row(row);
        let history = interactions.train(u);
        let inv = 1.0 / history.len() as f64;
        for &i in history {
            let di = d_entity_agg.row_mut(i);
            for k in 0..h {
                di[k] += inv * g[k] * q[k];
            }
        }
        for k in 0..h {
            d_q[k] = g[k] * s[k];
        }
        let alpha = users.attention.row(row);
        let d_alpha: Vec<f64> = (0..n_p).map(|p| dot(trace.pref.pref.row(p), &d_q)).collect();
        for (p, &a) in alpha.iter().enumerate() {
            axpy(a, &d_q, d_pref.row_mut(p));
        }
        let dz = softmax_backward(alpha, &d_alpha);
        let query = params.user_emb.row(u);
        let mut d_query = vec![0.0; h];
        for p in 0..n_p {
            axpy(dz[p], query, d_pref.row_mut(p));
            axpy(dz[p], trace.pref.pref.row(p), &mut d_query);
        }
        axpy(1.0, &d_query, grads.user_emb.row_mut(u));
    }

    // e_p = β · e_m
    let beta = &trace.pref.beta;
    grads.meta_pref_emb = beta.transpose().matmul(&d_pref)?;
    let d_beta = d_pref.matmul(&params.meta_pref_emb.transpose())?;
    for p in 0..n_p {
        let dl = softmax_backward(beta.row(p), d_beta.row(p));
        grads.pref_logits.row_mut(p).copy_from_slice(&dl);
    }

    entity_backward(&trace.entity, graph, params, &d_entity_agg, &mut grads);
    Ok(grads)
}
