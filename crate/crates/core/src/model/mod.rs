//! The collaborative-filtering model over the knowledge graph.

mod backward;
mod forward;
mod params;

pub use backward::{backward, conv_layer_backward, UpstreamGrads};
pub use forward::{
    aggregate_layers, cold_start_user, conv_layer, entity_forward, forward, gate, preference_embeddings, score,
    user_forward, BatchScores, EntityTrace, ForwardTrace, PreferenceTrace, Triple, UserTrace,
};
pub use params::{KmpnParams, ModelDims, TENSOR_NAMES};

use crate::data::{InteractionStore, KnowledgeGraph};
use crate::error::Result;
use crate::tensor::Matrix;

/// Final user embeddings for every trainable user (rows of empty-history
/// users are zero) and final item embeddings.
pub fn full_embeddings(
    params: &KmpnParams,
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
) -> Result<(Matrix, Matrix, EntityTrace, PreferenceTrace)> {
    let entity = entity_forward(params, graph)?;
    let pref = preference_embeddings(params)?;
    let users = interactions.trainable_users();
    let trace = user_forward(&entity, &pref, params, interactions, &users)?;
    let h = params.dims.hidden;
    let mut user_emb = Matrix::zeros(params.num_users(), h);
    for (row, &u) in users.iter().enumerate() {
        user_emb.row_mut(u).copy_from_slice(trace.aggregated.row(row));
    }
    let n_items = interactions.num_items();
    let mut item_emb = Matrix::zeros(n_items, h);
    for i in 0..n_items {
        item_emb.row_mut(i).copy_from_slice(entity.aggregated.row(i));
    }
    Ok((user_emb, item_emb, entity, pref))
}
