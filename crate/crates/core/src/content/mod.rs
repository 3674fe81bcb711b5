//! Content-based side: a hash-bucket text encoder with an attention user
//! encoder trained on click loss, and the embedding exchange files that carry
//! its outputs into collaborative training.

mod embfile;
mod encoder;

pub use embfile::{EmbeddingFormat, EmbeddingKind, EmbeddingMatrixFile};
pub use encoder::{
    encode_buckets, encode_buckets_backward, encode_full_history, encode_item, encode_user, encode_user_backward,
    fnv1a64, impression_loss, token_buckets, tokenize, ContentDims, ContentParams, Impression, TokenizedCorpus,
    UserEncoding, CONTENT_TENSOR_NAMES, DEFAULT_BUCKETS,
};

use std::path::Path;

use crate::data::{InteractionStore, ItemCorpus, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Fixed content-side embeddings used as anchors during collaborative
/// training.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentEmbeddings {
    /// `N_u × h`
    pub users: Matrix,
    /// `N_i × h`
    pub items: Matrix,
}

impl ContentEmbeddings {
    /// Loads and checks coverage of every user and item id and the width.
    pub fn from_files(
        users: &EmbeddingMatrixFile,
        items: &EmbeddingMatrixFile,
        num_users: usize,
        num_items: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(ContentEmbeddings {
            users: users.to_matrix(num_users, hidden)?,
            items: items.to_matrix(num_items, hidden)?,
        })
    }

    pub fn read(user_path: &Path, item_path: &Path, num_users: usize, num_items: usize, hidden: usize) -> Result<Self> {
        Self::from_files(
            &EmbeddingMatrixFile::read(user_path)?,
            &EmbeddingMatrixFile::read(item_path)?,
            num_users,
            num_items,
            hidden,
        )
    }
}

/// Encodes every item and every user (full train history, chunked by `B`).
pub fn export_embeddings(
    params: &ContentParams,
    corpus: &ItemCorpus,
    store: &InteractionStore,
) -> Result<(EmbeddingMatrixFile, EmbeddingMatrixFile)> {
    let tokens = TokenizedCorpus::new(corpus, store.num_items(), params.dims.buckets);
    let h = params.dims.hidden;
    let mut items = Matrix::zeros(store.num_items(), h);
    for i in 0..store.num_items() {
        items.row_mut(i).copy_from_slice(&encode_buckets(tokens.item(i), params));
    }
    let empty = (0..store.num_users()).filter(|&u| store.train(u).is_empty()).count();
    if empty > 0 {
        log::info!("{empty} users without train history export zero vectors");
    }
    let mut users = Matrix::zeros(store.num_users(), h);
    for u in 0..store.num_users() {
        let v = encode_full_history(store.train(u), &tokens, params)?;
        users.row_mut(u).copy_from_slice(&v);
    }
    Ok((
        EmbeddingMatrixFile::from_matrix(EmbeddingKind::User, &users),
        EmbeddingMatrixFile::from_matrix(EmbeddingKind::Item, &items),
    ))
}

/// User and item embeddings of the content model for evaluating `split`.
/// Cold-start users are encoded from their cold-start history.
pub fn content_split_embeddings(
    params: &ContentParams,
    corpus: &ItemCorpus,
    store: &InteractionStore,
    split: Split,
) -> Result<(Matrix, Matrix)> {
    let (users, items) = export_embeddings(params, corpus, store)?;
    let items = items.to_matrix(store.num_items(), params.dims.hidden)?;
    if split != Split::ColdStart {
        return Ok((users.to_matrix(store.num_users(), params.dims.hidden)?, items));
    }
    let cold = store.cold_start().ok_or(Error::SplitAbsent(split.name()))?;
    let tokens = TokenizedCorpus::new(corpus, store.num_items(), params.dims.buckets);
    let mut out = Matrix::zeros(store.num_users(), params.dims.hidden);
    for (u, history) in cold.history.iter().enumerate() {
        out.row_mut(u).copy_from_slice(&encode_full_history(history, &tokens, params)?);
    }
    Ok((out, items))
}
