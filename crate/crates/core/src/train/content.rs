use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::content::{impression_loss, ContentParams, Impression, TokenizedCorpus};
use crate::data::{InteractionStore, ItemCorpus};
use crate::error::{Error, Result};

use super::adam::{adam_step, AdamState, ParamSet};
use super::{lr_at, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ContentOutcome {
    pub params: ContentParams,
    /// Mean click loss per epoch.
    pub losses: Vec<f64>,
    /// Train pairs skipped because no history or no negative exists.
    pub skipped_pairs: usize,
}

fn draw_negatives<R: Rng + ?Sized>(positives: &[usize], num_items: usize, k: usize, rng: &mut R) -> Option<Vec<usize>> {
    if positives.len() >= num_items {
        return None;
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.random_range(0..num_items);
        if positives.binary_search(&i).is_err() {
            out.push(i);
        }
    }
    Some(out)
}

fn impression_for<R: Rng + ?Sized>(
    store: &InteractionStore,
    user: usize,
    positive: usize,
    params: &ContentParams,
    rng: &mut R,
) -> Option<Impression> {
    let train = store.train(user);
    let others: Vec<usize> = train.iter().copied().filter(|&i| i != positive).collect();
    if others.is_empty() {
        return None;
    }
    let b = params.dims.history.min(others.len());
    let history = index::sample(rng, others.len(), b).into_iter().map(|k| others[k]).collect();
    let negatives = draw_negatives(train, store.num_items(), params.dims.negatives, rng)?;
    Some(Impression {
        history,
        positive,
        negatives,
    })
}

/// Trains the content encoder on click loss. Each train pair becomes one
/// impression: up to `B` other history items of the user, the clicked item,
/// and `K` uniformly drawn non-positive items.
pub fn train_content(
    corpus: &ItemCorpus,
    store: &InteractionStore,
    mut params: ContentParams,
    config: &TrainConfig,
) -> Result<ContentOutcome> {
    config.validate()?;
    params.dims.validate()?;
    let tokens = TokenizedCorpus::new(corpus, store.num_items(), params.dims.buckets);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs = store.train_pairs();
    let mut state = AdamState::new();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut skipped_pairs = 0;
    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch, config.epochs)?;
        pairs.shuffle(&mut rng);
        skipped_pairs = 0;
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in pairs.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            let mut in_batch = 0usize;
            for &(u, i) in chunk {
                let Some(imp) = impression_for(store, u, i, &params, &mut rng) else {
                    skipped_pairs += 1;
                    continue;
                };
                total += impression_loss(&imp, &tokens, &params, Some(&mut grads))?;
                in_batch += 1;
            }
            if in_batch == 0 {
                continue;
            }
            let scale = 1.0 / in_batch as f64;
            for (_, g) in grads.named_mut() {
                g.scale(scale);
            }
            adam_step(&mut params, &grads, &mut state, &config.adam, lr)?;
            count += in_batch;
        }
        if count == 0 {
            return Err(Error::Invalid(
                "no usable training impressions: every user needs at least two train items".into(),
            ));
        }
        let mean = total / count as f64;
        log::debug!("content epoch {}\t{mean}", epoch + 1);
        losses.push(mean);
    }
    if skipped_pairs > 0 {
        log::warn!("{skipped_pairs} train pairs per epoch had no usable history or negatives");
    }
    Ok(ContentOutcome {
        params,
        losses,
        skipped_pairs,
    })
}
