//! Shared fixtures for the criterion benchmarks in `benches/`.

use kmpn_core::model::Triple;
use kmpn_core::{make_synthetic_dataset, Dataset, KmpnParams, ModelDims, ReciprocalSampler, SynthSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub dataset: Dataset,
    pub params: KmpnParams,
    pub batch: Vec<Triple>,
}

/// The default synthetic dataset, freshly initialized default-size
/// parameters and one batch of `batch_size` training triples.
pub fn fixture(batch_size: usize) -> Fixture {
    let (dataset, _) = make_synthetic_dataset(&SynthSpec::default(), 7).expect("synthetic dataset");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = KmpnParams::init(
        ModelDims::default(),
        dataset.kg.num_entities(),
        dataset.kg.num_relations(),
        dataset.interactions.num_users(),
        &mut rng,
    )
    .expect("params");
    let sampler = ReciprocalSampler::build(&dataset.interactions).expect("sampler");
    let mut pairs = dataset.interactions.train_pairs();
    pairs.shuffle(&mut rng);
    let batch = pairs
        .iter()
        .take(batch_size)
        .map(|&(u, i)| (u, i, sampler.sample_negative(&dataset.interactions, u, &mut rng).expect("negative")))
        .collect();
    Fixture { dataset, params, batch }
}
