//! Reciprocal-ratio negative sampling.
//!
//! Item `i` is drawn with probability proportional to `1 / c(i)`, where
//! `c(i)` is its train interaction count clamped to at least 1, so rarely
//! seen items are the most likely negatives. Draws that hit one of the
//! user's train positives are rejected.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::data::InteractionStore;
use crate::error::{Error, Result};

/// Rejection attempts before falling back to a uniform scan.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Clone, Debug)]
pub struct ReciprocalSampler {
    counts: Vec<usize>,
    probabilities: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl ReciprocalSampler {
    /// Builds the sampler from raw per-item counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Invalid("negative sampler needs at least one item".into()));
        }
        let counts: Vec<usize> = counts.iter().map(|&c| c.max(1)).collect();
        let weights: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        let total: f64 = weights.iter().sum();
        let probabilities = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::Invalid(format!("alias table: {e}")))?;
        Ok(ReciprocalSampler {
            counts,
            probabilities,
            alias,
        })
    }

    /// Counts come from the train split.
    pub fn build(store: &InteractionStore) -> Result<Self> {
        Self::from_counts(&store.item_train_counts())
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    /// Clamped interaction counts.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// One unconditioned draw from `P(i)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Draws an item outside `positives` (sorted ascending). After
    /// [`MAX_REJECTIONS`] rejected draws, picks uniformly among the
    /// remaining items.
    pub fn sample_excluding<R: Rng + ?Sized>(&self, positives: &[usize], rng: &mut R) -> Result<usize> {
        let n = self.num_items();
        let in_catalog = positives.iter().filter(|&&i| i < n).count();
        if in_catalog >= n {
            return Err(Error::Invalid(
                "user has interacted with every item; no negative exists".into(),
            ));
        }
        for _ in 0..MAX_REJECTIONS {
            let i = self.draw(rng);
            if positives.binary_search(&i).is_err() {
                return Ok(i);
            }
        }
        let free: Vec<usize> = (0..n).filter(|i| positives.binary_search(i).is_err()).collect();
        Ok(free[rng.random_range(0..free.len())])
    }

    /// Negative for `user`, rejecting only the user's train positives.
    pub fn sample_negative<R: Rng + ?Sized>(&self, store: &InteractionStore, user: usize, rng: &mut R) -> Result<usize> {
        self.sample_excluding(store.train(user), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reciprocal_probabilities() {
        let s = ReciprocalSampler::from_counts(&[1, 1, 2]).unwrap();
        let expected = [0.4, 0.4, 0.2];
        for (p, e) in s.probabilities().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        assert_eq!(ReciprocalSampler::from_counts(&[5]).unwrap().probabilities(), &[1.0]);
        let s = ReciprocalSampler::from_counts(&[0, 2]).unwrap();
        assert!((s.probabilities()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.probabilities()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(ReciprocalSampler::from_counts(&[]).is_err());
    }

    #[test]
    fn forced_outcome_and_exhaustion() {
        let s = ReciprocalSampler::from_counts(&[1, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            assert_eq!(s.sample_excluding(&[0], &mut rng).unwrap(), 1);
        }
        assert!(s.sample_excluding(&[0, 1], &mut rng).is_err());
    }

    #[test]
    fn fallback_scan_after_rejections() {
        // Item 2 has a tiny probability; rejection almost always exhausts.
        let s = ReciprocalSampler::from_counts(&[1, 1, 1_000_000_000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(s.sample_excluding(&[0, 1], &mut rng).unwrap(), 2);
    }

    #[test]
    fn fixed_seed_fixed_sequence() {
        let s = ReciprocalSampler::from_counts(&[3, 1, 4, 1, 5]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| s.draw(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
