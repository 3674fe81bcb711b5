use kmpn_core::data::InteractionStore;
use kmpn_core::ReciprocalSampler;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn analytic_probabilities_and_empirical_frequencies() {
    let s = ReciprocalSampler::from_counts(&[1, 1, 2]).unwrap();
    for (p, e) in s.probabilities().iter().zip([0.4, 0.4, 0.2]) {
        assert!((p - e).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let mut hits = [0usize; 3];
    for _ in 0..n {
        hits[s.draw(&mut rng)] += 1;
    }
    for (h, e) in hits.iter().zip([0.4, 0.4, 0.2]) {
        let f = *h as f64 / n as f64;
        assert!((f - e).abs() <= 0.01, "{f} vs {e}");
    }
}

/// Pearson goodness-of-fit p-value of `hits` against `probs`.
fn chi_square_p(hits: &[usize], probs: &[f64]) -> f64 {
    let n: usize = hits.iter().sum();
    let stat: f64 = hits
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((hits.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn chi_square_goodness_of_fit_on_random_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let len = rng.random_range(2..=50);
        let counts: Vec<usize> = (0..len).map(|_| rng.random_range(0..30)).collect();
        let s = ReciprocalSampler::from_counts(&counts).unwrap();
        let weights: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1) as f64).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        for (a, b) in s.probabilities().iter().zip(&probs) {
            assert!((a - b).abs() < 1e-12);
        }
        let draws = 200 * len;
        let mut hits = vec![0usize; len];
        for _ in 0..draws {
            hits[s.draw(&mut rng)] += 1;
        }
        let p = chi_square_p(&hits, &probs);
        assert!(p > 0.001, "p = {p} for counts {counts:?}");
    }
}

#[test]
fn negatives_follow_the_conditional_distribution() {
    let s = ReciprocalSampler::from_counts(&[1, 2, 4, 1, 3]).unwrap();
    let positives = [0, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hits = vec![0usize; 5];
    for _ in 0..30_000 {
        hits[s.sample_excluding(&positives, &mut rng).unwrap()] += 1;
    }
    assert_eq!(hits[0] + hits[3], 0);
    let rest = [1.0 / 2.0, 1.0 / 4.0, 1.0 / 3.0];
    let z: f64 = rest.iter().sum();
    let probs: Vec<f64> = rest.iter().map(|w| w / z).collect();
    assert!(chi_square_p(&[hits[1], hits[2], hits[4]], &probs) > 0.001);
}

#[test]
fn fallback_finds_the_last_free_item() {
    // Item 9 has probability ~1/1000, so rejection alone almost always fails.
    let mut counts = vec![1usize; 10];
    counts[9] = 1000;
    let s = ReciprocalSampler::from_counts(&counts).unwrap();
    let positives: Vec<usize> = (0..9).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        assert_eq!(s.sample_excluding(&positives, &mut rng).unwrap(), 9);
    }
    let all: Vec<usize> = (0..10).collect();
    assert!(s.sample_excluding(&all, &mut rng).is_err());
}

#[test]
fn counts_come_from_the_train_split() {
    let store = InteractionStore::from_lists(4, vec![vec![0, 1], vec![1], vec![1, 2]], None, None, None).unwrap();
    let s = ReciprocalSampler::build(&store).unwrap();
    assert_eq!(s.counts(), &[1, 3, 1, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let j = s.sample_negative(&store, 0, &mut rng).unwrap();
        assert!(j == 2 || j == 3);
    }
}

proptest! {
    #[test]
    fn negatives_are_never_positives(
        counts in prop::collection::vec(0usize..20, 2..30),
        seed in 0u64..1000,
        mask_bits in any::<u32>(),
    ) {
        let n = counts.len();
        let mut positives: Vec<usize> = (0..n).filter(|i| mask_bits >> (i % 32) & 1 == 1).collect();
        if positives.len() == n {
            positives.pop();
        }
        let s = ReciprocalSampler::from_counts(&counts).unwrap();
        let total: f64 = s.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let j = s.sample_excluding(&positives, &mut rng).unwrap();
            prop_assert!(j < n && positives.binary_search(&j).is_err());
        }
    }
}
