use kmpn_core::data::InteractionStore;
use kmpn_core::model::{
    cold_start_user, entity_forward, forward, full_embeddings, preference_embeddings, user_forward,
};
use kmpn_core::{KmpnParams, KnowledgeGraph, ModelDims};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense oracle straight from the message-passing definition, working from
/// the raw triplet list.
fn oracle_entities(params: &KmpnParams, triplets: &[(usize, usize, usize)], n_rel: usize) -> Vec<Vec<Vec<f64>>> {
    let n = params.entity_emb.rows();
    let h = params.dims.hidden;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut uniq = triplets.to_vec();
    uniq.sort();
    uniq.dedup();
    for &(hd, r, t) in &uniq {
        adj[hd].push((r, t));
        adj[t].push((r + n_rel, hd));
    }
    let mut layers = vec![(0..n).map(|i| params.entity_emb.row(i).to_vec()).collect::<Vec<_>>()];
    for _ in 0..params.dims.layers {
        let prev = layers.last().unwrap();
        let mut next = vec![vec![0.0; h]; n];
        for i in 0..n {
            if adj[i].is_empty() {
                continue;
            }
            for &(r, j) in &adj[i] {
                let rel = params.relation_emb.row(r);
                let g = sig(dotv(&prev[i], rel));
                for k in 0..h {
                    next[i][k] += g * rel[k] * prev[j][k] / adj[i].len() as f64;
                }
            }
        }
        layers.push(next);
    }
    layers
}

struct Instance {
    kg: KnowledgeGraph,
    triplets: Vec<(usize, usize, usize)>,
    store: InteractionStore,
    params: KmpnParams,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_ent, n_items, n_rel, n_users) = (14, 8, 3, 5);
    // Entity 13 is left isolated.
    let triplets: Vec<_> = (0..20)
        .map(|_| (rng.random_range(0..13), rng.random_range(0..n_rel), rng.random_range(0..13)))
        .collect();
    let kg = KnowledgeGraph::from_triplets(n_ent, n_rel, triplets.clone()).unwrap();
    let train = (0..n_users)
        .map(|_| (0..rng.random_range(1..5)).map(|_| rng.random_range(0..n_items)).collect())
        .collect();
    let store = InteractionStore::from_lists(n_items, train, None, None, None).unwrap();
    let dims = ModelDims {
        hidden: 6,
        layers: 3,
        n_meta: 5,
        n_pref: 3,
    };
    let params = KmpnParams::init(dims, n_ent, 2 * n_rel, n_users, &mut rng).unwrap();
    Instance {
        kg,
        triplets,
        store,
        params,
    }
}

#[test]
fn entity_layers_match_dense_oracle() {
    for seed in 0..5 {
        let inst = instance(seed);
        let trace = entity_forward(&inst.params, &inst.kg).unwrap();
        let oracle = oracle_entities(&inst.params, &inst.triplets, 3);
        assert_eq!(trace.layers.len(), oracle.len());
        for (l, layer) in oracle.iter().enumerate() {
            for (i, row) in layer.iter().enumerate() {
                for (a, b) in trace.layers[l].row(i).iter().zip(row) {
                    assert!((a - b).abs() < 1e-12, "layer {l} entity {i}: {a} vs {b}");
                }
            }
        }
        for l in 1..oracle.len() {
            assert!(trace.layers[l].row(13).iter().all(|&x| x == 0.0));
        }
        for i in 0..14 {
            for k in 0..6 {
                let s: f64 = oracle.iter().map(|layer| layer[i][k]).sum();
                assert!((trace.aggregated.get(i, k) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn user_embeddings_match_oracle() {
    let inst = instance(9);
    let p = &inst.params;
    let oracle = oracle_entities(p, &inst.triplets, 3);
    let entity = entity_forward(p, &inst.kg).unwrap();
    let pref = preference_embeddings(p).unwrap();
    let users: Vec<usize> = (0..5).collect();
    let trace = user_forward(&entity, &pref, p, &inst.store, &users).unwrap();
    // Preference embeddings: softmax(logits) · meta.
    let mut pe = vec![vec![0.0; 6]; 3];
    for (q, row) in pe.iter_mut().enumerate() {
        let logits = p.pref_logits.row(q);
        let z: f64 = logits.iter().map(|x| x.exp()).sum();
        for m in 0..5 {
            for k in 0..6 {
                row[k] += logits[m].exp() / z * p.meta_pref_emb.get(m, k);
            }
        }
    }
    for u in 0..5 {
        let hist = inst.store.train(u);
        let logits: Vec<f64> = pe.iter().map(|e| dotv(e, p.user_emb.row(u))).collect();
        let z: f64 = logits.iter().map(|x| x.exp()).sum();
        let mut expect = vec![0.0; 6];
        for (q, e) in pe.iter().enumerate() {
            let a = logits[q].exp() / z;
            for layer in &oracle {
                for k in 0..6 {
                    let mean: f64 = hist.iter().map(|&i| layer[i][k]).sum::<f64>() / hist.len() as f64;
                    expect[k] += a * mean * e[k];
                }
            }
        }
        for (a, b) in trace.aggregated.row(u).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "user {u}");
        }
    }
}

#[test]
fn batch_scores_are_dot_products() {
    let inst = instance(4);
    let batch = vec![(0, inst.store.train(0)[0], 7), (3, inst.store.train(3)[0], 2), (0, 1, 5)];
    let (trace, scores) = forward(&inst.params, &inst.kg, &inst.store, &batch).unwrap();
    let (users, items, _, _) = full_embeddings(&inst.params, &inst.kg, &inst.store).unwrap();
    for (t, &(u, i, j)) in batch.iter().enumerate() {
        assert!((scores.pos[t] - dotv(users.row(u), items.row(i))).abs() < 1e-12);
        assert!((scores.neg[t] - dotv(users.row(u), items.row(j))).abs() < 1e-12);
        assert_eq!(trace.user_embedding(u).unwrap(), users.row(u));
    }
}

#[test]
fn cold_start_user_uses_uniform_attention() {
    let inst = instance(2);
    let p = &inst.params;
    let entity = entity_forward(p, &inst.kg).unwrap();
    let pref = preference_embeddings(p).unwrap();
    let v = cold_start_user(&[1, 4], &entity, &pref).unwrap();
    let mut q = vec![0.0; 6];
    for r in 0..3 {
        for k in 0..6 {
            q[k] += pref.pref.get(r, k) / 3.0;
        }
    }
    for k in 0..6 {
        let m = (entity.aggregated.get(1, k) + entity.aggregated.get(4, k)) / 2.0;
        assert!((v[k] - m * q[k]).abs() < 1e-12);
    }
    assert!(cold_start_user(&[], &entity, &pref).is_err());
}

#[test]
fn mismatched_graph_is_rejected() {
    let inst = instance(1);
    let other = KnowledgeGraph::from_triplets(20, 3, vec![(0, 0, 1)]).unwrap();
    assert!(entity_forward(&inst.params, &other).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gates_are_probabilities_and_history_order_is_irrelevant(seed in 0u64..10_000) {
        let inst = instance(seed);
        let entity = entity_forward(&inst.params, &inst.kg).unwrap();
        for g in entity.gates.iter().flatten() {
            prop_assert!(*g > 0.0 && *g < 1.0);
        }
        prop_assert_eq!(entity.gates[0].len(), inst.kg.num_edges());
        let pref = preference_embeddings(&inst.params).unwrap();
        for r in 0..pref.beta.rows() {
            let s: f64 = pref.beta.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        let hist = inst.store.train(0).to_vec();
        let mut rev = hist.clone();
        rev.reverse();
        let a = cold_start_user(&hist, &entity, &pref).unwrap();
        let b = cold_start_user(&rev, &entity, &pref).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
