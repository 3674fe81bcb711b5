use std::fs;
use std::path::Path;

use kmpn_core::content::{EmbeddingFormat, EmbeddingKind, EmbeddingMatrixFile};
use kmpn_core::data::{format_lists, ColdStart, InteractionStore, SplitFile};
use kmpn_core::{make_synthetic_dataset, ContentParams, Dataset, Error, KmpnParams, KnowledgeGraph, Matrix, SynthSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p)))
        .collect();
    files.sort();
    files
}

#[test]
fn synthetic_bundle_round_trips_byte_identically() {
    let (ds, _) = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ds.write(a.path()).unwrap();
    let back = Dataset::load(a.path()).unwrap();
    back.write(b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(back.summary(), ds.summary());
}

#[test]
fn summary_matches_generator_bookkeeping() {
    let (ds, bk) = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
    let s = ds.summary();
    assert_eq!((s.users, s.items), (200, 300));
    assert_eq!(s.entities, bk.num_entities);
    assert_eq!(s.triplets, bk.num_triplets);
    assert_eq!(s.interactions, bk.num_interactions);
    assert_eq!(ds.interactions.cold_start().unwrap().history.iter().filter(|h| !h.is_empty()).count(), bk.cold_users.len());
}

#[test]
fn missing_kg_names_the_path() {
    let (ds, _) = make_synthetic_dataset(&SynthSpec::default(), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    fs::remove_file(dir.path().join("kg.txt")).unwrap();
    let err = Dataset::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("kg.txt"), "{err}");
}

#[test]
fn overlapping_splits_are_rejected() {
    let err = InteractionStore::from_lists(5, vec![vec![0, 1]], None, Some(vec![vec![1, 2]]), None).unwrap_err();
    assert!(matches!(err, Error::SplitOverlap { user: 0, item: 1, .. }), "{err}");
}

#[test]
fn cold_start_users_cannot_train() {
    let cold = ColdStart {
        history: vec![vec![1], vec![]],
        test: vec![vec![2], vec![]],
    };
    let err = InteractionStore::from_lists(4, vec![vec![0], vec![3]], None, None, Some(cold)).unwrap_err();
    assert!(matches!(err, Error::ColdStartLeak { user: 0, .. }), "{err}");
}

#[test]
fn relation_out_of_range_message() {
    let err = KnowledgeGraph::parse_str("0 5 1\n", Path::new("kg.txt"), 3, None).unwrap_err();
    assert_eq!(err.to_string(), "relation 5 ≥ 3");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = SplitFile::parse_str("0 1 2\n1 x\n", Path::new("train.txt")).unwrap_err();
    assert!(err.to_string().starts_with("train.txt:2:"), "{err}");
}

#[test]
fn duplicate_interactions_collapse() {
    let f = SplitFile::parse_str("0 3 1 3\n", Path::new("t")).unwrap();
    assert_eq!(f.lists[&0], vec![1, 3]);
    assert_eq!(f.duplicates_collapsed, 1);
}

fn random_embeddings(kind: EmbeddingKind, n: usize, dim: usize, seed: u64) -> EmbeddingMatrixFile {
    let m = Matrix::uniform(n, dim, -3.0, 3.0, &mut ChaCha8Rng::seed_from_u64(seed));
    EmbeddingMatrixFile::from_matrix(kind, &m)
}

#[test]
fn embedding_files_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let emb = random_embeddings(EmbeddingKind::Item, 37, 16, 3);
    for (fmt, name) in [(EmbeddingFormat::Text, "e.txt"), (EmbeddingFormat::Binary, "e.bin")] {
        let p1 = dir.path().join(name);
        let p2 = dir.path().join(format!("again-{name}"));
        emb.write(&p1, fmt).unwrap();
        let back = EmbeddingMatrixFile::read(&p1).unwrap();
        back.write(&p2, fmt).unwrap();
        assert_eq!(read(&p1), read(&p2));
        assert_eq!(back, emb);
    }
    let t = EmbeddingMatrixFile::read(&dir.path().join("e.txt")).unwrap().to_matrix(37, 16).unwrap();
    let b = EmbeddingMatrixFile::read(&dir.path().join("e.bin")).unwrap().to_matrix(37, 16).unwrap();
    let worst = t.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn embedding_coverage_and_dim_errors() {
    let mut emb = random_embeddings(EmbeddingKind::Item, 10, 4, 1);
    assert_eq!(
        emb.to_matrix(10, 8).unwrap_err().to_string(),
        "embedding dim mismatch: file has dim 4, model has dim 8"
    );
    emb.rows.retain(|(id, _)| *id != 7);
    assert_eq!(emb.to_matrix(10, 4).unwrap_err().to_string(), "item 7 missing from embedding file");
}

#[test]
fn checkpoints_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = KmpnParams::init(Default::default(), 30, 4, 9, &mut rng).unwrap();
    let bytes = p.to_checkpoint_bytes();
    let back = KmpnParams::from_checkpoint_bytes(&bytes).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.to_checkpoint_bytes(), bytes);
    let c = ContentParams::init(Default::default(), &mut rng).unwrap();
    let cb = c.to_checkpoint_bytes();
    assert_eq!(ContentParams::from_checkpoint_bytes(&cb).unwrap(), c);
    assert!(KmpnParams::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
}

fn lists_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::btree_set(0usize..40, 1..6), 1..12)
        .prop_map(|v| v.into_iter().map(|s| s.into_iter().collect()).collect())
}

proptest! {
    #[test]
    fn interaction_lists_round_trip(train in lists_strategy()) {
        let text = format_lists(&train);
        let parsed = SplitFile::parse_str(&text, Path::new("p")).unwrap();
        prop_assert_eq!(parsed.lists.len(), train.len());
        for (u, items) in train.iter().enumerate() {
            prop_assert_eq!(&parsed.lists[&u], items);
        }
        let store = InteractionStore::from_lists(40, train.clone(), None, None, None).unwrap();
        prop_assert_eq!(format_lists(store.train_lists()), text);
    }

    #[test]
    fn kg_closure_is_symmetric(triplets in prop::collection::vec((0usize..15, 0usize..3, 0usize..15), 0..40)) {
        let kg = KnowledgeGraph::from_triplets(15, 3, triplets).unwrap();
        prop_assert_eq!(kg.num_edges(), 2 * kg.triplets().len());
        for (h, r, t) in kg.edges() {
            let inv = if r < 3 { r + 3 } else { r - 3 };
            prop_assert!(kg.neighbors(t).any(|(rr, tt)| rr == inv && tt == h));
        }
        let again = KnowledgeGraph::parse_str(&kg.format(), Path::new("kg"), 3, Some(15)).unwrap();
        prop_assert_eq!(again, kg);
    }

    #[test]
    fn text_embeddings_are_exact_for_f32(values in prop::collection::vec(-1e6f32..1e6, 6)) {
        let emb = EmbeddingMatrixFile {
            kind: EmbeddingKind::User,
            dim: 3,
            rows: vec![(0, values[..3].to_vec()), (5, values[3..].to_vec())],
        };
        let back = EmbeddingMatrixFile::parse_text(&emb.to_text()).unwrap();
        prop_assert_eq!(back, emb);
    }
}
