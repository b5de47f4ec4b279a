//! Property tests for the index and the two-stage recommender.

use std::collections::HashSet;

use proptest::prelude::*;

use scalesmith_core::corpus::ConstructId;
use scalesmith_core::gateway::EmbeddingVector;
use scalesmith_core::index::{cosine_similarity, VectorIndex};
use scalesmith_core::recommend::{Recommender, StageQueries};

const DIM: usize = 6;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, DIM).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

fn build(entries: &[Vec<f64>]) -> VectorIndex {
    let mut index = VectorIndex::new(DIM);
    for (i, v) in entries.iter().enumerate() {
        index.upsert(ConstructId::new(format!("e{i:03}")), ev(v)).unwrap();
    }
    index
}

fn full_scan(entries: &[Vec<f64>], q: &[f64]) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            (format!("e{i:03}"), dot / (norm(v) * norm(q)))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

proptest! {
    #[test]
    fn search_matches_full_scan(entries in prop::collection::vec(vector(), 1..60), q in vector(), k in 1usize..80) {
        let hits = build(&entries).search(&ev(&q), k, &HashSet::new()).unwrap();
        let mut scan = full_scan(&entries, &q);
        scan.truncate(k);
        prop_assert_eq!(hits.len(), scan.len());
        for (hit, (id, sim)) in hits.iter().zip(&scan) {
            prop_assert_eq!(hit.construct_id.as_str(), id.as_str());
            prop_assert!((hit.similarity - sim).abs() <= 1e-9);
        }
    }

    #[test]
    fn cosine_is_scale_invariant(u in vector(), v in vector(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let base = cosine_similarity(&ev(&u), &ev(&v)).unwrap();
        let su: Vec<f64> = u.iter().map(|x| x * a).collect();
        let sv: Vec<f64> = v.iter().map(|x| x * b).collect();
        let scaled = cosine_similarity(&ev(&su), &ev(&sv)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn recommendation_within_stage_one(
        entries in prop::collection::vec(vector(), 1..60),
        q1 in vector(),
        q2 in vector(),
        k1 in 1usize..25,
        k2 in 1usize..12,
    ) {
        prop_assume!(k2 <= k1);
        let index = build(&entries);
        let queries = StageQueries { stage1: ev(&q1), stage2: ev(&q2) };
        let set = Recommender::new(k1, k2).unwrap().recommend_with(&index, &queries).unwrap();
        let stage1: HashSet<String> = full_scan(&entries, &q1).into_iter().take(k1).map(|(id, _)| id).collect();
        prop_assert_eq!(set.hits.len(), k2.min(entries.len()));
        prop_assert!(set.ids().all(|id| stage1.contains(id.as_str())));
        prop_assert!(set.hits.windows(2).all(|w| w[0].stage2_similarity >= w[1].stage2_similarity));
        prop_assert_eq!(set.exhausted, entries.len() < k2);
    }

    #[test]
    fn refresh_keeps_selection_and_hides_history(
        entries in prop::collection::vec(vector(), 1..40),
        q1 in vector(),
        q2 in vector(),
        mask in prop::collection::vec(any::<bool>(), 10),
    ) {
        let index = build(&entries);
        let queries = StageQueries { stage1: ev(&q1), stage2: ev(&q2) };
        let recommender = Recommender::default();
        let prior = recommender.recommend_with(&index, &queries).unwrap();
        let selected: Vec<ConstructId> = prior.ids().zip(&mask).filter(|(_, m)| **m).map(|(id, _)| id.clone()).collect();
        let next = recommender.refresh_with(&index, &queries, &prior, &selected).unwrap();
        let kept: Vec<&ConstructId> = next.ids().take(selected.len()).collect();
        prop_assert_eq!(kept, selected.iter().collect::<Vec<_>>());
        for id in next.ids().skip(selected.len()) {
            prop_assert!(!prior.contains(id));
        }
        let unseen = entries.len() - prior.hits.len();
        prop_assert_eq!(next.hits.len(), 10usize.min(selected.len() + unseen));
    }

    #[test]
    fn snapshot_round_trip(entries in prop::collection::vec(vector(), 0..30)) {
        let index = build(&entries);
        let mut bytes = Vec::new();
        index.write_snapshot(&mut bytes).unwrap();
        let back = VectorIndex::read_snapshot(bytes.as_slice(), DIM).unwrap();
        prop_assert_eq!(back.len(), index.len());
        for id in index.ids() {
            prop_assert_eq!(back.vector(id), index.vector(id));
        }
    }
}
