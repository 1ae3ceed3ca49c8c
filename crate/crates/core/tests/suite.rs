use nftproj::metrics::{quarter_caps, tier, year_stats};
use nftproj::series::{build_series, slice_quarter, Quarter};
use nftproj::synth::{benchmark_manifest, make_benchmark_suite, SuiteManifest, SuiteRole};
use nftproj::ContextModel;

#[test]
fn manifest_survives_toml() {
    let m = benchmark_manifest(3);
    assert_eq!(SuiteManifest::from_toml(&m.to_toml()).unwrap(), m);
}

#[test]
fn suite_shape() {
    let suite = make_benchmark_suite(0);
    assert_eq!(suite.by_role(SuiteRole::Train).len(), 5);
    assert_eq!(suite.by_role(SuiteRole::Test).len(), 4);
    assert_eq!(suite.by_role(SuiteRole::Ood).len(), 1);
    for e in &suite.manifest.collections {
        if e.role == SuiteRole::Test {
            let twin = e.twin_of.as_deref().unwrap();
            assert!(suite.manifest.collections.iter().any(|t| t.collection_id == twin && t.role == SuiteRole::Train));
        }
    }
}

#[test]
fn training_collections_land_in_their_tiers() {
    for seed in [0, 7, 11] {
        let suite = make_benchmark_suite(seed);
        for (entry, corpus) in suite.manifest.collections.iter().zip(&suite.corpora) {
            let Some(expected) = entry.expected_tier else { continue };
            let q4 = quarter_caps(&corpus.truth)[3];
            assert_eq!(tier(q4).number(), expected, "seed {seed} {}: Q4 cap {q4}", entry.collection_id);
        }
    }
}

#[test]
fn truth_matches_rebuilt_series_and_stats_agree() {
    let suite = make_benchmark_suite(5);
    for c in &suite.corpora {
        let rebuilt = build_series(&c.collection_id, &c.events, c.inception_timestamp, &c.token_ids()).unwrap();
        assert_eq!(rebuilt.series, c.truth, "{}", c.collection_id);
        let stats = year_stats(&c.truth, &c.events);
        let caps = quarter_caps(&c.truth);
        for (s, cap) in stats.iter().zip(caps) {
            assert!((s.market_cap - cap).abs() <= 1e-6 * cap.max(1.0), "{}: {} vs {cap}", c.collection_id, s.market_cap);
        }
    }
}

#[test]
fn same_seed_same_suite() {
    let (a, b) = (make_benchmark_suite(9), make_benchmark_suite(9));
    assert_eq!(a.corpora, b.corpora);
    assert_ne!(a.corpora[0].events, make_benchmark_suite(10).corpora[0].events);
}

#[test]
fn distant_corpus_is_flagged() {
    for seed in [0, 7] {
        let suite = make_benchmark_suite(seed);
        let q1: Vec<_> = suite.by_role(SuiteRole::Train).iter().map(|c| slice_quarter(&c.truth, Quarter::Q1)).collect();
        let model = ContextModel::fit(&q1).unwrap();
        let check = |id: &str| {
            let c = suite.corpora.iter().find(|c| c.collection_id == id).unwrap();
            let ctx = model.embed(&slice_quarter(&c.truth, Quarter::Q1)).unwrap();
            nftproj::context::check_context_distance(&ctx, &model.table, None).unwrap()
        };
        assert!(check("ood").warn, "seed {seed}");
        for id in ["test-1", "test-2", "test-3", "test-4"] {
            assert!(!check(id).warn, "seed {seed} {id}");
        }
    }
}
