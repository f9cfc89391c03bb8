use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use vandal_core::config::PatternConfig;
use vandal_core::corpus::{build_corpus, split_train_test, LabelClass, CorpusRecord, RevertConfig, Split};
use vandal_core::diff::diff;
use vandal_core::entity::{parse_entity, PropertyId, SnakValue, Statement};
use vandal_core::eval::design_matrix;
use vandal_core::features::{extract, FeatureGroup, GroupSet, FEATURES};
use vandal_core::forest::{train, ClassWeight, Forest, ForestParams, TrainedModel};
use vandal_core::ingestion::{FixtureSource, RevisionSource};
use vandal_core::registry::PropertyRegistry;
use vandal_core::synth::{generate, SynthOutput, SynthSpec};

struct World {
    synth: SynthOutput,
    records: Vec<CorpusRecord>,
    model: TrainedModel,
}

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let synth = generate(&SynthSpec::new(6000, 0.05, 21)).unwrap();
        let corpus = build_corpus(
            synth.envelopes.clone(),
            &PropertyRegistry::builtin(),
            &RevertConfig::default(),
            &PatternConfig::default(),
        );
        let mut records = corpus.records;
        split_train_test(&mut records, 0.7, 21).unwrap();
        let (x, y) = design_matrix(&records, Split::Train, &GroupSet::all()).unwrap();
        let model = train(&x, &y, &GroupSet::all(), &ForestParams { n_trees: 40, seed: 21, ..ForestParams::default() }).unwrap();
        World { synth, records, model }
    })
}

#[test]
fn synthetic_labels_are_sound_and_match_truth() {
    let w = world();
    assert!(w.records.iter().all(CorpusRecord::is_sound));
    let truth: BTreeMap<u64, bool> = w.synth.truth.iter().map(|t| (t.rev_id, t.class != LabelClass::Good)).collect();
    let mismatched = w.records.iter().filter(|r| truth.get(&r.rev_id).is_some_and(|t| *t != r.label)).count();
    assert_eq!(mismatched, 0);
    assert!(w.records.iter().filter(|r| r.label).count() > 100);
}

/// Hiding the user group pulls predictions toward the prior the forest was
/// fitted under: the prevalence when unweighted, one half when balanced.
/// Literal zeros would instead describe a brand-new account.
#[test]
fn hiding_user_features_pulls_toward_the_prior() {
    let w = world();
    let (x, y) = design_matrix(&w.records, Split::Train, &GroupSet::all()).unwrap();
    let (test, _) = design_matrix(&w.records, Split::Test, &GroupSet::all()).unwrap();
    let user = GroupSet::new([FeatureGroup::User]).unwrap();
    for weight in [ClassWeight::None, ClassWeight::Balanced] {
        let m = train(&x, &y, &GroupSet::all(), &ForestParams { n_trees: 40, seed: 21, class_weight: weight, ..ForestParams::default() }).unwrap();
        let prior = if weight == ClassWeight::None { m.summary.prevalence } else { 0.5 };
        let spread = |p: &dyn Fn(&[f64]) -> f64| test.iter().map(|r| (p(r) - prior).abs()).sum::<f64>() / test.len() as f64;
        let full = spread(&|r| m.predict_proba(r).unwrap());
        let blind = spread(&|r| m.predict_proba_hiding(r, &user).unwrap());
        assert!(blind < full, "{weight:?}: {blind} vs {full}");
    }
}

#[test]
fn hiding_nothing_is_plain_prediction() {
    let w = world();
    let (x, _) = design_matrix(&w.records, Split::Test, &GroupSet::all()).unwrap();
    let (none, all) = (vec![false; FEATURES.len()], vec![true; FEATURES.len()]);
    for t in &w.model.forest.trees {
        for r in x.iter().take(200) {
            assert_eq!(t.predict_hiding(r, &none), t.predict(r));
            assert!((0.0..=1.0).contains(&t.predict_hiding(r, &all)));
        }
    }
}

#[test]
fn identical_trees_average_to_one_tree() {
    let tree = world().model.forest.trees[0].clone();
    let (x, _) = design_matrix(&world().records, Split::Test, &GroupSet::all()).unwrap();
    for k in [1, 2, 7] {
        let forest = Forest { width: FEATURES.len(), trees: vec![tree.clone(); k] };
        assert!(x.iter().take(500).all(|r| forest.predict(r) == tree.predict(r)));
    }
}

#[test]
fn fixture_streams_are_deterministic() {
    let out = &world().synth;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    out.write_fixture_dir(a.path()).unwrap();
    generate(&out.spec).unwrap().write_fixture_dir(b.path()).unwrap();
    let read = |d: &std::path::Path| -> Vec<String> {
        let src = FixtureSource::open(d).unwrap();
        src.stream_recent(0, None).unwrap().map(|e| serde_json::to_string(&e.unwrap()).unwrap()).collect()
    };
    let first = read(a.path());
    assert_eq!(first.len(), out.envelopes.len());
    assert_eq!(first, read(b.path()));
}

#[test]
fn extraction_is_deterministic_and_url_sensitive() {
    let reg = PropertyRegistry::builtin();
    let cfg = PatternConfig::default();
    let url = PropertyId::new("P856").unwrap();
    for env in world().synth.envelopes.iter().filter(|e| e.parent_json.is_some()).take(300) {
        let parent = parse_entity(env.parent_json.as_deref().unwrap()).unwrap();
        let child = parse_entity(&env.child_json).unwrap();
        let v = extract(&diff(Some(&parent), &child, &reg).unwrap(), &child, &env.meta, &cfg).unwrap();
        let again = extract(&diff(Some(&parent), &child, &reg).unwrap(), &child, &env.meta, &cfg).unwrap();
        assert!(v.values().iter().zip(again.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(v.values().iter().all(|x| x.is_finite()));

        let mut more = child.clone();
        more.add_statement(Statement::new(url.clone(), SnakValue::Url(format!("https://r{}.example/", env.meta.rev_id))));
        let w = extract(&diff(Some(&parent), &more, &reg).unwrap(), &more, &env.meta, &cfg).unwrap();
        let key = "proportion_external_links_added";
        assert!(w.get(key).unwrap() > v.get(key).unwrap(), "rev {}", env.meta.rev_id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_stay_in_unit_interval(rows in proptest::collection::vec(
        proptest::collection::vec(prop_oneof![-1e9f64..1e9, 0.0f64..1.0, Just(0.0), Just(1.0)], FEATURES.len()),
        150,
    )) {
        let m = &world().model;
        for r in rows {
            let p = m.predict_proba(&r).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

