use proptest::prelude::*;
use vandal_core::diff::diff;
use vandal_core::entity::ItemId;
use vandal_core::registry::PropertyRegistry;
use vandal_testkit::oracle::diff_counts_oracle;
use vandal_testkit::strategy::{entity, entity_pair};

fn registry() -> PropertyRegistry {
    PropertyRegistry::parse("P214 external-id\nP856 url\nP569 time\n").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_oracle((parent, child) in entity_pair()) {
        let reg = registry();
        prop_assert_eq!(diff(Some(&parent), &child, &reg).unwrap(), diff_counts_oracle(Some(&parent), &child, &reg));
    }
}

proptest! {
    #[test]
    fn creation_matches_oracle(child in entity(ItemId::new("Q42").unwrap())) {
        let reg = registry();
        let d = diff(None, &child, &reg).unwrap();
        prop_assert_eq!(&d, &diff_counts_oracle(None, &child, &reg));
        prop_assert_eq!(d.labels.removed + d.statements.removed + d.aliases.removed + d.references.removed, 0);
    }

    #[test]
    fn swapping_sides_swaps_added_and_removed((a, b) in entity_pair()) {
        let reg = registry();
        let ab = diff(Some(&a), &b, &reg).unwrap();
        let ba = diff(Some(&b), &a, &reg).unwrap();
        for (x, y) in [(ab.labels, ba.labels), (ab.descriptions, ba.descriptions), (ab.sitelinks, ba.sitelinks), (ab.statements, ba.statements)] {
            prop_assert_eq!((x.added, x.removed, x.changed), (y.removed, y.added, y.changed));
        }
        for (x, y) in [(ab.aliases, ba.aliases), (ab.badges, ba.badges), (ab.qualifiers, ba.qualifiers), (ab.references, ba.references)] {
            prop_assert_eq!((x.added, x.removed), (y.removed, y.added));
        }
        prop_assert_eq!(ab.changed_properties, ba.changed_properties);
        prop_assert_eq!((ab.added_item_refs, ab.added_urls), (ba.removed_item_refs, ba.removed_urls));
    }

    #[test]
    fn self_diff_is_empty(e in entity(ItemId::new("Q42").unwrap())) {
        let d = diff(Some(&e), &e, &registry()).unwrap();
        let s = [d.labels, d.descriptions, d.sitelinks, d.statements];
        prop_assert!(s.iter().all(|k| k.added + k.removed + k.changed == 0));
        let m = [d.aliases, d.badges, d.qualifiers, d.references];
        prop_assert!(m.iter().all(|k| k.added + k.removed == 0));
        prop_assert!(d.changed_properties.is_empty());
    }

    #[test]
    fn changed_never_exceeds_overlap((a, b) in entity_pair()) {
        let d = diff(Some(&a), &b, &registry()).unwrap();
        prop_assert!(d.labels.changed <= a.labels.len().min(b.labels.len()) as u32);
        prop_assert!(d.statements.changed <= a.statement_count().min(b.statement_count()) as u32);
    }
}
