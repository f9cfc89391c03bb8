use proptest::prelude::*;
use vandal_core::entity::{parse_entity, parse_entity_bytes, serialize_entity, ItemId};
use vandal_testkit::strategy::entity;

fn q42() -> ItemId {
    ItemId::new("Q42").unwrap()
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(e in entity(q42())) {
        let back = parse_entity(&serialize_entity(&e)).unwrap();
        prop_assert_eq!(back.canonical_hash(), e.canonical_hash());
        prop_assert_eq!(serialize_entity(&back), serialize_entity(&e));
    }

    #[test]
    fn hash_ignores_list_order(e in entity(q42()), rot in 0usize..7) {
        let mut shuffled = e.clone();
        for list in shuffled.statements.values_mut() {
            let k = rot % list.len().max(1);
            list.rotate_left(k);
            for s in list.iter_mut() {
                s.qualifiers.reverse();
                s.references.reverse();
            }
        }
        for list in shuffled.aliases.values_mut() {
            list.reverse();
        }
        for link in shuffled.sitelinks.values_mut() {
            link.badges.reverse();
        }
        prop_assert_eq!(shuffled.canonical_hash(), e.canonical_hash());
    }

    #[test]
    fn hash_sees_content_changes(e in entity(q42())) {
        let mut changed = e.clone();
        changed.labels.insert("eo".into(), "nova".into());
        prop_assert_ne!(changed.canonical_hash(), e.canonical_hash());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_entity_bytes(&bytes);
    }

    #[test]
    fn mangled_documents_never_panic(e in entity(q42()), cut in 0usize..2000, junk in "[\\[\\]{}\",:a-z0-9]{0,8}") {
        let text = serialize_entity(&e);
        let cut = cut.min(text.len());
        let cut = (0..=cut).rev().find(|i| text.is_char_boundary(*i)).unwrap_or(0);
        let _ = parse_entity(&format!("{}{junk}{}", &text[..cut], &text[cut..]));
    }
}
