pub use crate::fixtures::{corpus, g1};

use proptest::prelude::*;

use crate::corpus::{Corpus, PaperRecord};

/// Random small corpora over 5 authors and 5 materials.
pub fn arb_corpus(max_records: usize) -> impl Strategy<Value = Corpus> {
    let record = (
        2000i32..2006,
        prop::collection::btree_set(0u8..5, 0..4),
        prop::collection::btree_set(0u8..5, 0..4),
        any::<bool>(),
    );
    prop::collection::vec(record, 1..=max_records).prop_map(|recs| {
        let records = recs
            .into_iter()
            .enumerate()
            .map(|(i, (year, authors, mats, prop))| {
                let mut authors: Vec<String> = authors.iter().map(|a| format!("a{a}")).collect();
                let entities: Vec<String> = mats.iter().map(|m| format!("m{m}")).collect();
                if authors.is_empty() && entities.is_empty() {
                    authors.push("a0".into());
                }
                PaperRecord {
                    id: format!("p{i}"),
                    year,
                    authors,
                    entities,
                    tokens: prop.then(|| vec![crate::fixtures::PROPERTY.to_string()]),
                }
            })
            .collect();
        Corpus::new(records, crate::fixtures::keywords()).unwrap()
    })
}
