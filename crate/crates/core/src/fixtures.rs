//! Small hand-built corpora shared by unit tests, integration tests and docs.

use crate::corpus::{Corpus, Keywords, PaperRecord};
use crate::hypergraph::{build_hypergraph, BuildOptions, Hypergraph};

pub const PROPERTY: &str = "thermoelectric";

/// `(id, year, authors, entities, mentions_property)`
pub type RecordSpec<'a> = (&'a str, i32, &'a [&'a str], &'a [&'a str], bool);

pub fn corpus(specs: &[RecordSpec<'_>]) -> Corpus {
    let records = specs
        .iter()
        .map(|&(id, year, authors, entities, prop)| PaperRecord {
            id: id.to_string(),
            year,
            authors: authors.iter().map(|s| s.to_string()).collect(),
            entities: entities.iter().map(|s| s.to_string()).collect(),
            tokens: prop.then(|| vec!["novel".to_string(), PROPERTY.to_string()]),
        })
        .collect();
    Corpus::new(records, keywords()).expect("fixture records are valid")
}

pub fn keywords() -> Keywords {
    Keywords::new([PROPERTY, "thermoelectricity", "seebeck", "zt"]).expect("nonempty")
}

/// Three papers: p1{a1,a2,m1,P}, p2{a1,m1,m2}, p3{a3,m2,P}.
pub fn g1_corpus() -> Corpus {
    corpus(&[
        ("p1", 2000, &["a1", "a2"], &["m1"], true),
        ("p2", 2000, &["a1"], &["m1", "m2"], false),
        ("p3", 2001, &["a3"], &["m2"], true),
    ])
}

pub fn g1() -> Hypergraph {
    build_hypergraph(&g1_corpus(), BuildOptions::default()).expect("nonempty")
}

/// A seeded corpus of `papers` records over 2000..=2015 with 40 materials,
/// 30 authors in five groups and abstract tokens. Materials with a low
/// index are studied together with the property more often.
pub fn synthetic_corpus(papers: usize, seed: u64) -> Corpus {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let mut rng = crate::rng::stream_rng(seed, 0xc0_4105, 0);
    let filler = ["we", "report", "measured", "crystal", "transport", "phase", "doping", "band", "film", "bulk"];
    let records = (0..papers)
        .map(|i| {
            let year = 2000 + (i * 16 / papers.max(1)) as i32;
            let group = rng.gen_range(0..5);
            let mut authors: Vec<String> =
                (0..rng.gen_range(1..=3)).map(|_| format!("a{}", group * 6 + rng.gen_range(0..6))).collect();
            authors.sort();
            authors.dedup();
            let base = group * 8;
            let mut entities: Vec<String> =
                (0..rng.gen_range(1..=3)).map(|_| format!("m{}", (base + rng.gen_range(0..10)) % 40)).collect();
            entities.sort();
            entities.dedup();
            let prop = rng.gen_bool(if group == 0 { 0.5 } else { 0.08 });
            let mut tokens: Vec<String> = (0..6).map(|_| filler.choose(&mut rng).unwrap().to_string()).collect();
            tokens.extend(entities.iter().cloned());
            if prop {
                tokens.push(PROPERTY.to_string());
            }
            tokens.shuffle(&mut rng);
            PaperRecord { id: format!("s{i}"), year, authors, entities, tokens: Some(tokens) }
        })
        .collect();
    Corpus::new(records, keywords()).expect("synthetic records are valid")
}
