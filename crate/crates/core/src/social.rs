//! Social density between keyword sets and the yearwise score functions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Keywords};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid, softplus};
use crate::rng::stream_rng;
use crate::scoring::{Provenance, ScoreTable};

pub const DEFAULT_MEMORY: usize = 5;

/// Lower-cased term -> year -> ids of authors who used the term that year.
/// Terms are record entities and tokens.
#[derive(Debug, Clone, Default)]
pub struct AuthorIndex {
    terms: BTreeMap<String, BTreeMap<i32, BTreeSet<u32>>>,
    author_ids: BTreeMap<String, u32>,
}

impl AuthorIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut idx = AuthorIndex::default();
        for rec in corpus.records() {
            let ids: Vec<u32> = rec
                .authors
                .iter()
                .map(|a| {
                    let next = idx.author_ids.len() as u32;
                    *idx.author_ids.entry(a.clone()).or_insert(next)
                })
                .collect();
            let terms: BTreeSet<String> =
                rec.entities.iter().chain(rec.tokens()).map(|t| t.to_lowercase()).collect();
            for term in terms {
                idx.terms.entry(term).or_default().entry(rec.year).or_default().extend(&ids);
            }
        }
        idx
    }

    pub fn author_count(&self) -> usize {
        self.author_ids.len()
    }

    /// 𝒜(X), or 𝒜_year(X) when `year` is given.
    pub fn authors<'a, I>(&self, terms: I, year: Option<i32>) -> BTreeSet<u32>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = BTreeSet::new();
        for term in terms {
            let Some(by_year) = self.terms.get(&term.to_lowercase()) else { continue };
            match year {
                Some(y) => {
                    if let Some(s) = by_year.get(&y) {
                        out.extend(s);
                    }
                }
                None => by_year.values().for_each(|s| out.extend(s)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdMode {
    /// |𝒜X ∩ 𝒜Y| / (|𝒜X| + |𝒜Y|)
    #[default]
    SumDenominator,
    /// |𝒜X ∩ 𝒜Y| / |𝒜X ∪ 𝒜Y|
    Jaccard,
}

pub fn density_of_sets(ax: &BTreeSet<u32>, ay: &BTreeSet<u32>, mode: SdMode) -> f64 {
    let inter = ax.intersection(ay).count();
    let denom = match mode {
        SdMode::SumDenominator => ax.len() + ay.len(),
        SdMode::Jaccard => ax.len() + ay.len() - inter,
    };
    if denom == 0 {
        0.0
    } else {
        inter as f64 / denom as f64
    }
}

pub fn social_density<'a, X, Y>(index: &AuthorIndex, x: X, y: Y, year: Option<i32>, mode: SdMode) -> f64
where
    X: IntoIterator<Item = &'a str>,
    Y: IntoIterator<Item = &'a str>,
{
    density_of_sets(&index.authors(x, year), &index.authors(y, year), mode)
}

/// `[SD_{t-1}, …, SD_{t-γ}]` for one candidate against the property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdSeries {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub t: i32,
    pub values: Vec<f64>,
}

impl SdSeries {
    pub fn gamma(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_nonzero(&self) -> bool {
        self.values.iter().any(|&v| v != 0.0)
    }
}

pub fn yearwise_sd(index: &AuthorIndex, x: &[String], y: &[String], t: i32, gamma: usize, mode: SdMode) -> Result<SdSeries> {
    if gamma == 0 {
        return Err(Error::Config("memory γ must be at least 1".into()));
    }
    let ax: Vec<BTreeSet<u32>> = (1..=gamma as i32).map(|i| index.authors(x.iter().map(String::as_str), Some(t - i))).collect();
    let values = ax
        .iter()
        .zip(1..=gamma as i32)
        .map(|(a, i)| density_of_sets(a, &index.authors(y.iter().map(String::as_str), Some(t - i)), mode))
        .collect();
    Ok(SdSeries { x: x.to_vec(), y: y.to_vec(), t, values })
}

/// Yearwise series of every candidate against the keyword set, computed in parallel.
pub fn candidate_series(
    index: &AuthorIndex,
    candidates: &BTreeSet<String>,
    keywords: &Keywords,
    t: i32,
    gamma: usize,
    mode: SdMode,
) -> Result<BTreeMap<String, SdSeries>> {
    let y: Vec<String> = keywords.iter().map(str::to_string).collect();
    candidates
        .par_iter()
        .map(|c| Ok((c.clone(), yearwise_sd(index, std::slice::from_ref(c), &y, t, gamma, mode)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdClassifier {
    /// `[intercept, θ_1, …, θ_γ]`
    pub weights: Vec<f64>,
}

impl SdClassifier {
    pub fn gamma(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn posterior(&self, series: &[f64]) -> Result<f64> {
        if series.len() != self.gamma() {
            return Err(Error::Validation(format!(
                "classifier expects {} features, got {}",
                self.gamma(),
                series.len()
            )));
        }
        Ok(sigmoid(self.weights[0] + dot(&self.weights[1..], series)))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SdMethod<'a> {
    Sum,
    Rand { k: usize, seed: u64 },
    Class(&'a SdClassifier),
}

pub fn sd_score(series: &BTreeMap<String, SdSeries>, method: SdMethod<'_>) -> Result<ScoreTable> {
    let mut table = match method {
        SdMethod::Sum => ScoreTable::from_pairs(Provenance::Sd, series.iter().map(|(c, s)| (c.clone(), s.sum())))?,
        SdMethod::Rand { k, seed } => {
            let nonzero: Vec<&String> = series.iter().filter(|(_, s)| s.sum() > 0.0).map(|(c, _)| c).collect();
            let chosen: BTreeSet<&String> = if nonzero.len() <= k {
                nonzero.iter().copied().collect()
            } else {
                let mut rng = stream_rng(seed, 0x5d, 0);
                sample(&mut rng, nonzero.len(), k).into_iter().map(|i| nonzero[i]).collect()
            };
            let mut t = ScoreTable::from_pairs(
                Provenance::Sd,
                series.keys().map(|c| (c.clone(), if chosen.contains(c) { 1.0 } else { 0.0 })),
            )?;
            if nonzero.len() < k {
                t.flag_table("fewer_than_k_nonzero");
            }
            t.set_meta("k", k);
            t
        }
        SdMethod::Class(clf) => {
            let mut values = BTreeMap::new();
            for (c, s) in series {
                values.insert(c.clone(), clf.posterior(&s.values)?);
            }
            ScoreTable::new(Provenance::Sd, values)?
        }
    };
    table.set_meta(
        "method",
        match method {
            SdMethod::Sum => "sum",
            SdMethod::Rand { .. } => "rand",
            SdMethod::Class(_) => "class",
        },
    );
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub lr: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { lr: 1.0, max_iter: 20_000, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub classifier: SdClassifier,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn logit(weights: &[f64], row: &[f64]) -> f64 {
    weights[0] + dot(&weights[1..], row)
}

/// Mean log-loss of labels under `σ(θᵀ[1; x])`.
pub fn logistic_loss(weights: &[f64], features: &[Vec<f64>], labels: &[bool]) -> f64 {
    let total: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = logit(weights, x);
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    total / features.len() as f64
}

pub fn logistic_gradient(weights: &[f64], features: &[Vec<f64>], labels: &[bool]) -> Vec<f64> {
    let mut g = vec![0.0; weights.len()];
    for (x, &y) in features.iter().zip(labels) {
        let r = sigmoid(logit(weights, x)) - if y { 1.0 } else { 0.0 };
        g[0] += r;
        for (gi, xi) in g[1..].iter_mut().zip(x) {
            *gi += r * xi;
        }
    }
    let n = features.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// Full-batch gradient descent on the mean log-loss from zero weights.
pub fn train_sd_classifier(features: &[Vec<f64>], labels: &[bool], cfg: &LogisticConfig) -> Result<LogisticFit> {
    if features.len() != labels.len() {
        return Err(Error::Validation("feature and label counts differ".into()));
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(Error::Domain("classifier training needs both positive and negative examples".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|r| r.len() != dim) {
        return Err(Error::Validation("feature rows have different lengths".into()));
    }
    let mut w = vec![0.0; dim + 1];
    let mut norm = f64::INFINITY;
    let mut it = 0;
    while it < cfg.max_iter {
        let g = logistic_gradient(&w, features, labels);
        norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < cfg.tolerance {
            break;
        }
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= cfg.lr * gi);
        it += 1;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("logistic regression weights became non-finite".into()));
    }
    Ok(LogisticFit { classifier: SdClassifier { weights: w }, iterations: it, gradient_norm: norm, converged: norm < cfg.tolerance })
}

/// Earliest year each entity appears in a record that mentions the property.
pub fn first_cooccurrence_years(corpus: &Corpus) -> BTreeMap<String, i32> {
    let mut first: BTreeMap<String, i32> = BTreeMap::new();
    for rec in corpus.records() {
        if !corpus.mentions_property(rec) {
            continue;
        }
        for e in &rec.entities {
            if corpus.keywords().matches(e) {
                continue;
            }
            first.entry(e.clone()).and_modify(|y| *y = (*y).min(rec.year)).or_insert(rec.year);
        }
    }
    first
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierData {
    pub names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

/// Positives: entities first co-occurring with the property in
/// `[t - window, t)`, featurised at their discovery year. Negatives: the
/// given unstudied entities featurised at `t`. All-zero rows are dropped.
pub fn classifier_training_data(
    index: &AuthorIndex,
    corpus_before_t: &Corpus,
    unstudied: &BTreeSet<String>,
    t: i32,
    gamma: usize,
    window: i32,
    mode: SdMode,
) -> Result<ClassifierData> {
    let y: Vec<String> = corpus_before_t.keywords().iter().map(str::to_string).collect();
    let mut rows: Vec<(String, i32, bool)> = first_cooccurrence_years(corpus_before_t)
        .into_iter()
        .filter(|&(_, year)| year >= t - window && year < t)
        .map(|(e, year)| (e, year, true))
        .collect();
    rows.extend(unstudied.iter().map(|e| (e.clone(), t, false)));
    let series: Vec<(String, SdSeries, bool)> = rows
        .into_par_iter()
        .map(|(e, year, label)| Ok((e.clone(), yearwise_sd(index, &[e], &y, year, gamma, mode)?, label)))
        .collect::<Result<_>>()?;
    let mut data = ClassifierData { names: Vec::new(), features: Vec::new(), labels: Vec::new() };
    for (e, s, label) in series {
        if s.is_nonzero() {
            data.names.push(e);
            data.features.push(s.values);
            data.labels.push(label);
        }
    }
    Ok(data)
}
