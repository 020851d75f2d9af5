//! α-biased truncated random walks over the hypergraph, skip-gram windows and
//! the smoothed unigram negative sampler.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeId, NodeKind};
use crate::rng::stream_rng;

/// Weight of each non-author member relative to each author member when a
/// node is drawn from the chosen hyperedge. `Alpha::INFINITE` never emits
/// authors.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub const UNIFORM: Alpha = Alpha(1.0);
    pub const INFINITE: Alpha = Alpha(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::Validation(format!("alpha must be >= 0, got {value}")));
        }
        Ok(Alpha(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Alpha::INFINITE),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("invalid alpha {s:?}")))
                .and_then(Alpha::new),
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Alpha::new(v),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct WalkConfig {
    pub alpha: Alpha,
    /// Maximum number of nodes per sequence, start node included.
    pub walk_length: usize,
    pub walks_per_start: usize,
    pub window: usize,
    pub seed: u64,
    /// Mirror of the transition matrix option: never pick the current node
    /// from the chosen hyperedge.
    #[serde(default)]
    pub exclude_self: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            alpha: Alpha::UNIFORM,
            walk_length: 20,
            walks_per_start: 10,
            window: 8,
            seed: 0,
            exclude_self: false,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(Error::Validation(format!("walk_length must be >= 2, got {}", self.walk_length)));
        }
        if self.window < 1 {
            return Err(Error::Validation("window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Edge resamples allowed when the chosen hyperedge has no eligible member.
const MAX_EDGE_RETRIES: usize = 32;

/// One walk step. `Ok(None)` signals that the walk must stop here: the node
/// is a dead end, or no eligible member was found after bounded retries.
pub fn sample_step<R: Rng + ?Sized>(
    h: &Hypergraph,
    current: NodeId,
    alpha: Alpha,
    exclude_self: bool,
    rng: &mut R,
) -> Result<Option<NodeId>> {
    h.node(current)?;
    let edges = h.incident_edges(current);
    if edges.is_empty() {
        return Ok(None);
    }
    for _ in 0..MAX_EDGE_RETRIES {
        let e = edges[rng.gen_range(0..edges.len())];
        let eligible = |v: &&NodeId| !(exclude_self && **v == current);
        let members: Vec<NodeId> = h.members(e).iter().filter(eligible).copied().collect();
        if members.is_empty() {
            // size-1 edge under exclude_self: the walker stays put
            return Ok(Some(current));
        }
        let (authors, concepts): (Vec<NodeId>, Vec<NodeId>) =
            members.iter().partition(|&&v| h.kind(v).is_author());
        if alpha.is_infinite() {
            if concepts.is_empty() {
                continue;
            }
            return Ok(Some(concepts[rng.gen_range(0..concepts.len())]));
        }
        let total = authors.len() as f64 + alpha.0 * concepts.len() as f64;
        if total <= 0.0 {
            continue;
        }
        let mut x = rng.gen::<f64>() * total;
        for &v in &members {
            let w = if h.kind(v).is_author() { 1.0 } else { alpha.0 };
            if x < w {
                return Ok(Some(v));
            }
            x -= w;
        }
        // rounding at the upper end
        return Ok(members.iter().rev().find(|&&v| h.kind(v).is_author() || alpha.0 > 0.0).copied());
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartPolicy {
    pub kinds: Vec<NodeKind>,
    pub walks_per_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub sequences: Vec<Vec<NodeId>>,
    pub policy: StartPolicy,
}

impl WalkCorpus {
    /// One sequence per line, node labels separated by single spaces.
    /// Whitespace inside labels is replaced by `_`.
    pub fn write_labels<W: Write>(&self, h: &Hypergraph, mut out: W) -> Result<()> {
        for seq in &self.sequences {
            let line: Vec<String> = seq.iter().map(|&v| token_label(h.label(v))).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn to_label_sequences(&self, h: &Hypergraph) -> Vec<Vec<String>> {
        self.sequences
            .iter()
            .map(|s| s.iter().map(|&v| token_label(h.label(v))).collect())
            .collect()
    }
}

pub fn token_label(label: &str) -> String {
    if label.chars().any(char::is_whitespace) {
        label.split_whitespace().collect::<Vec<_>>().join("_")
    } else {
        label.to_string()
    }
}

/// `walks_per_start` walks from every material and property node. Each walk
/// draws from its own stream keyed by `(seed, start, index)`, so the output
/// does not depend on thread scheduling.
pub fn generate_walks(h: &Hypergraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if h.node_count() == 0 {
        return Err(Error::Validation("cannot walk an empty hypergraph".into()));
    }
    let starts: Vec<NodeId> = h.node_ids().filter(|&v| !h.kind(v).is_author()).collect();
    let per_start: Vec<Vec<Vec<NodeId>>> = starts
        .par_iter()
        .map(|&start| {
            (0..cfg.walks_per_start)
                .map(|k| {
                    let mut rng: ChaCha8Rng = stream_rng(cfg.seed, start.0 as u64, k as u64);
                    let mut seq = Vec::with_capacity(cfg.walk_length);
                    seq.push(start);
                    let mut at = start;
                    while seq.len() < cfg.walk_length {
                        match sample_step(h, at, cfg.alpha, cfg.exclude_self, &mut rng)? {
                            Some(next) => {
                                seq.push(next);
                                at = next;
                            }
                            None => break,
                        }
                    }
                    Ok(seq)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(WalkCorpus {
        sequences: per_start.into_iter().flatten().collect(),
        policy: StartPolicy {
            kinds: vec![NodeKind::Material, NodeKind::Property],
            walks_per_start: cfg.walks_per_start,
        },
    })
}

/// All ordered `(center, context)` pairs at positional distance `1..=window`.
pub fn window_pairs_of<T: Copy>(sequences: &[Vec<T>], window: usize) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for seq in sequences {
        for (i, &center) in seq.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(seq.len() - 1);
            for (j, &ctx) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                if j != i {
                    out.push((center, ctx));
                }
            }
        }
    }
    out
}

/// Skip-gram pairs from walk sequences, optionally after deleting author
/// nodes from each sequence.
pub fn window_pairs(wc: &WalkCorpus, h: &Hypergraph, window: usize, drop_authors: bool) -> Result<Vec<(NodeId, NodeId)>> {
    if window < 1 {
        return Err(Error::Validation("window must be >= 1".into()));
    }
    if drop_authors {
        let stripped: Vec<Vec<NodeId>> = wc
            .sequences
            .iter()
            .map(|s| s.iter().copied().filter(|&v| !h.kind(v).is_author()).collect())
            .collect();
        Ok(window_pairs_of(&stripped, window))
    } else {
        Ok(window_pairs_of(&wc.sequences, window))
    }
}

/// Draws index `i` with probability `f_i^power / sum_j f_j^power` over the
/// support `{i : f_i > 0}`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn from_counts(counts: &[f64], power: f64) -> Result<Self> {
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Domain("frequencies must be finite and nonnegative".into()));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| if c > 0.0 { c.powf(power) } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("negative sampler needs at least one positive count".into()));
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(NegativeSampler { probabilities: weights.iter().map(|w| w / total).collect(), dist })
    }

    /// Unigram^(3/4) over occurrence counts of `0..n` in `sequences`.
    pub fn from_sequences(sequences: &[Vec<usize>], n: usize, power: f64) -> Result<Self> {
        let mut counts = vec![0.0; n];
        for &t in sequences.iter().flatten() {
            counts[t] += 1.0;
        }
        NegativeSampler::from_counts(&counts, power)
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities[i]
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

pub const UNIGRAM_POWER: f64 = 0.75;
