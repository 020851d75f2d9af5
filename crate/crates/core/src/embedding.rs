//! Desk-scale skip-gram with negative sampling, cosine plausibility scores,
//! (deepwalk-mixed) SPPMI matrices and the embedding text format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cosine, dot, log_sigmoid, sigmoid};
use crate::rng::stream_key;
use crate::transition::CsrMatrix;
use crate::walks::{window_pairs_of, NegativeSampler};

/// Hidden (`z^(w)`) and output (`z^(o)`) weight rows per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    hidden: Vec<f64>,
    output: Vec<f64>,
    has_output: bool,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, dim: usize, hidden: Vec<f64>, output: Option<Vec<f64>>) -> Result<Self> {
        let n = tokens.len();
        if hidden.len() != n * dim {
            return Err(Error::Validation(format!("hidden matrix has {} values, expected {n}x{dim}", hidden.len())));
        }
        if let Some(o) = &output {
            if o.len() != n * dim {
                return Err(Error::Validation(format!("output matrix has {} values, expected {n}x{dim}", o.len())));
            }
        }
        if hidden.iter().chain(output.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate token {t:?}")));
            }
        }
        let has_output = output.is_some();
        Ok(EmbeddingTable {
            tokens,
            index,
            dim,
            hidden,
            output: output.unwrap_or_else(|| vec![0.0; n * dim]),
            has_output,
        })
    }

    /// word2vec-style start: hidden rows uniform in `(-0.5/D, 0.5/D)`,
    /// output rows zero.
    pub fn initialize(tokens: Vec<String>, dim: usize, seed: u64) -> Self {
        let n = tokens.len();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_key(seed, 0x1417, 0));
        let half = 0.5 / dim as f64;
        let u = Uniform::new(-half, half);
        let hidden = (0..n * dim).map(|_| u.sample(&mut rng)).collect();
        EmbeddingTable::new(tokens, dim, hidden, Some(vec![0.0; n * dim])).expect("shapes agree")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// False when only hidden weights were loaded; the output matrix is then zero.
    pub fn has_output(&self) -> bool {
        self.has_output
    }

    pub fn index_of(&self, token: &str) -> Result<usize> {
        self.index.get(token).copied().ok_or_else(|| Error::Lookup(format!("token {token:?} not in vocabulary")))
    }

    pub fn hidden_row(&self, i: usize) -> &[f64] {
        &self.hidden[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn hidden_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.hidden[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.output[i * self.dim..(i + 1) * self.dim]
    }

    fn is_finite(&self) -> bool {
        self.hidden.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// Writes `<vocab_size> <dim>` then `<token> v1 ... vD` per row.
    pub fn write_text<W: Write>(&self, matrix: Matrix, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, t) in self.tokens.iter().enumerate() {
            let row = match matrix {
                Matrix::Hidden => self.hidden_row(i),
                Matrix::Output => self.output_row(i),
            };
            write!(out, "{t}")?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Loads the hidden matrix and, when given, the output matrix. Without an
    /// output file the output weights are zero and `has_output()` is false.
    pub fn read_text<R: BufRead, S: BufRead>(hidden: R, output: Option<S>) -> Result<Self> {
        let (tokens, dim, h) = read_matrix(hidden)?;
        let out = match output {
            Some(o) => {
                let (otokens, odim, o) = read_matrix(o)?;
                if otokens != tokens || odim != dim {
                    return Err(Error::Validation("hidden and output files disagree on vocabulary or dimension".into()));
                }
                Some(o)
            }
            None => None,
        };
        EmbeddingTable::new(tokens, dim, h, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matrix {
    Hidden,
    Output,
}

fn read_matrix<R: BufRead>(input: R) -> Result<(Vec<String>, usize, Vec<f64>)> {
    let mut lines = input.lines().enumerate();
    let (n, dim) = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            let mut it = line.split_whitespace();
            let n = it.next().and_then(|t| t.parse::<usize>().ok());
            let d = it.next().and_then(|t| t.parse::<usize>().ok());
            match (n, d, it.next()) {
                (Some(n), Some(d), None) => (n, d),
                _ => return Err(Error::parse(1, "header must be `<vocab_size> <dim>`")),
            }
        }
        None => return Err(Error::parse(1, "empty embedding file")),
    };
    let mut tokens = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * dim);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let token = it.next().expect("nonblank line has a token");
        let row: Vec<f64> = it
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(idx + 1, format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::parse(idx + 1, format!("expected {dim} values, found {}", row.len())));
        }
        tokens.push(token.to_string());
        values.extend(row);
    }
    if tokens.len() != n {
        return Err(Error::parse(1, format!("header declares {n} rows, found {}", tokens.len())));
    }
    Ok((tokens, dim, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlausibilityMode {
    /// `cos(z^(w)(property), z^(w)(entity))`: interchangeability.
    HiddenHidden,
    /// `cos(z^(o)(property), z^(w)(entity))`: co-occurrence likelihood.
    OutputHidden,
}

pub fn plausibility_score(table: &EmbeddingTable, property: &str, entity: &str, mode: PlausibilityMode) -> Result<f64> {
    let p = table.index_of(property)?;
    let e = table.index_of(entity)?;
    match mode {
        PlausibilityMode::HiddenHidden => Ok(cosine(table.hidden_row(p), table.hidden_row(e))),
        PlausibilityMode::OutputHidden => {
            if !table.has_output() {
                return Err(Error::Domain("embedding has no output weights; use hidden-hidden mode".into()));
            }
            Ok(cosine(table.output_row(p), table.hidden_row(e)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Floor of the linear decay, as a fraction of `lr`.
    pub min_lr_fraction: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig { dim: 64, epochs: 5, lr: 0.025, min_lr_fraction: 1e-4, negatives: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipgramPair {
    pub center: usize,
    pub context: usize,
    pub weight: f64,
}

/// Loss and gradients of one weighted skip-gram pair:
/// `w * (-ln σ(o_ctx·h) - Σ_n ln σ(-o_n·h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub hidden: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn pair_gradient(hidden: &[f64], context: &[f64], negatives: &[&[f64]], weight: f64) -> PairGradient {
    let dim = hidden.len();
    let s = dot(context, hidden);
    let mut loss = -log_sigmoid(s);
    // d/ds of -ln σ(s) is σ(s) - 1
    let g = weight * (sigmoid(s) - 1.0);
    let mut d_hidden: Vec<f64> = context.iter().map(|c| g * c).collect();
    let d_context: Vec<f64> = hidden.iter().map(|x| g * x).collect();
    let mut d_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(neg, hidden);
        loss -= log_sigmoid(-s);
        let g = weight * sigmoid(s);
        for k in 0..dim {
            d_hidden[k] += g * neg[k];
        }
        d_negs.push(hidden.iter().map(|x| g * x).collect());
    }
    PairGradient { loss: weight * loss, hidden: d_hidden, context: d_context, negatives: d_negs }
}

pub fn pair_loss(hidden: &[f64], context: &[f64], negatives: &[&[f64]], weight: f64) -> f64 {
    let mut loss = -log_sigmoid(dot(context, hidden));
    for neg in negatives {
        loss -= log_sigmoid(-dot(neg, hidden));
    }
    weight * loss
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean weighted loss per training pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the held-out pairs with frozen negatives: before
    /// training, then after each epoch.
    pub held_out_losses: Vec<f64>,
    pub held_out_pairs: usize,
}

/// Every `HOLD_OUT_STRIDE`-th pair is held out when there are enough pairs.
const HOLD_OUT_STRIDE: usize = 20;

/// Plain SGD over shuffled pairs with a linearly decaying learning rate.
pub fn train_skipgram(
    tokens: Vec<String>,
    pairs: &[SkipgramPair],
    sampler: &NegativeSampler,
    cfg: &SkipgramConfig,
) -> Result<(EmbeddingTable, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::Validation("skip-gram training needs at least one pair".into()));
    }
    if cfg.dim == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("skip-gram needs dim > 0 and lr > 0".into()));
    }
    if sampler.len() != tokens.len() {
        return Err(Error::Config("negative sampler and vocabulary sizes differ".into()));
    }
    let mut table = EmbeddingTable::initialize(tokens, cfg.dim, cfg.seed);

    let (train, held): (Vec<SkipgramPair>, Vec<SkipgramPair>) = if pairs.len() >= 2 * HOLD_OUT_STRIDE {
        let (t, h): (Vec<_>, Vec<_>) = pairs.iter().enumerate().partition(|(i, _)| i % HOLD_OUT_STRIDE != 0);
        (t.into_iter().map(|(_, p)| *p).collect(), h.into_iter().map(|(_, p)| *p).collect())
    } else {
        (pairs.to_vec(), Vec::new())
    };
    let mut held_rng = ChaCha8Rng::seed_from_u64(stream_key(cfg.seed, 0x4e6, 0));
    let held_negs: Vec<Vec<usize>> =
        held.iter().map(|_| (0..cfg.negatives).map(|_| sampler.sample(&mut held_rng)).collect()).collect();
    let held_loss = |table: &EmbeddingTable| -> f64 {
        if held.is_empty() {
            return f64::NAN;
        }
        let total: f64 = held
            .iter()
            .zip(&held_negs)
            .map(|(p, negs)| {
                let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| table.output_row(n)).collect();
                pair_loss(table.hidden_row(p.center), table.output_row(p.context), &neg_rows, p.weight)
            })
            .sum();
        total / held.len() as f64
    };

    let mut report = TrainReport { held_out_pairs: held.len(), ..TrainReport::default() };
    if !held.is_empty() {
        report.held_out_losses.push(held_loss(&table));
    }
    let total_steps = (cfg.epochs * train.len()).max(1) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut negs = vec![0usize; cfg.negatives];
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_key(cfg.seed, 0x5ee, epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let p = train[i];
            let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(cfg.min_lr_fraction);
            step += 1;
            for n in negs.iter_mut() {
                *n = sampler.sample(&mut rng);
            }
            let grad = {
                let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| table.output_row(n)).collect();
                pair_gradient(table.hidden_row(p.center), table.output_row(p.context), &neg_rows, p.weight)
            };
            epoch_loss += grad.loss;
            for (w, g) in table.output_row_mut(p.context).iter_mut().zip(&grad.context) {
                *w -= lr * g;
            }
            for (&n, gn) in negs.iter().zip(&grad.negatives) {
                for (w, g) in table.output_row_mut(n).iter_mut().zip(gn) {
                    *w -= lr * g;
                }
            }
            for (w, g) in table.hidden_row_mut(p.center).iter_mut().zip(&grad.hidden) {
                *w -= lr * g;
            }
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() || !table.is_finite() {
            return Err(Error::Diverged(format!(
                "skip-gram loss became {mean} in epoch {epoch} (lr {}); lower the learning rate",
                cfg.lr
            )));
        }
        report.epoch_losses.push(mean);
        if !held.is_empty() {
            report.held_out_losses.push(held_loss(&table));
        }
    }
    Ok((table, report))
}

/// Training data assembled from several weighted sentence sources over one
/// shared vocabulary (sorted lexicographically).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub tokens: Vec<String>,
    pub pairs: Vec<SkipgramPair>,
    /// Occurrence counts per token over all sources.
    pub counts: Vec<f64>,
    pub sequences: Vec<Vec<usize>>,
}

pub fn build_training_set(sources: &[(&[Vec<String>], f64)], window: usize) -> Result<TrainingSet> {
    if window == 0 {
        return Err(Error::Validation("window must be >= 1".into()));
    }
    let vocab: BTreeSet<&str> = sources.iter().flat_map(|(s, _)| s.iter().flatten()).map(String::as_str).collect();
    let tokens: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut counts = vec![0.0; tokens.len()];
    let mut pairs = Vec::new();
    let mut all_sequences = Vec::new();
    for &(seqs, weight) in sources {
        if !(weight >= 0.0) {
            return Err(Error::Validation(format!("source weight must be >= 0, got {weight}")));
        }
        let encoded: Vec<Vec<usize>> = seqs.iter().map(|s| s.iter().map(|t| index[t.as_str()]).collect()).collect();
        for &t in encoded.iter().flatten() {
            counts[t] += 1.0;
        }
        if weight > 0.0 {
            pairs.extend(
                window_pairs_of(&encoded, window)
                    .into_iter()
                    .map(|(center, context)| SkipgramPair { center, context, weight }),
            );
        }
        all_sequences.extend(encoded);
    }
    Ok(TrainingSet { tokens, pairs, counts, sequences: all_sequences })
}

/// Counts for a (deepwalk-mixed) shifted positive PMI matrix over one shared
/// index space `0..vocab_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct SppmiSpec {
    pub pair_counts: BTreeMap<(usize, usize), u64>,
    pub vocab_size: usize,
    pub dw_pair_counts: BTreeMap<(usize, usize), u64>,
    pub dw_vocab_size: usize,
    /// Shift `k` (number of negatives in the SGNS analogy).
    pub shift: f64,
    /// Weight of the deepwalk term; may be negative.
    pub alpha_mix: f64,
}

impl SppmiSpec {
    /// `#(i) = Σ_j #(i, j)` from the text counts.
    pub fn marginals(&self) -> Vec<u64> {
        let mut m = vec![0u64; self.vocab_size];
        for (&(i, _), &c) in &self.pair_counts {
            m[i] += c;
        }
        m
    }

    fn validate(&self) -> Result<()> {
        if !(self.shift > 0.0) {
            return Err(Error::Validation(format!("SPPMI shift must be > 0, got {}", self.shift)));
        }
        if !self.alpha_mix.is_finite() {
            return Err(Error::Validation("alpha_mix must be finite".into()));
        }
        let out_of_range = |m: &BTreeMap<(usize, usize), u64>| m.keys().any(|&(i, j)| i >= self.vocab_size || j >= self.vocab_size);
        if out_of_range(&self.pair_counts) || out_of_range(&self.dw_pair_counts) {
            return Err(Error::Validation("pair index outside the vocabulary".into()));
        }
        if !self.dw_pair_counts.is_empty() && self.dw_vocab_size == 0 && self.alpha_mix != 0.0 {
            return Err(Error::Validation("deepwalk counts given with zero deepwalk vocabulary".into()));
        }
        Ok(())
    }
}

/// Ordered window co-occurrence counts.
pub fn cooccurrence_counts(sequences: &[Vec<usize>], window: usize) -> BTreeMap<(usize, usize), u64> {
    let mut out = BTreeMap::new();
    for pair in window_pairs_of(sequences, window) {
        *out.entry(pair).or_insert(0) += 1;
    }
    out
}

/// Entry `(i, j)` is `max(0, ln assoc)` with
/// `assoc = |V| #(i,j) / (k #(i) #(j)) + α |V|² #dw(i,j) / (k |V_dw| #(i) #(j))`.
/// Pairs whose association is undefined or nonpositive are zero.
pub fn build_sppmi(spec: &SppmiSpec) -> Result<CsrMatrix> {
    spec.validate()?;
    let marg = spec.marginals();
    let v = spec.vocab_size as f64;
    let keys: BTreeSet<(usize, usize)> = spec.pair_counts.keys().chain(spec.dw_pair_counts.keys()).copied().collect();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); spec.vocab_size];
    for (i, j) in keys {
        let denom = spec.shift * marg[i] as f64 * marg[j] as f64;
        if denom == 0.0 {
            continue;
        }
        let text = spec.pair_counts.get(&(i, j)).copied().unwrap_or(0) as f64;
        let dw = spec.dw_pair_counts.get(&(i, j)).copied().unwrap_or(0) as f64;
        let mut assoc = v * text / denom;
        if dw > 0.0 && spec.alpha_mix != 0.0 {
            assoc += spec.alpha_mix * v * v * dw / (spec.dw_vocab_size as f64 * denom);
        }
        if assoc > 1.0 {
            rows[i].push((j as u32, assoc.ln()));
        }
    }
    Ok(CsrMatrix::from_rows(spec.vocab_size, rows))
}

/// Inner product of two SPPMI rows.
pub fn sppmi_row_similarity(m: &CsrMatrix, i: usize, j: usize) -> f64 {
    let other: HashMap<usize, f64> = m.row(j).collect();
    m.row(i).filter_map(|(c, v)| other.get(&c).map(|w| v * w)).sum()
}
