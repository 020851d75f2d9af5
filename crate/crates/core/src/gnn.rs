//! GraphSAGE-style autoencoder: mean aggregation over sampled
//! neighbourhoods, an inner-product decoder and a negative-sampling link
//! loss, with hand-written backpropagation and Adam.
//!
//! Every training step draws one neighbourhood sample per node and layer
//! and runs the encoder over the whole graph with those samples fixed.
//! Layer `ℓ` (counted from the input) uses sample size `sample_sizes[L-1-ℓ]`,
//! so the hop nearest the output gets `k₁`.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::hypergraph::{Adjacency, Hypergraph, NodeId, NodeKind};
use crate::math::{sigmoid, softplus};
use crate::rng::stream_rng;
use crate::walks::{token_label, NegativeSampler};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnSetting {
    /// Materials and property, linked also through shared authors; pairs from α=1 walks.
    #[default]
    Full,
    /// Materials and property only; pairs from α=∞ walks.
    AuthorLess,
}

impl GnnSetting {
    pub fn adjacency(self, h: &Hypergraph) -> Adjacency {
        let keep = [NodeKind::Material, NodeKind::Property];
        h.projected_adjacency(&keep, self == GnnSetting::Full)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFeatures {
    #[default]
    Trainable,
    /// `[ln(1 + degree), is_author, is_material, is_property]`, fixed.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub layers: usize,
    /// `[k₁, k₂, …]` from the output hop inwards; the last entry repeats.
    pub sample_sizes: Vec<usize>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub seed: u64,
    pub include_self: bool,
    pub input: InputFeatures,
    /// Trainable inputs start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub setting: GnnSetting,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            layers: 2,
            sample_sizes: vec![25, 10],
            input_dim: 32,
            hidden_dim: 32,
            output_dim: 16,
            batch_size: 1000,
            negatives: 15,
            lr: 5e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 1000,
            seed: 0,
            include_self: true,
            input: InputFeatures::Trainable,
            init_scale: 0.1,
            setting: GnnSetting::Full,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.layers == 0 {
            return bad("gnn layers must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("gnn sample sizes must be nonempty and at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("gnn lr must be positive");
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return bad("gnn dimensions must be positive");
        }
        if self.batch_size == 0 {
            return bad("gnn batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("gnn Adam moments must lie in [0, 1) with epsilon > 0");
        }
        if self.input == InputFeatures::Structural && self.input_dim != STRUCTURAL_DIM {
            return bad("structural input features have dimension 4");
        }
        Ok(())
    }

    /// `[d₀, d₁, …, d_L]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(std::iter::repeat_n(self.hidden_dim, self.layers - 1));
        d.push(self.output_dim);
        d
    }

    pub fn sample_size(&self, layer: usize) -> usize {
        let hop = self.layers - 1 - layer;
        *self.sample_sizes.get(hop).unwrap_or_else(|| self.sample_sizes.last().expect("validated"))
    }
}

pub const STRUCTURAL_DIM: usize = 4;

/// Compact graph over the kept nodes of an adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGraph {
    pub labels: Vec<String>,
    pub node_ids: Vec<NodeId>,
    pub kinds: Vec<NodeKind>,
    pub neighbors: Vec<Vec<u32>>,
}

impl GnnGraph {
    pub fn from_adjacency(h: &Hypergraph, adj: &Adjacency) -> Self {
        let node_ids: Vec<NodeId> = adj.kept_nodes().collect();
        let mut local = vec![u32::MAX; adj.node_count()];
        for (i, v) in node_ids.iter().enumerate() {
            local[v.index()] = i as u32;
        }
        let neighbors = node_ids
            .iter()
            .map(|&v| adj.neighbors(v).iter().map(|u| local[u.index()]).filter(|&u| u != u32::MAX).collect())
            .collect();
        GnnGraph {
            labels: node_ids.iter().map(|&v| h.label(v).to_string()).collect(),
            kinds: node_ids.iter().map(|&v| h.kind(v)).collect(),
            node_ids,
            neighbors,
        }
    }

    /// Unlabelled undirected graph; nodes are named `n0, n1, …`.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Validation(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u != v {
                neighbors[u as usize].push(v);
                neighbors[v as usize].push(u);
            }
        }
        for l in &mut neighbors {
            l.sort_unstable();
            l.dedup();
        }
        Ok(GnnGraph {
            labels: (0..n).map(|i| format!("n{i}")).collect(),
            node_ids: (0..n as u32).map(NodeId).collect(),
            kinds: vec![NodeKind::Material; n],
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Maps hypergraph ids to local indices.
    pub fn local_index(&self, v: NodeId) -> Option<u32> {
        self.node_ids.binary_search(&v).ok().map(|i| i as u32)
    }

    pub fn structural_features(&self) -> Array2<f64> {
        let mut f = Array2::zeros((self.len(), STRUCTURAL_DIM));
        for i in 0..self.len() {
            f[[i, 0]] = (1.0 + self.neighbors[i].len() as f64).ln();
            let col = match self.kinds[i] {
                NodeKind::Author => 1,
                NodeKind::Material => 2,
                NodeKind::Property => 3,
            };
            f[[i, col]] = 1.0;
        }
        f
    }
}

/// `k` uniform draws with replacement from 𝒩(node) (∪ {node} with
/// `include_self`); a node with nothing to draw from gets `k` copies of itself.
pub fn sample_neighborhood<R: Rng + ?Sized>(g: &GnnGraph, node: u32, k: usize, include_self: bool, rng: &mut R) -> Vec<u32> {
    let nb = &g.neighbors[node as usize];
    let pool = nb.len() + usize::from(include_self);
    if pool == 0 {
        return vec![node; k];
    }
    (0..k)
        .map(|_| {
            let i = rng.gen_range(0..pool);
            if i < nb.len() {
                nb[i]
            } else {
                node
            }
        })
        .collect()
}

/// One neighbourhood draw per node and layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    /// `layers[ℓ]` is row-major `n × k_ℓ`.
    pub layers: Vec<(usize, Vec<u32>)>,
}

pub fn draw_samples<R: Rng + ?Sized>(g: &GnnGraph, cfg: &GnnConfig, rng: &mut R) -> Samples {
    let layers = (0..cfg.layers)
        .map(|l| {
            let k = cfg.sample_size(l);
            let idx = (0..g.len() as u32).flat_map(|i| sample_neighborhood(g, i, k, cfg.include_self, rng)).collect();
            (k, idx)
        })
        .collect();
    Samples { layers }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub weights: Vec<Array2<f64>>,
    /// Trainable `h⁰`; `None` when structural features are used.
    pub input: Option<Array2<f64>>,
}

impl GnnParams {
    pub fn initialize(g: &GnnGraph, cfg: &GnnConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, 0x6e6e, 0);
        let dims = cfg.dims();
        let weights = dims
            .windows(2)
            .map(|d| {
                let b = (6.0 / (d[0] + d[1]) as f64).sqrt();
                let u = Uniform::new_inclusive(-b, b);
                Array2::from_shape_fn((d[0], d[1]), |_| u.sample(&mut rng))
            })
            .collect();
        let input = match cfg.input {
            InputFeatures::Trainable => {
                let u = Uniform::new_inclusive(-cfg.init_scale, cfg.init_scale);
                Some(Array2::from_shape_fn((g.len(), cfg.input_dim), |_| u.sample(&mut rng)))
            }
            InputFeatures::Structural => None,
        };
        Ok(GnnParams { weights, input })
    }

    pub fn zeros_like(&self) -> Self {
        GnnParams {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            input: self.input.as_ref().map(|x| Array2::zeros(x.raw_dim())),
        }
    }

    fn blocks(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.weights.iter().chain(self.input.iter())
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.weights.iter_mut().chain(self.input.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self, g: &GnnGraph, cfg: &GnnConfig) -> Result<()> {
        let dims = cfg.dims();
        if self.weights.len() != cfg.layers {
            return Err(Error::Config(format!("{} weight matrices for {} layers", self.weights.len(), cfg.layers)));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.dim() != (dims[l], dims[l + 1]) {
                return Err(Error::Config(format!("layer {l} weight shape {:?}, expected {:?}", w.dim(), (dims[l], dims[l + 1]))));
            }
        }
        match (&self.input, cfg.input) {
            (Some(x), InputFeatures::Trainable) if x.dim() == (g.len(), cfg.input_dim) => Ok(()),
            (None, InputFeatures::Structural) => Ok(()),
            _ => Err(Error::Config("input features do not match the graph and configuration".into())),
        }
    }
}

struct Forward {
    /// `hs[0] = h⁰`, `hs[L]` = output embeddings.
    hs: Vec<Array2<f64>>,
    aggs: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
}

fn mean_aggregate(h: &Array2<f64>, k: usize, idx: &[u32]) -> Array2<f64> {
    let n = idx.len() / k;
    let mut out = Array2::zeros((n, h.ncols()));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for &j in &idx[i * k..(i + 1) * k] {
            row += &h.row(j as usize);
        }
        row /= k as f64;
    }
    out
}

fn input_matrix(params: &GnnParams, g: &GnnGraph) -> Array2<f64> {
    match &params.input {
        Some(x) => x.clone(),
        None => g.structural_features(),
    }
}

fn forward(params: &GnnParams, g: &GnnGraph, samples: &Samples) -> Forward {
    let last = params.weights.len() - 1;
    let mut hs = vec![input_matrix(params, g)];
    let mut aggs = Vec::new();
    let mut pres = Vec::new();
    for (l, w) in params.weights.iter().enumerate() {
        let (k, idx) = &samples.layers[l];
        let a = mean_aggregate(&hs[l], *k, idx);
        let pre = a.dot(w);
        let h = if l == last { pre.clone() } else { pre.mapv(|v| v.max(0.0)) };
        aggs.push(a);
        pres.push(pre);
        hs.push(h);
    }
    Forward { hs, aggs, pres }
}

/// Output embeddings under the given samples.
pub fn encode_with(params: &GnnParams, cfg: &GnnConfig, g: &GnnGraph, samples: &Samples) -> Result<Array2<f64>> {
    params.check_shapes(g, cfg)?;
    Ok(forward(params, g, samples).hs.pop().expect("at least one layer"))
}

/// Output embeddings with neighbourhoods drawn from `rng`.
pub fn encode<R: Rng + ?Sized>(params: &GnnParams, cfg: &GnnConfig, g: &GnnGraph, rng: &mut R) -> Result<Array2<f64>> {
    let samples = draw_samples(g, cfg, rng);
    encode_with(params, cfg, g, &samples)
}

/// Inner-product decoder logit.
pub fn link_score(z: &Array2<f64>, u: usize, v: usize) -> f64 {
    z.row(u).dot(&z.row(v))
}

/// A positive pair with its negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkExample {
    pub u: u32,
    pub v: u32,
    pub negatives: Vec<u32>,
}

/// Sum over examples of `softplus(-z_u·z_v) + Σ_n softplus(z_u·z_n)`, and its
/// gradient with respect to every parameter block.
pub fn loss_and_grad(params: &GnnParams, cfg: &GnnConfig, g: &GnnGraph, samples: &Samples, batch: &[LinkExample]) -> Result<(f64, GnnParams)> {
    if batch.is_empty() {
        return Err(Error::Validation("empty training batch".into()));
    }
    params.check_shapes(g, cfg)?;
    let fw = forward(params, g, samples);
    let z = fw.hs.last().expect("layers");
    let mut dz = Array2::<f64>::zeros(z.raw_dim());
    let mut loss = 0.0;
    let add = |dz: &mut Array2<f64>, target: usize, coef: f64, src: ArrayView1<f64>| {
        dz.row_mut(target).scaled_add(coef, &src);
    };
    for ex in batch {
        let (u, v) = (ex.u as usize, ex.v as usize);
        let s = link_score(z, u, v);
        loss += softplus(-s);
        let c = -sigmoid(-s);
        add(&mut dz, u, c, z.row(v));
        add(&mut dz, v, c, z.row(u));
        for &n in &ex.negatives {
            let n = n as usize;
            let s = link_score(z, u, n);
            loss += softplus(s);
            let c = sigmoid(s);
            add(&mut dz, u, c, z.row(n));
            add(&mut dz, n, c, z.row(u));
        }
    }
    let mut grads = params.zeros_like();
    let last = params.weights.len() - 1;
    let mut dh = dz;
    for l in (0..=last).rev() {
        let dpre = if l == last { dh } else { dh * &fw.pres[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }) };
        grads.weights[l] = fw.aggs[l].t().dot(&dpre);
        let da = dpre.dot(&params.weights[l].t());
        let (k, idx) = &samples.layers[l];
        let mut prev = Array2::<f64>::zeros(fw.hs[l].raw_dim());
        for (i, row) in da.axis_iter(Axis(0)).enumerate() {
            for &j in &idx[i * k..(i + 1) * k] {
                prev.row_mut(j as usize).scaled_add(1.0 / *k as f64, &row);
            }
        }
        dh = prev;
    }
    if let Some(gi) = grads.input.as_mut() {
        *gi = dh;
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
struct Adam {
    m: GnnParams,
    v: GnnParams,
    t: i32,
}

impl Adam {
    fn new(p: &GnnParams) -> Self {
        Adam { m: p.zeros_like(), v: p.zeros_like(), t: 0 }
    }

    fn step(&mut self, params: &mut GnnParams, grads: &GnnParams, cfg: &GnnConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, g), m), v) in params.blocks_mut().zip(grads.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut()) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnTrainReport {
    /// Mean loss per positive pair at each step.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedGnn {
    pub params: GnnParams,
    pub embeddings: Array2<f64>,
    pub report: GnnTrainReport,
}

/// Adam on mini-batches of `pairs` (local indices), cycling through a fresh
/// shuffle each epoch. Aborts when the per-pair loss exceeds 10× its
/// first value.
pub fn train_autoencoder(g: &GnnGraph, pairs: &[(u32, u32)], sampler: &NegativeSampler, cfg: &GnnConfig) -> Result<TrainedGnn> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Validation("no positive pairs for gnn training".into()));
    }
    if sampler.len() != g.len() {
        return Err(Error::Validation(format!("negative sampler covers {} nodes, graph has {}", sampler.len(), g.len())));
    }
    if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u as usize >= g.len() || v as usize >= g.len()) {
        return Err(Error::Validation(format!("pair ({u}, {v}) out of range")));
    }
    let mut params = GnnParams::initialize(g, cfg)?;
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps as u64 {
        let mut rng = stream_rng(cfg.seed, 0x6e6e_0001, step);
        let samples = draw_samples(g, cfg, &mut rng);
        let mut batch = Vec::with_capacity(cfg.batch_size.min(pairs.len()));
        while batch.len() < cfg.batch_size.min(pairs.len()) {
            if cursor == order.len() {
                order = (0..pairs.len()).collect();
                order.shuffle(&mut stream_rng(cfg.seed, 0x6e6e_0002, epoch));
                epoch += 1;
                cursor = 0;
            }
            let (u, v) = pairs[order[cursor]];
            cursor += 1;
            let negatives = (0..cfg.negatives).map(|_| sampler.sample(&mut rng) as u32).collect();
            batch.push(LinkExample { u, v, negatives });
        }
        let (loss, grads) = loss_and_grad(&params, cfg, g, &samples, &batch)?;
        let mean = loss / batch.len() as f64;
        trace.push(mean);
        if !mean.is_finite() || mean > 10.0 * trace[0] {
            return Err(Error::Diverged(format!(
                "gnn loss {mean} at step {step} exceeds 10x the initial {}; trace {:?}",
                trace[0],
                &trace[trace.len().saturating_sub(10)..]
            )));
        }
        adam.step(&mut params, &grads, cfg);
    }
    if !params.is_finite() {
        return Err(Error::Diverged("gnn parameters became non-finite".into()));
    }
    let embeddings = encode(&params, cfg, g, &mut stream_rng(cfg.seed, 0x6e6e_0003, 0))?;
    Ok(TrainedGnn { params, embeddings, report: GnnTrainReport { loss_trace: trace } })
}

/// Walk sequences in local indices; nodes outside the graph are dropped.
pub fn local_sequences(g: &GnnGraph, sequences: &[Vec<NodeId>]) -> Vec<Vec<usize>> {
    sequences
        .iter()
        .map(|s| s.iter().filter_map(|&v| g.local_index(v).map(|i| i as usize)).collect())
        .collect()
}

pub fn embedding_table(g: &GnnGraph, z: &Array2<f64>) -> Result<EmbeddingTable> {
    let tokens = g.labels.iter().map(|l| token_label(l)).collect();
    EmbeddingTable::new(tokens, z.ncols(), z.iter().copied().collect(), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnCheckpoint {
    pub magic: String,
    pub config: GnnConfig,
    pub labels: Vec<String>,
    pub blocks: Vec<CheckpointBlock>,
    pub has_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBlock {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

const CHECKPOINT_MAGIC: &str = "hyperdisc-gnn-v1";

pub fn write_checkpoint<W: Write>(params: &GnnParams, cfg: &GnnConfig, g: &GnnGraph, out: W) -> Result<()> {
    let ck = GnnCheckpoint {
        magic: CHECKPOINT_MAGIC.into(),
        config: cfg.clone(),
        labels: g.labels.clone(),
        blocks: params
            .blocks()
            .map(|b| CheckpointBlock { shape: [b.nrows(), b.ncols()], values: b.iter().copied().collect() })
            .collect(),
        has_input: params.input.is_some(),
    };
    serde_json::to_writer(out, &ck)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<(GnnParams, GnnConfig, Vec<String>)> {
    let ck: GnnCheckpoint = serde_json::from_reader(input)?;
    if ck.magic != CHECKPOINT_MAGIC {
        return Err(Error::Validation(format!("not a gnn checkpoint (magic {:?})", ck.magic)));
    }
    let mut mats = ck
        .blocks
        .into_iter()
        .map(|b| Array2::from_shape_vec((b.shape[0], b.shape[1]), b.values).map_err(|e| Error::Validation(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let input = if ck.has_input { mats.pop() } else { None };
    Ok((GnnParams { weights: mats, input }, ck.config, ck.labels))
}
