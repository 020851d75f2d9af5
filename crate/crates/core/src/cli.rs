//! Command-line front end. Each subcommand runs one pipeline stage and
//! hands results to later stages through files in the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig, SdScoreMethod};
use crate::corpus::{parse_corpus, Corpus, Keywords};
use crate::embedding::{
    build_sppmi, build_training_set, cooccurrence_counts, plausibility_score, train_skipgram, EmbeddingTable, Matrix,
    PlausibilityMode, SppmiSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    beta_sweep_self_eval, cumulative_hit_rate, synthetic_anticorrelated, unstudied_set, HitNormalization, PredictionReport,
};
use crate::gnn::{embedding_table, local_sequences, train_autoencoder, write_checkpoint, GnnGraph, GnnSetting};
use crate::hypergraph::{build_hypergraph, BuildOptions, Hypergraph, NodeId, NodeKind};
use crate::scoring::{
    apply_sentinel, combine_scores, rank_candidates, shortest_path_distances, write_fused_csv, Direction, FusionMethod,
    Provenance, ScoreTable,
};
use crate::social::{candidate_series, classifier_training_data, sd_score, train_sd_classifier, AuthorIndex, SdMethod};
use crate::transition::{transition_matrix, TransitionOptions};
use crate::walks::{generate_walks, token_label, window_pairs_of, Alpha, NegativeSampler, UNIGRAM_POWER};

#[derive(Debug, Parser)]
#[command(name = "hyperdisc", version, about = "Hypergraph random-walk discovery prediction")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, env = "HYPERDISC_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "HYPERDISC_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "HYPERDISC_WORKERS")]
    pub workers: Option<usize>,
    /// Paper records, one JSON object per line.
    #[arg(long, global = true, env = "HYPERDISC_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Property keywords, one per line.
    #[arg(long, global = true, env = "HYPERDISC_KEYWORDS")]
    pub keywords: Option<PathBuf>,
    #[arg(long, global = true, env = "HYPERDISC_OUT")]
    pub out: Option<PathBuf>,
    /// Prediction year.
    #[arg(long, global = true, env = "HYPERDISC_T", allow_hyphen_values = true)]
    pub t: Option<i32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the corpus and write a normalized copy.
    Ingest,
    /// Build the hypergraph snapshot.
    Graph,
    /// Export the transition matrix and author-mediated property transitions.
    Transition {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        exclude_self: bool,
    },
    /// Generate α-biased walks.
    Walk {
        #[arg(long)]
        alpha: Option<Alpha>,
        #[arg(long)]
        walk_length: Option<usize>,
        #[arg(long)]
        walks_per_start: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Train skip-gram on walks and abstracts; score plausibility.
    Embed {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Export the (deepwalk-mixed) SPPMI matrix.
    Sppmi {
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha_mix: Option<f64>,
    },
    /// Social-density scores of the unstudied candidates.
    Sd {
        #[arg(long, value_parser = parse_enum::<SdScoreMethod>)]
        method: Option<SdScoreMethod>,
        #[arg(long)]
        gamma: Option<usize>,
    },
    /// Shortest-path distances from the property node.
    Spd,
    /// Fuse two score CSV files.
    Fuse {
        #[arg(long)]
        s1: Option<PathBuf>,
        #[arg(long)]
        s2: Option<PathBuf>,
        #[arg(long, default_value = "sp_d")]
        s1_provenance: Provenance,
        #[arg(long, default_value = "plausibility")]
        s2_provenance: Provenance,
        #[arg(long)]
        method: Option<FusionMethod>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Rank the unstudied candidates and write a prediction report.
    Predict {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        method: Option<FusionMethod>,
        #[arg(long)]
        beta: Option<f64>,
        /// spd | plausibility | sd | transition2 | transition3 | <csv path>
        #[arg(long)]
        s1: Option<String>,
        #[arg(long)]
        s2: Option<String>,
    },
    /// Fill in hit rates of a prediction report from records dated ≥ t.
    Evaluate {
        #[arg(long)]
        normalize_by_predictions: bool,
    },
    /// Top-k SP-d and s₂ over a β grid for every fusion method.
    SweepBeta {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        s2: Option<String>,
        /// Use the synthetic anticorrelated benchmark with this many candidates.
        #[arg(long)]
        synthetic: Option<usize>,
    },
    /// Train the graph autoencoder.
    GnnTrain {
        #[arg(long, value_parser = parse_enum::<GnnSetting>)]
        setting: Option<GnnSetting>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Graph => "graph",
            Command::Transition { .. } => "transition",
            Command::Walk { .. } => "walk",
            Command::Embed { .. } => "embed",
            Command::Sppmi { .. } => "sppmi",
            Command::Sd { .. } => "sd",
            Command::Spd => "spd",
            Command::Fuse { .. } => "fuse",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::SweepBeta { .. } => "sweep-beta",
            Command::GnnTrain { .. } => "gnn-train",
        }
    }
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

/// Parses `argv`, runs the stage and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.corpus.is_some() {
        cfg.corpus = cli.corpus.clone();
    }
    if cli.keywords.is_some() {
        cfg.keywords = cli.keywords.clone();
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.t.is_some() {
        cfg.t = cli.t;
    }
    match &cli.command {
        Command::Transition { steps, exclude_self } => {
            if let Some(s) = steps {
                cfg.transition_steps = *s;
            }
            cfg.transition_exclude_self |= exclude_self;
        }
        Command::Walk { alpha, walk_length, walks_per_start, window } => {
            if let Some(a) = alpha {
                cfg.walks.alpha = *a;
            }
            if let Some(v) = walk_length {
                cfg.walks.walk_length = *v;
            }
            if let Some(v) = walks_per_start {
                cfg.walks.walks_per_start = *v;
            }
            if let Some(v) = window {
                cfg.walks.window = *v;
            }
        }
        Command::Embed { epochs, dim } => {
            if let Some(e) = epochs {
                cfg.embedding.skipgram.epochs = *e;
            }
            if let Some(d) = dim {
                cfg.embedding.skipgram.dim = *d;
            }
        }
        Command::Sppmi { shift, alpha_mix } => {
            if let Some(s) = shift {
                cfg.sppmi.shift = *s;
            }
            if let Some(a) = alpha_mix {
                cfg.sppmi.alpha_mix = *a;
            }
        }
        Command::Sd { method, gamma } => {
            if let Some(m) = method {
                cfg.sd.method = *m;
            }
            if let Some(g) = gamma {
                cfg.gamma = *g;
            }
        }
        Command::Fuse { s1, s2, method, beta, .. } => {
            if let Some(p) = s1 {
                cfg.fusion.s1 = p.display().to_string();
            }
            if let Some(p) = s2 {
                cfg.fusion.s2 = p.display().to_string();
            }
            if let Some(m) = method {
                cfg.fusion.method = *m;
            }
            if let Some(b) = beta {
                cfg.fusion.beta = *b;
            }
        }
        Command::Predict { k, method, beta, s1, s2 } => {
            if let Some(k) = k {
                cfg.k = *k;
            }
            if let Some(m) = method {
                cfg.fusion.method = *m;
            }
            if let Some(b) = beta {
                cfg.fusion.beta = *b;
            }
            if let Some(s) = s1 {
                cfg.fusion.s1 = s.clone();
            }
            if let Some(s) = s2 {
                cfg.fusion.s2 = s.clone();
            }
        }
        Command::Evaluate { normalize_by_predictions } => {
            if *normalize_by_predictions {
                cfg.normalization = HitNormalization::Predictions;
            }
        }
        Command::SweepBeta { k, s2, .. } => {
            if let Some(k) = k {
                cfg.k = *k;
            }
            if let Some(s) = s2 {
                cfg.fusion.s2 = s.clone();
            }
        }
        Command::GnnTrain { setting, steps, lr } => {
            if let Some(s) = setting {
                cfg.gnn.setting = *s;
            }
            if let Some(s) = steps {
                cfg.gnn.steps = *s;
            }
            if let Some(l) = lr {
                cfg.gnn.lr = *l;
            }
        }
        Command::Ingest | Command::Graph | Command::Spd => {}
    }
    let cfg = cfg.seeded();
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cfg = effective_config(cli)?;
    if let Some(n) = cfg.workers {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("worker pool already initialised; --workers ignored");
        }
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let mut ctx = Stage { hash: cfg.hash()?, cfg, artifacts: BTreeMap::new() };
    ctx.write_json("config.effective.json", &ctx.cfg.clone())?;
    let name = cli.command.name();
    info!("stage {name}, config hash {}", ctx.hash);
    match &cli.command {
        Command::Ingest => ingest(&mut ctx),
        Command::Graph => graph(&mut ctx),
        Command::Transition { .. } => transition(&mut ctx),
        Command::Walk { .. } => walk(&mut ctx),
        Command::Embed { .. } => embed(&mut ctx),
        Command::Sppmi { .. } => sppmi(&mut ctx),
        Command::Sd { .. } => sd(&mut ctx),
        Command::Spd => spd(&mut ctx),
        Command::Fuse { s1_provenance, s2_provenance, .. } => fuse(&mut ctx, *s1_provenance, *s2_provenance),
        Command::Predict { .. } => predict(&mut ctx),
        Command::Evaluate { .. } => evaluate(&mut ctx),
        Command::SweepBeta { synthetic, .. } => sweep(&mut ctx, *synthetic),
        Command::GnnTrain { .. } => gnn_train(&mut ctx),
    }?;
    let manifest = Manifest { stage: name, config_hash: &ctx.hash, seed: ctx.cfg.seed, artifacts: &ctx.artifacts };
    let bytes = json_bytes(&manifest)?;
    fs::write(ctx.cfg.out_dir.join(format!("{name}.manifest.json")), bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    config_hash: &'a str,
    seed: u64,
    /// File name -> SHA-256 of its contents.
    artifacts: &'a BTreeMap<String, String>,
}

struct Stage {
    cfg: RunConfig,
    hash: String,
    artifacts: BTreeMap<String, String>,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

pub const SNAPSHOT: &str = "hypergraph.json";
pub const SNAPSHOT_KEY: &str = "hypergraph.key";
pub const WALKS: &str = "walks.txt";
pub const EMBED_HIDDEN: &str = "embedding.hidden.txt";
pub const EMBED_OUTPUT: &str = "embedding.output.txt";
pub const PREDICTION: &str = "prediction.json";

impl Stage {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn preamble(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.cfg.seed)
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        fs::write(self.path(name), &bytes)?;
        self.artifacts.insert(name.to_string(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.write(name, json_bytes(v)?)
    }

    fn write_table(&mut self, name: &str, t: &ScoreTable) -> Result<()> {
        let mut buf = Vec::new();
        t.write_csv(&mut buf, Some(&self.preamble()))?;
        self.write(name, buf)
    }

    fn t(&self) -> Result<i32> {
        self.cfg.t.ok_or_else(|| Error::Config("this stage needs a prediction year (--t)".into()))
    }

    fn corpus(&self) -> Result<Corpus> {
        let (Some(cp), Some(kp)) = (&self.cfg.corpus, &self.cfg.keywords) else {
            return Err(Error::Config("--corpus and --keywords are required".into()));
        };
        let keywords = Keywords::parse(BufReader::new(fs::File::open(kp)?))?;
        parse_corpus(BufReader::new(fs::File::open(cp)?), keywords)
    }

    /// Records dated before `t`, or the whole corpus when `t` is unset.
    fn before(&self) -> Result<Corpus> {
        let c = self.corpus()?;
        Ok(match self.cfg.t {
            Some(t) => c.partition_by_year(t).0,
            None => c,
        })
    }

    /// Digest of the inputs a graph snapshot depends on: corpus, keywords and `t`.
    fn graph_key(&self) -> Result<String> {
        let mut h = Sha256::new();
        for p in [&self.cfg.corpus, &self.cfg.keywords].into_iter().flatten() {
            h.update(Sha256::digest(fs::read(p)?));
        }
        h.update(format!("{:?}", self.cfg.t));
        Ok(hex(&h.finalize()))
    }

    /// The graph snapshot when it was built from the same inputs, otherwise a
    /// fresh build.
    fn graph(&self, before: &Corpus) -> Result<Hypergraph> {
        let snap = self.path(SNAPSHOT);
        if snap.is_file() {
            let key = fs::read_to_string(self.path(SNAPSHOT_KEY)).unwrap_or_default();
            if key.trim() == self.graph_key()? {
                info!("reading {}", snap.display());
                return Hypergraph::read_snapshot(BufReader::new(fs::File::open(snap)?));
            }
            warn!("{} was built from different inputs; rebuilding", snap.display());
        }
        build_hypergraph(before, BuildOptions { canonical: true })
    }

    fn candidates(&self, before: &Corpus) -> BTreeSet<String> {
        unstudied_set(before, self.cfg.mention_threshold)
    }
}

fn property_node(h: &Hypergraph) -> Result<NodeId> {
    h.property_node().ok_or_else(|| Error::Lookup("no record before t mentions the property".into()))
}

fn material(h: &Hypergraph, name: &str) -> Result<NodeId> {
    h.find(NodeKind::Material, name).ok_or_else(|| Error::Lookup(format!("material {name:?} not in the hypergraph")))
}

fn ingest(s: &mut Stage) -> Result<()> {
    let c = s.corpus()?;
    let mut buf = Vec::new();
    c.write_jsonl(&mut buf)?;
    s.write("corpus.normalized.jsonl", buf)?;
    #[derive(Serialize)]
    struct Summary {
        config_hash: String,
        seed: u64,
        records: usize,
        years: Option<(i32, i32)>,
        property_records: usize,
        keywords: Vec<String>,
    }
    let summary = Summary {
        config_hash: s.hash.clone(),
        seed: s.cfg.seed,
        records: c.len(),
        years: c.year_range(),
        property_records: c.records().iter().filter(|r| c.mentions_property(r)).count(),
        keywords: c.keywords().iter().map(str::to_string).collect(),
    };
    s.write_json("ingest.json", &summary)
}

fn graph(s: &mut Stage) -> Result<()> {
    let h = build_hypergraph(&s.before()?, BuildOptions { canonical: true })?;
    let mut buf = Vec::new();
    h.write_snapshot(&mut buf)?;
    s.write(SNAPSHOT, buf)?;
    let key = s.graph_key()?;
    s.write(SNAPSHOT_KEY, format!("{key}\n").into_bytes())
}

fn transition(s: &mut Stage) -> Result<()> {
    let before = s.before()?;
    let h = s.graph(&before)?;
    let tm = transition_matrix(&h, TransitionOptions { exclude_self: s.cfg.transition_exclude_self });
    let mut buf = Vec::new();
    tm.matrix().write_coordinate(&mut buf)?;
    s.write("transition.coo", buf)?;
    let steps = s.cfg.transition_steps;
    let table = transition_table(&h, &s.candidates(&before), steps, s.cfg.transition_exclude_self)?;
    s.write_table(&format!("transition{steps}.csv"), &table)
}

fn transition_table(h: &Hypergraph, cands: &BTreeSet<String>, steps: usize, exclude_self: bool) -> Result<ScoreTable> {
    let tm = transition_matrix(h, TransitionOptions { exclude_self });
    let row = tm.author_mediated_row(property_node(h)?, steps)?;
    let mut t = ScoreTable::new(
        Provenance::Transition,
        cands.iter().map(|c| Ok((c.clone(), row[material(h, c)?.index()]))).collect::<Result<_>>()?,
    )?;
    t.set_meta("steps", steps);
    Ok(t)
}

fn walk(s: &mut Stage) -> Result<()> {
    let h = s.graph(&s.before()?)?;
    let wc = generate_walks(&h, &s.cfg.walks)?;
    let mut buf = Vec::new();
    wc.write_labels(&h, &mut buf)?;
    s.write(WALKS, buf)
}

fn read_walks(s: &Stage) -> Result<Vec<Vec<String>>> {
    let p = s.path(WALKS);
    let text = fs::read_to_string(&p).map_err(|_| Error::Config(format!("{} missing; run `walk` first", p.display())))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).filter(|v: &Vec<String>| !v.is_empty()).collect())
}

fn sentences(c: &Corpus) -> Vec<Vec<String>> {
    c.records().iter().map(|r| r.tokens().to_vec()).filter(|t| !t.is_empty()).collect()
}

fn embed(s: &mut Stage) -> Result<()> {
    let before = s.before()?;
    let walks = read_walks(s)?;
    let text = sentences(&before);
    let e = &s.cfg.embedding;
    let ts = build_training_set(&[(&walks, e.walk_weight), (&text, e.text_weight)], s.cfg.walks.window)?;
    let sampler = NegativeSampler::from_counts(&ts.counts, UNIGRAM_POWER)?;
    let (table, report) = train_skipgram(ts.tokens, &ts.pairs, &sampler, &e.skipgram)?;
    let mode = e.mode;
    for (name, m) in [(EMBED_HIDDEN, Matrix::Hidden), (EMBED_OUTPUT, Matrix::Output)] {
        let mut buf = Vec::new();
        table.write_text(m, &mut buf)?;
        s.write(name, buf)?;
    }
    s.write_json("embed_report.json", &serde_json::json!({"config_hash": s.hash, "seed": s.cfg.seed, "report": report}))?;
    let scores = plausibility_table(&table, before.keywords().primary(), &s.candidates(&before), mode)?;
    s.write_table("plausibility.csv", &scores)
}

/// Cosine plausibility of each candidate; out-of-vocabulary candidates get
/// -1 and an `oov` flag.
fn plausibility_table(table: &EmbeddingTable, property: &str, cands: &BTreeSet<String>, mode: PlausibilityMode) -> Result<ScoreTable> {
    let prop = token_label(property);
    table.index_of(&prop)?;
    let mut values = BTreeMap::new();
    let mut oov = Vec::new();
    for c in cands {
        match plausibility_score(table, &prop, &token_label(c), mode) {
            Ok(v) => {
                values.insert(c.clone(), v);
            }
            Err(Error::Lookup(_)) => {
                values.insert(c.clone(), -1.0);
                oov.push(c.clone());
            }
            Err(e) => return Err(e),
        }
    }
    let mut t = ScoreTable::new(Provenance::Plausibility, values)?;
    for c in &oov {
        t.flag(c, "oov");
    }
    if !oov.is_empty() {
        warn!("{} candidates missing from the embedding vocabulary", oov.len());
    }
    Ok(t)
}

fn sppmi(s: &mut Stage) -> Result<()> {
    let before = s.before()?;
    let walks = read_walks(s)?;
    let text = sentences(&before);
    let vocab: BTreeSet<&str> = walks.iter().chain(&text).flatten().map(String::as_str).collect();
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let encode = |seqs: &[Vec<String>]| -> Vec<Vec<usize>> {
        seqs.iter().map(|q| q.iter().map(|t| index[t.as_str()]).collect()).collect()
    };
    let walk_vocab: BTreeSet<&str> = walks.iter().flatten().map(String::as_str).collect();
    let spec = SppmiSpec {
        pair_counts: cooccurrence_counts(&encode(&text), s.cfg.sppmi.window),
        vocab_size: vocab.len(),
        dw_pair_counts: cooccurrence_counts(&encode(&walks), s.cfg.sppmi.window),
        dw_vocab_size: walk_vocab.len(),
        shift: s.cfg.sppmi.shift,
        alpha_mix: s.cfg.sppmi.alpha_mix,
    };
    let m = build_sppmi(&spec)?;
    let mut buf = Vec::new();
    m.write_coordinate(&mut buf)?;
    s.write("sppmi.coo", buf)?;
    let mut v = String::new();
    for t in &vocab {
        v.push_str(t);
        v.push('\n');
    }
    s.write("sppmi_vocab.txt", v.into_bytes())
}

fn sd_table(s: &mut Stage, before: &Corpus, cands: &BTreeSet<String>, write: bool) -> Result<ScoreTable> {
    let t = s.t()?;
    let cfg = s.cfg.clone();
    let index = AuthorIndex::build(before);
    let series = candidate_series(&index, cands, before.keywords(), t, cfg.gamma, cfg.sd.mode)?;
    let table = match cfg.sd.method {
        SdScoreMethod::Sum => sd_score(&series, SdMethod::Sum)?,
        SdScoreMethod::Rand => sd_score(&series, SdMethod::Rand { k: cfg.sd.rand_k.unwrap_or(cfg.k), seed: cfg.seed })?,
        SdScoreMethod::Class => {
            let data = classifier_training_data(&index, before, cands, t, cfg.gamma, cfg.sd.classifier_window, cfg.sd.mode)?;
            let fit = train_sd_classifier(&data.features, &data.labels, &cfg.sd.logistic)?;
            if write {
                s.write_json("sd_classifier.json", &serde_json::json!({"config_hash": s.hash, "seed": cfg.seed, "fit": fit, "rows": data.names.len()}))?;
            }
            sd_score(&series, SdMethod::Class(&fit.classifier))?
        }
    };
    if write {
        let values: BTreeMap<&String, &Vec<f64>> = series.iter().map(|(c, s)| (c, &s.values)).collect();
        s.write_json("sd_series.json", &serde_json::json!({"config_hash": s.hash, "seed": cfg.seed, "t": t, "series": values}))?;
    }
    Ok(table)
}

fn sd(s: &mut Stage) -> Result<()> {
    let before = s.before()?;
    let cands = s.candidates(&before);
    let table = sd_table(s, &before, &cands, true)?;
    s.write_table("sd.csv", &table)
}

fn spd_table(s: &Stage, before: &Corpus, cands: &BTreeSet<String>) -> Result<ScoreTable> {
    let h = s.graph(before)?;
    let kinds: &[NodeKind] = if s.cfg.spd_through_authors { &NodeKind::ALL } else { &[NodeKind::Material, NodeKind::Property] };
    let adj = h.projected_adjacency(kinds, false);
    let all = shortest_path_distances(&adj, &h, property_node(&h)?)?;
    if let Some(missing) = cands.iter().find(|c| all.get(c).is_none()) {
        return Err(Error::Lookup(format!("candidate {missing:?} not in the hypergraph")));
    }
    Ok(all.restrict(cands))
}

fn spd(s: &mut Stage) -> Result<()> {
    let before = s.before()?;
    let cands = s.candidates(&before);
    let table = spd_table(s, &before, &cands)?;
    s.write_table("spd.csv", &table)
}

fn read_table(path: &Path, provenance: Provenance) -> Result<ScoreTable> {
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    ScoreTable::read_csv(BufReader::new(f), provenance)
}

/// Restricts both tables to shared candidates and applies the SP-d sentinel.
fn align(s1: ScoreTable, s2: ScoreTable) -> Result<(ScoreTable, ScoreTable, usize)> {
    let shared: BTreeSet<String> = s1.candidates().filter(|c| s2.get(c).is_some()).map(str::to_string).collect();
    let dropped = s1.len() + s2.len() - 2 * shared.len();
    if dropped > 0 {
        warn!("{dropped} candidates appear in only one score table and are dropped");
    }
    let fix = |t: ScoreTable| if t.provenance == Provenance::SpD { apply_sentinel(&t) } else { Ok(t) };
    Ok((fix(s1.restrict(&shared))?, fix(s2.restrict(&shared))?, dropped))
}

fn fuse(s: &mut Stage, p1: Provenance, p2: Provenance) -> Result<()> {
    let resolve = |v: &str, default: &str| if v == "spd" || v == "plausibility" { s.path(default) } else { PathBuf::from(v) };
    let a = read_table(&resolve(&s.cfg.fusion.s1, "spd.csv"), p1)?;
    let b = read_table(&resolve(&s.cfg.fusion.s2, "plausibility.csv"), p2)?;
    let (a, b, _) = align(a, b)?;
    let fused = combine_scores(&a, &b, s.cfg.fusion.beta, s.cfg.fusion.method)?;
    let mut buf = Vec::new();
    write_fused_csv(&a, &b, &fused, &mut buf, Some(&s.preamble()))?;
    s.write("fused.csv", buf)
}

fn source(s: &mut Stage, name: &str, before: &Corpus, cands: &BTreeSet<String>) -> Result<ScoreTable> {
    match name {
        "spd" => spd_table(s, before, cands),
        "sd" => sd_table(s, before, cands, false),
        "transition2" | "transition3" => {
            let steps = if name == "transition2" { 2 } else { 3 };
            transition_table(&s.graph(before)?, cands, steps, s.cfg.transition_exclude_self)
        }
        "plausibility" => {
            let (hp, op) = (s.path(EMBED_HIDDEN), s.path(EMBED_OUTPUT));
            if !hp.is_file() {
                return Err(Error::Config(format!("{} missing; run `embed` first", hp.display())));
            }
            let out = op.is_file().then(|| fs::File::open(&op).map(BufReader::new)).transpose()?;
            let table = EmbeddingTable::read_text(BufReader::new(fs::File::open(&hp)?), out)?;
            plausibility_table(&table, before.keywords().primary(), cands, s.cfg.embedding.mode)
        }
        path => Ok(read_table(Path::new(path), Provenance::ExternalPf)?.restrict(cands)),
    }
}

fn predict(s: &mut Stage) -> Result<()> {
    let t = s.t()?;
    let before = s.before()?;
    let cands = s.candidates(&before);
    let fusion = s.cfg.fusion.clone();
    let mut report = PredictionReport::new(t, s.cfg.k, Vec::new())?;
    let mut meta = BTreeMap::from([
        ("config_hash".to_string(), s.hash.clone()),
        ("seed".to_string(), s.cfg.seed.to_string()),
        ("s1".to_string(), fusion.s1.clone()),
        ("s2".to_string(), fusion.s2.clone()),
        ("method".to_string(), fusion.method.to_string()),
        ("beta".to_string(), fusion.beta.to_string()),
        ("candidates".to_string(), cands.len().to_string()),
        ("direction".to_string(), "max_first; larger sp_d = more alien".to_string()),
    ]);
    if cands.is_empty() {
        warn!("no unstudied candidates before {t}");
    } else {
        let a = source(s, &fusion.s1, &before, &cands)?;
        let b = source(s, &fusion.s2, &before, &cands)?;
        let (a, b, dropped) = align(a, b)?;
        meta.insert("dropped_candidates".into(), dropped.to_string());
        if !a.is_empty() {
            let fused = combine_scores(&a, &b, fusion.beta, fusion.method)?;
            for (k, v) in fused.meta() {
                meta.entry(format!("fusion.{k}")).or_insert_with(|| v.clone());
            }
            let ranking = rank_candidates(&fused, s.cfg.k, Direction::MaxFirst);
            if ranking.truncated {
                meta.insert("truncated".into(), "true".into());
            }
            report.predictions = ranking.candidates;
            let mut buf = Vec::new();
            write_fused_csv(&a, &b, &fused, &mut buf, Some(&s.preamble()))?;
            s.write("fused.csv", buf)?;
        }
    }
    report.metadata = meta;
    s.write_json(PREDICTION, &report)
}

fn evaluate(s: &mut Stage) -> Result<()> {
    let t = s.t()?;
    let p = s.path(PREDICTION);
    let text = fs::read_to_string(&p).map_err(|_| Error::Config(format!("{} missing; run `predict` first", p.display())))?;
    let report: PredictionReport = serde_json::from_str(&text)?;
    if report.t != t {
        return Err(Error::Validation(format!("prediction report is for t = {}, not {t}", report.t)));
    }
    let (before, after) = s.corpus()?.partition_by_year(t);
    let mut out = cumulative_hit_rate(&report, &after, &s.candidates(&before), s.cfg.normalization)?;
    out.metadata.insert("config_hash".into(), s.hash.clone());
    out.metadata.insert("seed".into(), s.cfg.seed.to_string());
    s.write_json("evaluation.json", &out)?;
    let mut buf = Vec::new();
    out.write_summary_csv(&mut buf, Some(&s.preamble()))?;
    s.write("cumulative.csv", buf)
}

fn sweep(s: &mut Stage, synthetic: Option<usize>) -> Result<()> {
    let (a, b) = match synthetic {
        Some(n) => synthetic_anticorrelated(n, s.cfg.seed)?,
        None => {
            let before = s.before()?;
            let cands = s.candidates(&before);
            let s2 = s.cfg.fusion.s2.clone();
            (spd_table(s, &before, &cands)?, source(s, &s2, &before, &cands)?)
        }
    };
    let (a, b, _) = align(a, b)?;
    let grid = s.cfg.fusion.beta_grid.clone();
    let table = beta_sweep_self_eval(&a, &b, &grid, &FusionMethod::ALL, s.cfg.k)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf, Some(&s.preamble()))?;
    s.write("sweep.csv", buf)?;
    let curves: BTreeMap<String, Vec<f64>> =
        FusionMethod::ALL.iter().filter_map(|&m| table.curve(m, &grid).map(|c| (m.to_string(), c))).collect();
    s.write_json(
        "sweep_summary.json",
        &serde_json::json!({"config_hash": s.hash, "seed": s.cfg.seed, "k": s.cfg.k, "betas": grid, "mean_sp_d": curves, "skipped": table.skipped}),
    )
}

fn gnn_train(s: &mut Stage) -> Result<()> {
    let h = s.graph(&s.before()?)?;
    let cfg = s.cfg.gnn.clone();
    let g = GnnGraph::from_adjacency(&h, &cfg.setting.adjacency(&h));
    let mut wcfg = s.cfg.walks.clone();
    wcfg.alpha = match cfg.setting {
        GnnSetting::Full => Alpha::UNIFORM,
        GnnSetting::AuthorLess => Alpha::INFINITE,
    };
    let wc = generate_walks(&h, &wcfg)?;
    let seqs = local_sequences(&g, &wc.sequences);
    let pairs: Vec<(u32, u32)> =
        window_pairs_of(&seqs, wcfg.window).into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u as u32, v as u32)).collect();
    let sampler = NegativeSampler::from_sequences(&seqs, g.len(), UNIGRAM_POWER)?;
    let trained = train_autoencoder(&g, &pairs, &sampler, &cfg)?;
    let mut buf = Vec::new();
    write_checkpoint(&trained.params, &cfg, &g, &mut buf)?;
    s.write("gnn_checkpoint.json", buf)?;
    let mut buf = Vec::new();
    embedding_table(&g, &trained.embeddings)?.write_text(Matrix::Hidden, &mut buf)?;
    s.write("gnn_embedding.txt", buf)?;
    s.write_json(
        "gnn_report.json",
        &serde_json::json!({"config_hash": s.hash, "seed": s.cfg.seed, "pairs": pairs.len(), "nodes": g.len(), "report": trained.report}),
    )
}
