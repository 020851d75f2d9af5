//! Author / material / property hypergraph with one hyperedge per paper.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Dense node index into a [`Hypergraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Author,
    Material,
    Property,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Author, NodeKind::Material, NodeKind::Property];

    pub fn is_author(self) -> bool {
        self == NodeKind::Author
    }
}

impl std::str::FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "author" => Ok(NodeKind::Author),
            "material" => Ok(NodeKind::Material),
            "property" => Ok(NodeKind::Property),
            other => Err(Error::Validation(format!("unknown node kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub paper: String,
    pub year: i32,
    /// Sorted, distinct member nodes.
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Sort nodes by (kind, label) and edges by paper id so that the result
    /// does not depend on record order.
    pub canonical: bool,
}

#[derive(Debug, Clone)]
pub struct Hypergraph {
    nodes: Vec<Node>,
    edges: Vec<Hyperedge>,
    node_edges: Vec<Vec<usize>>,
    lookup: HashMap<(NodeKind, String), NodeId>,
    property: Option<NodeId>,
    skipped_records: usize,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Hypergraph {
    /// Assembles a hypergraph from explicit nodes and edges and derives the
    /// incidence indexes.
    pub fn from_parts(nodes: Vec<Node>, mut edges: Vec<Hyperedge>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(nodes.len());
        let mut property = None;
        for (i, node) in nodes.iter().enumerate() {
            if node.kind == NodeKind::Property {
                if property.is_some() {
                    return Err(Error::Validation("more than one property node".into()));
                }
                property = Some(NodeId::from(i));
            }
            if lookup.insert((node.kind, node.label.clone()), NodeId::from(i)).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate {:?} node {:?}",
                    node.kind, node.label
                )));
            }
        }
        let mut node_edges = vec![Vec::new(); nodes.len()];
        for (e, edge) in edges.iter_mut().enumerate() {
            edge.members.sort_unstable();
            edge.members.dedup();
            if edge.members.is_empty() {
                return Err(Error::Validation(format!("hyperedge {:?} is empty", edge.paper)));
            }
            for &v in &edge.members {
                node_edges
                    .get_mut(v.index())
                    .ok_or_else(|| {
                        Error::Validation(format!("hyperedge {:?} references node {v}", edge.paper))
                    })?
                    .push(e);
            }
        }
        Ok(Hypergraph { nodes, edges, node_edges, lookup, property, skipped_records: 0 })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn node(&self, v: NodeId) -> Result<&Node> {
        self.nodes.get(v.index()).ok_or_else(|| Error::Lookup(format!("no node with id {v}")))
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.nodes[v.index()].kind
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.nodes[v.index()].label
    }

    pub fn find(&self, kind: NodeKind, label: &str) -> Option<NodeId> {
        self.lookup.get(&(kind, label.to_string())).copied()
    }

    pub fn property_node(&self) -> Option<NodeId> {
        self.property
    }

    /// Records that contributed no node and were therefore skipped.
    pub fn skipped_records(&self) -> usize {
        self.skipped_records
    }

    /// d(v): number of hyperedges containing `v`.
    pub fn node_degree(&self, v: NodeId) -> usize {
        self.node_edges[v.index()].len()
    }

    /// d(e): number of distinct nodes in hyperedge `e`.
    pub fn edge_size(&self, e: usize) -> usize {
        self.edges[e].members.len()
    }

    pub fn incident_edges(&self, v: NodeId) -> &[usize] {
        &self.node_edges[v.index()]
    }

    pub fn members(&self, e: usize) -> &[NodeId] {
        &self.edges[e].members
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId::from)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&v| self.kind(v) == kind)
    }

    pub fn author_mask(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| n.kind.is_author()).collect()
    }

    /// Γ(v), optionally restricted to one node kind. Never contains `v`.
    pub fn neighbors(&self, v: NodeId, kind: Option<NodeKind>) -> Result<BTreeSet<NodeId>> {
        self.node(v)?;
        let mut out = BTreeSet::new();
        for &e in self.incident_edges(v) {
            for &u in self.members(e) {
                if u != v && kind.is_none_or(|k| self.kind(u) == k) {
                    out.insert(u);
                }
            }
        }
        Ok(out)
    }

    /// Simple graph over the kept node kinds: `u ~ v` when they share a
    /// hyperedge, and with `coauthor_augment` also when they share an author
    /// neighbour.
    pub fn projected_adjacency(&self, keep: &[NodeKind], coauthor_augment: bool) -> Adjacency {
        let kept: Vec<bool> = self.nodes.iter().map(|n| keep.contains(&n.kind)).collect();
        let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); self.nodes.len()];
        let mut link_group = |group: &[NodeId]| {
            for (i, &u) in group.iter().enumerate() {
                for &v in &group[i + 1..] {
                    if u != v {
                        sets[u.index()].insert(v.0);
                        sets[v.index()].insert(u.0);
                    }
                }
            }
        };
        for edge in &self.edges {
            let group: Vec<NodeId> =
                edge.members.iter().copied().filter(|v| kept[v.index()]).collect();
            link_group(&group);
        }
        if coauthor_augment {
            for a in self.nodes_of_kind(NodeKind::Author) {
                let group: Vec<NodeId> = self
                    .neighbors(a, None)
                    .expect("author id is valid")
                    .into_iter()
                    .filter(|v| kept[v.index()])
                    .collect();
                link_group(&group);
            }
        }
        Adjacency {
            kept,
            neighbors: sets
                .into_iter()
                .map(|s| s.into_iter().map(NodeId).collect())
                .collect(),
        }
    }

    /// Writes the versioned JSON snapshot.
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        let snap = Snapshot {
            magic: SNAPSHOT_MAGIC.into(),
            version: SNAPSHOT_VERSION,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            skipped_records: self.skipped_records,
        };
        serde_json::to_writer(out, &snap)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Self> {
        let snap: Snapshot = serde_json::from_reader(input)?;
        if snap.magic != SNAPSHOT_MAGIC {
            return Err(Error::parse(1, format!("not a hypergraph snapshot (magic {:?})", snap.magic)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::parse(1, format!("unsupported snapshot version {}", snap.version)));
        }
        let mut h = Hypergraph::from_parts(snap.nodes, snap.edges)?;
        h.skipped_records = snap.skipped_records;
        Ok(h)
    }
}

const SNAPSHOT_MAGIC: &str = "hyperdisc-hypergraph";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    magic: String,
    version: u32,
    nodes: Vec<Node>,
    edges: Vec<Hyperedge>,
    #[serde(default)]
    skipped_records: usize,
}

/// Symmetric, loop-free adjacency over the full node id space; nodes that
/// were not kept have no neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    kept: Vec<bool>,
    neighbors: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn from_lists(kept: Vec<bool>, neighbors: Vec<Vec<NodeId>>) -> Self {
        Adjacency { kept, neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_kept(&self, v: NodeId) -> bool {
        self.kept[v.index()]
    }

    pub fn kept_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.kept.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| NodeId::from(i))
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[v.index()]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors[u.index()].binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (u, list) in self.neighbors.iter().enumerate() {
            let u = NodeId::from(u);
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }
}

/// One hyperedge per record: its authors, its entities and the property node
/// when the record mentions the property. Entities equal to a keyword
/// collapse into the property node.
pub fn build_hypergraph(corpus: &Corpus, opts: BuildOptions) -> Result<Hypergraph> {
    if corpus.is_empty() {
        return Err(Error::Validation("cannot build a hypergraph from an empty corpus".into()));
    }
    let keywords = corpus.keywords();
    let mut nodes: Vec<Node> = Vec::new();
    let mut lookup: HashMap<(NodeKind, String), NodeId> = HashMap::new();
    let mut intern = |kind: NodeKind, label: &str| -> NodeId {
        *lookup.entry((kind, label.to_string())).or_insert_with(|| {
            nodes.push(Node { kind, label: label.to_string() });
            NodeId::from(nodes.len() - 1)
        })
    };

    let mut edges = Vec::new();
    let mut skipped = 0;
    for rec in corpus.records() {
        if rec.authors.is_empty() && rec.entities.is_empty() {
            skipped += 1;
            continue;
        }
        let mut members = Vec::with_capacity(rec.authors.len() + rec.entities.len() + 1);
        for a in &rec.authors {
            members.push(intern(NodeKind::Author, a));
        }
        let mut has_property = false;
        for ent in &rec.entities {
            if keywords.matches(ent) {
                has_property = true;
            } else {
                members.push(intern(NodeKind::Material, ent));
            }
        }
        if has_property || rec.tokens().iter().any(|t| keywords.matches(t)) {
            members.push(intern(NodeKind::Property, keywords.primary()));
        }
        edges.push(Hyperedge { paper: rec.id.clone(), year: rec.year, members });
    }
    if skipped > 0 {
        warn!("skipped {skipped} record(s) with neither authors nor entities");
    }

    if opts.canonical {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| {
            (nodes[a].kind, &nodes[a].label).cmp(&(nodes[b].kind, &nodes[b].label))
        });
        let mut remap = vec![NodeId(0); nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = NodeId::from(new);
        }
        nodes = order.iter().map(|&old| nodes[old].clone()).collect();
        for e in &mut edges {
            for v in &mut e.members {
                *v = remap[v.index()];
            }
        }
        edges.sort_by(|a, b| a.paper.cmp(&b.paper));
    }

    let mut h = Hypergraph::from_parts(nodes, edges)?;
    h.skipped_records = skipped;
    Ok(h)
}
