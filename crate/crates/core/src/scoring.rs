//! Candidate score tables, the shortest-path alienness signal and the
//! β-weighted fusion rules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Adjacency, Hypergraph, NodeId, NodeKind};
use crate::quantile::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SpD,
    Plausibility,
    ExternalPf,
    Sd,
    Transition,
    Fused,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::SpD => "sp_d",
            Provenance::Plausibility => "plausibility",
            Provenance::ExternalPf => "external_pf",
            Provenance::Sd => "sd",
            Provenance::Transition => "transition",
            Provenance::Fused => "fused",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sp_d" | "spd" => Provenance::SpD,
            "plausibility" => Provenance::Plausibility,
            "external_pf" | "pf" => Provenance::ExternalPf,
            "sd" => Provenance::Sd,
            "transition" => Provenance::Transition,
            "fused" => Provenance::Fused,
            other => return Err(Error::Validation(format!("unknown score provenance {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MaxFirst,
    MinFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    VdwZ,
    Geometric,
    Harmonic,
    LinearLambda,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 4] =
        [FusionMethod::VdwZ, FusionMethod::Geometric, FusionMethod::Harmonic, FusionMethod::LinearLambda];
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMethod::VdwZ => "vdw_z",
            FusionMethod::Geometric => "geometric",
            FusionMethod::Harmonic => "harmonic",
            FusionMethod::LinearLambda => "linear_lambda",
        })
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vdw_z" | "vdw" => FusionMethod::VdwZ,
            "geometric" | "geo" => FusionMethod::Geometric,
            "harmonic" | "hrm" => FusionMethod::Harmonic,
            "linear_lambda" | "linear" => FusionMethod::LinearLambda,
            other => return Err(Error::Validation(format!("unknown fusion method {other:?}"))),
        })
    }
}

/// Named per-candidate scores. `+inf` is allowed only in `sp_d` tables and
/// marks a candidate unreachable from the property node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub provenance: Provenance,
    values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    flags: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    table_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

impl ScoreTable {
    pub fn new(provenance: Provenance, values: BTreeMap<String, f64>) -> Result<Self> {
        for (c, &v) in &values {
            if v.is_nan() {
                return Err(Error::Validation(format!("score for {c:?} is NaN")));
            }
            if v.is_infinite() && !(provenance == Provenance::SpD && v > 0.0) {
                return Err(Error::Validation(format!("score for {c:?} is {v}; only sp_d tables may hold +inf")));
            }
        }
        Ok(ScoreTable { provenance, values, flags: BTreeMap::new(), table_flags: Vec::new(), meta: BTreeMap::new() })
    }

    pub fn from_pairs<I, S>(provenance: Provenance, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        ScoreTable::new(provenance, pairs.into_iter().map(|(c, v)| (c.into(), v)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, candidate: &str) -> Option<f64> {
        self.values.get(candidate).copied()
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(c, &v)| (c.as_str(), v))
    }

    pub fn flag(&mut self, candidate: &str, flag: &str) {
        self.flags.entry(candidate.to_string()).or_default().push(flag.to_string());
    }

    pub fn flags_of(&self, candidate: &str) -> &[String] {
        self.flags.get(candidate).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn flag_table(&mut self, flag: &str) {
        if !self.table_flags.iter().any(|f| f == flag) {
            self.table_flags.push(flag.to_string());
        }
    }

    pub fn table_flags(&self) -> &[String] {
        &self.table_flags
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn has_infinite(&self) -> bool {
        self.values.values().any(|v| v.is_infinite())
    }

    /// Keeps only the listed candidates (those present).
    pub fn restrict(&self, keep: &BTreeSet<String>) -> ScoreTable {
        let mut out = self.clone();
        out.values.retain(|c, _| keep.contains(c));
        out.flags.retain(|c, _| keep.contains(c));
        out
    }

    pub fn write_csv<W: Write>(&self, out: W, preamble: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(p) = preamble {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["candidate", "score", "flags"]).map_err(csv_err)?;
        for (c, v) in &self.values {
            let flags = self.flags_of(c).join(";");
            w.write_record([c.as_str(), &fmt_score(*v), &flags]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `candidate,score[,flags]` with a header row; `#` lines are skipped.
    pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(input);
        let mut values = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            let cand = rec.get(0).ok_or_else(|| Error::parse(line, "missing candidate"))?.to_string();
            let score: f64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::parse(line, "missing or invalid score"))?;
            if let Some(f) = rec.get(2).filter(|f| !f.is_empty()) {
                flags.insert(cand.clone(), f.split(';').map(str::to_string).collect::<Vec<_>>());
            }
            if values.insert(cand.clone(), score).is_some() {
                return Err(Error::parse(line, format!("duplicate candidate {cand:?}")));
            }
        }
        let mut t = ScoreTable::new(provenance, values)?;
        t.flags = flags;
        Ok(t)
    }
}

pub(crate) fn fmt_score(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse(0, format!("{other:?}")),
    }
}

/// Breadth-first hop counts from `source` to every material node;
/// unreachable materials get `+inf`.
pub fn shortest_path_distances(adj: &Adjacency, h: &Hypergraph, source: NodeId) -> Result<ScoreTable> {
    h.node(source)?;
    if source.index() >= adj.node_count() {
        return Err(Error::Lookup(format!("source {source} not in adjacency")));
    }
    let mut dist = vec![usize::MAX; adj.node_count()];
    dist[source.index()] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &u in adj.neighbors(v) {
            if dist[u.index()] == usize::MAX {
                dist[u.index()] = dist[v.index()] + 1;
                queue.push_back(u);
            }
        }
    }
    let values = h
        .nodes_of_kind(NodeKind::Material)
        .map(|m| {
            let d = dist[m.index()];
            (h.label(m).to_string(), if d == usize::MAX { f64::INFINITY } else { d as f64 })
        })
        .collect();
    let mut t = ScoreTable::new(Provenance::SpD, values)?;
    t.set_meta("direction", "larger = more alien");
    Ok(t)
}

/// Replaces every `+inf` with `max finite + 1`. A table with no finite entry
/// becomes all ones and is flagged.
pub fn apply_sentinel(t: &ScoreTable) -> Result<ScoreTable> {
    if t.provenance != Provenance::SpD {
        return Err(Error::Domain(format!("sentinel substitution applies to sp_d tables, not {}", t.provenance)));
    }
    let max_finite = t.values.values().copied().filter(|v| v.is_finite()).fold(None, |m: Option<f64>, v| {
        Some(m.map_or(v, |m| m.max(v)))
    });
    let mut out = t.clone();
    let sentinel = match max_finite {
        Some(m) => m + 1.0,
        None => {
            if !t.is_empty() {
                out.flag_table("all_unbounded");
            }
            1.0
        }
    };
    for v in out.values.values_mut() {
        if v.is_infinite() {
            *v = sentinel;
        }
    }
    out.set_meta("sentinel", sentinel);
    Ok(out)
}

/// 1-based ascending ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-based normal scores `φ(r / (|S| + 1))`.
pub fn van_der_waerden(t: &ScoreTable) -> Result<ScoreTable> {
    if t.is_empty() {
        return Err(Error::Domain("van der Waerden transform of an empty table".into()));
    }
    if t.has_infinite() {
        return Err(Error::Domain("unbounded scores; apply the sentinel first".into()));
    }
    let vals: Vec<f64> = t.values.values().copied().collect();
    let n1 = (vals.len() + 1) as f64;
    let ranks = average_ranks(&vals);
    let values = t.values.keys().cloned().zip(ranks.iter().map(|r| normal_quantile(r / n1))).collect();
    let mut out = t.clone();
    out.values = values;
    out.set_meta("transform", "van_der_waerden");
    Ok(out)
}

/// Standard scores with the population standard deviation; a constant input
/// maps to all zeros.
pub fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Fuses `s1` (weight β) and `s2` (weight 1-β) over the same candidates.
pub fn combine_scores(s1: &ScoreTable, s2: &ScoreTable, beta: f64, method: FusionMethod) -> Result<ScoreTable> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if s1.values.keys().ne(s2.values.keys()) {
        return Err(Error::Validation("score tables cover different candidate sets".into()));
    }
    if s1.is_empty() {
        return Err(Error::Domain("cannot fuse empty score tables".into()));
    }
    if s1.has_infinite() || s2.has_infinite() {
        return Err(Error::Domain("unbounded scores; apply the sentinel first".into()));
    }
    let a: Vec<f64> = s1.values.values().copied().collect();
    let b: Vec<f64> = s2.values.values().copied().collect();
    let mut table_flags = Vec::new();
    let mut extra_meta = Vec::new();
    let fused: Vec<f64> = match method {
        FusionMethod::VdwZ => {
            let za = z_scores(&van_der_waerden(s1)?.values.values().copied().collect::<Vec<_>>());
            let zb = z_scores(&van_der_waerden(s2)?.values.values().copied().collect::<Vec<_>>());
            za.iter().zip(&zb).map(|(x, y)| beta * x + (1.0 - beta) * y).collect()
        }
        FusionMethod::Geometric | FusionMethod::Harmonic => {
            for (c, (x, y)) in s1.values.keys().zip(a.iter().zip(&b)) {
                if *x <= 0.0 || *y <= 0.0 {
                    return Err(Error::Domain(format!(
                        "{method} fusion needs strictly positive scores; {c:?} has ({x}, {y})"
                    )));
                }
            }
            if method == FusionMethod::Geometric {
                a.iter().zip(&b).map(|(x, y)| (x.powf(beta) * y.powf(1.0 - beta)).sqrt()).collect()
            } else {
                a.iter().zip(&b).map(|(x, y)| 2.0 / (beta / x + (1.0 - beta) / y)).collect()
            }
        }
        FusionMethod::LinearLambda => {
            let mean_a = a.iter().sum::<f64>() / a.len() as f64;
            let pos: Vec<f64> = b.iter().copied().filter(|&v| v > 0.0).collect();
            let mean_pos = pos.iter().sum::<f64>() / pos.len() as f64;
            let mut lambda = mean_a / mean_pos;
            if !(lambda.is_finite() && lambda > 0.0) {
                table_flags.push("lambda_fallback".to_string());
                lambda = 1.0;
            }
            extra_meta.push(("lambda", lambda.to_string()));
            a.iter().zip(&b).map(|(x, y)| beta * x + lambda * (1.0 - beta) * y).collect()
        }
    };
    let mut out = ScoreTable::new(Provenance::Fused, s1.values.keys().cloned().zip(fused).collect())?;
    out.set_meta("beta", beta);
    out.set_meta("method", method);
    out.set_meta("s1", s1.provenance);
    out.set_meta("s2", s2.provenance);
    out.set_meta("direction", "max_first");
    for (k, v) in extra_meta {
        out.set_meta(k, v);
    }
    for f in table_flags {
        out.flag_table(&f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub candidates: Vec<String>,
    /// Set when fewer than `k` candidates were available.
    pub truncated: bool,
}

/// Stable top-`k`; ties broken by candidate label.
pub fn rank_candidates(t: &ScoreTable, k: usize, direction: Direction) -> Ranking {
    let mut items: Vec<(&str, f64)> = t.iter().collect();
    items.sort_by(|(ca, a), (cb, b)| {
        let by_score = match direction {
            Direction::MaxFirst => b.total_cmp(a),
            Direction::MinFirst => a.total_cmp(b),
        };
        by_score.then_with(|| ca.cmp(cb))
    });
    Ranking {
        truncated: k > items.len(),
        candidates: items.into_iter().take(k).map(|(c, _)| c.to_string()).collect(),
    }
}

/// Writes `candidate,s1,s2,fused,beta,method`.
pub fn write_fused_csv<W: Write>(s1: &ScoreTable, s2: &ScoreTable, fused: &ScoreTable, out: W, preamble: Option<&str>) -> Result<()> {
    let mut out = out;
    if let Some(p) = preamble {
        writeln!(out, "# {p}")?;
    }
    let beta = fused.meta().get("beta").cloned().unwrap_or_default();
    let method = fused.meta().get("method").cloned().unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["candidate", "s1", "s2", "fused", "beta", "method"]).map_err(csv_err)?;
    for (c, v) in fused.iter() {
        let a = s1.get(c).map(fmt_score).unwrap_or_default();
        let b = s2.get(c).map(fmt_score).unwrap_or_default();
        w.write_record([c, &a, &b, &fmt_score(v), &beta, &method]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::g1;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(p: Provenance, pairs: &[(&str, f64)]) -> ScoreTable {
        ScoreTable::from_pairs(p, pairs.iter().map(|&(c, v)| (c, v))).unwrap()
    }

    #[test]
    fn spd_on_g1() {
        let h = g1();
        let adj = h.projected_adjacency(&NodeKind::ALL, false);
        let t = shortest_path_distances(&adj, &h, h.property_node().unwrap()).unwrap();
        assert_eq!(t.get("m2"), Some(1.0));
        assert_eq!(t.get("m1"), Some(1.0));
        assert!(shortest_path_distances(&adj, &h, NodeId(40)).is_err());
    }

    #[test]
    fn spd_isolated_is_infinite() {
        let c = crate::testutil::corpus(&[("p1", 2000, &["a"], &["m1"], true), ("p2", 2000, &["b"], &["m2"], false)]);
        let h = crate::hypergraph::build_hypergraph(&c, Default::default()).unwrap();
        let adj = h.projected_adjacency(&NodeKind::ALL, false);
        let t = shortest_path_distances(&adj, &h, h.property_node().unwrap()).unwrap();
        assert_eq!(t.get("m1"), Some(1.0));
        assert_eq!(t.get("m2"), Some(f64::INFINITY));
    }

    #[test]
    fn sentinel_rules() {
        let t = table(Provenance::SpD, &[("a", 2.0), ("b", f64::INFINITY)]);
        let s = apply_sentinel(&t).unwrap();
        assert_eq!((s.get("a"), s.get("b")), (Some(2.0), Some(3.0)));
        let finite = table(Provenance::SpD, &[("a", 2.0), ("b", 4.0)]);
        assert_eq!(apply_sentinel(&finite).unwrap().values(), finite.values());
        let all_inf = table(Provenance::SpD, &[("a", f64::INFINITY)]);
        let s = apply_sentinel(&all_inf).unwrap();
        assert_eq!(s.get("a"), Some(1.0));
        assert_eq!(s.table_flags(), ["all_unbounded"]);
        assert!(apply_sentinel(&table(Provenance::Sd, &[("a", 1.0)])).is_err());
    }

    #[test]
    fn infinity_only_in_spd() {
        assert!(ScoreTable::from_pairs(Provenance::Plausibility, [("a", f64::INFINITY)]).is_err());
        assert!(ScoreTable::from_pairs(Provenance::SpD, [("a", f64::NAN)]).is_err());
    }

    #[test]
    fn vdw_three_values() {
        let t = table(Provenance::Sd, &[("a", 10.0), ("b", -3.0), ("c", 0.5)]);
        let v = van_der_waerden(&t).unwrap();
        assert_relative_eq!(v.get("b").unwrap(), -0.674_489_750_196_081_7, epsilon = 1e-12);
        assert_eq!(v.get("c").unwrap(), 0.0);
        assert_relative_eq!(v.get("a").unwrap(), 0.674_489_750_196_081_7, epsilon = 1e-12);
        assert!(van_der_waerden(&table(Provenance::Sd, &[])).is_err());
    }

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn fusion_extremes_and_formulas() {
        let s1 = table(Provenance::SpD, &[("a", 1.0), ("b", 4.0), ("c", 9.0)]);
        let s2 = table(Provenance::ExternalPf, &[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        let g = combine_scores(&s1, &s2, 1.0, FusionMethod::Geometric).unwrap();
        assert_eq!(g.values().values().copied().collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
        let same = combine_scores(&s2, &s2, 0.3, FusionMethod::Harmonic).unwrap();
        for (c, v) in same.iter() {
            assert_relative_eq!(v, 2.0 * s2.get(c).unwrap(), epsilon = 1e-12);
        }
        assert!(matches!(combine_scores(&s1, &s2, 1.5, FusionMethod::VdwZ), Err(Error::Domain(_))));
        let zero = table(Provenance::Sd, &[("a", 0.0), ("b", 1.0), ("c", 1.0)]);
        match combine_scores(&s1, &zero, 0.5, FusionMethod::Harmonic) {
            Err(Error::Domain(msg)) => assert!(msg.contains("\"a\"")),
            other => panic!("{other:?}"),
        }
        let other = table(Provenance::Sd, &[("a", 1.0), ("x", 1.0), ("c", 1.0)]);
        assert!(combine_scores(&s1, &other, 0.5, FusionMethod::VdwZ).is_err());
    }

    #[test]
    fn linear_lambda_scale() {
        let s1 = table(Provenance::Plausibility, &[("a", 0.2), ("b", 0.4)]);
        let s2 = table(Provenance::Sd, &[("a", 0.0), ("b", 0.1)]);
        let f = combine_scores(&s1, &s2, 0.5, FusionMethod::LinearLambda).unwrap();
        // lambda = mean(0.2, 0.4) / mean(0.1) = 3
        assert_relative_eq!(f.meta()["lambda"].parse::<f64>().unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.get("b").unwrap(), 0.5 * 0.4 + 3.0 * 0.5 * 0.1, epsilon = 1e-12);
        let neg = table(Provenance::Plausibility, &[("a", -0.2), ("b", -0.4)]);
        let f = combine_scores(&neg, &s2, 0.0, FusionMethod::LinearLambda).unwrap();
        assert_eq!(f.table_flags(), ["lambda_fallback"]);
    }

    #[test]
    fn ranking_ties_and_truncation() {
        let t = table(Provenance::Sd, &[("c", 1.0), ("a", 1.0), ("b", 1.0)]);
        assert_eq!(rank_candidates(&t, 3, Direction::MaxFirst).candidates, ["a", "b", "c"]);
        let r = rank_candidates(&t, 5, Direction::MaxFirst);
        assert!(r.truncated && r.candidates.len() == 3);
        let t = table(Provenance::SpD, &[("x", 2.0), ("y", f64::INFINITY), ("z", 1.0)]);
        assert_eq!(rank_candidates(&t, 2, Direction::MaxFirst).candidates, ["y", "x"]);
        assert_eq!(rank_candidates(&t, 2, Direction::MinFirst).candidates, ["z", "x"]);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = table(Provenance::SpD, &[("Bi2Te3", 2.0), ("PbTe,x", f64::INFINITY)]);
        t.flag("Bi2Te3", "rare");
        let mut buf = Vec::new();
        t.write_csv(&mut buf, Some("config_hash=abc seed=1")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("candidate,score,flags\nBi2Te3,2,rare\n\"PbTe,x\",inf,\n"), "{text}");
        let back = ScoreTable::read_csv(buf.as_slice(), Provenance::SpD).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.flags_of("Bi2Te3"), ["rare"]);
        assert!(ScoreTable::read_csv("candidate,score\na,x\n".as_bytes(), Provenance::Sd).is_err());
    }

    fn distinct_values() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::btree_set(-1000i32..1000, 1..60).prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
    }

    fn named(p: Provenance, vals: &[f64]) -> ScoreTable {
        ScoreTable::from_pairs(p, vals.iter().enumerate().map(|(i, &v)| (format!("c{i:03}"), v))).unwrap()
    }

    proptest! {
        #[test]
        fn vdw_strictly_monotone_and_antisymmetric(vals in distinct_values()) {
            let t = named(Provenance::Sd, &vals);
            let v = van_der_waerden(&t).unwrap();
            let mut pairs: Vec<(f64, f64)> = t.iter().map(|(c, x)| (x, v.get(c).unwrap())).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 < w[1].1);
            }
            let n = pairs.len();
            for r in 0..n {
                prop_assert!((pairs[r].1 + pairs[n - 1 - r].1).abs() < 1e-12);
            }
        }

        #[test]
        fn vdw_z_is_affine_invariant(vals in distinct_values(), other in prop::collection::vec(-5.0f64..5.0, 60), scale in 0.01f64..100.0, shift in -50.0f64..50.0, beta in 0.0f64..=1.0) {
            let n = vals.len();
            let s1 = named(Provenance::Sd, &vals);
            let s2 = named(Provenance::Plausibility, &other[..n]);
            let scaled: Vec<f64> = vals.iter().map(|v| v * scale + shift).collect();
            let s1b = named(Provenance::Sd, &scaled);
            let a = combine_scores(&s1, &s2, beta, FusionMethod::VdwZ).unwrap();
            let b = combine_scores(&s1b, &s2, beta, FusionMethod::VdwZ).unwrap();
            for (c, v) in a.iter() {
                prop_assert!((v - b.get(c).unwrap()).abs() < 1e-12);
                prop_assert!(v.is_finite());
            }
        }

        #[test]
        fn vdw_z_half_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 1..40), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = x.iter().map(|_| rng.gen_range(-5.0..5.0)).collect();
            let s1 = named(Provenance::Sd, &x);
            let s2 = named(Provenance::Plausibility, &y);
            let a = combine_scores(&s1, &s2, 0.5, FusionMethod::VdwZ).unwrap();
            let b = combine_scores(&s2, &s1, 0.5, FusionMethod::VdwZ).unwrap();
            for (c, v) in a.iter() {
                prop_assert!((v - b.get(c).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn geometric_harmonic_homogeneous_under_common_scaling(x in prop::collection::vec(0.1f64..10.0, 2..30), seed in any::<u64>(), scale in 0.01f64..100.0, beta in 0.0f64..=1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = x.iter().map(|_| rng.gen_range(0.1..10.0)).collect();
            for method in [FusionMethod::Geometric, FusionMethod::Harmonic] {
                let a = combine_scores(&named(Provenance::SpD, &x), &named(Provenance::ExternalPf, &y), beta, method).unwrap();
                let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
                let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
                let b = combine_scores(&named(Provenance::SpD, &xs), &named(Provenance::ExternalPf, &ys), beta, method).unwrap();
                // geometric carries an outer square root
                let factor = if method == FusionMethod::Geometric { scale.sqrt() } else { scale };
                for (c, v) in a.iter() {
                    prop_assert!((b.get(c).unwrap() - v * factor).abs() <= 1e-9 * v * factor);
                }
            }
        }
    }
}
