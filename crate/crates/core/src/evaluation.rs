//! Prediction protocol: unstudied candidates, yearly and cumulative hit
//! rates, and β sweeps over fusion methods.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scoring::{combine_scores, fmt_score, rank_candidates, Direction, FusionMethod, Provenance, ScoreTable};

/// Entities mentioned this many times or fewer are not candidates.
pub const DEFAULT_MENTION_THRESHOLD: usize = 3;
pub const DEFAULT_K: usize = 50;

/// Number of records mentioning each non-keyword entity.
pub fn entity_counts(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for rec in corpus.records() {
        for e in rec.entities.iter().filter(|e| !corpus.keywords().matches(e)) {
            *counts.entry(e.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Entities of `before` that never share a record with the property and
/// are mentioned more than `threshold` times.
pub fn unstudied_set(before: &Corpus, threshold: usize) -> BTreeSet<String> {
    let studied: BTreeSet<String> = before
        .records()
        .iter()
        .filter(|r| before.mentions_property(r))
        .flat_map(|r| r.entities.iter().cloned())
        .collect();
    entity_counts(before)
        .into_iter()
        .filter(|(e, n)| *n > threshold && !studied.contains(e))
        .map(|(e, _)| e)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitNormalization {
    #[default]
    K,
    Predictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub t: i32,
    pub k: usize,
    pub predictions: Vec<String>,
    #[serde(default)]
    pub years: Vec<i32>,
    #[serde(default)]
    pub hit_rates: Vec<f64>,
    #[serde(default)]
    pub cumulative: Vec<f64>,
    /// Year in which each prediction was discovered, if it was.
    #[serde(default)]
    pub discoveries: BTreeMap<String, i32>,
    #[serde(default)]
    pub normalization: HitNormalization,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl PredictionReport {
    pub fn new(t: i32, k: usize, predictions: Vec<String>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("k must be positive".into()));
        }
        if predictions.len() > k {
            return Err(Error::Validation(format!("{} predictions exceed k = {k}", predictions.len())));
        }
        Ok(PredictionReport {
            t,
            k,
            predictions,
            years: Vec::new(),
            hit_rates: Vec::new(),
            cumulative: Vec::new(),
            discoveries: BTreeMap::new(),
            normalization: HitNormalization::K,
            metadata: BTreeMap::new(),
        })
    }

    /// Writes `year,hit_rate,cumulative`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W, preamble: Option<&str>) -> Result<()> {
        if let Some(p) = preamble {
            writeln!(out, "# {p}")?;
        }
        writeln!(out, "year,hit_rate,cumulative")?;
        for ((y, a), c) in self.years.iter().zip(&self.hit_rates).zip(&self.cumulative) {
            writeln!(out, "{y},{a},{c}")?;
        }
        Ok(())
    }
}

/// Scans `from` (records with year ≥ t) year by year. 𝒞_τ holds the
/// members of 𝒰 first co-occurring with the property in year τ; they are
/// removed from 𝒰 afterwards.
pub fn cumulative_hit_rate(
    report: &PredictionReport,
    from: &Corpus,
    unstudied: &BTreeSet<String>,
    normalization: HitNormalization,
) -> Result<PredictionReport> {
    if let Some(r) = from.records().iter().find(|r| r.year < report.t) {
        return Err(Error::Validation(format!("record {} (year {}) precedes t = {}", r.id, r.year, report.t)));
    }
    let mut by_year: BTreeMap<i32, BTreeSet<&str>> = BTreeMap::new();
    for rec in from.records().iter().filter(|r| from.mentions_property(r)) {
        by_year.entry(rec.year).or_default().extend(rec.entities.iter().map(String::as_str));
    }
    let predicted: BTreeSet<&str> = report.predictions.iter().map(String::as_str).collect();
    let denom = match normalization {
        HitNormalization::K => report.k as f64,
        HitNormalization::Predictions => report.predictions.len().max(1) as f64,
    };
    let mut remaining: BTreeSet<&str> = unstudied.iter().map(String::as_str).collect();
    let mut out = report.clone();
    out.years.clear();
    out.hit_rates.clear();
    out.cumulative.clear();
    out.discoveries.clear();
    out.normalization = normalization;
    let last = from.year_range().map(|(_, hi)| hi);
    let mut running = 0.0;
    if let Some(last) = last {
        for tau in report.t..=last {
            let cooc = by_year.get(&tau);
            let found: BTreeSet<&str> =
                remaining.iter().copied().filter(|e| cooc.is_some_and(|c| c.contains(e))).collect();
            let hits = found.intersection(&predicted).count();
            for &e in found.intersection(&predicted) {
                out.discoveries.insert(e.to_string(), tau);
            }
            remaining.retain(|e| !found.contains(e));
            let a = hits as f64 / denom;
            running += a;
            out.years.push(tau);
            out.hit_rates.push(a);
            out.cumulative.push(running);
        }
    }
    Ok(out)
}

pub fn default_beta_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: FusionMethod,
    pub beta: f64,
    pub candidate: String,
    pub sp_d: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Methods that rejected the inputs, with the reason.
    pub skipped: BTreeMap<String, String>,
}

impl SweepTable {
    /// Mean SP-d over the top-k candidates of one (method, β) cell.
    pub fn mean_spd(&self, method: FusionMethod, beta: f64) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter(|r| r.method == method && r.beta == beta).map(|r| r.sp_d).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn curve(&self, method: FusionMethod, betas: &[f64]) -> Option<Vec<f64>> {
        betas.iter().map(|&b| self.mean_spd(method, b)).collect()
    }

    /// Writes `method,beta,candidate,sp_d,s2`.
    pub fn write_csv<W: Write>(&self, mut out: W, preamble: Option<&str>) -> Result<()> {
        if let Some(p) = preamble {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["method", "beta", "candidate", "sp_d", "s2"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([&r.method.to_string(), &r.beta.to_string(), &r.candidate, &fmt_score(r.sp_d), &fmt_score(r.s2)])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Top-k SP-d and s₂ values for each fusion method and β. `spd` must be
/// sentinel-substituted.
pub fn beta_sweep_self_eval(spd: &ScoreTable, s2: &ScoreTable, betas: &[f64], methods: &[FusionMethod], k: usize) -> Result<SweepTable> {
    if spd.provenance != Provenance::SpD {
        return Err(Error::Validation("first sweep input must be an sp_d table".into()));
    }
    for &b in betas {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Domain(format!("beta must lie in [0, 1], got {b}")));
        }
    }
    let cells: Vec<(FusionMethod, f64)> = methods.iter().flat_map(|&m| betas.iter().map(move |&b| (m, b))).collect();
    let results: Vec<(FusionMethod, f64, Result<ScoreTable>)> =
        cells.into_par_iter().map(|(m, b)| (m, b, combine_scores(spd, s2, b, m))).collect();
    let mut table = SweepTable::default();
    for (m, b, fused) in results {
        match fused {
            Ok(f) => {
                for c in rank_candidates(&f, k, Direction::MaxFirst).candidates {
                    let (sp_d, v2) = (spd.get(&c).unwrap_or(f64::NAN), s2.get(&c).unwrap_or(f64::NAN));
                    table.rows.push(SweepRow { method: m, beta: b, candidate: c, sp_d, s2: v2 });
                }
            }
            Err(e) => {
                table.skipped.entry(m.to_string()).or_insert_with(|| e.to_string());
            }
        }
    }
    let skipped = table.skipped.clone();
    table.rows.retain(|r| !skipped.contains_key(&r.method.to_string()));
    Ok(table)
}

/// Latent-variable benchmark in which SP-d rises and a power-factor-like
/// plausibility falls with `u ~ U(0, 1)`. SP-d is unbounded for `u > 0.95`;
/// plausibility spans roughly 10² to 10⁴.
pub fn synthetic_anticorrelated(n: usize, seed: u64) -> Result<(ScoreTable, ScoreTable)> {
    let mut rng = stream_rng(seed, 0x5ce7, 0);
    let mut s1 = BTreeMap::new();
    let mut s2 = BTreeMap::new();
    for i in 0..n {
        let u: f64 = rng.gen();
        let noise: f64 = rng.gen_range(-0.25..0.25);
        let name = format!("x{i:04}");
        let hops = if u > 0.95 { f64::INFINITY } else { 1.0 + (6.0 * u).floor() };
        s1.insert(name.clone(), hops);
        s2.insert(name, 10f64.powf(2.0 + 2.0 * (1.0 - u) + noise));
    }
    Ok((ScoreTable::new(Provenance::SpD, s1)?, ScoreTable::new(Provenance::ExternalPf, s2)?))
}

/// First β at which `curve` reaches the midpoint of its endpoints, linearly
/// interpolated between grid points.
pub fn halfway_crossing(betas: &[f64], curve: &[f64]) -> Option<f64> {
    let (first, last) = (*curve.first()?, *curve.last()?);
    if first == last {
        return None;
    }
    let half = 0.5 * (first + last);
    let sign = (last - first).signum();
    for i in 1..curve.len() {
        let (a, b) = ((curve[i - 1] - half) * sign, (curve[i] - half) * sign);
        if a < 0.0 && b >= 0.0 {
            return Some(betas[i - 1] + (betas[i] - betas[i - 1]) * (-a) / (b - a));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{corpus, g1_corpus};
    use crate::scoring::apply_sentinel;
    use proptest::prelude::*;

    #[test]
    fn g1_unstudied() {
        let mut recs = g1_corpus().records().to_vec();
        let mut p4 = recs[1].clone();
        p4.id = "p4".into();
        p4.entities = vec!["m3".into()];
        recs.push(p4);
        let c = Corpus::new(recs, crate::fixtures::keywords()).unwrap();
        let (before, _) = c.partition_by_year(2002);
        let u = unstudied_set(&before, 0);
        assert_eq!(u.into_iter().collect::<Vec<_>>(), ["m3"]);
        assert!(unstudied_set(&before, DEFAULT_MENTION_THRESHOLD).is_empty());
    }

    #[test]
    fn first_year_hit() {
        let after = corpus(&[("q1", 2001, &["a"], &["m2"], true), ("q2", 2002, &["a"], &["m7"], false)]);
        let u: BTreeSet<String> = ["m2", "m5", "m7"].iter().map(|s| s.to_string()).collect();
        let r = PredictionReport::new(2001, 2, vec!["m2".into(), "m5".into()]).unwrap();
        let r = cumulative_hit_rate(&r, &after, &u, HitNormalization::K).unwrap();
        assert_eq!(r.years, [2001, 2002]);
        assert_eq!(r.hit_rates, [0.5, 0.0]);
        assert_eq!(r.cumulative, [0.5, 0.5]);
        assert_eq!(r.discoveries["m2"], 2001);
    }

    #[test]
    fn rediscovery_counts_once_and_full_attainment() {
        let after = corpus(&[
            ("q1", 2001, &["a"], &["m1"], true),
            ("q2", 2002, &["a"], &["m1", "m2"], true),
            ("q3", 2003, &["a"], &["m9"], false),
        ]);
        let u: BTreeSet<String> = ["m1", "m2"].iter().map(|s| s.to_string()).collect();
        let r = PredictionReport::new(2001, 2, vec!["m1".into(), "m2".into()]).unwrap();
        let r = cumulative_hit_rate(&r, &after, &u, HitNormalization::K).unwrap();
        assert_eq!(r.hit_rates, [0.5, 0.5, 0.0]);
        assert_eq!(r.cumulative.last(), Some(&1.0));
        let short = PredictionReport::new(2001, 4, vec!["m1".into()]).unwrap();
        let a = cumulative_hit_rate(&short, &after, &u, HitNormalization::K).unwrap();
        let b = cumulative_hit_rate(&short, &after, &u, HitNormalization::Predictions).unwrap();
        assert_eq!((a.hit_rates[0], b.hit_rates[0]), (0.25, 1.0));
    }

    #[test]
    fn no_discoveries_is_flat() {
        let after = corpus(&[("q1", 2003, &["a"], &["m1"], false)]);
        let u: BTreeSet<String> = ["m1".to_string()].into();
        let r = PredictionReport::new(2001, 1, vec!["m1".into()]).unwrap();
        let r = cumulative_hit_rate(&r, &after, &u, HitNormalization::K).unwrap();
        assert_eq!(r.cumulative, [0.0, 0.0, 0.0]);
        let early = corpus(&[("q0", 2000, &["a"], &["m1"], false)]);
        assert!(cumulative_hit_rate(&r, &early, &u, HitNormalization::K).is_err());
    }

    #[test]
    fn sweep_extremes_and_skips() {
        let (s1, s2) = synthetic_anticorrelated(200, 3).unwrap();
        let s1 = apply_sentinel(&s1).unwrap();
        let grid = default_beta_grid();
        let sweep = beta_sweep_self_eval(&s1, &s2, &grid, &FusionMethod::ALL, 20).unwrap();
        let pure = rank_candidates(&s1, 20, Direction::MaxFirst).candidates;
        let pure_mean = pure.iter().map(|c| s1.get(c).unwrap()).sum::<f64>() / 20.0;
        for m in FusionMethod::ALL {
            assert_eq!(sweep.mean_spd(m, 1.0), Some(pure_mean), "{m}");
        }
        let with_zero = ScoreTable::from_pairs(Provenance::Sd, s2.iter().map(|(c, v)| (c, v - v))).unwrap();
        let sweep = beta_sweep_self_eval(&s1, &with_zero, &grid, &FusionMethod::ALL, 20).unwrap();
        assert!(sweep.skipped.contains_key("geometric") && sweep.skipped.contains_key("harmonic"));
        assert!(sweep.rows.iter().all(|r| matches!(r.method, FusionMethod::VdwZ | FusionMethod::LinearLambda)));
    }

    #[test]
    fn crossing_interpolates() {
        let b = halfway_crossing(&[0.0, 0.5, 1.0], &[0.0, 0.25, 1.0]).unwrap();
        assert!((b - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(halfway_crossing(&[0.0, 1.0], &[2.0, 2.0]), None);
    }

    proptest! {
        #[test]
        fn cumulative_monotone_and_bounded(c in crate::testutil::arb_corpus(20), t in 2000i32..2006, k in 1usize..6, threshold in 0usize..2) {
            let (before, after) = c.partition_by_year(t);
            let u = unstudied_set(&before, threshold);
            let preds: Vec<String> = u.iter().take(k).cloned().collect();
            let r = PredictionReport::new(t, k, preds).unwrap();
            let r = cumulative_hit_rate(&r, &after, &u, HitNormalization::K).unwrap();
            for w in r.cumulative.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(r.cumulative.iter().all(|&v| v <= 1.0 + 1e-12));
            prop_assert!(r.hit_rates.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }
}
