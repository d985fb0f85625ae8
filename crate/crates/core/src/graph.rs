//! Probabilistic causal graphs: synthesis from detector scores, direction
//! refinement, DOT/JSON export and comparison with a reference graph.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::{precision_at, CausalityDetector, LagCalibration, LagDetector};
use crate::error::{Error, Result};
use crate::gp::RatioSeries;
use crate::synth::normalized;

pub const DEFAULT_CUTOFF: f64 = 0.7;
pub const DEFAULT_REFERENCE_THRESHOLD: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regulation {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Gene,
    Hidden,
}

fn is_gene(kind: &NodeKind) -> bool {
    *kind == NodeKind::Gene
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub compound_id: String,
    #[serde(default, skip_serializing_if = "is_gene")]
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regulation: Option<Regulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd_score: Option<f64>,
}

impl GraphNode {
    pub fn gene(id: impl Into<String>) -> Self {
        Self {
            compound_id: id.into(),
            kind: NodeKind::Gene,
            regulation: None,
            sd_score: None,
        }
    }

    pub fn hidden(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Hidden,
            ..Self::gene(id)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedEdge {
    pub a: String,
    pub b: String,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: String,
    pub to: String,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undirected_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<usize>,
}

impl DirectedEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, probability: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            probability,
            lag_score: None,
            undirected_probability: None,
            direction_precision: None,
            weight: None,
            witnesses: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<GraphNode>,
    pub undirected_edges: Vec<UndirectedEdge>,
    pub directed_edges: Vec<DirectedEdge>,
}

impl CausalGraph {
    /// Sorts nodes and edges lexicographically and orders undirected endpoints.
    pub fn canonicalize(&mut self) {
        for e in &mut self.undirected_edges {
            if e.b < e.a {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        self.nodes.sort_by(|x, y| x.compound_id.cmp(&y.compound_id));
        self.undirected_edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        self.directed_edges.sort_by(|x, y| (&x.from, &x.to).cmp(&(&y.from, &y.to)));
    }

    pub fn edge_count(&self) -> usize {
        self.undirected_edges.len() + self.directed_edges.len()
    }

    /// Every edge as an unordered pair.
    pub fn unordered_pairs(&self) -> BTreeSet<(String, String)> {
        let u = self.undirected_edges.iter().map(|e| canonical_pair(&e.a, &e.b));
        let d = self.directed_edges.iter().map(|e| canonical_pair(&e.from, &e.to));
        u.chain(d).collect()
    }

    /// Checks the structural invariants of a graph.
    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.compound_id.as_str()).collect();
        if ids.len() != self.nodes.len() {
            return Err(Error::Format("duplicate node ids".into()));
        }
        let mut seen = BTreeSet::new();
        let check = |a: &str, b: &str, p: f64| -> Result<()> {
            if a == b {
                return Err(Error::Format(format!("self-edge on {a}")));
            }
            if !ids.contains(a) || !ids.contains(b) {
                return Err(Error::Format(format!("edge {a}-{b} references a missing node")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Format(format!("edge {a}-{b} has probability {p}")));
            }
            Ok(())
        };
        for e in &self.undirected_edges {
            if e.a >= e.b {
                return Err(Error::Format(format!("undirected edge {}-{} not canonical", e.a, e.b)));
            }
            check(&e.a, &e.b, e.probability)?;
            if !seen.insert((e.a.clone(), e.b.clone())) {
                return Err(Error::Format(format!("duplicate edge {}-{}", e.a, e.b)));
            }
        }
        // Opposite directed edges may coexist; an undirected edge may not
        // share its pair with a directed one.
        let mut ordered = BTreeSet::new();
        for e in &self.directed_edges {
            check(&e.from, &e.to, e.probability)?;
            if seen.contains(&canonical_pair(&e.from, &e.to)) || !ordered.insert((e.from.clone(), e.to.clone())) {
                return Err(Error::Format(format!("pair {}-{} carries more than one edge", e.from, e.to)));
            }
        }
        Ok(())
    }
}

pub fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    Leading,
    Trailing,
    #[default]
    Centered,
}

impl WindowPolicy {
    pub fn start(self, len: usize, window: usize) -> usize {
        match self {
            WindowPolicy::Leading => 0,
            WindowPolicy::Trailing => len - window,
            WindowPolicy::Centered => (len - window) / 2,
        }
    }
}

impl std::str::FromStr for WindowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leading" => Ok(Self::Leading),
            "trailing" => Ok(Self::Trailing),
            "centered" => Ok(Self::Centered),
            other => Err(Error::Config(format!("unknown window policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub gene_subset: Vec<String>,
    pub probability_cutoff: f64,
    pub lag_threshold: f64,
    pub window_policy: WindowPolicy,
    pub window: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            gene_subset: Vec::new(),
            probability_cutoff: DEFAULT_CUTOFF,
            lag_threshold: crate::detectors::DEFAULT_LAG_THRESHOLD,
            window_policy: WindowPolicy::Centered,
            window: 80,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.probability_cutoff > 0.5 && self.probability_cutoff < 1.0) {
            return Err(Error::Config(format!(
                "probability cutoff {} outside (0.5, 1)",
                self.probability_cutoff
            )));
        }
        if !(self.lag_threshold > 0.0 && self.lag_threshold <= 1.0) {
            return Err(Error::Config(format!("lag threshold {} outside (0, 1]", self.lag_threshold)));
        }
        Ok(())
    }
}

/// Normalizes the full series, then cuts the scoring window. `None` for a
/// constant series.
pub fn prepare_input(ratio: &RatioSeries, policy: WindowPolicy, window: usize) -> Result<Option<Vec<f64>>> {
    let len = ratio.values.len();
    if window > len {
        return Err(Error::Range(format!("window {window} exceeds series length {len}")));
    }
    let Some(v) = normalized(&ratio.values) else {
        log::warn!("{}: constant log-ratio, excluded", ratio.compound_id);
        return Ok(None);
    };
    let start = policy.start(len, window);
    Ok(Some(v[start..start + window].to_vec()))
}

/// Scores index pairs over a list of prepared inputs.
pub trait PairScorer {
    fn score_pairs(&self, inputs: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>>;
}

const SCORE_CHUNK: usize = 4096;

fn score_with_features(
    features: impl Fn(&[&[f64]]) -> Result<Vec<Vec<f64>>>,
    head: impl Fn(&[&[f64]], &[&[f64]]) -> Result<Vec<f64>> + Sync,
    inputs: &[Vec<f64>],
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let mut feats = Vec::with_capacity(inputs.len());
    for chunk in refs.chunks(512) {
        feats.extend(features(chunk)?);
    }
    let chunks: Vec<Result<Vec<f64>>> = pairs
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let a: Vec<&[f64]> = chunk.iter().map(|&(i, _)| feats[i].as_slice()).collect();
            let b: Vec<&[f64]> = chunk.iter().map(|&(_, j)| feats[j].as_slice()).collect();
            head(&a, &b)
        })
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

impl PairScorer for CausalityDetector {
    fn score_pairs(&self, inputs: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        score_with_features(|s| self.features(s), |a, b| self.score_features(a, b), inputs, pairs)
    }
}

impl PairScorer for LagDetector {
    fn score_pairs(&self, inputs: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        score_with_features(|s| self.features(s), |a, b| self.score_features(a, b), inputs, pairs)
    }
}

/// Prepared inputs for the requested genes, sorted and deduplicated.
pub struct PreparedInputs {
    pub genes: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub mean_ratio: Vec<f64>,
}

impl PreparedInputs {
    pub fn new(ratios: &BTreeMap<String, RatioSeries>, subset: &[String], policy: WindowPolicy, window: usize) -> Result<Self> {
        let wanted: BTreeSet<&String> = subset.iter().collect();
        let mut out = Self {
            genes: Vec::new(),
            inputs: Vec::new(),
            mean_ratio: Vec::new(),
        };
        for g in wanted {
            let Some(r) = ratios.get(g) else {
                log::warn!("{g}: no log-ratio series, excluded");
                continue;
            };
            if let Some(x) = prepare_input(r, policy, window)? {
                out.genes.push(g.clone());
                out.inputs.push(x);
                out.mean_ratio.push(r.mean());
            }
        }
        Ok(out)
    }

    fn index(&self, gene: &str) -> Option<usize> {
        self.genes.binary_search_by(|g| g.as_str().cmp(gene)).ok()
    }
}

fn regulation(mean: f64) -> Regulation {
    if mean < 0.0 {
        Regulation::Down
    } else {
        Regulation::Up
    }
}

/// Keeps every unordered pair scoring at least the cutoff; isolated genes are dropped.
pub fn synth_undirected(
    scorer: &dyn PairScorer,
    prepared: &PreparedInputs,
    sd_scores: &BTreeMap<String, f64>,
    cutoff: f64,
) -> Result<CausalGraph> {
    let n = prepared.genes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores = if pairs.is_empty() {
        Vec::new()
    } else {
        scorer.score_pairs(&prepared.inputs, &pairs)?
    };
    let mut graph = CausalGraph::default();
    let mut used = BTreeSet::new();
    for (&(i, j), &p) in pairs.iter().zip(&scores) {
        if p >= cutoff {
            used.insert(i);
            used.insert(j);
            graph.undirected_edges.push(UndirectedEdge {
                a: prepared.genes[i].clone(),
                b: prepared.genes[j].clone(),
                probability: p,
                witnesses: None,
            });
        }
    }
    graph.nodes = used
        .into_iter()
        .map(|i| GraphNode {
            regulation: Some(regulation(prepared.mean_ratio[i])),
            sd_score: sd_scores.get(&prepared.genes[i]).copied(),
            ..GraphNode::gene(prepared.genes[i].clone())
        })
        .collect();
    graph.canonicalize();
    Ok(graph)
}

/// Orients undirected edges whose lag score reaches `±tau`. Directed edges
/// carry the undirected probability times the calibrated direction precision.
pub fn refine_directed(
    graph: &CausalGraph,
    lag: &dyn PairScorer,
    prepared: &PreparedInputs,
    tau: f64,
    calibration: &[LagCalibration],
) -> Result<CausalGraph> {
    let mut pairs = Vec::with_capacity(graph.undirected_edges.len());
    for e in &graph.undirected_edges {
        let (Some(i), Some(j)) = (prepared.index(&e.a), prepared.index(&e.b)) else {
            return Err(Error::Usage(format!("edge {}-{} has no prepared input", e.a, e.b)));
        };
        pairs.push((i, j));
    }
    let scores = if pairs.is_empty() {
        Vec::new()
    } else {
        lag.score_pairs(&prepared.inputs, &pairs)?
    };
    let precision = precision_at(calibration, tau);
    if precision.is_none() && !calibration.is_empty() {
        log::warn!("no calibrated direction precision near threshold {tau}");
    }
    let mut out = CausalGraph {
        nodes: graph.nodes.clone(),
        undirected_edges: Vec::new(),
        directed_edges: graph.directed_edges.clone(),
    };
    for (e, &s) in graph.undirected_edges.iter().zip(&scores) {
        let oriented = if s >= tau {
            Some((&e.a, &e.b))
        } else if s <= -tau {
            Some((&e.b, &e.a))
        } else {
            None
        };
        match oriented {
            Some((from, to)) => out.directed_edges.push(DirectedEdge {
                lag_score: Some(s.abs()),
                undirected_probability: Some(e.probability),
                direction_precision: precision,
                ..DirectedEdge::new(from.clone(), to.clone(), e.probability * precision.unwrap_or(1.0))
            }),
            None => out.undirected_edges.push(e.clone()),
        }
    }
    out.canonicalize();
    Ok(out)
}

/// Gray level for an edge of probability `p`: light at 0.7, black at 1.0.
pub fn edge_color(p: f64) -> String {
    const LIGHTEST: f64 = 208.0;
    let f = ((p - DEFAULT_CUTOFF) / (1.0 - DEFAULT_CUTOFF)).clamp(0.0, 1.0);
    let level = (LIGHTEST * (1.0 - f)).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn dot_string(graph: &CausalGraph) -> String {
    let mut g = graph.clone();
    g.canonicalize();
    let mut out = String::from("digraph causal {\n  node [style=filled, fontname=\"Helvetica\"];\n");
    for n in &g.nodes {
        let attrs = match (n.kind, n.regulation) {
            (NodeKind::Hidden, _) => "shape=point, fillcolor=\"gray\"".to_string(),
            (_, Some(Regulation::Up)) => "fillcolor=\"green\"".to_string(),
            (_, Some(Regulation::Down)) => "fillcolor=\"red\"".to_string(),
            (_, None) => "fillcolor=\"white\"".to_string(),
        };
        out.push_str(&format!("  {} [{attrs}];\n", quote(&n.compound_id)));
    }
    for e in &g.undirected_edges {
        out.push_str(&format!(
            "  {} -> {} [dir=none, color=\"{}\"];\n",
            quote(&e.a),
            quote(&e.b),
            edge_color(e.probability)
        ));
    }
    for e in &g.directed_edges {
        out.push_str(&format!(
            "  {} -> {} [color=\"{}\"];\n",
            quote(&e.from),
            quote(&e.to),
            edge_color(e.probability)
        ));
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(graph: &CausalGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dot_string(graph)).map_err(|e| Error::io(path, e))
}

pub fn export_json(graph: &CausalGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut g = graph.clone();
    g.canonicalize();
    crate::persist::save_json(path, &g)
}

pub fn import_json(path: impl AsRef<Path>) -> Result<CausalGraph> {
    let g: CausalGraph = crate::persist::load_json(path)?;
    g.validate()?;
    Ok(g)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGraph {
    pub universe: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    pub provenance: String,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Edge `(a, b)` iff the Pearson correlation of their profiles is at least `threshold`.
pub fn build_correlation_reference(profiles: &[(String, Vec<f64>)], threshold: f64) -> Result<ReferenceGraph> {
    let cols = profiles.first().map_or(0, |p| p.1.len());
    if cols < 3 {
        return Err(Error::Domain(format!("reference profiles need at least 3 columns, got {cols}")));
    }
    let mut rows: Vec<(&String, &Vec<f64>)> = Vec::new();
    for (id, row) in profiles {
        if row.len() != cols {
            return Err(Error::Schema(format!("{id}: {} columns, expected {cols}", row.len())));
        }
        let first = row[0];
        if row.iter().all(|&v| v == first) {
            log::warn!("{id}: constant profile, excluded from the reference");
            continue;
        }
        rows.push((id, row));
    }
    let mut g = ReferenceGraph {
        universe: rows.iter().map(|(id, _)| (*id).clone()).collect(),
        edges: BTreeSet::new(),
        provenance: format!("pearson correlation >= {threshold} over {cols} profile columns"),
    };
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if rows[i].0 == rows[j].0 {
                continue;
            }
            if pearson(rows[i].1, rows[j].1).is_some_and(|r| r >= threshold) {
                g.edges.insert(canonical_pair(rows[i].0, rows[j].0));
            }
        }
    }
    Ok(g)
}

/// Reads a profile matrix: first column compound id, the rest numeric.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("not a number: {v:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push((id, values));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub restricted_edges: usize,
    pub overlap: usize,
    pub accuracy: Option<f64>,
}

pub fn compare_to_reference(graph: &CausalGraph, reference: &ReferenceGraph) -> ReferenceComparison {
    let restricted: Vec<(String, String)> = graph
        .unordered_pairs()
        .into_iter()
        .filter(|(a, b)| reference.universe.contains(a) && reference.universe.contains(b))
        .collect();
    let overlap = restricted.iter().filter(|p| reference.edges.contains(*p)).count();
    ReferenceComparison {
        restricted_edges: restricted.len(),
        overlap,
        accuracy: (!restricted.is_empty()).then(|| overlap as f64 / restricted.len() as f64),
    }
}
