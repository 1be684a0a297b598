//! Weighted graphs, nested truncations, and graph pairs.
//!
//! A weighted graph is a triple `(X, b, mu)`: an integer-labelled vertex set
//! `X`, a symmetric edge weight `b >= 0` vanishing on the diagonal, and a
//! positive vertex measure `mu`. Every graph here is a finite truncation of
//! a nested family; vertices are stored in exhaustion order, so the vertex
//! list of level `k` is a prefix of the vertex list of level `k + 1`.
//! Truncation is Dirichlet-style: edges leaving the retained vertex set are
//! dropped, weights between retained vertices are unmodified.
//!
//! A [`GraphPair`] compares two graphs on the same vertex set. The density
//! convention is `mu2(x) = rho(x) * mu1(x)`, i.e. `rho` carries the first
//! measure to the second one; the edge density is `rho_tilde(x, y) =
//! b1(x, y) / b2(x, y)` where `b2` is nonzero and `1` elsewhere.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the stored-row-sum consistency check.
const ROW_SUM_RTOL: f64 = 1e-14;

/// A finite truncation of a weighted graph.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    labels: Vec<i64>,
    index: HashMap<i64, usize>,
    mu: Vec<f64>,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
    row_weight_sums: Vec<f64>,
    exhaustion_level: u32,
}

impl WeightedGraph {
    /// Builds a graph from one entry per unordered edge; both directions are
    /// stored. Zero-weight entries are skipped, duplicates and self-loops are
    /// rejected.
    pub fn from_undirected_edges(
        labels: Vec<i64>,
        mu: Vec<f64>,
        edges: &[(i64, i64, f64)],
        exhaustion_level: u32,
    ) -> Result<Self> {
        let mut directed = Vec::with_capacity(edges.len() * 2);
        let mut seen = HashSet::new();
        for &(x, y, w) in edges {
            if x == y {
                return Err(Error::InvalidEdgeList(format!("self-loop at label {x}")));
            }
            if w < 0.0 {
                return Err(Error::InvalidEdgeList(format!(
                    "negative weight {w} on edge ({x}, {y})"
                )));
            }
            if !seen.insert((x.min(y), x.max(y))) {
                return Err(Error::InvalidEdgeList(format!("duplicate edge ({x}, {y})")));
            }
            if w == 0.0 {
                continue;
            }
            directed.push((x, y, w));
            directed.push((y, x, w));
        }
        for (&l, &m) in labels.iter().zip(mu.iter()) {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::NonpositiveMeasure { label: l, value: m });
            }
        }
        Self::from_directed_entries(labels, mu, &directed, exhaustion_level)
    }

    /// Builds a graph from raw directed entries without symmetrizing or
    /// checking values. This is the entry point that can produce graphs
    /// violating the symmetry, diagonal, or measure invariants;
    /// [`WeightedGraph::validate`] reports those.
    pub fn from_directed_entries(
        labels: Vec<i64>,
        mu: Vec<f64>,
        entries: &[(i64, i64, f64)],
        exhaustion_level: u32,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidEdgeList("graph has no vertices".into()));
        }
        if mu.len() != labels.len() {
            return Err(Error::InvalidEdgeList(format!(
                "{} labels but {} measure entries",
                labels.len(),
                mu.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if index.insert(l, i).is_some() {
                return Err(Error::InvalidEdgeList(format!("duplicate label {l}")));
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); labels.len()];
        for &(x, y, w) in entries {
            let ix = *index
                .get(&x)
                .ok_or_else(|| Error::InvalidEdgeList(format!("unknown label {x}")))?;
            let iy = *index
                .get(&y)
                .ok_or_else(|| Error::InvalidEdgeList(format!("unknown label {y}")))?;
            rows[ix].push((iy, w));
        }
        let mut row_offsets = Vec::with_capacity(labels.len() + 1);
        let mut col_indices = Vec::new();
        let mut weights = Vec::new();
        let mut row_weight_sums = Vec::with_capacity(labels.len());
        row_offsets.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut sum = 0.0;
            for &(j, w) in row.iter() {
                col_indices.push(j);
                weights.push(w);
                sum += w;
            }
            row_weight_sums.push(sum);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            labels,
            index,
            mu,
            row_offsets,
            col_indices,
            weights,
            row_weight_sums,
            exhaustion_level,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn label_of(&self, x: usize) -> i64 {
        self.labels[x]
    }

    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.index.get(&label).copied()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_of(&self, x: usize) -> f64 {
        self.mu[x]
    }

    pub fn exhaustion_level(&self) -> u32 {
        self.exhaustion_level
    }

    /// Stored row sum `sum_y b(x, y)`.
    pub fn weighted_degree(&self, x: usize) -> f64 {
        self.row_weight_sums[x]
    }

    /// Neighbors of `x` as `(vertex index, b(x, y))`, sorted by index.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[x];
        let hi = self.row_offsets[x + 1];
        self.col_indices[lo..hi]
            .iter()
            .zip(self.weights[lo..hi].iter())
            .map(|(&j, &w)| (j, w))
    }

    /// Edge weight `b(x, y)` as stored in row `x` (0 if absent).
    pub fn weight_between(&self, x: usize, y: usize) -> f64 {
        let lo = self.row_offsets[x];
        let hi = self.row_offsets[x + 1];
        match self.col_indices[lo..hi].binary_search(&y) {
            Ok(pos) => self.weights[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// All stored directed entries `(x, y, b(x, y))`.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.vertex_count()).flat_map(move |x| self.neighbors(x).map(move |(y, w)| (x, y, w)))
    }

    /// Each edge once, with `x < y`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.directed_edges().filter(|&(x, y, _)| x < y)
    }

    pub fn edge_count(&self) -> usize {
        self.undirected_edges().count()
    }

    /// Checks every stored-data invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (i, (&l, &m)) in self.labels.iter().zip(self.mu.iter()).enumerate() {
            let _ = i;
            if !(m > 0.0) || !m.is_finite() {
                violations.push(Violation::NonpositiveMeasure { x: l, value: m });
            }
        }
        for (x, y, w) in self.directed_edges() {
            if x == y {
                violations.push(Violation::DiagonalWeight {
                    x: self.labels[x],
                    value: w,
                });
                continue;
            }
            if w < 0.0 {
                violations.push(Violation::NegativeWeight {
                    x: self.labels[x],
                    y: self.labels[y],
                    value: w,
                });
            }
            let back = self.weight_between(y, x);
            // Exact equality as stored; report each unordered pair once.
            if back != w && (x < y || back == 0.0) {
                violations.push(Violation::AsymmetricWeight {
                    x: self.labels[x],
                    y: self.labels[y],
                    forward: w,
                    backward: back,
                });
            }
        }
        for x in 0..self.vertex_count() {
            let recomputed: f64 = self.neighbors(x).map(|(_, w)| w).sum();
            let stored = self.row_weight_sums[x];
            let scale = stored.abs().max(recomputed.abs()).max(1.0);
            if (stored - recomputed).abs() > ROW_SUM_RTOL * scale {
                violations.push(Violation::RowSumMismatch {
                    x: self.labels[x],
                    stored,
                    recomputed,
                });
            }
        }
        ValidationReport { violations }
    }

    /// Validates and converts a clean graph into an error otherwise.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_clean() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(report))
        }
    }
}

/// One violated invariant with the offending vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    AsymmetricWeight { x: i64, y: i64, forward: f64, backward: f64 },
    DiagonalWeight { x: i64, value: f64 },
    NonpositiveMeasure { x: i64, value: f64 },
    NegativeWeight { x: i64, y: i64, value: f64 },
    RowSumMismatch { x: i64, stored: f64, recomputed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AsymmetricWeight { x, y, forward, backward } => write!(
                f,
                "asymmetric weight at ({x}, {y}): b(x,y) = {forward}, b(y,x) = {backward}"
            ),
            Violation::DiagonalWeight { x, value } => {
                write!(f, "nonzero diagonal weight at {x}: {value}")
            }
            Violation::NonpositiveMeasure { x, value } => {
                write!(f, "nonpositive measure at {x}: {value}")
            }
            Violation::NegativeWeight { x, y, value } => {
                write!(f, "negative weight at ({x}, {y}): {value}")
            }
            Violation::RowSumMismatch { x, stored, recomputed } => write!(
                f,
                "row sum mismatch at {x}: stored {stored}, recomputed {recomputed}"
            ),
        }
    }
}

/// Outcome of [`WeightedGraph::validate`]; empty iff all invariants hold.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// A site-indexed weight function, used for both `mu(n)` and edge weights
/// `b(n, n+1)` (evaluated at the left endpoint `n`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteProfile {
    pub base: ProfileKind,
    /// Per-site replacements applied after `base`, as `(site, value)` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Constant { value: f64 },
    /// `1 + amplitude * 2^(-|n|)`.
    OnePlusGeometric { amplitude: f64 },
    /// `1 + 1 / (1 + |n|)`.
    OnePlusInverse,
    /// `offset + slope * n`.
    AffineIndex { offset: f64, slope: f64 },
}

impl SiteProfile {
    pub fn constant(value: f64) -> Self {
        Self {
            base: ProfileKind::Constant { value },
            overrides: Vec::new(),
        }
    }

    pub fn eval(&self, n: i64) -> f64 {
        for &(site, value) in &self.overrides {
            if site == n {
                return value;
            }
        }
        match self.base {
            ProfileKind::Constant { value } => value,
            ProfileKind::OnePlusGeometric { amplitude } => {
                1.0 + amplitude * (-(n.unsigned_abs() as f64)).exp2()
            }
            ProfileKind::OnePlusInverse => 1.0 + 1.0 / (1.0 + n.unsigned_abs() as f64),
            ProfileKind::AffineIndex { offset, slope } => offset + slope * n as f64,
        }
    }
}

/// Generator for a nested family of truncations.
///
/// `Line` covers `{-L, ..., L}` and `HalfLine` covers `{0, ..., L}` with
/// `L = base * 2^level`; `EdgeList` truncates a fixed vertex list by the
/// prefix sizes in `level_sizes` (one level with everything when absent).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamilySpec {
    Line {
        base_half_width: u32,
        b: SiteProfile,
        mu: SiteProfile,
    },
    HalfLine {
        base_length: u32,
        b: SiteProfile,
        mu: SiteProfile,
    },
    EdgeList {
        labels: Vec<i64>,
        mu: Vec<f64>,
        edges: Vec<(i64, i64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level_sizes: Option<Vec<usize>>,
    },
}

impl GraphFamilySpec {
    fn scaled(base: u32, level: u32) -> Result<i64> {
        let l = (base as u64) << level;
        if base == 0 || l > (1 << 31) {
            return Err(Error::InvalidLevel {
                level,
                reason: format!("truncation size {l} out of range"),
            });
        }
        Ok(l as i64)
    }

    /// Number of vertices in the level-`level` truncation.
    pub fn vertex_count_at(&self, level: u32) -> Result<usize> {
        match self {
            GraphFamilySpec::Line { base_half_width, .. } => {
                Ok(2 * Self::scaled(*base_half_width, level)? as usize + 1)
            }
            GraphFamilySpec::HalfLine { base_length, .. } => {
                Ok(Self::scaled(*base_length, level)? as usize + 1)
            }
            GraphFamilySpec::EdgeList { labels, level_sizes, .. } => match level_sizes {
                None if level == 0 => Ok(labels.len()),
                None => Err(Error::InvalidLevel {
                    level,
                    reason: "edge-list family has a single level".into(),
                }),
                Some(sizes) => sizes.get(level as usize).copied().ok_or(Error::InvalidLevel {
                    level,
                    reason: format!("only {} levels defined", sizes.len()),
                }),
            },
        }
    }

    /// Builds the level-`level` truncation. Vertices come out in exhaustion
    /// order: `0, -1, 1, -2, 2, ...` on the line, `0, 1, 2, ...` on the
    /// half-line, list order for edge lists.
    pub fn build_truncation(&self, level: u32) -> Result<WeightedGraph> {
        match self {
            GraphFamilySpec::Line { base_half_width, b, mu } => {
                let l = Self::scaled(*base_half_width, level)?;
                let mut labels = Vec::with_capacity(2 * l as usize + 1);
                labels.push(0);
                for d in 1..=l {
                    labels.push(-d);
                    labels.push(d);
                }
                let mu_vals = eval_measure(mu, &labels)?;
                let mut edges = Vec::with_capacity(2 * l as usize);
                for n in -l..l {
                    edges.push((n, n + 1, eval_edge_weight(b, n)?));
                }
                WeightedGraph::from_undirected_edges(labels, mu_vals, &edges, level)
            }
            GraphFamilySpec::HalfLine { base_length, b, mu } => {
                let l = Self::scaled(*base_length, level)?;
                let labels: Vec<i64> = (0..=l).collect();
                let mu_vals = eval_measure(mu, &labels)?;
                let mut edges = Vec::with_capacity(l as usize);
                for n in 0..l {
                    edges.push((n, n + 1, eval_edge_weight(b, n)?));
                }
                WeightedGraph::from_undirected_edges(labels, mu_vals, &edges, level)
            }
            GraphFamilySpec::EdgeList { labels, mu, edges, .. } => {
                let keep = self.vertex_count_at(level)?;
                if keep == 0 {
                    return Err(Error::InvalidLevel {
                        level,
                        reason: "empty truncation".into(),
                    });
                }
                let kept_labels: Vec<i64> = labels[..keep.min(labels.len())].to_vec();
                if kept_labels.len() < keep {
                    return Err(Error::InvalidLevel {
                        level,
                        reason: format!("{} vertices requested, {} defined", keep, labels.len()),
                    });
                }
                let kept_set: HashSet<i64> = kept_labels.iter().copied().collect();
                let kept_mu: Vec<f64> = mu[..keep].to_vec();
                // Dirichlet restriction: drop edges leaving the box.
                let kept_edges: Vec<(i64, i64, f64)> = edges
                    .iter()
                    .filter(|(x, y, _)| kept_set.contains(x) && kept_set.contains(y))
                    .copied()
                    .collect();
                WeightedGraph::from_undirected_edges(kept_labels, kept_mu, &kept_edges, level)
            }
        }
    }
}

fn eval_measure(profile: &SiteProfile, labels: &[i64]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&n| {
            let m = profile.eval(n);
            if m > 0.0 && m.is_finite() {
                Ok(m)
            } else {
                Err(Error::NonpositiveMeasure { label: n, value: m })
            }
        })
        .collect()
}

fn eval_edge_weight(profile: &SiteProfile, n: i64) -> Result<f64> {
    let w = profile.eval(n);
    if w >= 0.0 && w.is_finite() {
        Ok(w)
    } else {
        Err(Error::InvalidEdgeList(format!(
            "edge profile gave invalid weight {w} at site {n}"
        )))
    }
}

/// One unordered union-support edge of a pair, with both weights and
/// `rho_tilde = b1/b2` (or 1 where `b2` vanishes).
#[derive(Debug, Clone, Copy)]
pub struct EdgeDensity {
    pub x: usize,
    pub y: usize,
    pub b1: f64,
    pub b2: f64,
    pub rho_tilde: f64,
}

/// Two graphs on the same labelled vertex set, with the vertex density
/// `rho = mu2 / mu1`, the edge density `rho_tilde`, and the tight
/// quasi-equivalence constants on this truncation.
///
/// The constants are computed on the truncation only and are lower bounds
/// for the corresponding constants of any larger (or infinite) graph.
#[derive(Debug, Clone)]
pub struct GraphPair {
    g1: Arc<WeightedGraph>,
    g2: Arc<WeightedGraph>,
    rho: Vec<f64>,
    edges: Vec<EdgeDensity>,
    a_mu: f64,
    a_b: Option<f64>,
}

/// Pairs two graphs with identical label sequences.
pub fn pair_graphs(g1: Arc<WeightedGraph>, g2: Arc<WeightedGraph>) -> Result<GraphPair> {
    if g1.labels() != g2.labels() {
        let detail = if g1.vertex_count() != g2.vertex_count() {
            format!("{} vs {} vertices", g1.vertex_count(), g2.vertex_count())
        } else {
            let pos = g1
                .labels()
                .iter()
                .zip(g2.labels())
                .position(|(a, b)| a != b)
                .unwrap();
            format!(
                "labels diverge at position {pos}: {} vs {}",
                g1.labels()[pos],
                g2.labels()[pos]
            )
        };
        return Err(Error::VertexSetMismatch(detail));
    }
    let n = g1.vertex_count();
    let rho: Vec<f64> = (0..n).map(|x| g2.mu_of(x) / g1.mu_of(x)).collect();
    let mut a_mu = 1.0_f64;
    for &r in &rho {
        a_mu = a_mu.max(r).max(1.0 / r);
    }
    let mut edges = Vec::new();
    let mut a_b = Some(1.0_f64);
    for x in 0..n {
        // Merge the two sorted neighbor rows, keeping each pair once.
        let mut it1 = g1.neighbors(x).peekable();
        let mut it2 = g2.neighbors(x).peekable();
        loop {
            let (y, b1, b2) = match (it1.peek().copied(), it2.peek().copied()) {
                (Some((y1, w1)), Some((y2, w2))) => {
                    if y1 == y2 {
                        it1.next();
                        it2.next();
                        (y1, w1, w2)
                    } else if y1 < y2 {
                        it1.next();
                        (y1, w1, 0.0)
                    } else {
                        it2.next();
                        (y2, 0.0, w2)
                    }
                }
                (Some((y1, w1)), None) => {
                    it1.next();
                    (y1, w1, 0.0)
                }
                (None, Some((y2, w2))) => {
                    it2.next();
                    (y2, 0.0, w2)
                }
                (None, None) => break,
            };
            if x >= y {
                continue;
            }
            let rho_tilde = if b2 != 0.0 { b1 / b2 } else { 1.0 };
            edges.push(EdgeDensity { x, y, b1, b2, rho_tilde });
            a_b = match a_b {
                None => None,
                Some(a) => {
                    if b1 > 0.0 && b2 > 0.0 {
                        Some(a.max(b1 / b2).max(b2 / b1))
                    } else {
                        // Supports differ: the quasi-equivalence constant is infinite.
                        None
                    }
                }
            };
        }
    }
    Ok(GraphPair { g1, g2, rho, edges, a_mu, a_b })
}

impl GraphPair {
    pub fn g1(&self) -> &Arc<WeightedGraph> {
        &self.g1
    }

    pub fn g2(&self) -> &Arc<WeightedGraph> {
        &self.g2
    }

    pub fn vertex_count(&self) -> usize {
        self.rho.len()
    }

    /// Vertex density, `mu2 = rho * mu1`.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_at(&self, x: usize) -> f64 {
        self.rho[x]
    }

    /// Union-support edges with both weights and `rho_tilde`, each once.
    pub fn edge_densities(&self) -> &[EdgeDensity] {
        &self.edges
    }

    /// Tight constant with `(1/a) mu1 <= mu2 <= a mu1` on the truncation.
    pub fn a_mu(&self) -> f64 {
        self.a_mu
    }

    /// Tight constant for `b1 ~ b2`; `None` signals an infinite constant
    /// (the edge supports differ).
    pub fn a_b(&self) -> Option<f64> {
        self.a_b
    }
}

/// On-disk graph format: `{labels, mu, edges: [[x, y, b]]}` with each edge
/// stored once per unordered pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub labels: Vec<i64>,
    pub mu: Vec<f64>,
    pub edges: Vec<(i64, i64, f64)>,
}

impl GraphFile {
    pub fn from_graph(g: &WeightedGraph) -> Self {
        Self {
            labels: g.labels().to_vec(),
            mu: g.mu().to_vec(),
            edges: g
                .undirected_edges()
                .map(|(x, y, w)| (g.label_of(x), g.label_of(y), w))
                .collect(),
        }
    }

    /// Symmetrizes and validates.
    pub fn into_graph(self, exhaustion_level: u32) -> Result<WeightedGraph> {
        let g = WeightedGraph::from_undirected_edges(self.labels, self.mu, &self.edges, exhaustion_level)?;
        g.require_valid()?;
        Ok(g)
    }
}

pub fn read_graph_json(path: &Path) -> Result<WeightedGraph> {
    let bytes = std::fs::read(path)?;
    let file: GraphFile = serde_json::from_slice(&bytes)?;
    file.into_graph(0)
}

pub fn write_graph_json(path: &Path, g: &WeightedGraph) -> Result<()> {
    let file = GraphFile::from_graph(g);
    std::fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}
