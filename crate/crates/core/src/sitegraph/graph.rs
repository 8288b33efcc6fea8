use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::canon::Canonicalizer;
use super::url::Url;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::util::rng_for;

pub const GRAPH_VERSION: u32 = 1;

/// Directed graph of page labels. Labels are kept sorted so that indices are
/// stable across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteGraph {
    labels: Vec<Label>,
    index: BTreeMap<Label, usize>,
    edges: BTreeSet<(usize, usize)>,
    out: Vec<Vec<usize>>,
    home: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    version: u32,
    labels: Vec<Label>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    home: Option<usize>,
}

impl SiteGraph {
    /// Builds a graph whose label set is `labels` plus every edge endpoint.
    pub fn new(
        labels: impl IntoIterator<Item = Label>,
        edges: impl IntoIterator<Item = (Label, Label)>,
        home: Option<Label>,
    ) -> Self {
        let edges: Vec<(Label, Label)> = edges.into_iter().collect();
        let mut set: BTreeSet<Label> = labels.into_iter().collect();
        for (a, b) in &edges {
            set.insert(a.clone());
            set.insert(b.clone());
        }
        if let Some(h) = &home {
            set.insert(h.clone());
        }
        let labels: Vec<Label> = set.into_iter().collect();
        let index: BTreeMap<Label, usize> = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        let edges: BTreeSet<(usize, usize)> = edges.iter().map(|(a, b)| (index[a], index[b])).collect();
        let home = home.map(|h| index[&h]);
        Self::from_parts(labels, index, edges, home)
    }

    fn from_parts(
        labels: Vec<Label>,
        index: BTreeMap<Label, usize>,
        edges: BTreeSet<(usize, usize)>,
        home: Option<usize>,
    ) -> Self {
        let mut out = vec![Vec::new(); labels.len()];
        for &(a, b) in &edges {
            out[a].push(b);
        }
        SiteGraph {
            labels,
            index,
            edges,
            out,
            home,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.labels[i]
    }

    pub fn index_of(&self, l: &Label) -> Option<usize> {
        self.index.get(l).copied()
    }

    pub fn contains(&self, l: &Label) -> bool {
        self.index.contains_key(l)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Label, &Label)> + '_ {
        self.edges.iter().map(|&(a, b)| (&self.labels[a], &self.labels[b]))
    }

    pub fn has_edge(&self, a: &Label, b: &Label) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.edges.contains(&(i, j)),
            _ => false,
        }
    }

    /// Sorted out-neighbors of state `i`, without injected self-loops.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn home(&self) -> Option<&Label> {
        self.home.map(|h| &self.labels[h])
    }

    pub fn home_index(&self) -> Option<usize> {
        self.home
    }

    /// Copy of the graph where every label without out-edges links to itself.
    pub fn with_sink_loops(&self) -> SiteGraph {
        let mut edges = self.edges.clone();
        for (i, o) in self.out.iter().enumerate() {
            if o.is_empty() {
                edges.insert((i, i));
            }
        }
        Self::from_parts(self.labels.clone(), self.index.clone(), edges, self.home)
    }

    /// Moving from `a` to `b` is allowed by an edge or by the sink self-loop rule.
    pub fn allows_step(&self, a: &Label, b: &Label) -> bool {
        if self.has_edge(a, b) {
            return true;
        }
        a == b && self.index_of(a).is_some_and(|i| self.out[i].is_empty())
    }

    pub fn to_json(&self) -> String {
        let rec = GraphRecord {
            version: GRAPH_VERSION,
            labels: self.labels.clone(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            home: self.home,
        };
        serde_json::to_string(&rec).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<SiteGraph> {
        let rec: GraphRecord = serde_json::from_str(text).map_err(|e| Error::format("site graph", 0, e))?;
        if rec.version != GRAPH_VERSION {
            return Err(Error::Version {
                what: "site graph",
                found: rec.version.to_string(),
                expected: GRAPH_VERSION,
            });
        }
        let n = rec.labels.len();
        let mut sorted = rec.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != rec.labels {
            return Err(Error::format("site graph", 0, "labels must be sorted and unique"));
        }
        if rec.edges.iter().flatten().chain(rec.home.iter()).any(|&i| i >= n) {
            return Err(Error::format("site graph", 0, "label index out of range"));
        }
        let index = rec.labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        let edges = rec.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(Self::from_parts(rec.labels, index, edges, rec.home))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SiteGraph> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Maps every crawled link through `c`. The homepage is the label of the
/// first edge's source.
pub fn build_preliminary_graph(crawl_edges: &[(Url, Url)], c: &Canonicalizer) -> SiteGraph {
    let edges: Vec<(Label, Label)> = crawl_edges
        .iter()
        .map(|(u, v)| (c.canonicalize(u), c.canonicalize(v)))
        .collect();
    let home = edges.first().map(|(a, _)| a.clone());
    SiteGraph::new(std::iter::empty(), edges, home)
}

/// Grows a label subset outward from the homepage, one random frontier
/// label at a time, and keeps the edges induced on it.
pub fn select_subset(g: &SiteGraph, n: usize, seed: u64) -> Result<SiteGraph> {
    let home = g
        .home_index()
        .ok_or_else(|| Error::InvalidInput("graph has no homepage".into()))?;
    if n == 0 {
        return Err(Error::InvalidInput("subset size must be positive".into()));
    }
    let mut rng = rng_for(seed, "select_subset");
    let mut chosen = BTreeSet::from([home]);
    let mut frontier: BTreeSet<usize> = g.out_neighbors(home).iter().copied().filter(|&j| j != home).collect();
    while chosen.len() < n {
        if frontier.is_empty() {
            return Err(Error::Unreachable {
                requested: n,
                reachable: chosen.len(),
            });
        }
        let k = rng.random_range(0..frontier.len());
        let pick = *frontier.iter().nth(k).expect("index in range");
        frontier.remove(&pick);
        chosen.insert(pick);
        frontier.extend(g.out_neighbors(pick).iter().filter(|j| !chosen.contains(j)));
    }
    let labels = chosen.iter().map(|&i| g.label(i).clone());
    let edges = g
        .edge_indices()
        .filter(|(a, b)| chosen.contains(a) && chosen.contains(b))
        .map(|(a, b)| (g.label(a).clone(), g.label(b).clone()));
    Ok(SiteGraph::new(labels, edges.collect::<Vec<_>>(), Some(g.label(home).clone())))
}
