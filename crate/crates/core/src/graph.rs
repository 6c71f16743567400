//! Fixed undirected communication graph between agents.
//!
//! Node ids are 1-based (`1..=n`). Edges are stored as ordered pairs
//! `(i, j)` with `i < j`, so the edge set is symmetric by construction.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of whole-graph resamples attempted before giving up on connectivity.
pub const ER_MAX_RETRIES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("node id {id} out of range 1..={n}")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("no connected Erdős-Rényi sample (n={n}, p={p}) after {retries} draws")]
    NotConnected { n: usize, p: f64, retries: usize },
    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 1-based unordered pairs. Rejects self-loops,
    /// duplicates (in either orientation) and out-of-range ids.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            for id in [a, b] {
                if id == 0 || id > n {
                    return Err(GraphError::NodeOutOfRange { id, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
        }
        Ok(Self::from_set(n, set))
    }

    fn from_set(n: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a - 1].push(b);
            adjacency[b - 1].push(a);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Graph { n, edges, adjacency }
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Self::path(n);
        }
        let mut edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        edges.push((1, n));
        Self::from_edges(n, &edges)
    }

    /// Connected G(n, p) sample by whole-graph rejection sampling.
    ///
    /// Candidate pairs are visited in lexicographic order `(1,2), (1,3), ...`
    /// and each is kept when a uniform draw from a ChaCha8 stream seeded with
    /// `seed` is below `p`. The same `(n, p, seed)` always yields the same graph.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::BadProbability(p));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ER_MAX_RETRIES {
            let mut edges = BTreeSet::new();
            for i in 1..=n {
                for j in i + 1..=n {
                    if rng.gen::<f64>() < p {
                        edges.insert((i, j));
                    }
                }
            }
            let g = Self::from_set(n, edges);
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::NotConnected {
            n,
            p,
            retries: ER_MAX_RETRIES,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Neighbors of node `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        if i == 0 || i > self.n {
            return Err(GraphError::NodeOutOfRange { id: i, n: self.n });
        }
        Ok(&self.adjacency[i - 1])
    }

    /// True iff every node is reachable from node 1.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![1usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u - 1] {
                if !seen[v - 1] {
                    seen[v - 1] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Edge-list text: `n m` on the first line, then one `i j` per edge.
    pub fn to_edge_list(&self) -> String {
        self.to_string()
    }

    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let (n, m) = parse_pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines {
            edges.push(parse_pair(line, l)?);
        }
        if edges.len() != m {
            return Err(GraphError::Parse {
                line: hline,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::from_edges(n, &edges)
    }
}

fn parse_pair(line: usize, s: &str) -> Result<(usize, usize), GraphError> {
    let err = |msg: String| GraphError::Parse { line, msg };
    let mut it = s.split_whitespace();
    let mut next = || -> Result<usize, GraphError> {
        let tok = it.next().ok_or_else(|| err("expected two integers".into()))?;
        tok.parse().map_err(|e| err(format!("{tok:?}: {e}")))
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(err("trailing tokens".into()));
    }
    Ok((a, b))
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.n, self.edges.len())?;
        for (i, j) in &self.edges {
            writeln!(f, "{i} {j}")?;
        }
        Ok(())
    }
}

impl FromStr for Graph {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_edge_list(s)
    }
}
