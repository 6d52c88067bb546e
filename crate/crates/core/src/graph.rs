//! Graph and membership representations, text formats, and block bookkeeping.
//!
//! Edge-list format: one `i j` pair of 0-based node ids per line, `#` comment
//! lines and blank lines ignored, and an optional first data line `n=<int>`
//! declaring the node count (needed when trailing nodes are isolated).
//!
//! Membership format: one community id per data line; the k-th data line holds
//! the label of node k.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Simple undirected graph without self-loops, stored as sorted neighbor lists
/// (CSR layout).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl AdjacencyMatrix {
    /// Builds a graph on `n` nodes. Pairs may repeat and come in either
    /// orientation; they are deduplicated.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut pairs = Vec::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::SelfLoop { line: 0, node: i });
            }
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            pairs.push(if i < j { (i, j) } else { (j, i) });
        }
        Ok(Self::from_upper_pairs(n, pairs))
    }

    /// `pairs` must satisfy `i < j < n`.
    pub(crate) fn from_upper_pairs(n: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut degree = vec![0usize; n];
        for &(i, j) in &pairs {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        // Pairs are sorted by (i, j): each row receives its lower neighbors
        // (as the `j` side) before its upper ones, so rows come out sorted.
        for &(i, j) in &pairs {
            neighbors[cursor[j]] = i;
            cursor[j] += 1;
        }
        for &(i, j) in &pairs {
            neighbors[cursor[i]] = j;
            cursor[i] += 1;
        }
        Self { n, offsets, neighbors }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbors of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    /// `y = A x`, rows accumulated in neighbor order.
    pub fn mul_vec<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.neighbors(i).iter().fold(T::zero(), |acc, &j| acc + x[j]);
        }
    }

    /// Reads the edge-list text format.
    pub fn load_edge_list<R: BufRead>(reader: R) -> Result<Self> {
        let mut declared_n = None;
        let mut pairs = Vec::new();
        let mut max_id = None::<usize>;
        let mut seen_data = false;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            if !seen_data {
                seen_data = true;
                if let Some(rest) = text.strip_prefix("n=") {
                    let n = rest.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: line_no,
                        msg: format!("bad node count header: {e}"),
                    })?;
                    declared_n = Some(n);
                    continue;
                }
            }
            let mut fields = text.split_whitespace();
            let mut next_id = |what: &str| -> Result<usize> {
                let tok = fields.next().ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("missing {what} node id"),
                })?;
                tok.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("`{tok}` is not a non-negative integer"),
                })
            };
            let i = next_id("first")?;
            let j = next_id("second")?;
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected exactly two node ids".into(),
                });
            }
            if i == j {
                return Err(Error::SelfLoop { line: line_no, node: i });
            }
            max_id = Some(max_id.map_or(i.max(j), |m| m.max(i).max(j)));
            pairs.push(if i < j { (i, j) } else { (j, i) });
        }
        let implied = max_id.map(|m| m + 1);
        let n = match (declared_n, implied) {
            (None, None) => return Err(Error::EmptyInput),
            (Some(d), Some(m)) if d < m => {
                return Err(Error::InvalidArgument(format!(
                    "header declares n={d} but node id {} appears",
                    m - 1
                )))
            }
            (Some(d), _) => d,
            (None, Some(m)) => m,
        };
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self::from_upper_pairs(n, pairs))
    }

    /// Writes the edge-list format with an `n=` header, one `i j` (i < j) per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n={}", self.n)?;
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    /// Fraction of the `n(n-1)/2` possible edges that are present.
    pub fn density<T: Scalar>(&self) -> Result<T> {
        density(self)
    }
}

/// `2|E| / (n(n-1))`.
pub fn density<T: Scalar>(a: &AdjacencyMatrix) -> Result<T> {
    if a.n() < 2 {
        return Err(Error::InvalidArgument("density needs n >= 2".into()));
    }
    let n = a.n();
    Ok(T::of_usize(2 * a.edge_count()) / (T::of_usize(n) * T::of_usize(n - 1)))
}

/// Per-community member lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockIndex {
    members: Vec<Vec<usize>>,
}

impl BlockIndex {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    /// Sorted node ids of community `u`.
    pub fn members(&self, u: usize) -> &[usize] {
        &self.members[u]
    }

    pub fn size(&self, u: usize) -> usize {
        self.members[u].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Groups node ids by label. Every label in `[0, k)` must occur.
pub fn block_index(labels: &[usize], k: usize) -> Result<BlockIndex> {
    let mut members = vec![Vec::new(); k];
    for (i, &u) in labels.iter().enumerate() {
        if u >= k {
            return Err(Error::InvalidArgument(format!(
                "node {i} has label {u} outside [0, {k})"
            )));
        }
        members[u].push(i);
    }
    if let Some(u) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCommunity(u));
    }
    Ok(BlockIndex { members })
}

/// Node-to-community map whose labels cover `[0, k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    index: BlockIndex,
}

impl Membership {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let index = block_index(&labels, k)?;
        Ok(Self { labels, index })
    }

    /// K is taken as one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(u, &s)| std::iter::repeat_n(u, s))
            .collect();
        Self::new(labels, sizes.len())
    }

    /// Renumbers communities in order of first appearance.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.k()];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&u| {
                if map[u] == usize::MAX {
                    map[u] = next;
                    next += 1;
                }
                map[u]
            })
            .collect();
        Self::new(labels, self.k()).expect("relabeling preserves surjectivity")
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.index.k()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn index(&self) -> &BlockIndex {
        &self.index
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.index.sizes()
    }

    pub fn check_len(&self, a: &AdjacencyMatrix) -> Result<()> {
        if self.n() != a.n() {
            return Err(Error::LengthMismatch { labels: self.n(), nodes: a.n() });
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut labels = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let u = text.parse::<usize>().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("`{text}` is not a community id"),
            })?;
            labels.push(u);
        }
        Self::from_labels(labels)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for u in &self.labels {
            writeln!(w, "{u}")?;
        }
        Ok(())
    }
}

/// Ordered-pair edge counts between communities.
///
/// `m(u, v)` counts ordered pairs `(i, j)`, `i != j`, with an edge and labels
/// `(u, v)`; `m(u, u)` is therefore twice the number of within-block edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCounts {
    k: usize,
    m: Vec<u64>,
    n_pairs: Vec<u64>,
}

impl BlockCounts {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self, u: usize, v: usize) -> u64 {
        self.m[u * self.k + v]
    }

    pub fn n_pairs(&self, u: usize, v: usize) -> u64 {
        self.n_pairs[u * self.k + v]
    }
}

pub fn block_counts(a: &AdjacencyMatrix, g: &Membership) -> Result<BlockCounts> {
    g.check_len(a)?;
    let k = g.k();
    let mut m = vec![0u64; k * k];
    for i in 0..a.n() {
        let u = g.label(i);
        for &j in a.neighbors(i) {
            m[u * k + g.label(j)] += 1;
        }
    }
    let sizes = g.sizes();
    let mut n_pairs = vec![0u64; k * k];
    for u in 0..k {
        for v in 0..k {
            let (su, sv) = (sizes[u] as u64, sizes[v] as u64);
            n_pairs[u * k + v] = if u == v { su * (su - 1) } else { su * sv };
        }
    }
    Ok(BlockCounts { k, m, n_pairs })
}
