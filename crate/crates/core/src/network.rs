//! Social networks, unit covariates and pairwise similarity weights.
//!
//! Networks are undirected simple graphs stored as sorted adjacency lists.
//! Node indices are 0-based everywhere, including the on-disk formats.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on `n` units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    neighbors: Vec<Vec<usize>>,
    edge_count: usize,
    max_degree: usize,
    min_degree: usize,
}

impl Network {
    /// Builds a network from an edge list. Duplicate and reversed pairs are
    /// merged; self-links and out-of-range indices are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut neighbors = vec![Vec::new(); n];
        for (line, (i, j)) in edges.into_iter().enumerate() {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { line: line + 1, index: idx, n });
                }
            }
            if i == j {
                return Err(Error::SelfLink { line: line + 1, node: i });
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self::from_neighbor_lists(neighbors))
    }

    fn from_neighbor_lists(mut neighbors: Vec<Vec<usize>>) -> Self {
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let degree_sum: usize = neighbors.iter().map(Vec::len).sum();
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let min_degree = neighbors.iter().map(Vec::len).min().unwrap_or(0);
        Network {
            neighbors,
            edge_count: degree_sum / 2,
            max_degree,
            min_degree,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_neighbor_lists(vec![Vec::new(); n])
    }

    pub fn complete(n: usize) -> Self {
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect();
        Self::from_neighbor_lists(neighbors)
    }

    /// Star with unit 0 at the centre.
    pub fn star(n: usize) -> Self {
        let edges = (1..n).map(|j| (0, j));
        Self::from_edges(n, edges).expect("star edges are valid")
    }

    /// Path 0 - 1 - ... - (n-1).
    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|j| (j - 1, j));
        Self::from_edges(n, edges).expect("path edges are valid")
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// N̄, the largest degree.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// The smallest degree.
    pub fn min_degree(&self) -> usize {
        self.min_degree
    }

    /// Edges as `(i, j)` pairs with `i < j`, in increasing order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        let mut g = vec![vec![0u8; n]; n];
        for (i, j) in self.edges() {
            g[i][j] = 1;
            g[j][i] = 1;
        }
        g
    }

    /// Returns the network with units relabelled so that old unit `i`
    /// becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        Self::from_edges(self.n(), self.edges().map(|(i, j)| (perm[i], perm[j])))
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::invalid("permutation length mismatch"));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// `(max degree, min degree)`.
pub fn degree_stats(net: &Network) -> (usize, usize) {
    (net.max_degree(), net.min_degree())
}

/// Number of edges a fixed-count Erdős–Rényi graph gets for `density`.
pub fn edge_count_for_density(n: usize, density: f64) -> usize {
    let pairs = n * n.saturating_sub(1) / 2;
    (density * pairs as f64).round() as usize
}

/// Uniform random simple graph with exactly `round(density * n(n-1)/2)`
/// edges (the G(n, M) model). Deterministic given `seed`.
///
/// A density small enough to round to zero edges yields the empty graph;
/// callers that care should check [`Network::edge_count`].
pub fn erdos_renyi(n: usize, density: f64, seed: u64) -> Result<Network> {
    if n < 2 {
        return Err(Error::invalid(format!("erdos_renyi needs n >= 2, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!("density must be in (0, 1], got {density}")));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let m = edge_count_for_density(n, density).min(pairs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, pairs.len(), m).into_vec();
    chosen.sort_unstable();
    Network::from_edges(n, chosen.into_iter().map(|k| pairs[k]))
}

/// Nonnegative N x K covariate matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * k);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "covariate row {r} has {} columns, expected {k}",
                    row.len()
                )));
            }
            for (c, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::NegativeCovariate { row: r, col: c, value });
                }
            }
            data.extend(row);
        }
        Ok(Covariates { n, k, data })
    }

    /// One scalar covariate per unit.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Zero-column covariates (no observed characteristics).
    pub fn none(n: usize) -> Self {
        Covariates { n, k: 0, data: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// `X_i' beta` for every unit.
    pub fn project(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut rows = vec![Vec::new(); self.n];
        for (i, &p) in perm.iter().enumerate() {
            rows[p] = self.row(i).to_vec();
        }
        let mut out = Self::new(rows)?;
        out.k = self.k;
        Ok(out)
    }
}

/// The pairwise weight m(X_i, X_j).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKernel {
    /// L1 distance between covariate rows.
    AbsDiff,
    /// 1 / (1 + L1 distance).
    InverseDistance,
    /// The same positive weight for every pair.
    Constant(f64),
}

impl SimilarityKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SimilarityKernel::Constant(c) if !(c > 0.0 && c.is_finite()) => Err(Error::invalid(
                format!("constant similarity must be positive and finite, got {c}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let l1 = || a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        match *self {
            SimilarityKernel::AbsDiff => l1(),
            SimilarityKernel::InverseDistance => 1.0 / (1.0 + l1()),
            SimilarityKernel::Constant(c) => c,
        }
    }
}

/// Dense symmetric similarity matrix with its off-diagonal range.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl SimilarityMatrix {
    /// Builds a matrix from explicit rows; must be square, symmetric,
    /// finite and nonnegative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("similarity matrix must be square"));
        }
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let m = rows[i][j];
                if !m.is_finite() || m < 0.0 || m != rows[j][i] {
                    return Err(Error::invalid(
                        "similarity matrix must be symmetric, finite and nonnegative",
                    ));
                }
                if i != j {
                    lower = lower.min(m);
                    upper = upper.max(m);
                }
            }
        }
        if n < 2 {
            lower = 0.0;
            upper = 0.0;
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(SimilarityMatrix { n, data, lower, upper })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest off-diagonal entry.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Largest off-diagonal entry.
    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// Evaluates `kernel` on every pair of covariate rows. The bounds cover
/// pairs `i != j` only; the diagonal is computed but never enters the model
/// since the network has no self-links.
pub fn similarity_matrix(x: &Covariates, kernel: SimilarityKernel) -> Result<SimilarityMatrix> {
    kernel.validate()?;
    let n = x.n();
    let mut data = vec![0.0; n * n];
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 0..n {
        data[i * n + i] = kernel.eval(x.row(i), x.row(i));
        for j in (i + 1)..n {
            let m = kernel.eval(x.row(i), x.row(j));
            data[i * n + j] = m;
            data[j * n + i] = m;
            lower = lower.min(m);
            upper = upper.max(m);
        }
    }
    if n < 2 {
        let c = match kernel {
            SimilarityKernel::Constant(c) => c,
            _ => 0.0,
        };
        lower = c;
        upper = c;
    }
    Ok(SimilarityMatrix { n, data, lower, upper })
}

/// Parses an edge list: one `i,j` pair per line, `#` starts a comment line.
///
/// The node count is `max index + 1` unless the file declares it with a
/// `# nodes: N` line, which is needed when trailing units are isolated.
pub fn parse_edge_list(text: &str) -> Result<Network> {
    let mut declared = None;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("nodes:") {
                let n = v.trim().parse::<usize>().map_err(|e| {
                    Error::invalid(format!("line {lineno}: bad node count: {e}"))
                })?;
                declared = Some(n);
            }
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::invalid(format!("line {lineno}: expected `i,j`"))),
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::invalid(format!("line {lineno}: bad index {s:?}: {e}")))
        };
        edges.push((lineno, parse(a)?, parse(b)?));
    }
    let inferred = edges.iter().map(|&(_, i, j)| i.max(j) + 1).max().unwrap_or(0);
    let n = declared.unwrap_or(inferred);
    for &(line, i, j) in &edges {
        if i == j {
            return Err(Error::SelfLink { line, node: i });
        }
        if i.max(j) >= n {
            return Err(Error::IndexOutOfRange { line, index: i.max(j), n });
        }
    }
    Network::from_edges(n, edges.into_iter().map(|(_, i, j)| (i, j)))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text)
}

/// Reads a covariate CSV with a header row and one numeric row per unit.
pub fn load_covariates(path: impl AsRef<Path>) -> Result<Covariates> {
    let path = path.as_ref();
    let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            other => parse_err(format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {r}: bad number {field:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Covariates::new(rows)
}

/// Loads a network and its covariates and checks that they describe the same
/// units.
pub fn load_network_and_covariates(
    network: impl AsRef<Path>,
    covariates: impl AsRef<Path>,
) -> Result<(Network, Covariates)> {
    let net = load_network(network)?;
    let x = load_covariates(covariates)?;
    if net.n() != x.n() {
        return Err(Error::invalid(format!(
            "row count mismatch: network has {} units, covariate file has {} rows",
            net.n(),
            x.n()
        )));
    }
    Ok((net, x))
}
