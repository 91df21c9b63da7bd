//! Pairwise energy models over undirected graphs, plus exhaustive-enumeration
//! oracles for small instances.
//!
//! Energies live in the natural-log domain: `p(y) ∝ exp(-E(y))`. Labels are
//! 0-based class indices here; 1-based ids only appear in label maps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{self, Header};

/// One class index per node.
pub type Labeling = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    coords: Option<Vec<(usize, usize)>>,
    // CSR adjacency: neighbors of i are adj[offsets[i]..offsets[i+1]] as (node, edge)
    offsets: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl Graph {
    /// Edges must satisfy `i < j < n_nodes` with no duplicates.
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i >= j || j >= n_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge {e} = ({i}, {j}) must satisfy i < j < {n_nodes}"
                )));
            }
        }
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate edge".into()));
        }
        let mut degree = vec![0usize; n_nodes + 1];
        for &(i, j) in &edges {
            degree[i + 1] += 1;
            degree[j + 1] += 1;
        }
        for k in 0..n_nodes {
            degree[k + 1] += degree[k];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut adj = vec![(0, 0); 2 * edges.len()];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adj[fill[i]] = (j, e);
            fill[i] += 1;
            adj[fill[j]] = (i, e);
            fill[j] += 1;
        }
        Ok(Self {
            n_nodes,
            edges,
            coords: None,
            offsets,
            adj,
        })
    }

    /// Like [`Graph::new`] but accepts either orientation and drops
    /// duplicates; self-loops are still rejected.
    pub fn from_undirected(n_nodes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::InvalidArgument(format!("self edge on node {a}")));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();
        Self::new(n_nodes, edges)
    }

    pub fn with_coords(mut self, coords: Vec<(usize, usize)>) -> Result<Self> {
        if coords.len() != self.n_nodes {
            return Err(Error::DimensionMismatch("one coordinate per node".into()));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn coords(&self) -> Option<&[(usize, usize)]> {
        self.coords.as_deref()
    }

    /// `(neighbor, edge index)` pairs incident to `node`.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adj[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// True when the graph is a forest.
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }
}

/// 4-connected grid; node id is `row * width + col`.
pub fn grid_graph(height: usize, width: usize) -> Graph {
    let mut edges = Vec::with_capacity(2 * height * width);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                edges.push((i, i + 1));
            }
            if r + 1 < height {
                edges.push((i, i + width));
            }
        }
    }
    let coords = (0..height * width).map(|i| (i / width, i % width)).collect();
    Graph::new(height * width, edges)
        .and_then(|g| g.with_coords(coords))
        .expect("grid edges are valid")
}

/// Per-node energies, `n_nodes × n_classes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryTable {
    n_nodes: usize,
    n_classes: usize,
    values: Vec<f64>,
}

impl UnaryTable {
    pub fn new(n_nodes: usize, n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidArgument("at least one class required".into()));
        }
        if values.len() != n_nodes * n_classes {
            return Err(Error::DimensionMismatch(format!(
                "unary table {n_nodes}x{n_classes} needs {} values, got {}",
                n_nodes * n_classes,
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite unary energy at node {}, class {}",
                p / n_classes,
                p % n_classes
            )));
        }
        Ok(Self {
            n_nodes,
            n_classes,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged unary rows".into()));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn zeros(n_nodes: usize, n_classes: usize) -> Self {
        Self::new(n_nodes, n_classes, vec![0.0; n_nodes * n_classes]).expect("valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * self.n_classes..(node + 1) * self.n_classes]
    }

    pub fn get(&self, node: usize, class: usize) -> f64 {
        self.values[node * self.n_classes + class]
    }

    /// Per-node argmin, lowest class index on ties.
    pub fn argmin(&self) -> Labeling {
        (0..self.n_nodes).map(|i| argmin(self.row(i))).collect()
    }
}

/// Index of the smallest entry; the first one wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Edge energies. Tables are `M×M` row-major with the row indexed by the
/// label of the edge's first (lower-index) endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum PairwiseSpec {
    /// `beta` when the labels differ, 0 otherwise.
    Potts { beta: f64 },
    /// One table shared by every edge.
    Shared(Vec<f64>),
    /// One table per edge, concatenated in edge order.
    Full(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    graph: Graph,
    unary: UnaryTable,
    pairwise: PairwiseSpec,
}

impl EnergyModel {
    pub fn new(graph: Graph, unary: UnaryTable, pairwise: PairwiseSpec) -> Result<Self> {
        if graph.n_nodes() != unary.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, unary table {}",
                graph.n_nodes(),
                unary.n_nodes()
            )));
        }
        let m = unary.n_classes();
        match &pairwise {
            PairwiseSpec::Potts { beta } => {
                if !beta.is_finite() || *beta < 0.0 {
                    return Err(Error::InvalidArgument(format!("Potts beta {beta} must be finite and >= 0")));
                }
            }
            PairwiseSpec::Shared(t) => {
                if t.len() != m * m {
                    return Err(Error::DimensionMismatch(format!("shared table needs {} entries", m * m)));
                }
            }
            PairwiseSpec::Full(t) => {
                if t.len() != graph.n_edges() * m * m {
                    return Err(Error::DimensionMismatch(format!(
                        "per-edge tables need {} entries",
                        graph.n_edges() * m * m
                    )));
                }
            }
        }
        if let PairwiseSpec::Shared(t) | PairwiseSpec::Full(t) = &pairwise {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite pairwise energy".into()));
            }
        }
        Ok(Self {
            graph,
            unary,
            pairwise,
        })
    }

    pub fn potts(graph: Graph, unary: UnaryTable, beta: f64) -> Result<Self> {
        Self::new(graph, unary, PairwiseSpec::Potts { beta })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn unary(&self) -> &UnaryTable {
        &self.unary
    }

    pub fn pairwise(&self) -> &PairwiseSpec {
        &self.pairwise
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_classes(&self) -> usize {
        self.unary.n_classes()
    }

    /// `E_e(a, b)` with `a` the label of the edge's first endpoint.
    #[inline]
    pub fn pair_energy(&self, edge: usize, a: usize, b: usize) -> f64 {
        let m = self.n_classes();
        match &self.pairwise {
            PairwiseSpec::Potts { beta } => {
                if a == b {
                    0.0
                } else {
                    *beta
                }
            }
            PairwiseSpec::Shared(t) => t[a * m + b],
            PairwiseSpec::Full(t) => t[(edge * m + a) * m + b],
        }
    }

    /// Energy of edge `edge` seen from `node`: `label` at `node`, `other` at
    /// the opposite endpoint.
    #[inline]
    pub fn oriented_pair_energy(&self, edge: usize, node: usize, label: usize, other: usize) -> f64 {
        if self.graph.edges[edge].0 == node {
            self.pair_energy(edge, label, other)
        } else {
            self.pair_energy(edge, other, label)
        }
    }

    pub fn check_labeling(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "labeling has {} entries, model {} nodes",
                y.len(),
                self.n_nodes()
            )));
        }
        let m = self.n_classes();
        if let Some(i) = y.iter().position(|&l| l >= m) {
            return Err(Error::InvalidArgument(format!("label {} at node {i} >= {m}", y[i])));
        }
        Ok(())
    }

    /// Conditional energies of every class at `node` given the labels of its
    /// neighbors in `y`.
    pub fn local_energies(&self, node: usize, y: &[usize], out: &mut [f64]) {
        out.copy_from_slice(self.unary.row(node));
        for &(nbr, e) in self.graph.neighbors(node) {
            let other = y[nbr];
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.oriented_pair_energy(e, node, c, other);
            }
        }
    }

    /// Indicator-Potts check and symmetry helpers used by the solvers.
    pub fn is_symmetric(&self) -> bool {
        let m = self.n_classes();
        let sym = |t: &[f64]| (0..m).all(|a| (0..m).all(|b| t[a * m + b] == t[b * m + a]));
        match &self.pairwise {
            PairwiseSpec::Potts { .. } => true,
            PairwiseSpec::Shared(t) => sym(t),
            PairwiseSpec::Full(t) => t.chunks(m * m).all(sym),
        }
    }

    /// Copy with the edge energies replaced.
    pub fn with_pairwise(&self, pairwise: PairwiseSpec) -> Result<Self> {
        Self::new(self.graph.clone(), self.unary.clone(), pairwise)
    }
}

/// `Σ_i E_i(y_i) + Σ_(i,j) E_ij(y_i, y_j)`.
pub fn total_energy(model: &EnergyModel, y: &[usize]) -> f64 {
    let unary: f64 = y.iter().enumerate().map(|(i, &l)| model.unary.get(i, l)).sum();
    let pair: f64 = model
        .graph
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| model.pair_energy(e, y[i], y[j]))
        .sum();
    unary + pair
}

fn config_count(model: &EnergyModel, limit: u64) -> Result<u64> {
    let configs = (model.n_classes() as f64).powi(model.n_nodes() as i32);
    if configs > limit as f64 {
        return Err(Error::TooLarge { configs, limit });
    }
    Ok(configs.round() as u64)
}

/// Advances `y` to the next labeling in lexicographic order (node 0 most
/// significant). Returns false after the last one.
fn next_labeling(y: &mut [usize], m: usize) -> bool {
    for slot in y.iter_mut().rev() {
        *slot += 1;
        if *slot < m {
            return true;
        }
        *slot = 0;
    }
    false
}

pub const BRUTE_FORCE_MAP_LIMIT: u64 = 10_000_000;
pub const BRUTE_FORCE_MARGINALS_LIMIT: u64 = 1_000_000;

/// Exhaustive MAP; the lexicographically smallest minimizer wins ties.
pub fn brute_force_map(model: &EnergyModel) -> Result<(Labeling, f64)> {
    config_count(model, BRUTE_FORCE_MAP_LIMIT)?;
    let m = model.n_classes();
    let mut y = vec![0; model.n_nodes()];
    let mut best = y.clone();
    let mut best_energy = total_energy(model, &y);
    while next_labeling(&mut y, m) {
        let e = total_energy(model, &y);
        if e < best_energy {
            best_energy = e;
            best.copy_from_slice(&y);
        }
    }
    Ok((best, best_energy))
}

/// Node beliefs, edge beliefs and a log partition function.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub n_classes: usize,
    /// `n_nodes × M`, row-major.
    pub node: Vec<f64>,
    /// `n_edges × M × M`, row index = first endpoint's label.
    pub edge: Vec<f64>,
    pub log_z: f64,
}

impl Marginals {
    pub fn node_belief(&self, node: usize) -> &[f64] {
        &self.node[node * self.n_classes..(node + 1) * self.n_classes]
    }

    pub fn edge_belief(&self, edge: usize) -> &[f64] {
        let mm = self.n_classes * self.n_classes;
        &self.edge[edge * mm..(edge + 1) * mm]
    }

    /// Per-node argmax, lowest class index on ties.
    pub fn argmax(&self) -> Labeling {
        self.node.chunks(self.n_classes).map(argmax).collect()
    }
}

/// Exact marginals and `ln Z` by enumeration of every labeling.
pub fn brute_force_marginals(model: &EnergyModel) -> Result<Marginals> {
    let count = config_count(model, BRUTE_FORCE_MARGINALS_LIMIT)? as usize;
    let m = model.n_classes();
    let n = model.n_nodes();
    let ne = model.graph.n_edges();
    let mut energies = Vec::with_capacity(count);
    let mut y = vec![0; n];
    loop {
        energies.push(total_energy(model, &y));
        if !next_labeling(&mut y, m) {
            break;
        }
    }
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut node = vec![0.0; n * m];
    let mut edge = vec![0.0; ne * m * m];
    let mut z = 0.0;
    y.iter_mut().for_each(|v| *v = 0);
    for &e in &energies {
        let w = (min - e).exp();
        z += w;
        for (i, &l) in y.iter().enumerate() {
            node[i * m + l] += w;
        }
        for (k, &(i, j)) in model.graph.edges.iter().enumerate() {
            edge[(k * m + y[i]) * m + y[j]] += w;
        }
        next_labeling(&mut y, m);
    }
    node.iter_mut().chain(edge.iter_mut()).for_each(|v| *v /= z);
    Ok(Marginals {
        n_classes: m,
        node,
        edge,
        log_z: z.ln() - min,
    })
}

/// A model restricted to its unobserved nodes, with observed neighbors folded
/// into the unaries.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub model: EnergyModel,
    /// Original id of each latent node.
    pub latent: Vec<usize>,
    /// Energy of the observed part (observed unaries and observed–observed
    /// edges), so that `E(y) = offset + E_latent(y_latent)`.
    pub offset: f64,
}

/// Clamps every node with `observed[i] = Some(c)` to class `c`.
pub fn condition(model: &EnergyModel, observed: &[Option<usize>]) -> Result<Conditioned> {
    if observed.len() != model.n_nodes() {
        return Err(Error::DimensionMismatch("one observation slot per node".into()));
    }
    let m = model.n_classes();
    if let Some(i) = observed.iter().position(|o| o.is_some_and(|c| c >= m)) {
        return Err(Error::InvalidArgument(format!("observed class at node {i} out of range")));
    }
    let mut new_id = vec![usize::MAX; model.n_nodes()];
    let latent: Vec<usize> = (0..model.n_nodes()).filter(|&i| observed[i].is_none()).collect();
    for (k, &i) in latent.iter().enumerate() {
        new_id[i] = k;
    }
    let mut unary: Vec<f64> = latent.iter().flat_map(|&i| model.unary.row(i).to_vec()).collect();
    let mut offset = 0.0;
    for (i, o) in observed.iter().enumerate() {
        if let Some(c) = o {
            offset += model.unary.get(i, *c);
        }
    }
    let mut edges = Vec::new();
    let mut kept_edges = Vec::new();
    for (e, &(i, j)) in model.graph.edges.iter().enumerate() {
        match (observed[i], observed[j]) {
            (Some(a), Some(b)) => offset += model.pair_energy(e, a, b),
            (Some(a), None) => {
                let k = new_id[j];
                for c in 0..m {
                    unary[k * m + c] += model.pair_energy(e, a, c);
                }
            }
            (None, Some(b)) => {
                let k = new_id[i];
                for c in 0..m {
                    unary[k * m + c] += model.pair_energy(e, c, b);
                }
            }
            (None, None) => {
                edges.push((new_id[i], new_id[j]));
                kept_edges.push(e);
            }
        }
    }
    let pairwise = match &model.pairwise {
        PairwiseSpec::Full(t) => PairwiseSpec::Full(
            kept_edges
                .iter()
                .flat_map(|&e| t[e * m * m..(e + 1) * m * m].to_vec())
                .collect(),
        ),
        other => other.clone(),
    };
    let graph = Graph::new(latent.len(), edges)?;
    Ok(Conditioned {
        model: EnergyModel::new(graph, UnaryTable::new(latent.len(), m, unary)?, pairwise)?,
        latent,
        offset,
    })
}

impl Conditioned {
    /// Lifts marginals of the latent model back to the full graph; observed
    /// nodes get one-hot beliefs. `log_z` becomes the log of the clamped
    /// partition sum of the original model.
    pub fn lift(&self, original: &EnergyModel, observed: &[Option<usize>], latent: &Marginals) -> Marginals {
        let m = original.n_classes();
        let n = original.n_nodes();
        let mut node = vec![0.0; n * m];
        let mut latent_id = vec![usize::MAX; n];
        for (k, &i) in self.latent.iter().enumerate() {
            latent_id[i] = k;
            node[i * m..(i + 1) * m].copy_from_slice(latent.node_belief(k));
        }
        for (i, o) in observed.iter().enumerate() {
            if let Some(c) = o {
                node[i * m + c] = 1.0;
            }
        }
        let mut edge = vec![0.0; original.graph.n_edges() * m * m];
        let mut next_latent_edge = 0;
        for (e, &(i, j)) in original.graph.edges.iter().enumerate() {
            let slot = &mut edge[e * m * m..(e + 1) * m * m];
            match (observed[i], observed[j]) {
                (Some(a), Some(b)) => slot[a * m + b] = 1.0,
                (Some(a), None) => {
                    let bj = latent.node_belief(latent_id[j]);
                    slot[a * m..(a + 1) * m].copy_from_slice(bj);
                }
                (None, Some(b)) => {
                    let bi = latent.node_belief(latent_id[i]);
                    for c in 0..m {
                        slot[c * m + b] = bi[c];
                    }
                }
                (None, None) => {
                    slot.copy_from_slice(latent.edge_belief(next_latent_edge));
                    next_latent_edge += 1;
                }
            }
        }
        Marginals {
            n_classes: m,
            node,
            edge,
            log_z: latent.log_z - self.offset,
        }
    }
}

/// Writes an energy model: header, `f64` unary block, edge list CSV and
/// (for table pairwise specs) an `f64` table block.
pub fn save_energy_model(model: &EnergyModel, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let unary_path = io::raw_path_for(header_path);
    let edges_path = header_path.with_extension("edges.csv");
    let mut header = Header::new();
    header
        .set("kind", "energy")
        .set("nodes", model.n_nodes())
        .set("classes", model.n_classes())
        .set("dtype", "f64")
        .set("data", io::relative_name(&unary_path))
        .set("edges", io::relative_name(&edges_path));
    io::write_f64_le(&unary_path, model.unary.values.iter().copied())?;
    let mut csv = String::from("i,j\n");
    for &(i, j) in &model.graph.edges {
        csv.push_str(&format!("{i},{j}\n"));
    }
    fs::write(&edges_path, csv).map_err(|e| Error::io(&edges_path, e))?;
    match &model.pairwise {
        PairwiseSpec::Potts { beta } => {
            header.set("pairwise", "potts").set("beta", format!("{beta:?}"));
        }
        PairwiseSpec::Shared(t) | PairwiseSpec::Full(t) => {
            let kind = if matches!(model.pairwise, PairwiseSpec::Shared(_)) { "shared" } else { "full" };
            let table_path = header_path.with_extension("pairwise.raw");
            io::write_f64_le(&table_path, t.iter().copied())?;
            header.set("pairwise", kind).set("pairwise_data", io::relative_name(&table_path));
        }
    }
    header.write(header_path)
}

pub fn load_energy_model(header_path: impl AsRef<Path>) -> Result<EnergyModel> {
    let header_path = header_path.as_ref();
    let header = Header::read(header_path)?;
    header.expect("kind", "energy")?;
    header.expect("dtype", "f64")?;
    let n = header.require_usize("nodes")?;
    let m = header.require_usize("classes")?;
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let unary = io::read_f64_le(&header.data_path(header_path)?, n * m)?;
    let edges_path = dir.join(header.require("edges")?);
    let text = fs::read_to_string(&edges_path).map_err(|e| Error::io(&edges_path, e))?;
    let mut edges = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (i, j) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("edge line '{line}'")))?;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Format(format!("edge line '{line}'")));
        edges.push((parse(i)?, parse(j)?));
    }
    let graph = Graph::new(n, edges)?;
    let pairwise = match header.require("pairwise")? {
        "potts" => PairwiseSpec::Potts {
            beta: header.require_f64("beta")?,
        },
        kind @ ("shared" | "full") => {
            let len = if kind == "shared" { m * m } else { graph.n_edges() * m * m };
            let t = io::read_f64_le(&dir.join(header.require("pairwise_data")?), len)?;
            if kind == "shared" {
                PairwiseSpec::Shared(t)
            } else {
                PairwiseSpec::Full(t)
            }
        }
        other => return Err(Error::Format(format!("unknown pairwise kind '{other}'"))),
    };
    EnergyModel::new(graph, UnaryTable::new(n, m, unary)?, pairwise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2(beta: f64) -> EnergyModel {
        let unary = UnaryTable::from_rows(&[vec![0.2, 0.5], vec![0.1, 0.9]]).unwrap();
        EnergyModel::potts(grid_graph(1, 2), unary, beta).unwrap()
    }

    #[test]
    fn grid_edge_counts() {
        assert_eq!(grid_graph(2, 2).n_edges(), 4);
        assert_eq!(grid_graph(1, 1).n_edges(), 0);
        for h in 1..7 {
            for w in 1..7 {
                let g = grid_graph(h, w);
                // enumerate 4-neighbor pairs directly
                let mut count = 0;
                for a in 0..h * w {
                    for b in a + 1..h * w {
                        let (ra, ca) = (a / w, a % w);
                        let (rb, cb) = (b / w, b % w);
                        if ra.abs_diff(rb) + ca.abs_diff(cb) == 1 {
                            count += 1;
                        }
                    }
                }
                assert_eq!(g.n_edges(), count);
                assert_eq!(g.n_edges(), 2 * h * w - h - w);
            }
        }
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::new(3, vec![(1, 1)]).is_err());
        assert!(Graph::new(3, vec![(2, 1)]).is_err());
        assert!(Graph::new(3, vec![(0, 3)]).is_err());
        assert!(Graph::new(3, vec![(0, 1), (0, 1)]).is_err());
        let g = Graph::from_undirected(3, [(2, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
    }

    #[test]
    fn two_node_energies() {
        let m = chain2(1.0);
        assert!((total_energy(&m, &[0, 0]) - 0.3).abs() < 1e-15);
        assert!((total_energy(&m, &[0, 1]) - 2.1).abs() < 1e-15);
        let free = chain2(0.0);
        assert!((total_energy(&free, &[1, 0]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn brute_force_map_cases() {
        let single = EnergyModel::potts(Graph::new(1, vec![]).unwrap(), UnaryTable::from_rows(&[vec![3.0, 1.0, 2.0]]).unwrap(), 0.0).unwrap();
        assert_eq!(brute_force_map(&single).unwrap(), (vec![1], 1.0));

        let unary = UnaryTable::from_rows(&[vec![0.0, 1.0, 0.2], vec![0.9, 0.0, 0.05]]).unwrap();
        let strong = EnergyModel::potts(grid_graph(1, 2), unary, 1e6).unwrap();
        // summed unaries: (0.9, 1.0, 0.25) → both take class 2
        assert_eq!(brute_force_map(&strong).unwrap().0, vec![2, 2]);

        let zero = EnergyModel::potts(grid_graph(2, 2), UnaryTable::zeros(4, 3), 0.0).unwrap();
        assert_eq!(brute_force_map(&zero).unwrap(), (vec![0; 4], 0.0));
    }

    #[test]
    fn brute_force_guards_size() {
        let big = EnergyModel::potts(grid_graph(5, 5), UnaryTable::zeros(25, 2), 1.0).unwrap();
        assert!(matches!(brute_force_map(&big), Err(Error::TooLarge { .. })));
        assert!(matches!(brute_force_marginals(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn uniform_marginals() {
        let m = EnergyModel::potts(grid_graph(1, 2), UnaryTable::zeros(2, 2), 0.0).unwrap();
        let marg = brute_force_marginals(&m).unwrap();
        assert!(marg.node.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        assert!((marg.log_z - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_node_marginals() {
        let m = EnergyModel::potts(Graph::new(1, vec![]).unwrap(), UnaryTable::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap(), 0.0).unwrap();
        let marg = brute_force_marginals(&m).unwrap();
        assert!((marg.node[0] - 0.75).abs() < 1e-15);
        assert!((marg.node[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn conditioning_splits_partition_sum() {
        let unary = UnaryTable::from_rows(&[vec![0.3, 0.1], vec![0.0, 0.7], vec![0.5, 0.2], vec![0.4, 0.4]]).unwrap();
        let table = vec![0.0, 0.8, 0.3, 0.1];
        let model = EnergyModel::new(grid_graph(2, 2), unary, PairwiseSpec::Shared(table)).unwrap();
        let observed = vec![Some(1), None, None, Some(0)];
        let cond = condition(&model, &observed).unwrap();
        let latent = brute_force_marginals(&cond.model).unwrap();
        let lifted = cond.lift(&model, &observed, &latent);
        // direct: sum exp(-E) over consistent labelings
        let mut z = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                z += (-total_energy(&model, &[1, a, b, 0])).exp();
            }
        }
        assert!((lifted.log_z - z.ln()).abs() < 1e-12);
        assert_eq!(lifted.node_belief(0), &[0.0, 1.0]);
        let s: f64 = lifted.edge.chunks(4).map(|t| t.iter().sum::<f64>()).sum();
        assert!((s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn energy_model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let unary = UnaryTable::from_rows(&[vec![0.3, 0.1], vec![0.0, 0.7], vec![0.5, 0.2]]).unwrap();
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        for pw in [
            PairwiseSpec::Potts { beta: 0.1 },
            PairwiseSpec::Shared(vec![0.0, 1.0, 2.0, 0.5]),
            PairwiseSpec::Full(vec![0.0, 1.0, 2.0, 0.5, 0.1, 0.2, 0.3, 0.4]),
        ] {
            let model = EnergyModel::new(g.clone(), unary.clone(), pw).unwrap();
            let p = dir.path().join("m.hdr");
            save_energy_model(&model, &p).unwrap();
            assert_eq!(load_energy_model(&p).unwrap(), model);
        }
    }
}
