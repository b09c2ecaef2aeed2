//! Activity ontology: graph ingestion, normalized-Laplacian factorization and
//! the spectral node embeddings used for structural positional encoding.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::Vocabulary;
use crate::linalg::{self, SymEigen};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Activity,
    Type,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Activity => "activity",
            NodeKind::Type => "type",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyNode {
    pub name: String,
    pub kind: NodeKind,
}

/// Undirected connected graph of activity and activity-type nodes.
#[derive(Debug, Clone)]
pub struct OntologyGraph {
    nodes: Vec<OntologyNode>,
    /// Node-index pairs, stored with the smaller index first.
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    nodes: Vec<OntologyNode>,
    edges: Vec<(String, String)>,
}

impl OntologyGraph {
    /// Validates: distinct names, known endpoints, no self-loops, no
    /// duplicate edges, and a single connected component.
    pub fn new(nodes: Vec<OntologyNode>, edges: Vec<(String, String)>) -> Result<OntologyGraph> {
        if nodes.is_empty() {
            return Err(Error::Format("ontology has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.name.clone(), i).is_some() {
                return Err(Error::Format(format!(
                    "duplicate node name '{}'",
                    node.name
                )));
            }
        }

        let mut edge_indices = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::new();
        for (a, b) in &edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::Format(format!("edge endpoint '{a}' is not a node")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::Format(format!("edge endpoint '{b}' is not a node")))?;
            if ia == ib {
                return Err(Error::Format(format!("self-loop on '{a}'")));
            }
            let key = (ia.min(ib), ia.max(ib));
            if !seen.insert(key) {
                return Err(Error::Format(format!("duplicate edge {a} — {b}")));
            }
            edge_indices.push(key);
        }

        let graph = OntologyGraph {
            nodes,
            edges: edge_indices,
            index,
        };
        let components = graph.components();
        if components.len() > 1 || graph.degrees().contains(&0) {
            return Err(Error::Disconnected {
                components: components
                    .iter()
                    .map(|c| c.iter().map(|&i| graph.nodes[i].name.clone()).collect())
                    .collect(),
            });
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[OntologyNode] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut component = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut queue = vec![start];
            component[start] = id;
            let mut members = vec![start];
            while let Some(node) = queue.pop() {
                for &next in &adjacency[node] {
                    if component[next] == usize::MAX {
                        component[next] = id;
                        members.push(next);
                        queue.push(next);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn to_json_writer(&self, writer: &mut impl Write) -> Result<()> {
        let file = OntologyFile {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| (self.nodes[a].name.clone(), self.nodes[b].name.clone()))
                .collect(),
        };
        serde_json::to_writer_pretty(&mut *writer, &file)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn from_json_reader(reader: impl Read) -> Result<OntologyGraph> {
        let file: OntologyFile = serde_json::from_reader(reader)?;
        OntologyGraph::new(file.nodes, file.edges)
    }
}

pub fn parse_ontology(path: &Path) -> Result<OntologyGraph> {
    OntologyGraph::from_json_reader(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Δ = I − D^{−1/2} A D^{−1/2} together with its full eigendecomposition,
/// eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct LaplacianFactorization {
    pub delta: Tensor<f64>,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors matching `eigenvalues`.
    pub eigenvectors: Tensor<f64>,
}

pub fn build_laplacian(graph: &OntologyGraph) -> Result<LaplacianFactorization> {
    let n = graph.node_count();
    let degrees = graph.degrees();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();

    let mut delta = Tensor::zeros(&[n, n]);
    for i in 0..n {
        delta.set(i, i, 1.0);
    }
    for &(a, b) in &graph.edges {
        let w = -inv_sqrt[a] * inv_sqrt[b];
        delta.set(a, b, w);
        delta.set(b, a, w);
    }

    let SymEigen {
        eigenvalues,
        eigenvectors,
    } = linalg::eigen_sym(&delta)?;
    Ok(LaplacianFactorization {
        delta,
        eigenvalues,
        eigenvectors,
    })
}

#[derive(Debug, Clone)]
pub struct NodeEmbedding {
    pub name: String,
    pub kind: NodeKind,
    pub vector: Vec<f64>,
}

/// Per-node spectral embedding: components of the k smallest nontrivial
/// eigenvectors. Entries keep graph node order.
#[derive(Debug, Clone)]
pub struct NodeEmbeddingTable {
    pub k: usize,
    entries: Vec<NodeEmbedding>,
    index: HashMap<String, usize>,
}

impl NodeEmbeddingTable {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index
            .get(name)
            .map(|&i| self.entries[i].vector.as_slice())
    }

    pub fn entries(&self) -> &[NodeEmbedding] {
        &self.entries
    }

    /// CSV layout: node,kind,c1..ck.
    pub fn to_csv_writer(&self, writer: &mut impl Write) -> Result<()> {
        let mut csv_writer = csv::Writer::from_writer(writer);
        let mut header = vec!["node".to_string(), "kind".to_string()];
        header.extend((1..=self.k).map(|i| format!("c{i}")));
        csv_writer.write_record(&header)?;
        for entry in &self.entries {
            let mut record = vec![entry.name.clone(), entry.kind.as_str().to_string()];
            record.extend(entry.vector.iter().map(|v| format!("{v:.12e}")));
            csv_writer.write_record(&record)?;
        }
        csv_writer.flush()?;
        Ok(())
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<NodeEmbeddingTable> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "node" || &headers[1] != "kind" {
            return Err(Error::Format("embedding CSV must start node,kind".into()));
        }
        let k = headers.len() - 2;
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for record in csv_reader.records() {
            let record = record?;
            let name = record
                .get(0)
                .ok_or_else(|| Error::Format("short embedding row".into()))?
                .to_string();
            let kind = match record.get(1) {
                Some("activity") => NodeKind::Activity,
                Some("type") => NodeKind::Type,
                other => {
                    return Err(Error::Format(format!("unknown node kind {other:?}")));
                }
            };
            let vector = (2..record.len())
                .map(|i| {
                    record[i]
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad embedding value: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.len() != k {
                return Err(Error::Format("ragged embedding CSV".into()));
            }
            index.insert(name.clone(), entries.len());
            entries.push(NodeEmbedding { name, kind, vector });
        }
        Ok(NodeEmbeddingTable { k, entries, index })
    }
}

/// Extract the k smallest nontrivial eigenvector components per node.
///
/// Column 0 (the zero eigenvalue of a connected graph) is skipped. Each used
/// column has its sign flipped so the component of largest magnitude is
/// positive (first index wins ties). If k exceeds n−1 the tail is zero.
pub fn node_embeddings(
    factorization: &LaplacianFactorization,
    graph: &OntologyGraph,
    k: usize,
) -> Result<NodeEmbeddingTable> {
    if k == 0 {
        return Err(Error::Param("embedding dimension k must be ≥ 1".into()));
    }
    let n = graph.node_count();
    let usable = k.min(n.saturating_sub(1));

    // Sign canonicalization per used column.
    let mut signs = vec![1.0f64; usable];
    for (c, sign) in signs.iter_mut().enumerate() {
        let col = c + 1;
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for row in 0..n {
            let a = factorization.eigenvectors.at(row, col).abs();
            if a > best_abs {
                best_abs = a;
                best = row;
            }
        }
        if factorization.eigenvectors.at(best, col) < 0.0 {
            *sign = -1.0;
        }
    }

    let mut entries = Vec::with_capacity(n);
    let mut index = HashMap::with_capacity(n);
    for (row, node) in graph.nodes().iter().enumerate() {
        let mut vector = vec![0.0f64; k];
        for (c, sign) in signs.iter().enumerate() {
            vector[c] = sign * factorization.eigenvectors.at(row, c + 1);
        }
        index.insert(node.name.clone(), entries.len());
        entries.push(NodeEmbedding {
            name: node.name.clone(),
            kind: node.kind,
            vector,
        });
    }
    Ok(NodeEmbeddingTable { k, entries, index })
}

/// Spectral vector for a vocabulary token: activity tokens resolve to their
/// graph node; specials and activities absent from the ontology fall back to
/// the zero vector (absences are logged once per table build by the caller).
pub fn embedding_for_token(
    table: &NodeEmbeddingTable,
    vocab: &Vocabulary,
    token_id: usize,
) -> Vec<f64> {
    if Vocabulary::is_special(token_id) {
        return vec![0.0; table.k];
    }
    let name = vocab.name(token_id).expect("token id within vocabulary");
    match table.get(name) {
        Some(v) => v.to_vec(),
        None => {
            log::warn!("activity '{name}' has no ontology node; using zero SPE vector");
            vec![0.0; table.k]
        }
    }
}
