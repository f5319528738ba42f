//! Directed dialogue graphs: windowed connectivity, attention edge
//! weights, and the 9-way relation typing.
//!
//! Node i connects to every node j with |i - j| <= M after clipping the
//! window to the sequence, self-loop included; short dialogues are thus
//! fully connected. Each directed edge (j -> i) carries a softmax
//! attention weight normalized over i's incoming window and one of nine
//! relation types: self, or the (past/future, speaker-of-i, speaker-of-j)
//! combination.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Speaker;
use crate::encode::EncodedDialogue;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot build a graph over an empty dialogue")]
    Empty,

    #[error("window must be at least 1")]
    ZeroWindow,

    #[error("attention matrix is {rows}x{cols}, expected {dim}x{dim}")]
    AttnShape { rows: usize, cols: usize, dim: usize },

    #[error("speaker tags ({speakers}) do not match node count ({nodes})")]
    SpeakerMismatch { speakers: usize, nodes: usize },
}

/// Edge label combining temporal order and the speakers at both ends.
/// `Past*` means the source precedes the destination. The second letter
/// pair is (speaker of destination i, speaker of source j).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationType {
    SelfLoop,
    PastAa,
    PastAb,
    PastBa,
    PastBb,
    FutureAa,
    FutureAb,
    FutureBa,
    FutureBb,
}

impl RelationType {
    pub const ALL: [RelationType; 9] = [
        RelationType::SelfLoop,
        RelationType::PastAa,
        RelationType::PastAb,
        RelationType::PastBa,
        RelationType::PastBb,
        RelationType::FutureAa,
        RelationType::FutureAb,
        RelationType::FutureBa,
        RelationType::FutureBb,
    ];

    /// Count of non-self relation types.
    pub const NON_SELF_COUNT: usize = 8;

    /// Stable index in [0, 9); `SelfLoop` is 0.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|r| *r == self).unwrap()
    }

    /// Index among the non-self types, in [0, 8). Panics on `SelfLoop`.
    pub fn non_self_index(self) -> usize {
        assert!(self != RelationType::SelfLoop, "self edges have no relation weight");
        self.index() - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::SelfLoop => "self",
            RelationType::PastAa => "past_a_a",
            RelationType::PastAb => "past_a_b",
            RelationType::PastBa => "past_b_a",
            RelationType::PastBb => "past_b_b",
            RelationType::FutureAa => "future_a_a",
            RelationType::FutureAb => "future_a_b",
            RelationType::FutureBa => "future_b_a",
            RelationType::FutureBb => "future_b_b",
        }
    }
}

/// Relation of the edge from node j to node i. Positions only need a
/// consistent base (the crate uses 0-based indices internally); only
/// their order matters.
pub fn relation_of(i: usize, j: usize, speaker_i: Speaker, speaker_j: Speaker) -> RelationType {
    use RelationType::*;
    use Speaker::{A, B};
    if i == j {
        return SelfLoop;
    }
    let past = j < i;
    match (past, speaker_i, speaker_j) {
        (true, A, A) => PastAa,
        (true, A, B) => PastAb,
        (true, B, A) => PastBa,
        (true, B, B) => PastBb,
        (false, A, A) => FutureAa,
        (false, A, B) => FutureAb,
        (false, B, A) => FutureBa,
        (false, B, B) => FutureBb,
    }
}

/// Directed edge from `src` to `dst` (0-based node indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub dst: usize,
    pub src: usize,
    pub weight: f64,
    pub relation: RelationType,
}

/// The dialogue graph: node features (initialized to the context vectors)
/// plus the windowed, weighted, relation-typed edge list sorted by
/// (dst, src).
#[derive(Debug, Clone)]
pub struct DialogueGraph {
    pub nodes: Array2<f64>,
    pub edges: Vec<Edge>,
    pub window: usize,
    /// Start offset into `edges` of each node's incoming-edge run; has
    /// n + 1 entries.
    edge_offsets: Vec<usize>,
}

impl DialogueGraph {
    pub fn len(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.nrows() == 0
    }

    /// Incoming edges of node `i` (sorted by src).
    pub fn incoming(&self, i: usize) -> &[Edge] {
        &self.edges[self.edge_offsets[i]..self.edge_offsets[i + 1]]
    }
}

/// Inclusive clipped window bounds around node `i` (0-based).
fn window_bounds(i: usize, n: usize, window: usize) -> (usize, usize) {
    (i.saturating_sub(window), (i + window).min(n - 1))
}

/// Attention weights per node: for node i, softmax over the logits
/// `e_i^T W e_j` for every j in the clipped window (self included). The
/// returned vectors align with the window order (ascending j) and each
/// sums to 1. Softmax is max-subtraction-stabilized, so any finite logits
/// produce finite weights.
pub fn edge_weights(
    context: &Array2<f64>,
    attn: &Array2<f64>,
    window: usize,
) -> Result<Vec<Vec<f64>>, GraphError> {
    let n = context.nrows();
    let d = context.ncols();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if window == 0 {
        return Err(GraphError::ZeroWindow);
    }
    if attn.dim() != (d, d) {
        return Err(GraphError::AttnShape {
            rows: attn.nrows(),
            cols: attn.ncols(),
            dim: d,
        });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = window_bounds(i, n, window);
        // key_i = e_i^T W; logit_ij = key_i . e_j
        let key = attn.t().dot(&context.row(i));
        let logits: Vec<f64> = (lo..=hi).map(|j| key.dot(&context.row(j))).collect();
        out.push(stable_softmax(&logits));
    }
    Ok(out)
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Builds the dialogue graph from contextualized vectors: nodes are
/// initialized to the context vectors, edges follow the clipped window
/// with attention weights and relation types, ordered by (dst, src).
pub fn build_graph(
    enc: &EncodedDialogue,
    speakers: &[Speaker],
    attn: &Array2<f64>,
    window: usize,
) -> Result<DialogueGraph, GraphError> {
    let n = enc.context.nrows();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if speakers.len() != n {
        return Err(GraphError::SpeakerMismatch {
            speakers: speakers.len(),
            nodes: n,
        });
    }
    let weights = edge_weights(&enc.context, attn, window)?;
    let mut edges = Vec::new();
    let mut edge_offsets = Vec::with_capacity(n + 1);
    for i in 0..n {
        edge_offsets.push(edges.len());
        let (lo, hi) = window_bounds(i, n, window);
        for (k, j) in (lo..=hi).enumerate() {
            edges.push(Edge {
                dst: i,
                src: j,
                weight: weights[i][k],
                relation: relation_of(i, j, speakers[i], speakers[j]),
            });
        }
    }
    edge_offsets.push(edges.len());
    Ok(DialogueGraph {
        nodes: enc.context.clone(),
        edges,
        window,
        edge_offsets,
    })
}

/// Glues independently built graphs into one disjoint union: node rows are
/// stacked and edge indices offset. No cross-graph edges exist, so
/// convolving the union equals convolving each part.
pub(crate) fn disjoint_union(graphs: &[DialogueGraph]) -> DialogueGraph {
    let total: usize = graphs.iter().map(DialogueGraph::len).sum();
    let cols = graphs.first().map_or(0, |g| g.nodes.ncols());
    let mut nodes = Array2::zeros((total, cols));
    let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.edges.len()).sum());
    let mut edge_offsets = Vec::with_capacity(total + 1);
    let mut base = 0usize;
    for g in graphs {
        nodes
            .slice_mut(ndarray::s![base..base + g.len(), ..])
            .assign(&g.nodes);
        for i in 0..g.len() {
            edge_offsets.push(edges.len());
            for e in g.incoming(i) {
                edges.push(Edge {
                    dst: e.dst + base,
                    src: e.src + base,
                    weight: e.weight,
                    relation: e.relation,
                });
            }
        }
        base += g.len();
    }
    edge_offsets.push(edges.len());
    DialogueGraph {
        nodes,
        edges,
        window: graphs.first().map_or(1, |g| g.window),
        edge_offsets,
    }
}
