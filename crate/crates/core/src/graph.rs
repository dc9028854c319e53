//! Skeleton adjacency graphs.
//!
//! Each block uses `K_V = 3` graphs `G_k = A_k + B_k`: the static skeleton
//! partition (self links, inward links, outward links) plus a learned dense
//! residue. Matrices are indexed `(source joint p, target joint w)` so a
//! graph product is `out[w] = Σ_p f[p] · G[p][w]`.

use crate::error::{ensure_dims, Result};
use crate::fixed::FixedQ8p8;
use crate::tensor::VERTICES;

/// Graph neighbour-set count.
pub const K_V: usize = 3;
pub const GRAPH_LEN: usize = VERTICES * VERTICES;

/// NTU-RGB+D joint links (1-based `(child, parent)`), pointing toward the
/// spine centre.
pub const NTU_INWARD: [(usize, usize); 24] = [
    (1, 2),
    (2, 21),
    (3, 21),
    (4, 3),
    (5, 21),
    (6, 5),
    (7, 6),
    (8, 7),
    (9, 21),
    (10, 9),
    (11, 10),
    (12, 11),
    (13, 1),
    (14, 13),
    (15, 14),
    (16, 15),
    (17, 1),
    (18, 17),
    (19, 18),
    (20, 19),
    (22, 23),
    (23, 8),
    (24, 25),
    (25, 12),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyStack {
    /// `G_k`, laid out `(k, p, w)`.
    graphs: Vec<FixedQ8p8>,
    /// Binary `A_k`, laid out `(k, p, w)`.
    static_part: Vec<bool>,
}

/// Binary static partition: identity, inward links, outward links.
pub fn skeleton_partition() -> Vec<bool> {
    let mut a = vec![false; K_V * GRAPH_LEN];
    for v in 0..VERTICES {
        a[v * VERTICES + v] = true;
    }
    for &(child, parent) in &NTU_INWARD {
        let (c, p) = (child - 1, parent - 1);
        // inward: information flows child -> parent
        a[GRAPH_LEN + c * VERTICES + p] = true;
        a[2 * GRAPH_LEN + p * VERTICES + c] = true;
    }
    a
}

/// Normalises each partition so every target joint averages its sources.
pub fn normalized_partition(static_part: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; K_V * GRAPH_LEN];
    for k in 0..K_V {
        for w in 0..VERTICES {
            let deg = (0..VERTICES)
                .filter(|&p| static_part[k * GRAPH_LEN + p * VERTICES + w])
                .count();
            if deg == 0 {
                continue;
            }
            for p in 0..VERTICES {
                if static_part[k * GRAPH_LEN + p * VERTICES + w] {
                    out[k * GRAPH_LEN + p * VERTICES + w] = 1.0 / deg as f64;
                }
            }
        }
    }
    out
}

impl AdjacencyStack {
    /// Builds `G_k = norm(A_k) + B_k` from a dense learned residue laid out
    /// `(k, p, w)`.
    pub fn with_residue(residue: &[f64]) -> Result<Self> {
        ensure_dims("graph residue", K_V * GRAPH_LEN, residue.len())?;
        let static_part = skeleton_partition();
        let base = normalized_partition(&static_part);
        let graphs = base
            .iter()
            .zip(residue)
            .map(|(a, b)| FixedQ8p8::quantize(a + b))
            .collect();
        Ok(Self { graphs, static_part })
    }

    /// Static skeleton graphs only (`B_k = 0`).
    pub fn skeleton() -> Self {
        Self::with_residue(&vec![0.0; K_V * GRAPH_LEN]).expect("fixed size")
    }

    /// Uses the given `G_k` values verbatim; `A_k` is the skeleton partition.
    pub fn from_graphs(graphs: Vec<FixedQ8p8>) -> Result<Self> {
        ensure_dims("graph stack", K_V * GRAPH_LEN, graphs.len())?;
        Ok(Self {
            graphs,
            static_part: skeleton_partition(),
        })
    }

    pub fn identity() -> Self {
        Self::from_graphs(
            (0..K_V * GRAPH_LEN)
                .map(|i| {
                    let (p, w) = ((i % GRAPH_LEN) / VERTICES, i % VERTICES);
                    if p == w {
                        FixedQ8p8::ONE
                    } else {
                        FixedQ8p8::ZERO
                    }
                })
                .collect(),
        )
        .expect("fixed size")
    }

    pub fn k_v(&self) -> usize {
        K_V
    }

    pub fn graphs(&self) -> &[FixedQ8p8] {
        &self.graphs
    }

    /// `G_k` as a 25×25 row-major `(p, w)` slice.
    #[inline]
    pub fn graph(&self, k: usize) -> &[FixedQ8p8] {
        &self.graphs[k * GRAPH_LEN..(k + 1) * GRAPH_LEN]
    }

    #[inline]
    pub fn entry(&self, k: usize, p: usize, w: usize) -> FixedQ8p8 {
        self.graphs[k * GRAPH_LEN + p * VERTICES + w]
    }

    pub fn static_part(&self, k: usize) -> &[bool] {
        &self.static_part[k * GRAPH_LEN..(k + 1) * GRAPH_LEN]
    }
}
