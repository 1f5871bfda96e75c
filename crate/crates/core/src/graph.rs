//! Interference graph construction and k-neighbor star decomposition.
//!
//! Nodes are D2D pairs. Every pair interferes with every other under full bandwidth
//! reuse, so the graph is complete. Node and edge features are rotation angles in
//! `[0, pi]`, ready for angle encoding.

use std::f64::consts::PI;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::seed;

/// Per-node feature width: `[direct gain angle, weight angle]`.
pub const NODE_FEATURES: usize = 2;

/// Standardized log-gain `z` maps to angle `pi/2 + z * pi/6`, clamped to `[0, pi]`.
const ANGLE_PER_STD: f64 = PI / 6.0;

/// Log-domain standardization constants, fitted on training channels and then frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub node_mu: f64,
    pub node_s: f64,
    pub edge_mu: f64,
    pub edge_s: f64,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self {
            node_mu: 0.0,
            node_s: 1.0,
            edge_mu: 0.0,
            edge_s: 1.0,
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let s = var.sqrt();
    (mu, if s > 1e-12 { s } else { 1.0 })
}

impl FeatureNorm {
    /// Mean and standard deviation of `log10 |g|^2`, separately for direct links and
    /// cross links. Zero gains are skipped.
    pub fn fit(channels: &[ChannelRealization]) -> Self {
        let mut direct = Vec::new();
        let mut cross = Vec::new();
        for ch in channels {
            for k in 0..ch.pairs() {
                for m in 0..ch.pairs() {
                    let g2 = ch.gain2(k, m);
                    if g2 > 0.0 {
                        if k == m { &mut direct } else { &mut cross }.push(g2.log10());
                    }
                }
            }
        }
        let (node_mu, node_s) = mean_std(&direct);
        let (edge_mu, edge_s) = mean_std(&cross);
        Self {
            node_mu,
            node_s,
            edge_mu,
            edge_s,
        }
    }

    fn angle(gain2: f64, mu: f64, s: f64) -> f64 {
        if gain2 <= 0.0 {
            return 0.0;
        }
        let z = (gain2.log10() - mu) / s;
        (PI / 2.0 + z * ANGLE_PER_STD).clamp(0.0, PI)
    }

    pub fn node_angle(&self, gain2: f64) -> f64 {
        Self::angle(gain2, self.node_mu, self.node_s)
    }

    pub fn edge_angle(&self, gain2: f64) -> f64 {
        Self::angle(gain2, self.edge_mu, self.edge_s)
    }
}

/// Maps a non-negative pair weight into `[0, pi)`; unit weight sits at `pi/2`.
pub fn weight_angle(alpha: f64) -> f64 {
    PI * alpha / (1.0 + alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    n: usize,
    node_features: Vec<[f64; NODE_FEATURES]>,
    /// Row-major, `edge_features[k * n + m]` describes interference from `k` into `m`.
    edge_features: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl InterferenceGraph {
    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn node_features(&self, m: usize) -> &[f64; NODE_FEATURES] {
        &self.node_features[m]
    }

    /// Feature of the ordered edge `k -> m`.
    pub fn edge_feature(&self, k: usize, m: usize) -> f64 {
        self.edge_features[k * self.n + m]
    }

    pub fn neighbors(&self, m: usize) -> &[usize] {
        &self.adjacency[m]
    }

    pub fn degree(&self, m: usize) -> usize {
        self.adjacency[m].len()
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Complete interference graph. Node `m` gets `[phi(|g_mm|^2), weight_angle(alpha_m)]`;
/// the ordered edge `k -> m` gets `phi(|g_km|^2)`.
pub fn build_graph(channels: &ChannelRealization, norm: &FeatureNorm) -> InterferenceGraph {
    let n = channels.pairs();
    let node_features = (0..n)
        .map(|m| [norm.node_angle(channels.gain2(m, m)), weight_angle(channels.alpha()[m])])
        .collect();
    let mut edge_features = vec![0.0; n * n];
    for k in 0..n {
        for m in 0..n {
            if k != m {
                edge_features[k * n + m] = norm.edge_angle(channels.gain2(k, m));
            }
        }
    }
    let adjacency = (0..n).map(|m| (0..n).filter(|&k| k != m).collect()).collect();
    InterferenceGraph {
        n,
        node_features,
        edge_features,
        adjacency,
    }
}

/// A center node with up to `k` sampled neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct StarSubgraph {
    pub center: usize,
    pub leaves: Vec<usize>,
    /// `edge_feats[i]` describes the edge `leaves[i] -> center`.
    pub edge_feats: Vec<f64>,
}

impl StarSubgraph {
    /// Star over `leaves` with edge features read from `graph`.
    pub fn new(graph: &InterferenceGraph, center: usize, leaves: Vec<usize>) -> Self {
        let edge_feats = leaves.iter().map(|&l| graph.edge_feature(l, center)).collect();
        Self {
            center,
            leaves,
            edge_feats,
        }
    }

    pub fn validate(&self, graph: &InterferenceGraph) -> Result<()> {
        Error::check_len(self.leaves.len(), self.edge_feats.len())?;
        if self.center >= graph.nodes() {
            return Err(Error::InvalidArgument(format!(
                "star center {} out of range",
                self.center
            )));
        }
        for (i, &leaf) in self.leaves.iter().enumerate() {
            if leaf == self.center {
                return Err(Error::InvalidArgument(format!(
                    "star {} lists its center as a leaf",
                    self.center
                )));
            }
            if self.leaves[..i].contains(&leaf) {
                return Err(Error::InvalidArgument(format!(
                    "star {} repeats leaf {leaf}",
                    self.center
                )));
            }
            if !graph.neighbors(self.center).contains(&leaf) {
                return Err(Error::InvalidArgument(format!(
                    "leaf {leaf} is not adjacent to center {}",
                    self.center
                )));
            }
        }
        Ok(())
    }
}

/// One star per node, in node order, each with `min(k, degree)` leaves sampled
/// uniformly without replacement from a single RNG stream seeded by `seed`.
pub fn decompose_stars(graph: &InterferenceGraph, k: usize, seed: u64) -> Result<Vec<StarSubgraph>> {
    if k == 0 {
        return Err(Error::InvalidArgument("stars need k >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    Ok((0..graph.nodes())
        .map(|center| {
            let nbrs = graph.neighbors(center);
            let take = k.min(nbrs.len());
            let leaves = index::sample(&mut rng, nbrs.len(), take)
                .into_iter()
                .map(|i| nbrs[i])
                .collect();
            StarSubgraph::new(graph, center, leaves)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, realize_channels, LinkBudget};

    fn channels(pairs: usize, seed: u64) -> ChannelRealization {
        let s = generate_scenario(pairs, 50.0, 2.0, 10.0, seed).unwrap();
        realize_channels(&s, &LinkBudget::default(), seed).unwrap()
    }

    fn fitted(pairs: usize) -> (FeatureNorm, Vec<ChannelRealization>) {
        let set: Vec<_> = (0..20).map(|s| channels(pairs, s)).collect();
        (FeatureNorm::fit(&set), set)
    }

    #[test]
    fn single_node_graph() {
        let (norm, set) = fitted(1);
        let g = build_graph(&set[0], &norm);
        assert_eq!(g.nodes(), 1);
        assert_eq!(g.edge_count(), 0);
        let stars = decompose_stars(&g, 3, 1).unwrap();
        assert_eq!(stars, vec![StarSubgraph::new(&g, 0, vec![])]);
    }

    #[test]
    fn four_nodes_six_edges() {
        let (norm, set) = fitted(4);
        let g = build_graph(&set[0], &norm);
        assert_eq!(g.nodes(), 4);
        assert_eq!(g.edge_count(), 6);
        for m in 0..4 {
            assert_eq!(g.degree(m), 3);
            assert!(!g.neighbors(m).contains(&m));
            for &k in g.neighbors(m) {
                assert!(g.neighbors(k).contains(&m));
            }
        }
    }

    #[test]
    fn features_are_angles() {
        let (norm, set) = fitted(5);
        for ch in &set {
            let g = build_graph(ch, &norm);
            for m in 0..5 {
                assert!(g.node_features(m).iter().all(|a| (0.0..=PI).contains(a)));
                for k in 0..5 {
                    assert!((0.0..=PI).contains(&g.edge_feature(k, m)));
                }
            }
        }
        assert_eq!(weight_angle(1.0), PI / 2.0);
        assert_eq!(norm.node_angle(0.0), 0.0);
        assert_eq!(norm.node_angle(10f64.powf(norm.node_mu)), PI / 2.0);
    }

    #[test]
    fn equal_channels_give_equal_node_features() {
        let rows = vec![vec![0.5; 3]; 3];
        let ch = ChannelRealization::from_real(&rows, 0.01, vec![1.0; 3], 1.0).unwrap();
        let g = build_graph(&ch, &FeatureNorm::fit(std::slice::from_ref(&ch)));
        assert_eq!(g.node_features(0), g.node_features(1));
        assert_eq!(g.node_features(1), g.node_features(2));
    }

    #[test]
    fn full_neighborhood_when_k_covers_degree() {
        let (norm, set) = fitted(4);
        let g = build_graph(&set[0], &norm);
        for seed in 0..20 {
            let stars = decompose_stars(&g, 3, seed).unwrap();
            for (i, s) in stars.iter().enumerate() {
                assert_eq!(s.center, i);
                let mut leaves = s.leaves.clone();
                leaves.sort_unstable();
                assert_eq!(leaves, g.neighbors(i));
            }
        }
    }

    #[test]
    fn coverage_validity_and_determinism() {
        let (norm, set) = fitted(7);
        let g = build_graph(&set[3], &norm);
        for seed in 0..30 {
            let stars = decompose_stars(&g, 2, seed).unwrap();
            assert_eq!(stars.len(), 7);
            let mut centers: Vec<_> = stars.iter().map(|s| s.center).collect();
            centers.sort_unstable();
            assert_eq!(centers, (0..7).collect::<Vec<_>>());
            for s in &stars {
                assert_eq!(s.leaves.len(), 2);
                s.validate(&g).unwrap();
                for (l, e) in s.leaves.iter().zip(&s.edge_feats) {
                    assert_eq!(*e, g.edge_feature(*l, s.center));
                }
            }
            assert_eq!(stars, decompose_stars(&g, 2, seed).unwrap());
        }
        assert!(decompose_stars(&g, 0, 0).is_err());
    }

    #[test]
    fn leaves_are_uniform() {
        let (norm, set) = fitted(4);
        let g = build_graph(&set[0], &norm);
        let trials = 10_000u64;
        let mut counts = [[0usize; 4]; 4];
        for seed in 0..trials {
            for s in decompose_stars(&g, 2, seed).unwrap() {
                for l in s.leaves {
                    counts[s.center][l] += 1;
                }
            }
        }
        for (c, row) in counts.iter().enumerate() {
            for (l, &hits) in row.iter().enumerate() {
                if c != l {
                    let freq = hits as f64 / trials as f64;
                    assert!((freq - 2.0 / 3.0).abs() < 0.02, "center {c} leaf {l}: {freq}");
                }
            }
        }
    }

    #[test]
    fn invalid_stars_are_reported() {
        let (norm, set) = fitted(3);
        let g = build_graph(&set[0], &norm);
        assert!(StarSubgraph::new(&g, 0, vec![1, 1]).validate(&g).is_err());
        assert!(StarSubgraph::new(&g, 0, vec![2]).validate(&g).is_ok());
        let self_leaf = StarSubgraph {
            center: 0,
            leaves: vec![0],
            edge_feats: vec![0.0],
        };
        assert!(self_leaf.validate(&g).is_err());
        let dangling = StarSubgraph {
            center: 5,
            leaves: vec![],
            edge_feats: vec![],
        };
        assert!(dangling.validate(&g).is_err());
        let short = StarSubgraph {
            center: 0,
            leaves: vec![1],
            edge_feats: vec![],
        };
        assert!(short.validate(&g).is_err());
    }
}
