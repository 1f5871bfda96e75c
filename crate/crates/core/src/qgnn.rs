//! Quantum graph convolutional layers (QGCL) and the QGNN power model.
//!
//! One QGCL circuit holds a center node, a single leaf, and the edge between them on
//! `2F + 1` qubits:
//!
//! ```text
//! qubits [0, F)     center features   RY(angle) encoding, input slots
//! qubits [F, 2F)    leaf features     RY(angle) encoding, input slots
//! qubit  2F         edge feature      RY(angle) encoding, input slot
//! then `depth` blocks of { RY(theta), RZ(theta) on every qubit; CNOT ring q -> q+1 }
//! ```
//!
//! The layer's message is `<Z_q>` on the center qubits. The trainable angles are shared
//! by every star and every leaf of a layer. A center's new embedding is the mean of
//! its per-leaf messages; a star with no leaves keeps its embedding.
//!
//! Between layers an embedding `h` in `[-1, 1]` is re-encoded as the angle
//! `(h + 1) * pi / 2`. After the last layer the power is
//! `p_m = p_max * sigmoid(decode_scale * h_m[0] + decode_bias)`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{sum_rate_gradient, sum_rate_raw, ChannelRealization, PowerVector};
use crate::error::{Error, Result};
use crate::graph::{decompose_stars, InterferenceGraph, StarSubgraph, NODE_FEATURES};
use crate::qsim::{self, CircuitSpec, Gate, SlotRole, MAX_QUBITS};
use crate::seed;

/// A node embedding: `F` Pauli-Z expectations, each in `[-1, 1]`.
pub type NodeEmbedding = Vec<f64>;

pub fn encode_angle(h: f64) -> f64 {
    (h + 1.0) * FRAC_PI_2
}

/// Inverse of [`encode_angle`].
pub fn decode_angle(angle: f64) -> f64 {
    angle / FRAC_PI_2 - 1.0
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trainable angles per layer: an RY and an RZ on each of the `2F + 1` qubits per block.
pub fn slots_per_layer(features: usize, depth: usize) -> usize {
    depth * (2 * features + 1) * 2
}

pub fn build_qgcl_circuit(features: usize, depth: usize) -> Result<CircuitSpec> {
    if features == 0 || depth == 0 {
        return Err(Error::InvalidArgument("QGCL needs F >= 1 and depth >= 1".into()));
    }
    let n = 2 * features + 1;
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    let mut gates: Vec<Gate> = (0..n).map(|q| Gate::ry(q, q)).collect();
    let mut roles = vec![SlotRole::Input; n];
    for _ in 0..depth {
        for q in 0..n {
            let s = roles.len();
            gates.push(Gate::ry(q, s));
            gates.push(Gate::rz(q, s + 1));
            roles.extend([SlotRole::Trainable; 2]);
        }
        for q in 0..n {
            gates.push(Gate::cnot(q, (q + 1) % n));
        }
    }
    CircuitSpec::new(n, gates, roles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgclLayerParams {
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgnnParams {
    pub layers: Vec<QgclLayerParams>,
    pub decode_scale: f64,
    pub decode_bias: f64,
}

impl QgnnParams {
    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.theta.len()).sum::<usize>() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Layer angles in order, then `decode_scale`, then `decode_bias`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.layers.iter().flat_map(|l| l.theta.iter().copied()).collect();
        flat.push(self.decode_scale);
        flat.push(self.decode_bias);
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        Error::check_len(self.len(), flat.len())?;
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for t in &mut layer.theta {
                *t = it.next().unwrap();
            }
        }
        self.decode_scale = it.next().unwrap();
        self.decode_bias = it.next().unwrap();
        Ok(())
    }
}

/// Runs the shared unitary on one (center, leaf, edge) triple given as angles and
/// returns `<Z_q>` for the `F` center qubits.
pub fn qgcl_message(
    center_angles: &[f64],
    leaf_angles: &[f64],
    edge_angle: f64,
    layer: &QgclLayerParams,
    spec: &CircuitSpec,
) -> Result<Vec<f64>> {
    let features = (spec.qubits() - 1) / 2;
    Error::check_len(features, center_angles.len())?;
    Error::check_len(features, leaf_angles.len())?;
    let angles = circuit_angles(center_angles, leaf_angles, edge_angle, &layer.theta);
    let centers: Vec<usize> = (0..features).collect();
    let state = qsim::run_circuit(spec, &angles)?;
    Ok(centers.iter().map(|&q| state.z_expectation(q)).collect())
}

fn circuit_angles(center: &[f64], leaf: &[f64], edge: f64, theta: &[f64]) -> Vec<f64> {
    let mut angles = Vec::with_capacity(center.len() * 2 + 1 + theta.len());
    angles.extend_from_slice(center);
    angles.extend_from_slice(leaf);
    angles.push(edge);
    angles.extend_from_slice(theta);
    angles
}

fn encode(h: &[f64]) -> Vec<f64> {
    h.iter().map(|&x| encode_angle(x)).collect()
}

/// Mean of `rows`, summed in sorted order per component so the result does not
/// depend on the order the rows arrive in.
fn order_free_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows[0].len();
    let n = rows.len() as f64;
    (0..width)
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / n
        })
        .collect()
}

/// Updates the center of `star` from its leaves.
pub fn qgcl_forward(
    star: &StarSubgraph,
    embeddings: &[NodeEmbedding],
    layer: &QgclLayerParams,
    spec: &CircuitSpec,
) -> Result<NodeEmbedding> {
    if star.leaves.is_empty() {
        return Ok(embeddings[star.center].clone());
    }
    Error::check_len(star.leaves.len(), star.edge_feats.len())?;
    let center = encode(&embeddings[star.center]);
    let messages = star
        .leaves
        .iter()
        .zip(&star.edge_feats)
        .map(|(&l, &e)| qgcl_message(&center, &encode(&embeddings[l]), e, layer, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(order_free_mean(&messages))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Sum,
    Mean,
}

/// Graph-level readout over node embeddings.
pub fn pool(embeddings: &[NodeEmbedding], mode: PoolMode) -> Result<Vec<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot pool zero embeddings".into()))?;
    let mut acc = vec![0.0; first.len()];
    for h in embeddings {
        Error::check_len(acc.len(), h.len())?;
        for (a, x) in acc.iter_mut().zip(h) {
            *a += x;
        }
    }
    if mode == PoolMode::Mean {
        let n = embeddings.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Ok(acc)
}

/// Architecture hyperparameters fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QgnnShape {
    pub features: usize,
    pub layers: usize,
    pub depth: usize,
    pub k: usize,
}

/// A QGNN: circuit layout, star size `k`, and parameters.
#[derive(Debug, Clone)]
pub struct Qgnn {
    shape: QgnnShape,
    spec: CircuitSpec,
    pub params: QgnnParams,
}

/// Per-message Jacobian row block saved during the forward pass.
struct MessageTape {
    leaf: usize,
    /// `jac[s][j] = d message[j] / d angles[s]` for every slot of the circuit.
    jac: Vec<Vec<f64>>,
}

struct ForwardTape {
    /// `embeddings[l]` are the inputs of layer `l`; the last entry is the output.
    embeddings: Vec<Vec<NodeEmbedding>>,
    /// `messages[l][c]` are the leaves of the star centered at `c` in layer `l`.
    messages: Vec<Vec<Vec<MessageTape>>>,
}

impl Qgnn {
    /// A model with all parameters zero.
    pub fn new(shape: QgnnShape) -> Result<Self> {
        if shape.layers == 0 {
            return Err(Error::InvalidArgument("QGNN needs at least one layer".into()));
        }
        if shape.k == 0 {
            return Err(Error::InvalidArgument("QGNN needs k >= 1".into()));
        }
        let spec = build_qgcl_circuit(shape.features, shape.depth)?;
        let per_layer = slots_per_layer(shape.features, shape.depth);
        let params = QgnnParams {
            layers: vec![
                QgclLayerParams {
                    theta: vec![0.0; per_layer]
                };
                shape.layers
            ],
            decode_scale: 0.0,
            decode_bias: 0.0,
        };
        Ok(Self { shape, spec, params })
    }

    pub fn with_params(shape: QgnnShape, params: QgnnParams) -> Result<Self> {
        let mut model = Self::new(shape)?;
        if params.layers.len() != shape.layers {
            return Err(Error::DimensionMismatch {
                expected: shape.layers,
                got: params.layers.len(),
            });
        }
        model.params.set_flat(&params.to_flat())?;
        Ok(model)
    }

    /// Every parameter uniform in `[-half_width, half_width]`.
    pub fn init_uniform(&mut self, half_width: f64, seed: u64) {
        let mut rng = seed::rng(seed);
        let flat: Vec<f64> = (0..self.params.len())
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        self.params.set_flat(&flat).expect("length matches");
    }

    pub fn shape(&self) -> QgnnShape {
        self.shape
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_graph(&self, graph: &InterferenceGraph) -> Result<()> {
        Error::check_len(self.shape.features, NODE_FEATURES)?;
        if graph.nodes() == 0 {
            return Err(Error::InvalidArgument("empty graph".into()));
        }
        Ok(())
    }

    /// Star decompositions for every layer; layer `l` draws from `star_seed + l`.
    pub fn sample_stars(&self, graph: &InterferenceGraph, star_seed: u64) -> Result<Vec<Vec<StarSubgraph>>> {
        (0..self.shape.layers)
            .map(|l| decompose_stars(graph, self.shape.k, star_seed.wrapping_add(l as u64)))
            .collect()
    }

    fn initial_embeddings(graph: &InterferenceGraph) -> Vec<NodeEmbedding> {
        (0..graph.nodes())
            .map(|m| graph.node_features(m).iter().map(|&a| decode_angle(a)).collect())
            .collect()
    }

    fn decode(&self, h: &[NodeEmbedding], p_max: f64) -> Vec<f64> {
        h.iter()
            .map(|e| p_max * sigmoid(self.params.decode_scale * e[0] + self.params.decode_bias))
            .collect()
    }

    /// Forward pass over explicit per-layer stars.
    pub fn forward_with_stars(
        &self,
        graph: &InterferenceGraph,
        stars: &[Vec<StarSubgraph>],
        p_max: f64,
    ) -> Result<(PowerVector, Vec<NodeEmbedding>)> {
        self.check_graph(graph)?;
        self.check_stars(graph, stars)?;
        let mut h = Self::initial_embeddings(graph);
        for (layer, layer_stars) in self.params.layers.iter().zip(stars) {
            let mut next = h.clone();
            for star in layer_stars {
                next[star.center] = qgcl_forward(star, &h, layer, &self.spec)?;
            }
            h = next;
        }
        let p = self.decode(&h, p_max);
        Ok((PowerVector::new_unchecked(p), h))
    }

    fn check_stars(&self, graph: &InterferenceGraph, stars: &[Vec<StarSubgraph>]) -> Result<()> {
        Error::check_len(self.shape.layers, stars.len())?;
        for layer in stars {
            for star in layer {
                star.validate(graph)?;
            }
        }
        Ok(())
    }

    /// Powers and final embeddings with stars sampled from `star_seed`.
    pub fn forward(
        &self,
        graph: &InterferenceGraph,
        star_seed: u64,
        p_max: f64,
    ) -> Result<(PowerVector, Vec<NodeEmbedding>)> {
        let stars = self.sample_stars(graph, star_seed)?;
        self.forward_with_stars(graph, &stars, p_max)
    }

    fn forward_taped(&self, graph: &InterferenceGraph, stars: &[Vec<StarSubgraph>]) -> Result<ForwardTape> {
        let features = self.shape.features;
        let readout: Vec<usize> = (0..features).collect();
        let mut embeddings = vec![Self::initial_embeddings(graph)];
        let mut messages = Vec::with_capacity(stars.len());
        for (layer, layer_stars) in self.params.layers.iter().zip(stars) {
            let h = embeddings.last().unwrap();
            let mut next = h.clone();
            let mut layer_tape: Vec<Vec<MessageTape>> = (0..graph.nodes()).map(|_| Vec::new()).collect();
            for star in layer_stars {
                if star.leaves.is_empty() {
                    continue;
                }
                let center = encode(&h[star.center]);
                let mut values = Vec::with_capacity(star.leaves.len());
                for (&leaf, &edge) in star.leaves.iter().zip(&star.edge_feats) {
                    let angles = circuit_angles(&center, &encode(&h[leaf]), edge, &layer.theta);
                    let (v, jac) = qsim::z_readout_with_jacobian(&self.spec, &angles, &readout);
                    values.push(v);
                    layer_tape[star.center].push(MessageTape { leaf, jac });
                }
                next[star.center] = order_free_mean(&values);
            }
            embeddings.push(next);
            messages.push(layer_tape);
        }
        Ok(ForwardTape { embeddings, messages })
    }

    /// Loss `-weighted_sum_rate` and its exact gradient over all parameters (flat order
    /// of [`QgnnParams::to_flat`]) for explicit per-layer stars.
    pub fn loss_and_gradient_with_stars(
        &self,
        graph: &InterferenceGraph,
        stars: &[Vec<StarSubgraph>],
        channels: &ChannelRealization,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_graph(graph)?;
        self.check_stars(graph, stars)?;
        Error::check_len(graph.nodes(), channels.pairs())?;
        let features = self.shape.features;
        let n_in = 2 * features + 1;
        let per_layer = slots_per_layer(features, self.shape.depth);
        let p_max = channels.p_max();

        let tape = self.forward_taped(graph, stars)?;
        let h_out = tape.embeddings.last().unwrap();
        let p = self.decode(h_out, p_max);
        let loss = -sum_rate_raw(channels, &p);
        let dp: Vec<f64> = sum_rate_gradient(channels, &p)?.into_iter().map(|g| -g).collect();

        let mut grad = vec![0.0; self.num_params()];
        let (scale, bias) = (self.params.decode_scale, self.params.decode_bias);
        let mut dh: Vec<Vec<f64>> = vec![vec![0.0; features]; graph.nodes()];
        for m in 0..graph.nodes() {
            let s = sigmoid(scale * h_out[m][0] + bias);
            let dlogit = dp[m] * p_max * s * (1.0 - s);
            grad[self.num_params() - 2] += dlogit * h_out[m][0];
            grad[self.num_params() - 1] += dlogit;
            dh[m][0] = dlogit * scale;
        }

        for (l, layer_tape) in tape.messages.iter().enumerate().rev() {
            let mut dprev: Vec<Vec<f64>> = vec![vec![0.0; features]; graph.nodes()];
            let dtheta = &mut grad[l * per_layer..(l + 1) * per_layer];
            for star in &stars[l] {
                let c = star.center;
                let msgs = &layer_tape[c];
                if msgs.is_empty() {
                    for (d, g) in dprev[c].iter_mut().zip(&dh[c]) {
                        *d += g;
                    }
                    continue;
                }
                let inv = 1.0 / msgs.len() as f64;
                for msg in msgs {
                    let contract =
                        |s: usize| -> f64 { msg.jac[s].iter().zip(&dh[c]).map(|(j, g)| j * g).sum::<f64>() * inv };
                    for (t, d) in dtheta.iter_mut().enumerate() {
                        *d += contract(n_in + t);
                    }
                    for (i, d) in dprev[c].iter_mut().enumerate() {
                        *d += FRAC_PI_2 * contract(i);
                    }
                    for (i, d) in dprev[msg.leaf].iter_mut().enumerate() {
                        *d += FRAC_PI_2 * contract(features + i);
                    }
                }
            }
            dh = dprev;
        }
        Ok((loss, grad))
    }

    /// Loss and gradient with stars sampled from `star_seed`.
    pub fn loss_and_gradient(
        &self,
        graph: &InterferenceGraph,
        star_seed: u64,
        channels: &ChannelRealization,
    ) -> Result<(f64, Vec<f64>)> {
        let stars = self.sample_stars(graph, star_seed)?;
        self.loss_and_gradient_with_stars(graph, &stars, channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, realize_channels, LinkBudget};
    use crate::graph::{build_graph, FeatureNorm};
    use crate::qsim::{expectation, run_circuit, Observable};

    fn sample(pairs: usize, seed: u64) -> (ChannelRealization, InterferenceGraph) {
        let s = generate_scenario(pairs, 40.0, 2.0, 10.0, seed).unwrap();
        let ch = realize_channels(&s, &LinkBudget::default(), seed).unwrap();
        let norm = FeatureNorm::fit(std::slice::from_ref(&ch));
        let g = build_graph(&ch, &norm);
        (ch, g)
    }

    fn model(layers: usize, depth: usize, k: usize, seed: u64) -> Qgnn {
        let mut m = Qgnn::new(QgnnShape {
            features: 2,
            layers,
            depth,
            k,
        })
        .unwrap();
        m.init_uniform(1.0, seed);
        m
    }

    #[test]
    fn circuit_layout_counts() {
        let spec = build_qgcl_circuit(2, 1).unwrap();
        assert_eq!(spec.qubits(), 5);
        assert_eq!(spec.slots_with_role(SlotRole::Input).len(), 5);
        assert_eq!(spec.slots_with_role(SlotRole::Trainable).len(), 10);
        assert_eq!(build_qgcl_circuit(1, 1).unwrap().qubits(), 3);
        let seven = build_qgcl_circuit(3, 4).unwrap();
        assert_eq!(seven.qubits(), 7);
        assert_eq!(seven.angle_slots(), 7 + slots_per_layer(3, 4));
        assert!(matches!(build_qgcl_circuit(10, 1), Err(Error::TooManyQubits(21))));
        assert!(build_qgcl_circuit(0, 1).is_err());
    }

    #[test]
    fn zero_angles_give_plus_one() {
        let spec = build_qgcl_circuit(2, 2).unwrap();
        let layer = QgclLayerParams {
            theta: vec![0.0; slots_per_layer(2, 2)],
        };
        let m = qgcl_message(&[0.0, 0.0], &[0.0, 0.0], 0.0, &layer, &spec).unwrap();
        assert_eq!(m, vec![1.0, 1.0]);
    }

    #[test]
    fn message_matches_direct_simulation() {
        let spec = build_qgcl_circuit(2, 1).unwrap();
        let mut rng = seed::rng(5);
        let theta: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let layer = QgclLayerParams { theta: theta.clone() };
        let (c, l, e) = ([0.3, 2.0], [1.1, 0.7], 2.5);
        let msg = qgcl_message(&c, &l, e, &layer, &spec).unwrap();
        let mut angles = vec![0.3, 2.0, 1.1, 0.7, 2.5];
        angles.extend(theta);
        let state = run_circuit(&spec, &angles).unwrap();
        for (q, &m) in msg.iter().enumerate() {
            assert!((-1.0..=1.0).contains(&m));
            assert_eq!(m, expectation(&state, &Observable::z(q)).unwrap());
        }
    }

    #[test]
    fn empty_star_keeps_center() {
        let (_, g) = sample(3, 1);
        let m = model(1, 1, 2, 1);
        let h = vec![vec![0.2, -0.3], vec![0.5, 0.5], vec![-1.0, 1.0]];
        let star = StarSubgraph::new(&g, 1, vec![]);
        assert_eq!(qgcl_forward(&star, &h, &m.params.layers[0], m.circuit()).unwrap(), h[1]);
    }

    #[test]
    fn duplicate_leaf_equals_single_leaf() {
        let m = model(1, 2, 2, 3);
        let h = vec![vec![0.2, -0.3], vec![0.5, 0.1]];
        let one = StarSubgraph {
            center: 0,
            leaves: vec![1],
            edge_feats: vec![0.9],
        };
        let two = StarSubgraph {
            center: 0,
            leaves: vec![1, 1],
            edge_feats: vec![0.9, 0.9],
        };
        let a = qgcl_forward(&one, &h, &m.params.layers[0], m.circuit()).unwrap();
        let b = qgcl_forward(&two, &h, &m.params.layers[0], m.circuit()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leaf_order_is_irrelevant() {
        let (_, g) = sample(6, 2);
        let m = model(1, 2, 5, 4);
        let h: Vec<NodeEmbedding> = (0..6)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let star = StarSubgraph::new(&g, 0, vec![1, 2, 3, 4, 5]);
        let base = qgcl_forward(&star, &h, &m.params.layers[0], m.circuit()).unwrap();
        let mut rng = seed::rng(7);
        for _ in 0..20 {
            let mut pairs: Vec<(usize, f64)> = star
                .leaves
                .iter()
                .copied()
                .zip(star.edge_feats.iter().copied())
                .collect();
            for i in (1..pairs.len()).rev() {
                pairs.swap(i, rng.random_range(0..=i));
            }
            let shuffled = StarSubgraph {
                center: 0,
                leaves: pairs.iter().map(|p| p.0).collect(),
                edge_feats: pairs.iter().map(|p| p.1).collect(),
            };
            let out = qgcl_forward(&shuffled, &h, &m.params.layers[0], m.circuit()).unwrap();
            assert_eq!(out, base);
            assert!(out.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn lone_node_depends_only_on_own_features() {
        let (ch, g) = sample(1, 3);
        let m = model(1, 1, 2, 9);
        let (p, h) = m.forward(&g, 0, ch.p_max()).unwrap();
        let h0 = decode_angle(g.node_features(0)[0]);
        assert_close!(h[0][0], h0, 1e-15);
        let expected = sigmoid(m.params.decode_scale * h0 + m.params.decode_bias);
        assert_close!(p.as_slice()[0], expected, 1e-15);
    }

    #[test]
    fn powers_strictly_inside_box() {
        for seed in 0..10 {
            let (ch, g) = sample(5, seed);
            let m = model(2, 1, 2, seed);
            let (p, h) = m.forward(&g, seed, ch.p_max()).unwrap();
            assert!(p.as_slice().iter().all(|&x| x > 0.0 && x < ch.p_max()));
            assert!(h.iter().flatten().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let (ch, g) = sample(4, 8);
        let m = model(2, 2, 2, 8);
        let a = m.forward(&g, 77, ch.p_max()).unwrap();
        let b = m.forward(&g, 77, ch.p_max()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_count_ignores_graph_size() {
        for (layers, depth) in [(1, 1), (2, 2), (3, 1)] {
            let expected = layers * slots_per_layer(2, depth) + 2;
            for k in 1..5 {
                let m = Qgnn::new(QgnnShape {
                    features: 2,
                    layers,
                    depth,
                    k,
                })
                .unwrap();
                assert_eq!(m.num_params(), expected);
            }
        }
    }

    #[test]
    fn relabeled_graph_permutes_powers() {
        let (ch, g) = sample(4, 12);
        let m = model(2, 1, 2, 12);
        let stars = m.sample_stars(&g, 5).unwrap();
        let (p, _) = m.forward_with_stars(&g, &stars, 1.0).unwrap();

        let perm = [2, 0, 3, 1];
        let mut inv = [0; 4];
        for (i, &src) in perm.iter().enumerate() {
            inv[src] = i;
        }
        let pch = ch.permuted(&perm).unwrap();
        let pg = build_graph(&pch, &FeatureNorm::fit(std::slice::from_ref(&ch)));
        let pstars: Vec<Vec<StarSubgraph>> = stars
            .iter()
            .map(|layer| {
                (0..4)
                    .map(|i| {
                        let src = &layer[perm[i]];
                        StarSubgraph::new(&pg, i, src.leaves.iter().map(|&l| inv[l]).collect())
                    })
                    .collect()
            })
            .collect();
        let (pp, _) = m.forward_with_stars(&pg, &pstars, 1.0).unwrap();
        for (i, &old) in perm.iter().enumerate() {
            assert_eq!(pp.as_slice()[i], p.as_slice()[old]);
        }
    }

    fn fd_gradient(m: &Qgnn, g: &InterferenceGraph, stars: &[Vec<StarSubgraph>], ch: &ChannelRealization) -> Vec<f64> {
        let base = m.params.to_flat();
        let h = 1e-5;
        (0..base.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut q = m.clone();
                    let mut flat = base.clone();
                    flat[i] += delta;
                    q.params.set_flat(&flat).unwrap();
                    let (p, _) = q.forward_with_stars(g, stars, ch.p_max()).unwrap();
                    -sum_rate_raw(ch, p.as_slice())
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn single_node_gradient_matches_finite_differences() {
        let (ch, g) = sample(1, 4);
        let m = model(1, 1, 1, 4);
        let stars = m.sample_stars(&g, 0).unwrap();
        let (loss, grad) = m.loss_and_gradient_with_stars(&g, &stars, &ch).unwrap();
        let (p, _) = m.forward_with_stars(&g, &stars, ch.p_max()).unwrap();
        assert_eq!(loss, -sum_rate_raw(&ch, p.as_slice()));
        let fd = fd_gradient(&m, &g, &stars, &ch);
        // circuit angles never reach a lone node's power
        assert!(grad[..grad.len() - 2].iter().all(|&x| x == 0.0));
        for (a, b) in grad.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_decode_scale_blocks_circuit_gradient() {
        let (ch, g) = sample(3, 6);
        let mut m = model(2, 1, 2, 6);
        m.params.decode_scale = 0.0;
        let (_, grad) = m.loss_and_gradient(&g, 3, &ch).unwrap();
        let n = grad.len();
        assert!(grad[..n - 2].iter().all(|&x| x == 0.0));
        assert!(grad[n - 1] != 0.0);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let (ch, g) = sample(4, 10);
        let m = model(2, 2, 2, 10);
        let stars = m.sample_stars(&g, 19).unwrap();
        let (_, grad) = m.loss_and_gradient_with_stars(&g, &stars, &ch).unwrap();
        let fd = fd_gradient(&m, &g, &stars, &ch);
        let err = max_rel_err(&grad, &fd);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn pool_modes() {
        let h = vec![vec![0.25, -0.5]];
        assert_eq!(pool(&h, PoolMode::Sum).unwrap(), h[0]);
        assert_eq!(pool(&h, PoolMode::Mean).unwrap(), h[0]);
        let pair = vec![vec![0.3, -0.7], vec![-0.3, 0.7]];
        assert_eq!(pool(&pair, PoolMode::Mean).unwrap(), vec![0.0, 0.0]);
        let three = vec![vec![0.1, 0.2], vec![0.3, -0.4], vec![-0.5, 0.6]];
        let s = pool(&three, PoolMode::Sum).unwrap();
        assert_close!(s[0], -0.1, 1e-15);
        assert_close!(s[1], 0.4, 1e-15);
        assert!(pool(&[], PoolMode::Sum).is_err());
    }
}
