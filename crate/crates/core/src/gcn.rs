//! Classical message-passing GNN baseline.
//!
//! Per layer, the message from `u` to `v` is `MLP_msg([h_u, e_uv])`, messages are
//! combined by elementwise max over neighbors (zero for an isolated node), and the
//! update is `h_v <- MLP_upd([h_v, agg_v])`. Each MLP is two dense layers with ReLU
//! after both. The head maps `h_v` to `p_v = p_max * sigmoid(w . h_v + b)`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{sum_rate_gradient, sum_rate_raw, ChannelRealization, PowerVector};
use crate::error::{Error, Result};
use crate::graph::{InterferenceGraph, NODE_FEATURES};
use crate::qgnn::sigmoid;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Dense {
    fn size(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let w = &params[self.offset..self.offset + self.inputs * self.outputs];
        let b = &params[self.offset + self.inputs * self.outputs..self.offset + self.size()];
        (0..self.outputs)
            .map(|o| {
                let row = &w[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[o]
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let wlen = self.inputs * self.outputs;
        let w = &params[self.offset..self.offset + wlen];
        let mut dx = vec![0.0; self.inputs];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for i in 0..self.inputs {
                grad[self.offset + o * self.inputs + i] += d * x[i];
                dx[i] += d * w[o * self.inputs + i];
            }
            grad[self.offset + wlen + o] += d;
        }
        dx
    }
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

/// Masks `dy` by the ReLU derivative at pre-activation `a`.
fn relu_back(a: &[f64], dy: &[f64]) -> Vec<f64> {
    a.iter().zip(dy).map(|(&a, &d)| if a > 0.0 { d } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    msg1: Dense,
    msg2: Dense,
    upd1: Dense,
    upd2: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnShape {
    pub features: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for GcnShape {
    fn default() -> Self {
        Self {
            features: NODE_FEATURES,
            hidden: 16,
            layers: 2,
        }
    }
}

/// GCN weights stored as one flat vector with per-dense-layer views.
#[derive(Debug, Clone)]
pub struct Gcn {
    shape: GcnShape,
    layers: Vec<LayerShape>,
    head: Dense,
    pub params: Vec<f64>,
}

/// Message MLP activations for one directed edge `source -> v`.
struct EdgeCache {
    source: usize,
    input: Vec<f64>,
    pre1: Vec<f64>,
    pre2: Vec<f64>,
}

/// Activations of one layer kept for the backward pass.
struct LayerCache {
    input: Vec<Vec<f64>>,
    edges: Vec<EdgeCache>,
    /// For each node and hidden unit, the edge index holding the max, if any.
    argmax: Vec<Vec<Option<usize>>>,
    upd_in: Vec<Vec<f64>>,
    upd_a1: Vec<Vec<f64>>,
    upd_a2: Vec<Vec<f64>>,
}

impl Gcn {
    pub fn new(shape: GcnShape) -> Result<Self> {
        if shape.features == 0 || shape.hidden == 0 || shape.layers == 0 {
            return Err(Error::InvalidArgument("GCN needs F, H and L_c all >= 1".into()));
        }
        let mut offset = 0;
        let mut dense = |inputs: usize, outputs: usize| {
            let d = Dense {
                inputs,
                outputs,
                offset,
            };
            offset += d.size();
            d
        };
        let h = shape.hidden;
        let mut layers = Vec::with_capacity(shape.layers);
        for l in 0..shape.layers {
            let d_in = if l == 0 { shape.features } else { h };
            layers.push(LayerShape {
                msg1: dense(d_in + 1, h),
                msg2: dense(h, h),
                upd1: dense(d_in + h, h),
                upd2: dense(h, h),
            });
        }
        let head = dense(h, 1);
        Ok(Self {
            shape,
            layers,
            head,
            params: vec![0.0; offset],
        })
    }

    pub fn with_params(shape: GcnShape, params: Vec<f64>) -> Result<Self> {
        let mut g = Self::new(shape)?;
        Error::check_len(g.params.len(), params.len())?;
        g.params = params;
        Ok(g)
    }

    pub fn init_uniform(&mut self, half_width: f64, seed: u64) {
        let mut rng = seed::rng(seed);
        for p in &mut self.params {
            *p = rng.random_range(-half_width..=half_width);
        }
    }

    pub fn shape(&self) -> GcnShape {
        self.shape
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `w` then `b` of the head layer.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.head.offset..self.head.offset + self.head.size()
    }

    fn check_graph(&self, graph: &InterferenceGraph) -> Result<()> {
        Error::check_len(self.shape.features, NODE_FEATURES)?;
        if graph.nodes() == 0 {
            return Err(Error::InvalidArgument("empty graph".into()));
        }
        Ok(())
    }

    fn run(&self, graph: &InterferenceGraph, mut caches: Option<&mut Vec<LayerCache>>) -> Vec<Vec<f64>> {
        let n = graph.nodes();
        let hidden = self.shape.hidden;
        let mut h: Vec<Vec<f64>> = (0..n).map(|m| graph.node_features(m).to_vec()).collect();
        for shape in &self.layers {
            let mut edges = Vec::new();
            let mut agg = vec![vec![0.0; hidden]; n];
            let mut argmax = vec![vec![None; hidden]; n];
            for v in 0..n {
                for &u in graph.neighbors(v) {
                    let mut x = h[u].clone();
                    x.push(graph.edge_feature(u, v));
                    let a1 = shape.msg1.forward(&self.params, &x);
                    let a2 = shape.msg2.forward(&self.params, &relu(a1.clone()));
                    let msg = relu(a2.clone());
                    let e = edges.len();
                    for j in 0..hidden {
                        if argmax[v][j].is_none() || msg[j] > agg[v][j] {
                            agg[v][j] = msg[j];
                            argmax[v][j] = Some(e);
                        }
                    }
                    edges.push(EdgeCache {
                        source: u,
                        input: x,
                        pre1: a1,
                        pre2: a2,
                    });
                }
            }
            let mut upd_in = Vec::with_capacity(n);
            let mut upd_a1 = Vec::with_capacity(n);
            let mut upd_a2 = Vec::with_capacity(n);
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let mut y = h[v].clone();
                y.extend_from_slice(&agg[v]);
                let c1 = shape.upd1.forward(&self.params, &y);
                let c2 = shape.upd2.forward(&self.params, &relu(c1.clone()));
                next.push(relu(c2.clone()));
                upd_in.push(y);
                upd_a1.push(c1);
                upd_a2.push(c2);
            }
            if let Some(c) = caches.as_deref_mut() {
                c.push(LayerCache {
                    input: h,
                    edges,
                    argmax,
                    upd_in,
                    upd_a1,
                    upd_a2,
                });
            }
            h = next;
        }
        h
    }

    fn head_logits(&self, h: &[Vec<f64>]) -> Vec<f64> {
        h.iter().map(|hv| self.head.forward(&self.params, hv)[0]).collect()
    }

    /// Powers for every node of `graph`.
    pub fn forward(&self, graph: &InterferenceGraph, p_max: f64) -> Result<PowerVector> {
        self.check_graph(graph)?;
        let h = self.run(graph, None);
        let p = self.head_logits(&h).into_iter().map(|o| p_max * sigmoid(o)).collect();
        Ok(PowerVector::new_unchecked(p))
    }

    /// Loss `-weighted_sum_rate` and its reverse-mode gradient over the flat parameters.
    pub fn loss_and_gradient(
        &self,
        graph: &InterferenceGraph,
        channels: &ChannelRealization,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_graph(graph)?;
        Error::check_len(graph.nodes(), channels.pairs())?;
        let n = graph.nodes();
        let p_max = channels.p_max();
        let mut caches = Vec::with_capacity(self.layers.len());
        let h_out = self.run(graph, Some(&mut caches));
        let logits = self.head_logits(&h_out);
        let p: Vec<f64> = logits.iter().map(|&o| p_max * sigmoid(o)).collect();
        let loss = -sum_rate_raw(channels, &p);
        let dp = sum_rate_gradient(channels, &p)?;

        let mut grad = vec![0.0; self.params.len()];
        let mut dh: Vec<Vec<f64>> = (0..n)
            .map(|v| {
                let s = sigmoid(logits[v]);
                let dlogit = -dp[v] * p_max * s * (1.0 - s);
                self.head.backward(&self.params, &h_out[v], &[dlogit], &mut grad)
            })
            .collect();

        for (shape, cache) in self.layers.iter().zip(&caches).rev() {
            let d_in = cache.input[0].len();
            let mut dprev = vec![vec![0.0; d_in]; n];
            let mut dagg = vec![vec![0.0; self.shape.hidden]; n];
            for v in 0..n {
                let d2 = relu_back(&cache.upd_a2[v], &dh[v]);
                let dz1 = shape
                    .upd2
                    .backward(&self.params, &relu(cache.upd_a1[v].clone()), &d2, &mut grad);
                let d1 = relu_back(&cache.upd_a1[v], &dz1);
                let dy = shape.upd1.backward(&self.params, &cache.upd_in[v], &d1, &mut grad);
                for (a, b) in dprev[v].iter_mut().zip(&dy[..d_in]) {
                    *a += b;
                }
                dagg[v].copy_from_slice(&dy[d_in..]);
            }
            let mut dmsg = vec![vec![0.0; self.shape.hidden]; cache.edges.len()];
            for (winners, d) in cache.argmax.iter().zip(&dagg) {
                for (j, e) in winners.iter().enumerate() {
                    if let Some(e) = *e {
                        dmsg[e][j] += d[j];
                    }
                }
            }
            for (edge, d) in cache.edges.iter().zip(&dmsg) {
                if d.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let d2 = relu_back(&edge.pre2, d);
                let dz1 = shape
                    .msg2
                    .backward(&self.params, &relu(edge.pre1.clone()), &d2, &mut grad);
                let d1 = relu_back(&edge.pre1, &dz1);
                let dx = shape.msg1.backward(&self.params, &edge.input, &d1, &mut grad);
                for (a, b) in dprev[edge.source].iter_mut().zip(&dx[..d_in]) {
                    *a += b;
                }
            }
            dh = dprev;
        }
        Ok((loss, grad))
    }
}

/// Summed loss and gradient over a batch of realizations.
pub fn batch_gradient(model: &Gcn, batch: &[(InterferenceGraph, ChannelRealization)]) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.num_params()];
    for (g, ch) in batch {
        let (l, d) = model.loss_and_gradient(g, ch)?;
        loss += l;
        grad.iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}
