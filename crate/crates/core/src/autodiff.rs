//! Minimal reverse-mode differentiation over a fixed, topologically ordered
//! graph of vector primitives.
//!
//! A graph reads one input vector and produces either a scalar
//! ([`ComputeGraph`]) or a vector of logits ([`LogitNetwork`]). Evaluation is
//! pure: every call allocates its own scratch buffers, so a graph can be
//! shared freely between threads.

use crate::error::{Error, Result};
use crate::tensor::FeatureVector;

/// Handle to a node inside a graph under construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    /// `y = W x + b` with `W` stored row-major, `bias.len()` rows.
    Affine {
        src: NodeId,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Select {
        src: NodeId,
        index: usize,
    },
    /// Weighted sum of equally sized nodes.
    Combine(Vec<(f64, NodeId)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: Op,
    pub dim: usize,
    pub name: Option<String>,
}

/// Something with an exact input gradient.
pub trait DifferentiableModel: Sync {
    fn input_dim(&self) -> usize;

    fn value(&self, x: &FeatureVector) -> Result<f64>;

    fn value_and_gradient(&self, x: &FeatureVector) -> Result<(f64, FeatureVector)>;

    fn gradient(&self, x: &FeatureVector) -> Result<FeatureVector> {
        self.value_and_gradient(x).map(|(_, g)| g)
    }
}

#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            nodes: vec![Node {
                op: Op::Input,
                dim: input_dim,
                name: Some("input".into()),
            }],
        }
    }

    pub fn input(&self) -> NodeId {
        NodeId(0)
    }

    pub fn dim(&self, id: NodeId) -> Result<usize> {
        self.nodes
            .get(id.0)
            .map(|n| n.dim)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown node {}", id.0)))
    }

    fn push(&mut self, op: Op, dim: usize) -> NodeId {
        self.nodes.push(Node { op, dim, name: None });
        NodeId(self.nodes.len() - 1)
    }

    /// Attaches a name to a node; affine names prefix parameter names.
    pub fn name(&mut self, id: NodeId, name: impl Into<String>) -> Result<()> {
        self.dim(id)?;
        self.nodes[id.0].name = Some(name.into());
        Ok(())
    }

    pub fn affine(&mut self, src: NodeId, weight: Vec<f64>, bias: Vec<f64>) -> Result<NodeId> {
        let in_dim = self.dim(src)?;
        let out_dim = bias.len();
        if out_dim == 0 {
            return Err(Error::InvalidGraph("affine node with zero outputs".into()));
        }
        if weight.len() != out_dim * in_dim {
            return Err(Error::InvalidGraph(format!(
                "affine weight has {} entries, expected {}x{}",
                weight.len(),
                out_dim,
                in_dim
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("non-finite affine parameter".into()));
        }
        Ok(self.push(Op::Affine { src, weight, bias }, out_dim))
    }

    pub fn relu(&mut self, src: NodeId) -> Result<NodeId> {
        let d = self.dim(src)?;
        Ok(self.push(Op::Relu(src), d))
    }

    pub fn tanh(&mut self, src: NodeId) -> Result<NodeId> {
        let d = self.dim(src)?;
        Ok(self.push(Op::Tanh(src), d))
    }

    pub fn sigmoid(&mut self, src: NodeId) -> Result<NodeId> {
        let d = self.dim(src)?;
        Ok(self.push(Op::Sigmoid(src), d))
    }

    pub fn softmax(&mut self, src: NodeId) -> Result<NodeId> {
        let d = self.dim(src)?;
        Ok(self.push(Op::Softmax(src), d))
    }

    pub fn select(&mut self, src: NodeId, index: usize) -> Result<NodeId> {
        let d = self.dim(src)?;
        if index >= d {
            return Err(Error::InvalidGraph(format!(
                "select index {index} out of range for node of dimension {d}"
            )));
        }
        Ok(self.push(Op::Select { src, index }, 1))
    }

    pub fn combine(&mut self, terms: Vec<(f64, NodeId)>) -> Result<NodeId> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidGraph("empty combine".into()))?;
        let d = self.dim(first.1)?;
        for &(c, id) in &terms {
            if self.dim(id)? != d {
                return Err(Error::InvalidGraph("combine over mismatched dimensions".into()));
            }
            if !c.is_finite() {
                return Err(Error::InvalidGraph("non-finite combine coefficient".into()));
            }
        }
        Ok(self.push(Op::Combine(terms), d))
    }

    /// Splices `graph` into this builder with `src` standing in for its input
    /// and returns the id of the spliced output.
    pub fn append(&mut self, graph: &ComputeGraph, src: NodeId) -> Result<NodeId> {
        self.append_tape(&graph.tape, src)
    }

    pub fn append_logits(&mut self, network: &LogitNetwork, src: NodeId) -> Result<NodeId> {
        self.append_tape(&network.tape, src)
    }

    fn append_tape(&mut self, tape: &Tape, src: NodeId) -> Result<NodeId> {
        if self.dim(src)? != tape.input_dim() {
            return Err(Error::InvalidGraph(format!(
                "cannot splice graph with input dimension {} onto node of dimension {}",
                tape.input_dim(),
                self.dim(src)?
            )));
        }
        let offset = self.nodes.len() - 1;
        let remap = |id: NodeId| if id.0 == 0 { src } else { NodeId(id.0 + offset) };
        for node in &tape.nodes[1..] {
            let op = match &node.op {
                Op::Input => unreachable!("input appears only at index 0"),
                Op::Affine { src, weight, bias } => Op::Affine {
                    src: remap(*src),
                    weight: weight.clone(),
                    bias: bias.clone(),
                },
                Op::Relu(s) => Op::Relu(remap(*s)),
                Op::Tanh(s) => Op::Tanh(remap(*s)),
                Op::Sigmoid(s) => Op::Sigmoid(remap(*s)),
                Op::Softmax(s) => Op::Softmax(remap(*s)),
                Op::Select { src, index } => Op::Select {
                    src: remap(*src),
                    index: *index,
                },
                Op::Combine(terms) => Op::Combine(terms.iter().map(|&(c, s)| (c, remap(s))).collect()),
            };
            self.nodes.push(Node {
                op,
                dim: node.dim,
                name: node.name.clone(),
            });
        }
        Ok(NodeId(tape.output.0 + offset))
    }

    fn into_tape(mut self, output: NodeId) -> Result<Tape> {
        self.dim(output)?;
        if self.nodes[0].dim == 0 {
            return Err(Error::InvalidGraph("graph input has dimension 0".into()));
        }
        // nodes past the output never influence it
        self.nodes.truncate(output.0 + 1);
        Ok(Tape {
            nodes: self.nodes,
            output,
        })
    }

    /// Finalizes a graph whose designated output is a scalar.
    pub fn finish(self, output: NodeId) -> Result<ComputeGraph> {
        let d = self.dim(output)?;
        if d != 1 {
            return Err(Error::InvalidGraph(format!(
                "output node must be scalar, has dimension {d}"
            )));
        }
        Ok(ComputeGraph {
            tape: self.into_tape(output)?,
        })
    }

    /// Finalizes a graph whose output node holds a vector of logits.
    pub fn finish_logits(self, output: NodeId) -> Result<LogitNetwork> {
        Ok(LogitNetwork {
            tape: self.into_tape(output)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tape {
    nodes: Vec<Node>,
    output: NodeId,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

impl Tape {
    fn input_dim(&self) -> usize {
        self.nodes[0].dim
    }

    fn output_dim(&self) -> usize {
        self.nodes[self.output.0].dim
    }

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn evaluate(&self, x: &FeatureVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let out = match &node.op {
                Op::Input => x.values().to_vec(),
                Op::Affine { src, weight, bias } => {
                    let input = &values[src.0];
                    let n_in = input.len();
                    bias.iter()
                        .enumerate()
                        .map(|(r, b)| {
                            let row = &weight[r * n_in..(r + 1) * n_in];
                            row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b
                        })
                        .collect()
                }
                Op::Relu(s) => values[s.0].iter().map(|&v| v.max(0.0)).collect(),
                Op::Tanh(s) => values[s.0].iter().map(|v| v.tanh()).collect(),
                Op::Sigmoid(s) => values[s.0].iter().map(|&v| sigmoid(v)).collect(),
                Op::Softmax(s) => softmax(&values[s.0]),
                Op::Select { src, index } => vec![values[src.0][*index]],
                Op::Combine(terms) => {
                    let mut acc = vec![0.0; node.dim];
                    for &(c, s) in terms {
                        for (a, v) in acc.iter_mut().zip(&values[s.0]) {
                            *a += c * v;
                        }
                    }
                    acc
                }
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { node: i });
            }
            values.push(out);
        }
        Ok(values)
    }

    /// Pulls `seed` (the adjoint of the output node) back to the input.
    fn backward(&self, values: &[Vec<f64>], seed: Vec<f64>) -> Result<Vec<f64>> {
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.dim]).collect();
        adj[self.output.0] = seed;
        for i in (1..self.nodes.len()).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { node: i });
            }
            match &self.nodes[i].op {
                Op::Input => unreachable!(),
                Op::Affine { src, weight, .. } => {
                    let n_in = self.nodes[src.0].dim;
                    let target = &mut adj[src.0];
                    for (r, gr) in g.iter().enumerate() {
                        let row = &weight[r * n_in..(r + 1) * n_in];
                        for (t, w) in target.iter_mut().zip(row) {
                            *t += w * gr;
                        }
                    }
                }
                Op::Relu(s) => {
                    // subgradient at exactly 0 is 0
                    for ((t, gi), v) in adj[s.0].iter_mut().zip(&g).zip(&values[s.0]) {
                        if *v > 0.0 {
                            *t += gi;
                        }
                    }
                }
                Op::Tanh(s) => {
                    for ((t, gi), y) in adj[s.0].iter_mut().zip(&g).zip(&values[i]) {
                        *t += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(s) => {
                    for ((t, gi), y) in adj[s.0].iter_mut().zip(&g).zip(&values[i]) {
                        *t += gi * (y * (1.0 - y));
                    }
                }
                Op::Softmax(s) => {
                    let y = &values[i];
                    let inner: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for ((t, gi), yi) in adj[s.0].iter_mut().zip(&g).zip(y) {
                        *t += yi * (gi - inner);
                    }
                }
                Op::Select { src, index } => {
                    adj[src.0][*index] += g[0];
                }
                Op::Combine(terms) => {
                    for &(c, s) in terms {
                        for (t, gi) in adj[s.0].iter_mut().zip(&g) {
                            *t += c * gi;
                        }
                    }
                }
            }
        }
        let grad = std::mem::take(&mut adj[0]);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { node: 0 });
        }
        Ok(grad)
    }
}

/// A scalar-valued differentiable function of one input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeGraph {
    tape: Tape,
}

impl ComputeGraph {
    pub fn input_dim(&self) -> usize {
        self.tape.input_dim()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.tape.nodes
    }

    pub fn output(&self) -> NodeId {
        self.tape.output
    }

    /// Named parameter arrays, `"<node name>.weight"` / `"<node name>.bias"`
    /// (falling back to `node<i>` for unnamed affine nodes).
    pub fn parameters(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, node) in self.tape.nodes.iter().enumerate() {
            if let Op::Affine { weight, bias, .. } = &node.op {
                let name = node.name.clone().unwrap_or_else(|| format!("node{i}"));
                out.push((format!("{name}.weight"), weight.as_slice()));
                out.push((format!("{name}.bias"), bias.as_slice()));
            }
        }
        out
    }

    pub fn forward(&self, x: &FeatureVector) -> Result<f64> {
        let values = self.tape.evaluate(x)?;
        Ok(values[self.tape.output.0][0])
    }

    pub fn gradient(&self, x: &FeatureVector) -> Result<FeatureVector> {
        self.forward_with_gradient(x).map(|(_, g)| g)
    }

    /// Returns `F(x)` together with `∇F(x)` from a single forward pass.
    pub fn forward_with_gradient(&self, x: &FeatureVector) -> Result<(f64, FeatureVector)> {
        let values = self.tape.evaluate(x)?;
        let f = values[self.tape.output.0][0];
        let grad = self.tape.backward(&values, vec![1.0])?;
        Ok((f, x.map_values(grad)?))
    }

    /// Output multiplied by a constant, as a new graph.
    pub fn scaled(&self, factor: f64) -> Result<ComputeGraph> {
        let mut b = GraphBuilder::new(self.input_dim());
        let out = b.append(self, b.input())?;
        let scaled = b.combine(vec![(factor, out)])?;
        b.finish(scaled)
    }
}

impl DifferentiableModel for ComputeGraph {
    fn input_dim(&self) -> usize {
        ComputeGraph::input_dim(self)
    }

    fn value(&self, x: &FeatureVector) -> Result<f64> {
        self.forward(x)
    }

    fn value_and_gradient(&self, x: &FeatureVector) -> Result<(f64, FeatureVector)> {
        self.forward_with_gradient(x)
    }
}

/// A graph whose output is a vector of class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitNetwork {
    tape: Tape,
}

impl LogitNetwork {
    pub fn input_dim(&self) -> usize {
        self.tape.input_dim()
    }

    pub fn n_logits(&self) -> usize {
        self.tape.output_dim()
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        let mut values = self.tape.evaluate(x)?;
        Ok(values.swap_remove(self.tape.output.0))
    }

    pub fn probabilities(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Index of the largest logit (lowest index on ties).
    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    fn check_target(&self, t: usize) -> Result<()> {
        if t >= self.n_logits() {
            return Err(Error::Precondition(format!(
                "target index {t} out of range for {} logits",
                self.n_logits()
            )));
        }
        Ok(())
    }

    /// `F(x) = logits(x)[t]`.
    pub fn target_logit(&self, t: usize) -> Result<ComputeGraph> {
        self.check_target(t)?;
        let mut b = GraphBuilder::new(self.input_dim());
        let z = b.append_logits(self, b.input())?;
        let out = b.select(z, t)?;
        b.finish(out)
    }

    /// `F(x) = softmax(logits(x))[t]`.
    pub fn target_probability(&self, t: usize) -> Result<ComputeGraph> {
        self.check_target(t)?;
        let mut b = GraphBuilder::new(self.input_dim());
        let z = b.append_logits(self, b.input())?;
        let s = b.softmax(z)?;
        let out = b.select(s, t)?;
        b.finish(out)
    }
}

/// Maximum relative deviation between the reverse-mode gradient and central
/// finite differences with step `fd_step`. The relative deviation of one
/// feature is `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn gradcheck<M: DifferentiableModel + ?Sized>(
    model: &M,
    x: &FeatureVector,
    fd_step: f64,
) -> Result<f64> {
    if !(fd_step > 0.0) || !fd_step.is_finite() {
        return Err(Error::Precondition(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let analytic = model.gradient(x)?;
    let mut worst = 0.0_f64;
    let mut probe = x.values().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + fd_step;
        let plus = model.value(&x.map_values(probe.clone())?)?;
        probe[i] = orig - fd_step;
        let minus = model.value(&x.map_values(probe.clone())?)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * fd_step);
        let a = analytic.values()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
