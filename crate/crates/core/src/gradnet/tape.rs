//! The recording tape and its operations.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward target must be a single scalar, got {0} elements")]
    NotScalar(usize),
}

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Generalized logistic squash `g(h) = 1 / (1 + q * exp(-steepness * h))`.
/// With `q = 25` and `steepness = 10` this is a sharp differentiable
/// approximation of the "is positive" indicator: `g(0) = 1/26`, `g(1) ≈ 1`.
#[inline]
pub fn generalized_logistic(h: f64, q: f64, steepness: f64) -> f64 {
    1.0 / (1.0 + q * (-steepness * h).exp())
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Reshape(NodeId),
    Sum(NodeId),
    Max(NodeId),
    L1Distance(NodeId, NodeId),
    // q only shapes the forward value; the derivative needs just the
    // output and the steepness.
    GeneralizedLogistic {
        input: NodeId,
        steepness: f64,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: (usize, usize),
        padding: (usize, usize),
    },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

impl Node {
    fn new(shape: Vec<usize>, value: Vec<f64>, op: Op) -> Self {
        let grad = vec![0.0; value.len()];
        Self {
            shape,
            value,
            grad,
            op,
        }
    }
}

/// Append-only computation record. Values are computed eagerly on each op
/// call; gradients are filled in by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn value_scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node::new(shape, value, op));
        NodeId(self.nodes.len() - 1)
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, shape: &[usize], values: &[f64]) -> Result<NodeId, GradError> {
        if element_count(shape) != values.len() {
            return Err(GradError::ShapeMismatch(format!(
                "leaf shape {:?} holds {} elements, got {} values",
                shape,
                element_count(shape),
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values.to_vec(), Op::Leaf))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.push(vec![1], vec![value], Op::Leaf)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), GradError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(GradError::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape(a, b, "add")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape(a, b, "sub")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape(a, b, "mul")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        self.push(self.nodes[a.0].shape.clone(), value, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        self.push(self.nodes[a.0].shape.clone(), value, Op::Relu(a))
    }

    /// Reinterpret the value buffer under a new shape of equal size.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, GradError> {
        if element_count(shape) != self.nodes[a.0].value.len() {
            return Err(GradError::ShapeMismatch(format!(
                "reshape to {:?} changes element count",
                shape
            )));
        }
        let value = self.nodes[a.0].value.clone();
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a)))
    }

    /// Sum of all elements; scalar output.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].value.iter().sum();
        self.push(vec![1], vec![total], Op::Sum(a))
    }

    /// Maximum element; scalar output. The gradient flows to the first
    /// maximal element in storage order.
    pub fn max(&mut self, a: NodeId) -> NodeId {
        let m = self
            .nodes[a.0]
            .value
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.push(vec![1], vec![m], Op::Max(a))
    }

    /// Sum of absolute elementwise differences; scalar output.
    pub fn l1_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape(a, b, "l1_distance")?;
        let total: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| (x - y).abs())
            .sum();
        Ok(self.push(vec![1], vec![total], Op::L1Distance(a, b)))
    }

    /// Elementwise generalized logistic squash.
    pub fn generalized_logistic(&mut self, a: NodeId, q: f64, steepness: f64) -> NodeId {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|x| generalized_logistic(*x, q, steepness))
            .collect();
        self.push(
            self.nodes[a.0].shape.clone(),
            value,
            Op::GeneralizedLogistic {
                input: a,
                steepness,
            },
        )
    }

    /// Dense map `out = weight * input (+ bias)`.
    /// `input: [n]`, `weight: [m, n]`, `bias: [m]`, output `[m]`.
    pub fn linear(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    ) -> Result<NodeId, GradError> {
        let in_shape = &self.nodes[input.0].shape;
        let w_shape = &self.nodes[weight.0].shape;
        if in_shape.len() != 1 || w_shape.len() != 2 || w_shape[1] != in_shape[0] {
            return Err(GradError::ShapeMismatch(format!(
                "linear: input {:?} weight {:?}",
                in_shape, w_shape
            )));
        }
        let (m, n) = (w_shape[0], w_shape[1]);
        if let Some(b) = bias {
            if self.nodes[b.0].shape != [m] {
                return Err(GradError::ShapeMismatch(format!(
                    "linear bias {:?} does not match output [{m}]",
                    self.nodes[b.0].shape
                )));
            }
        }
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let mut value = vec![0.0; m];
        for (row, out) in value.iter_mut().enumerate() {
            let mut acc = 0.0;
            let base = row * n;
            for j in 0..n {
                acc += w[base + j] * x[j];
            }
            *out = acc;
        }
        if let Some(b) = bias {
            for (out, bv) in value.iter_mut().zip(&self.nodes[b.0].value) {
                *out += bv;
            }
        }
        Ok(self.push(vec![m], value, Op::Linear { input, weight, bias }))
    }

    /// 2D cross-correlation with zero padding.
    /// `input: [c_in, h, w]`, `weight: [c_out, c_in, kh, kw]`,
    /// `bias: [c_out]`; output extent is
    /// `floor((in + 2 * pad - k) / stride) + 1` per axis.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<NodeId, GradError> {
        let in_shape = self.nodes[input.0].shape.clone();
        let w_shape = self.nodes[weight.0].shape.clone();
        if in_shape.len() != 3 || w_shape.len() != 4 {
            return Err(GradError::ShapeMismatch(format!(
                "conv2d: input {:?} weight {:?}",
                in_shape, w_shape
            )));
        }
        let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        let (c_out, wc_in, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
        if wc_in != c_in {
            return Err(GradError::ShapeMismatch(format!(
                "conv2d: input has {c_in} channels, kernel expects {wc_in}"
            )));
        }
        let (sh, sw) = stride;
        let (ph, pw) = padding;
        if sh == 0 || sw == 0 {
            return Err(GradError::ShapeMismatch("conv2d: zero stride".into()));
        }
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(GradError::ShapeMismatch(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * ph,
                w + 2 * pw
            )));
        }
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;
        if let Some(b) = bias {
            if self.nodes[b.0].shape != [c_out] {
                return Err(GradError::ShapeMismatch(format!(
                    "conv2d bias {:?} does not match [{c_out}]",
                    self.nodes[b.0].shape
                )));
            }
        }

        let x = &self.nodes[input.0].value;
        let k = &self.nodes[weight.0].value;
        let mut value = vec![0.0; c_out * oh * ow];
        for oc in 0..c_out {
            let bias_v = bias.map_or(0.0, |b| self.nodes[b.0].value[oc]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias_v;
                    for ic in 0..c_in {
                        for ky in 0..kh {
                            let iy = (oy * sh + ky) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += x[(ic * h + iy as usize) * w + ix as usize]
                                    * k[((oc * c_in + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    value[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Ok(self.push(
            vec![c_out, oh, ow],
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    /// Reverse sweep from `loss` (which must hold exactly one element),
    /// adding this pass's adjoints into the persistent per-node gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GradError> {
        let count = self.nodes[loss.0].value.len();
        if count != 1 {
            return Err(GradError::NotScalar(count));
        }

        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if adj[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            // Adjoints flow strictly from later nodes to earlier ones, so
            // adj[i] is complete here; take it out to sidestep aliasing and
            // put it back afterwards for the final accumulation.
            let g = std::mem::take(&mut adj[i]);
            match self.nodes[i].op.clone() {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for (dst, src) in adj[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in adj[b.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Sub(a, b) => {
                    for (dst, src) in adj[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in adj[b.0].iter_mut().zip(&g) {
                        *dst -= src;
                    }
                }
                Op::Mul(a, b) => {
                    for j in 0..g.len() {
                        adj[a.0][j] += g[j] * self.nodes[b.0].value[j];
                    }
                    for j in 0..g.len() {
                        adj[b.0][j] += g[j] * self.nodes[a.0].value[j];
                    }
                }
                Op::Scale(a, c) => {
                    for (dst, src) in adj[a.0].iter_mut().zip(&g) {
                        *dst += src * c;
                    }
                }
                Op::Relu(a) => {
                    for j in 0..g.len() {
                        if self.nodes[a.0].value[j] > 0.0 {
                            adj[a.0][j] += g[j];
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (dst, src) in adj[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Sum(a) => {
                    for dst in adj[a.0].iter_mut() {
                        *dst += g[0];
                    }
                }
                Op::Max(a) => {
                    let vals = &self.nodes[a.0].value;
                    let mut arg = 0;
                    for (j, v) in vals.iter().enumerate() {
                        if *v > vals[arg] {
                            arg = j;
                        }
                    }
                    adj[a.0][arg] += g[0];
                }
                Op::L1Distance(a, b) => {
                    for j in 0..self.nodes[a.0].value.len() {
                        let d = self.nodes[a.0].value[j] - self.nodes[b.0].value[j];
                        let s = if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        adj[a.0][j] += g[0] * s;
                        adj[b.0][j] -= g[0] * s;
                    }
                }
                Op::GeneralizedLogistic {
                    input, steepness
                } => {
                    for j in 0..g.len() {
                        let y = self.nodes[i].value[j];
                        adj[input.0][j] += g[j] * steepness * y * (1.0 - y);
                    }
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let n = self.nodes[input.0].value.len();
                    for (row, gv) in g.iter().enumerate() {
                        let base = row * n;
                        for j in 0..n {
                            adj[input.0][j] += gv * self.nodes[weight.0].value[base + j];
                        }
                        for j in 0..n {
                            adj[weight.0][base + j] += gv * self.nodes[input.0].value[j];
                        }
                    }
                    if let Some(b) = bias {
                        for (dst, gv) in adj[b.0].iter_mut().zip(&g) {
                            *dst += gv;
                        }
                    }
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride: (sh, sw),
                    padding: (ph, pw),
                } => {
                    let in_shape = &self.nodes[input.0].shape;
                    let w_shape = &self.nodes[weight.0].shape;
                    let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                    let (c_out, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
                    let out_shape = &self.nodes[i].shape;
                    let (oh, ow) = (out_shape[1], out_shape[2]);
                    for oc in 0..c_out {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let gv = g[(oc * oh + oy) * ow + ox];
                                if gv == 0.0 {
                                    continue;
                                }
                                if let Some(b) = bias {
                                    adj[b.0][oc] += gv;
                                }
                                for ic in 0..c_in {
                                    for ky in 0..kh {
                                        let iy = (oy * sh + ky) as isize - ph as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ix = (ox * sw + kx) as isize - pw as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            let xi = (ic * h + iy as usize) * w + ix as usize;
                                            let wi = ((oc * c_in + ic) * kh + ky) * kw + kx;
                                            let xv = self.nodes[input.0].value[xi];
                                            let wv = self.nodes[weight.0].value[wi];
                                            adj[input.0][xi] += gv * wv;
                                            adj[weight.0][wi] += gv * xv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            adj[i] = g;
        }

        for (node, a) in self.nodes.iter_mut().zip(adj) {
            for (dst, src) in node.grad.iter_mut().zip(a) {
                *dst += src;
            }
        }
        Ok(())
    }
}
