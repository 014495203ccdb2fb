//! Minimal reverse-mode autodiff over matrix-valued nodes.
//!
//! One tape holds the computation graph for a single sample in f64.
//! Every node's value is an `Array2<f64>`; parameters live in one flat
//! slice and enter the graph through `param` nodes, so the backward pass
//! can scatter gradients straight into a flat buffer of the same length.

use std::sync::Arc;

use ndarray::{Array2, Axis};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Shared ragged neighbor lists for attention: `plan[i]` are the key/value
/// rows query row `i` attends to.
pub type AttnPlan = Arc<Vec<Vec<usize>>>;

enum Op {
    Const,
    Param { offset: usize },
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// Broadcast-add a `[1, D]` row vector to every row.
    AddRow { x: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    /// Rowwise `x * (1 + scale) + shift` with `[1, D]` scale/shift.
    ModScaleShift { x: NodeId, scale: NodeId, shift: NodeId },
    /// Rowwise `x * gate` with a `[1, D]` gate.
    MulRow { x: NodeId, gate: NodeId },
    RmsNorm { x: NodeId, inv_rms: Vec<f64> },
    Gelu { x: NodeId },
    Silu { x: NodeId },
    /// Gather rows; duplicates accumulate in the backward scatter-add.
    SelectRows { x: NodeId, indices: Arc<Vec<usize>> },
    /// Row-major reshape.
    Reshape { x: NodeId },
    SliceCols { x: NodeId, start: usize },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        plan: AttnPlan,
        heads: usize,
        /// Cached softmax weights, head-major per query row.
        weights: Vec<Vec<f64>>,
    },
    /// Scalar `coeff * mean((pred - target)^2)`; the coefficient lives in
    /// the node's `coeff` field.
    MseLoss { pred: NodeId, target: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    /// Extra scalar used by MseLoss (the loss weight).
    coeff: f64,
}

/// Computation tape for one sample.
pub struct Tape<'a> {
    params: &'a [f64],
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let phi = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi + x * pdf
}

const RMS_EPS: f64 = 1e-8;

impl<'a> Tape<'a> {
    pub fn new(params: &'a [f64]) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.push_with_coeff(value, op, 0.0)
    }

    fn push_with_coeff(&mut self, value: Array2<f64>, op: Op, coeff: f64) -> NodeId {
        self.nodes.push(Node { value, op, coeff });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Const)
    }

    /// A `[rows, cols]` view of the flat parameter slice at `offset`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> NodeId {
        let value = Array2::from_shape_vec(
            (rows, cols),
            self.params[offset..offset + rows * cols].to_vec(),
        )
        .expect("parameter slice length");
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(value, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add { a, b })
    }

    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[x.0].value + &self.nodes[b.0].value;
        self.push(value, Op::AddRow { x, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.nodes[x.0].value.mapv(|v| v * c);
        self.push(value, Op::Scale { x, c })
    }

    pub fn mod_scale_shift(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let xs = &self.nodes[x.0].value;
        let s = &self.nodes[scale.0].value;
        let b = &self.nodes[shift.0].value;
        let value = xs * &(s.mapv(|v| v + 1.0)) + b;
        self.push(value, Op::ModScaleShift { x, scale, shift })
    }

    pub fn mul_row(&mut self, x: NodeId, gate: NodeId) -> NodeId {
        let value = &self.nodes[x.0].value * &self.nodes[gate.0].value;
        self.push(value, Op::MulRow { x, gate })
    }

    /// Gain-free RMS normalization per row.
    pub fn rms_norm(&mut self, x: NodeId) -> NodeId {
        let xs = &self.nodes[x.0].value;
        let d = xs.ncols() as f64;
        let inv_rms: Vec<f64> = xs
            .rows()
            .into_iter()
            .map(|row| 1.0 / (row.iter().map(|v| v * v).sum::<f64>() / d + RMS_EPS).sqrt())
            .collect();
        let mut value = xs.clone();
        for (mut row, &r) in value.rows_mut().into_iter().zip(inv_rms.iter()) {
            row.mapv_inplace(|v| v * r);
        }
        self.push(value, Op::RmsNorm { x, inv_rms })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.mapv(gelu);
        self.push(value, Op::Gelu { x })
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.mapv(|v| v * sigmoid(v));
        self.push(value, Op::Silu { x })
    }

    pub fn select_rows(&mut self, x: NodeId, indices: Arc<Vec<usize>>) -> NodeId {
        let xs = &self.nodes[x.0].value;
        let mut value = Array2::zeros((indices.len(), xs.ncols()));
        for (mut row, &src) in value.rows_mut().into_iter().zip(indices.iter()) {
            row.assign(&xs.row(src));
        }
        self.push(value, Op::SelectRows { x, indices })
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let xs = &self.nodes[x.0].value;
        assert_eq!(xs.len(), rows * cols, "reshape must preserve element count");
        let flat: Vec<f64> = xs.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), flat).unwrap();
        self.push(value, Op::Reshape { x })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.nodes[x.0]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(value, Op::SliceCols { x, start })
    }

    /// Multi-head scaled dot-product attention over explicit neighbor lists.
    /// With `plan[i] = 0..n` for every `i` this is exactly global attention.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        plan: AttnPlan,
        heads: usize,
    ) -> NodeId {
        let (qs, ks, vs) = (
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
        );
        let d = qs.ncols();
        assert!(d % heads == 0, "head count must divide model width");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((qs.nrows(), d));
        let mut weights = Vec::with_capacity(qs.nrows());
        for i in 0..qs.nrows() {
            let neigh = &plan[i];
            let mut w_i = Vec::with_capacity(heads * neigh.len());
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qi = qs.row(i);
                // softmax over neighbors with the usual max-subtraction
                let mut logits: Vec<f64> = neigh
                    .iter()
                    .map(|&j| {
                        cols.clone()
                            .map(|c| qi[c] * ks[[j, c]])
                            .sum::<f64>()
                            * scale
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    sum += *l;
                }
                for l in logits.iter_mut() {
                    *l /= sum;
                }
                for (a, &j) in logits.iter().zip(neigh.iter()) {
                    for c in cols.clone() {
                        out[[i, c]] += a * vs[[j, c]];
                    }
                }
                w_i.extend_from_slice(&logits);
            }
            weights.push(w_i);
        }
        self.push(out, Op::Attention { q, k, v, plan, heads, weights })
    }

    /// Scalar loss node `coeff * mean((pred - target)^2)`.
    pub fn mse_loss(&mut self, pred: NodeId, target: Array2<f64>, coeff: f64) -> NodeId {
        let p = &self.nodes[pred.0].value;
        assert_eq!(p.dim(), target.dim(), "loss shapes must agree");
        let n = p.len() as f64;
        let mse = p
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let value = Array2::from_elem((1, 1), coeff * mse);
        self.push_with_coeff(value, Op::MseLoss { pred, target }, coeff)
    }

    /// Reverse pass from a scalar node, accumulating parameter gradients
    /// into `param_grad` (same length as the flat parameter slice).
    pub fn backward(&self, loss: NodeId, param_grad: &mut [f64]) {
        assert_eq!(param_grad.len(), self.params.len());
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem(self.nodes[loss.0].value.dim(), 1.0));

        fn acc(grads: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
            match &mut grads[id.0] {
                Some(g) => *g += &delta,
                slot @ None => *slot = Some(delta),
            }
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Param { offset } => {
                    for (slot, gv) in param_grad[*offset..*offset + g.len()]
                        .iter_mut()
                        .zip(g.iter())
                    {
                        *slot += gv;
                    }
                }
                Op::MatMul { a, b } => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    acc(&mut grads, *a, g.dot(&bv.t()));
                    acc(&mut grads, *b, av.t().dot(&g));
                }
                Op::Add { a, b } => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow { x, b } => {
                    let row_sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *b, row_sum);
                }
                Op::Scale { x, c } => {
                    acc(&mut grads, *x, g.mapv(|v| v * c));
                }
                Op::ModScaleShift { x, scale, shift } => {
                    let xv = &self.nodes[x.0].value;
                    let sv = &self.nodes[scale.0].value;
                    let gx = &g * &sv.mapv(|v| v + 1.0);
                    let gs = (&g * xv).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *scale, gs);
                    acc(&mut grads, *shift, gb);
                }
                Op::MulRow { x, gate } => {
                    let xv = &self.nodes[x.0].value;
                    let gatev = &self.nodes[gate.0].value;
                    acc(&mut grads, *x, &g * gatev);
                    acc(
                        &mut grads,
                        *gate,
                        (&g * xv).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                }
                Op::RmsNorm { x, inv_rms } => {
                    let xv = &self.nodes[x.0].value;
                    let d = xv.ncols() as f64;
                    let mut gx = Array2::zeros(xv.dim());
                    for i in 0..xv.nrows() {
                        let r = inv_rms[i];
                        let dot: f64 = (0..xv.ncols()).map(|c| g[[i, c]] * xv[[i, c]]).sum();
                        for c in 0..xv.ncols() {
                            gx[[i, c]] = r * g[[i, c]] - (r.powi(3) / d) * dot * xv[[i, c]];
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu { x } => {
                    let xv = &self.nodes[x.0].value;
                    acc(&mut grads, *x, &g * &xv.mapv(gelu_grad));
                }
                Op::Silu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let d = xv.mapv(|v| {
                        let s = sigmoid(v);
                        s * (1.0 + v * (1.0 - s))
                    });
                    acc(&mut grads, *x, &g * &d);
                }
                Op::SelectRows { x, indices } => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Array2::zeros(xv.dim());
                    for (grow, &src) in g.rows().into_iter().zip(indices.iter()) {
                        let mut dst = gx.row_mut(src);
                        dst += &grow;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Reshape { x } => {
                    let dim = self.nodes[x.0].value.dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    acc(&mut grads, *x, Array2::from_shape_vec(dim, flat).unwrap());
                }
                Op::SliceCols { x, start } => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Array2::zeros(xv.dim());
                    gx.slice_mut(ndarray::s![.., *start..*start + g.ncols()])
                        .assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::Attention { q, k, v, plan, heads, weights } => {
                    let qv = &self.nodes[q.0].value;
                    let kv = &self.nodes[k.0].value;
                    let vv = &self.nodes[v.0].value;
                    let d = qv.ncols();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut gq = Array2::zeros(qv.dim());
                    let mut gk = Array2::zeros(kv.dim());
                    let mut gv = Array2::zeros(vv.dim());
                    for i in 0..qv.nrows() {
                        let neigh = &plan[i];
                        for h in 0..*heads {
                            let cols = h * dh..(h + 1) * dh;
                            let w = &weights[i][h * neigh.len()..(h + 1) * neigh.len()];
                            // gs[j] = dL/d a_ij before softmax jacobian
                            let gs: Vec<f64> = neigh
                                .iter()
                                .map(|&j| cols.clone().map(|c| g[[i, c]] * vv[[j, c]]).sum())
                                .collect();
                            let dot: f64 = w.iter().zip(gs.iter()).map(|(a, b)| a * b).sum();
                            for (idx, &j) in neigh.iter().enumerate() {
                                let a = w[idx];
                                let glogit = a * (gs[idx] - dot) * scale;
                                for c in cols.clone() {
                                    gv[[j, c]] += a * g[[i, c]];
                                    gq[[i, c]] += glogit * kv[[j, c]];
                                    gk[[j, c]] += glogit * qv[[i, c]];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::MseLoss { pred, target } => {
                    let p = &self.nodes[pred.0].value;
                    let n = p.len() as f64;
                    let gscale = g[[0, 0]] * node.coeff * 2.0 / n;
                    let gp = (p - target).mapv(|v| v * gscale);
                    acc(&mut grads, *pred, gp);
                }
            }
        }
    }
}
