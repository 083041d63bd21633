use std::ops::Range;

use rand::Rng;

use super::fourier::{dft2_real_raw, DftStrategy};
use super::gemm::gemm;
use super::{Float, Tensor, TensorError};
use crate::activations::{self, ActivationKind};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var, broadcast: bool },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: Float },
    Transpose { a: Var },
    Reshape { a: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { a: Var, rows: Range<usize>, cols: Range<usize> },
    Gather { table: Var, ids: Vec<usize> },
    Softmax { a: Var },
    LayerNorm { a: Var, gain: Var, bias: Var, xhat: Vec<Float>, inv_std: Vec<Float> },
    Activation { a: Var, kind: ActivationKind },
    Erf { a: Var },
    Tanh { a: Var },
    Dft2 { a: Var },
    Dropout { a: Var, scale: Vec<Float> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<Float> },
    Sum { a: Var },
    Mean { a: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations. Nodes are appended as operations run, so
/// every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<Float>>>,
}

fn mismatch(op: &'static str, left: &Tensor, right: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: left.shape().to_vec(),
        right: right.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input tensor. Gradients are tracked iff the tensor's
    /// `requires_grad` flag is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        let mut value = tensor;
        value.zero_grad();
        // Leaves are not checked here; a non-finite input is reported by the
        // first operation that consumes it.
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf whose values are copied from `tensor` and whose
    /// gradient is always tracked.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        self.leaf(tensor.detached().with_requires_grad())
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let mut t = tensor;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[Float]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = as_matrix("matmul", av)?;
        let (br, bc) = as_matrix("matmul", bv)?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(mismatch("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), trans_b, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul { a, b, trans_b }, rg)
    }

    /// Elementwise sum. `b` may also be a row vector (`[n]` or `[1×n]`)
    /// broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else {
            let cols = *av.shape().last().unwrap_or(&0);
            if bv.len() == cols && av.len() % cols == 0 && bv.dims2().map(|d| d.0) == Ok(1) {
                true
            } else {
                return Err(mismatch("add", av, bv));
            }
        };
        let data: Vec<Float> = if broadcast {
            let cols = bv.len();
            av.data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bv.data()[i % cols])
                .collect()
        } else {
            av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect()
        };
        let shape = av.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&shape, data)?, Op::Add { a, b, broadcast }, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&shape, data)?, Op::Mul { a, b }, rg)
    }

    pub fn scale(&mut self, a: Var, factor: Float) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Scale { a, factor }, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (r, c) = as_matrix("transpose", av)?;
        let data = transpose_raw(av.data(), r, c);
        let rg = self.rg(a);
        self.push(Tensor::new(&[c, r], data)?, Op::Transpose { a }, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(a).detached().reshaped(shape)?;
        let rg = self.rg(a);
        self.push(value, Op::Reshape { a }, rg)
    }

    /// Concatenates 2-d tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let (r0, c0) = as_matrix("concat", self.value(*first))?;
        let mut dims = Vec::with_capacity(inputs.len());
        for v in inputs {
            let (r, c) = as_matrix("concat", self.value(*v))?;
            let ok = match axis {
                0 => c == c0,
                1 => r == r0,
                _ => false,
            };
            if !ok {
                return Err(mismatch("concat", self.value(*first), self.value(*v)));
            }
            dims.push((r, c));
        }
        let (rows, cols, data) = if axis == 0 {
            let rows = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for v in inputs {
                data.extend_from_slice(self.value(*v).data());
            }
            (rows, c0, data)
        } else {
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for (v, &(_, c)) in inputs.iter().zip(&dims) {
                    data.extend_from_slice(&self.value(*v).data()[r * c..(r + 1) * c]);
                }
            }
            (r0, cols, data)
        };
        let rg = inputs.iter().any(|v| self.rg(*v));
        self.push(
            Tensor::new(&[rows, cols], data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Sub-block `a[rows, cols]` of a 2-d tensor.
    pub fn slice(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (r, c) = as_matrix("slice", av)?;
        if rows.is_empty() || cols.is_empty() || rows.end > r || cols.end > c {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!("block {rows:?}x{cols:?} outside {r}x{c}"),
            });
        }
        let width = cols.len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows.clone() {
            data.extend_from_slice(&av.data()[row * c + cols.start..row * c + cols.end]);
        }
        let shape = [rows.len(), width];
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Slice { a, rows, cols }, rg)
    }

    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Result<Var, TensorError> {
        let (_, c) = as_matrix("slice", self.value(a))?;
        self.slice(a, rows, 0..c)
    }

    /// Row gather `table[ids]`; the backward pass scatter-adds into the table.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        let (rows, cols) = as_matrix("embedding_lookup", tv)?;
        if ids.is_empty() {
            return Err(TensorError::Invalid {
                op: "embedding_lookup",
                msg: "no ids".into(),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding_lookup",
                    index: id,
                    len: rows,
                });
            }
            data.extend_from_slice(&tv.data()[id * cols..(id + 1) * cols]);
        }
        let rg = self.rg(table);
        self.push(
            Tensor::new(&[ids.len(), cols], data)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        self.masked_softmax_rows(a, None)
    }

    /// Row softmax where `mask[i*n + j] == false` entries are excluded (an
    /// additive −∞). A row with nothing allowed produces all zeros.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (m, n) = as_matrix("softmax_rows", av)?;
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(TensorError::Invalid {
                    op: "softmax_rows",
                    msg: format!("mask has {} entries, expected {}", mask.len(), m * n),
                });
            }
        }
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &av.data()[r * n..(r + 1) * n];
            let allowed = |j: usize| mask.is_none_or(|mk| mk[r * n + j]);
            let max = (0..n)
                .filter(|&j| allowed(j))
                .map(|j| row[j])
                .fold(Float::NEG_INFINITY, Float::max);
            if max == Float::NEG_INFINITY {
                continue;
            }
            let dst = &mut out[r * n..(r + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if allowed(j) {
                    dst[j] = (row[j] - max).exp();
                    total += dst[j];
                }
            }
            dst.iter_mut().for_each(|x| *x /= total);
        }
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out)?, Op::Softmax { a }, rg)
    }

    /// Normalizes over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: Float) -> Result<Var, TensorError> {
        let av = self.value(a);
        let n = *av.shape().last().unwrap_or(&0);
        if n == 0 {
            return Err(TensorError::EmptyAxis { op: "layer_norm" });
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(TensorError::Invalid {
                op: "layer_norm",
                msg: format!("eps must be positive, got {eps}"),
            });
        }
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.len() != n || bv.len() != n {
            return Err(mismatch("layer_norm", av, gv));
        }
        let rows = av.len() / n;
        let mut xhat = vec![0.0; av.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; av.len()];
        for r in 0..rows {
            let x = &av.data()[r * n..(r + 1) * n];
            let mean = x.iter().sum::<Float>() / n as Float;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<Float>() / n as Float;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let h = (x[j] - mean) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let shape = av.shape().to_vec();
        let rg = self.rg(a) || self.rg(gain) || self.rg(bias);
        self.push(
            Tensor::new(&shape, out)?,
            Op::LayerNorm {
                a,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    pub fn activate(&mut self, a: Var, kind: ActivationKind) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| activations::value(kind, x)).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Activation { a, kind }, rg)
    }

    pub fn erf(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| activations::erf(x)).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Erf { a }, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x.tanh()).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Tanh { a }, rg)
    }

    /// Parameter-free Fourier token mixing: real part of the 2-d DFT.
    pub fn dft2_real(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (r, c) = as_matrix("dft2_real", av)?;
        let data = dft2_real_raw(av.data(), r, c, DftStrategy::Auto);
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Dft2 { a }, rg)
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: Float,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Invalid {
                op: "dropout",
                msg: format!("probability {p} outside [0, 1)"),
            });
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let len = self.value(a).len();
        let scale: Vec<Float> = (0..len)
            .map(|_| if rng.random::<f64>() < p as f64 { 0.0 } else { keep })
            .collect();
        self.dropout_with_mask(a, scale)
    }

    /// Dropout with an explicit per-element scale (0 or 1/(1−p)).
    pub fn dropout_with_mask(&mut self, a: Var, scale: Vec<Float>) -> Result<Var, TensorError> {
        let av = self.value(a);
        if scale.len() != av.len() {
            return Err(TensorError::Invalid {
                op: "dropout",
                msg: "mask length differs from input".into(),
            });
        }
        let data = av.data().iter().zip(&scale).map(|(x, s)| x * s).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data)?, Op::Dropout { a, scale }, rg)
    }

    /// Mean softmax cross-entropy of `logits[m×c]` against class ids.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        let (m, c) = as_matrix("cross_entropy", lv)?;
        if labels.len() != m {
            return Err(TensorError::Invalid {
                op: "cross_entropy",
                msg: format!("{} labels for {m} rows", labels.len()),
            });
        }
        let mut probs = vec![0.0; m * c];
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: label,
                    len: c,
                });
            }
            let row = &lv.data()[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(Float::NEG_INFINITY, Float::max);
            let total: Float = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + total.ln();
            loss += log_z - row[label];
            for j in 0..c {
                probs[r * c + j] = (row[j] - log_z).exp();
            }
        }
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss / m as Float),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a);
        let total: Float = v.data().iter().sum();
        let mean = total / v.len() as Float;
        let rg = self.rg(a);
        self.push(Tensor::scalar(mean), Op::Mean { a }, rg)
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<Float>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[id] {
                    Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, x)| *b += x),
                    slot => *slot = Some(g),
                }
                continue;
            }
            propagate(&self.nodes, id, &g, &mut grads);
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::Add { .. } => "add",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::Transpose { .. } => "transpose",
        Op::Reshape { .. } => "reshape",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::Gather { .. } => "embedding_lookup",
        Op::Softmax { .. } => "softmax_rows",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Activation { .. } => "activate",
        Op::Erf { .. } => "erf",
        Op::Tanh { .. } => "tanh",
        Op::Dft2 { .. } => "dft2_real",
        Op::Dropout { .. } => "dropout",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::Sum { .. } => "sum",
        Op::Mean { .. } => "mean",
    }
}

fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    t.dims2().map_err(|_| TensorError::NotMatrix {
        op,
        shape: t.shape().to_vec(),
    })
}

fn transpose_raw(data: &[Float], rows: usize, cols: usize) -> Vec<Float> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Gradient buffer for `v`, or `None` when `v` does not need one.
fn buf<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<Float>>], v: Var) -> Option<&'a mut Vec<Float>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

fn propagate(nodes: &[Node], id: usize, g: &[Float], grads: &mut [Option<Vec<Float>>]) {
    let node = &nodes[id];
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => unreachable!("leaves are handled by the caller"),
        Op::MatMul { a, b, trans_b } => {
            let (m, k) = val(*a).dims2().expect("matrix");
            let n = node.value.shape()[1];
            if let Some(da) = buf(nodes, grads, *a) {
                // dA = G · op(B)ᵀ
                gemm(m, n, k, g, false, val(*b).data(), !*trans_b, da, 1.0);
            }
            if let Some(db) = buf(nodes, grads, *b) {
                if *trans_b {
                    // B is n×k: dB = Gᵀ · A
                    gemm(n, m, k, g, true, val(*a).data(), false, db, 1.0);
                } else {
                    // dB = Aᵀ · G
                    gemm(k, m, n, val(*a).data(), true, g, false, db, 1.0);
                }
            }
        }
        Op::Add { a, b, broadcast } => {
            if let Some(da) = buf(nodes, grads, *a) {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            if let Some(db) = buf(nodes, grads, *b) {
                if *broadcast {
                    let cols = db.len();
                    for (i, x) in g.iter().enumerate() {
                        db[i % cols] += x;
                    }
                } else {
                    db.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::Mul { a, b } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            if let Some(da) = buf(nodes, grads, *a) {
                for i in 0..g.len() {
                    da[i] += g[i] * bv[i];
                }
            }
            if let Some(db) = buf(nodes, grads, *b) {
                for i in 0..g.len() {
                    db[i] += g[i] * av[i];
                }
            }
        }
        Op::Scale { a, factor } => {
            if let Some(da) = buf(nodes, grads, *a) {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x * factor);
            }
        }
        Op::Transpose { a } => {
            let (r, c) = val(*a).dims2().expect("matrix");
            if let Some(da) = buf(nodes, grads, *a) {
                // g is c×r
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] += g[j * r + i];
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(da) = buf(nodes, grads, *a) {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
        }
        Op::Concat { inputs, axis } => {
            let cols = node.value.shape()[1];
            let mut offset = 0;
            for v in inputs {
                let (r, c) = val(*v).dims2().expect("matrix");
                if let Some(dv) = buf(nodes, grads, *v) {
                    if *axis == 0 {
                        let src = &g[offset * cols..(offset + r) * cols];
                        dv.iter_mut().zip(src).for_each(|(d, x)| *d += x);
                    } else {
                        for row in 0..r {
                            let src = &g[row * cols + offset..row * cols + offset + c];
                            dv[row * c..(row + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, x)| *d += x);
                        }
                    }
                }
                offset += if *axis == 0 { r } else { c };
            }
        }
        Op::Slice { a, rows, cols } => {
            let full_cols = val(*a).dims2().expect("matrix").1;
            let width = cols.len();
            if let Some(da) = buf(nodes, grads, *a) {
                for (i, row) in rows.clone().enumerate() {
                    let dst = &mut da[row * full_cols + cols.start..row * full_cols + cols.end];
                    dst.iter_mut()
                        .zip(&g[i * width..(i + 1) * width])
                        .for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::Gather { table, ids } => {
            let cols = val(*table).dims2().expect("matrix").1;
            if let Some(dt) = buf(nodes, grads, *table) {
                for (i, &id) in ids.iter().enumerate() {
                    dt[id * cols..(id + 1) * cols]
                        .iter_mut()
                        .zip(&g[i * cols..(i + 1) * cols])
                        .for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::Softmax { a } => {
            let y = node.value.data();
            let n = *node.value.shape().last().expect("matrix");
            if let Some(da) = buf(nodes, grads, *a) {
                for r in 0..y.len() / n {
                    let ys = &y[r * n..(r + 1) * n];
                    let gs = &g[r * n..(r + 1) * n];
                    let dot: Float = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                    for j in 0..n {
                        da[r * n + j] += ys[j] * (gs[j] - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            a,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let n = val(*gain).len();
            let rows = xhat.len() / n;
            let gv = val(*gain).data();
            if let Some(dg) = buf(nodes, grads, *gain) {
                for r in 0..rows {
                    for j in 0..n {
                        dg[j] += g[r * n + j] * xhat[r * n + j];
                    }
                }
            }
            if let Some(db) = buf(nodes, grads, *bias) {
                for r in 0..rows {
                    for j in 0..n {
                        db[j] += g[r * n + j];
                    }
                }
            }
            if let Some(da) = buf(nodes, grads, *a) {
                let nf = n as Float;
                let mut dxhat = vec![0.0; n];
                for r in 0..rows {
                    let xh = &xhat[r * n..(r + 1) * n];
                    for j in 0..n {
                        dxhat[j] = g[r * n + j] * gv[j];
                    }
                    let sum_d: Float = dxhat.iter().sum();
                    let sum_dx: Float = dxhat.iter().zip(xh).map(|(d, x)| d * x).sum();
                    for j in 0..n {
                        da[r * n + j] += inv_std[r] / nf * (nf * dxhat[j] - sum_d - xh[j] * sum_dx);
                    }
                }
            }
        }
        Op::Activation { a, kind } => {
            let x = val(*a).data();
            if let Some(da) = buf(nodes, grads, *a) {
                for i in 0..g.len() {
                    da[i] += g[i] * activations::derivative(*kind, x[i]);
                }
            }
        }
        Op::Erf { a } => {
            let x = val(*a).data();
            let c = 2.0 / (std::f64::consts::PI as Float).sqrt();
            if let Some(da) = buf(nodes, grads, *a) {
                for i in 0..g.len() {
                    da[i] += g[i] * c * (-x[i] * x[i]).exp();
                }
            }
        }
        Op::Tanh { a } => {
            let y = node.value.data();
            if let Some(da) = buf(nodes, grads, *a) {
                for i in 0..g.len() {
                    da[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
        }
        Op::Dft2 { a } => {
            // The real 2-d DFT is a symmetric linear map, so its adjoint is itself.
            let (r, c) = val(*a).dims2().expect("matrix");
            let back = dft2_real_raw(g, r, c, DftStrategy::Auto);
            if let Some(da) = buf(nodes, grads, *a) {
                da.iter_mut().zip(&back).for_each(|(d, x)| *d += x);
            }
        }
        Op::Dropout { a, scale } => {
            if let Some(da) = buf(nodes, grads, *a) {
                for i in 0..g.len() {
                    da[i] += g[i] * scale[i];
                }
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let m = labels.len();
            let c = probs.len() / m;
            let coef = g[0] / m as Float;
            if let Some(dl) = buf(nodes, grads, *logits) {
                for (r, &label) in labels.iter().enumerate() {
                    for j in 0..c {
                        let target = if j == label { 1.0 } else { 0.0 };
                        dl[r * c + j] += coef * (probs[r * c + j] - target);
                    }
                }
            }
        }
        Op::Sum { a } => {
            if let Some(da) = buf(nodes, grads, *a) {
                da.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean { a } => {
            if let Some(da) = buf(nodes, grads, *a) {
                let share = g[0] / da.len() as Float;
                da.iter_mut().for_each(|d| *d += share);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[Float]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let i3 = tape.constant(t(&[3, 3], &eye));
        let x = tape.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = tape.matmul(i3, x).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn scalar_matmul() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 1], &[2.0]));
        let b = tape.constant(t(&[1, 1], &[3.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[6.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 5.0]).with_requires_grad());
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), Some(&[1.0, 1.0, 1.0][..]));
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]).with_requires_grad());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), Some(&[2.0, 4.0][..]));
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), Some(&[4.0, 8.0][..]));
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]).with_requires_grad());
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn softmax_uniform_and_overflow_safe() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 3], &[0.0, 0.0, 0.0, 1000.0, 0.0, -1000.0]));
        let s = tape.softmax_rows(a).unwrap();
        let v = tape.value(s).data();
        for x in &v[..3] {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v[3] - 1.0).abs() < 1e-15);
        assert!(v[4] < 1e-300 && v[4] >= 0.0);
    }

    #[test]
    fn fully_masked_row_is_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).with_requires_grad());
        let s = tape
            .masked_softmax_rows(a, Some(&[false, false, true, false]))
            .unwrap();
        assert_eq!(tape.value(s).data(), &[0.0, 0.0, 1.0, 0.0]);
        let total = tape.sum(s).unwrap();
        tape.backward(total).unwrap();
        assert!(tape.grad(a).unwrap().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn layer_norm_constant_row_and_zero_gain() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 4], &[3.0, 3.0, 3.0, 3.0]));
        let one = tape.constant(Tensor::full(&[4], 1.0));
        let zero = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(a, one, zero, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|x| x.abs() < 1e-12));

        let b = tape.constant(t(&[2, 2], &[1.0, 5.0, -2.0, 7.0]));
        let gain0 = tape.constant(Tensor::zeros(&[2]));
        let bias = tape.constant(t(&[2], &[0.5, -1.5]));
        let y = tape.layer_norm(b, gain0, bias, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 4], &[1.0, 2.0, 4.0, 9.0]));
        let one = tape.constant(Tensor::full(&[4], 1.0));
        let zero = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(a, one, zero, 1e-12).unwrap();
        let v = tape.value(y).data();
        let mean = v.iter().sum::<Float>() / 4.0;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<Float>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = rand::rng();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::full(&[3, 3], 2.0));
        assert_eq!(tape.dropout(a, 0.5, false, &mut rng).unwrap(), a);
        assert_eq!(tape.dropout(a, 0.0, true, &mut rng).unwrap(), a);
        assert!(tape.dropout(a, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_c() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::zeros(&[4, 2]));
        let l = tape.cross_entropy(logits, &[0, 1, 1, 0]).unwrap();
        assert!((tape.value(l).data()[0] - (2.0 as Float).ln()).abs() < 1e-12);
        assert!(tape.cross_entropy(logits, &[0, 2, 1, 0]).is_err());
    }

    #[test]
    fn nan_input_surfaces_as_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::full(&[1, 2], 1e300));
        let b = tape.constant(Tensor::full(&[2, 1], 1e300));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::NonFinite { .. })));
    }
}
