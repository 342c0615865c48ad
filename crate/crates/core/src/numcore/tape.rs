//! Reverse-mode differentiation tape.
//!
//! Operations are recorded in execution order; [`Tape::backward`] walks the
//! records from the root back to the first node and accumulates gradients
//! additively. Parameter leaves borrow their arrays, so recording a forward
//! pass never copies model weights.

use rand::Rng;

use super::ops::{self, Mode};
use super::linalg::{gemm, MatRef};
use super::{NumArray, Real};
use crate::error::{Error, Result};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which negative-sampling loss to record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossForm {
    /// `softplus(-l_t) + Σ softplus(l_neg)`; bounded below by zero.
    #[default]
    Standard,
    /// `-log σ(l_t) + Σ log σ(l_neg)`, as sometimes printed; unbounded below.
    Literal,
}

/// Norms below this are treated as degenerate by length adjustment.
pub const NORM_EPSILON: f64 = 1e-12;

enum Value<'p, T> {
    Owned(NumArray<T>),
    Borrowed(&'p NumArray<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &NumArray<T> {
        match self {
            Value::Owned(a) => a,
            Value::Borrowed(a) => a,
        }
    }
}

enum Op<T> {
    Leaf,
    Embedding { table: Var, ids: Vec<u32> },
    Conv { input: Var, filters: Var, lens: Vec<usize>, bias: Var },
    Relu { input: Var },
    MaxPool { input: Var, argmax: Vec<usize> },
    AvgPool { input: Var, lens: Vec<usize> },
    Dense { input: Var, weight: Var, bias: Var },
    Dropout { input: Var, keep: Vec<bool>, scale: T },
    MeanRows { input: Var, rows: Vec<usize> },
    LengthAdjust(Box<LengthAdjustRecord<T>>),
    RowSelect { input: Var, row: usize },
    Dot { a: Var, b: Var },
    NsLoss { target: Var, negatives: Vec<Var>, form: LossForm },
    Sum { inputs: Vec<Var> },
    Scale { input: Var, factor: T },
    WeightedSum { input: Var, weights: Vec<T> },
}

struct LengthAdjustRecord<T> {
    mean: Var,
    constituents: Var,
    rows: Vec<usize>,
    /// `None` when the mean norm was degenerate and the input passed through.
    scaling: Option<Scaling<T>>,
}

struct Scaling<T> {
    unit: Vec<T>,
    mean_norm: T,
    mean_length: T,
    row_norms: Vec<T>,
}

struct Node<'p, T> {
    value: Value<'p, T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<'p, T: Real> {
    nodes: Vec<Node<'p, T>>,
    checked: bool,
    degenerate_norms: usize,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: false,
            degenerate_norms: 0,
        }
    }

    /// Reject NaN/Inf at every recorded operation.
    pub fn checked(mut self, on: bool) -> Self {
        self.checked = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of length adjustments that hit the degenerate-norm passthrough.
    pub fn degenerate_norms(&self) -> usize {
        self.degenerate_norms
    }

    /// Hash of every discrete choice made so far: which ReLU inputs were
    /// positive and which row each max-pool picked. Two evaluations with the
    /// same signature lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { input } => {
                    for x in self.value(*input).data() {
                        (*x > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    pub fn value(&self, v: Var) -> &NumArray<T> {
        self.nodes[v.0].value.get()
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v).item()
    }

    /// A trainable leaf borrowing its storage.
    pub fn param(&mut self, array: &'p NumArray<T>) -> Var {
        self.push_node(Value::Borrowed(array), Op::Leaf, true)
    }

    /// A leaf that receives a gradient but owns its value.
    pub fn input(&mut self, array: NumArray<T>) -> Var {
        self.push_node(Value::Owned(array), Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, array: NumArray<T>) -> Var {
        self.push_node(Value::Owned(array), Op::Leaf, false)
    }

    fn push_node(&mut self, value: Value<'p, T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: NumArray<T>, op: Op<T>, parents: &[Var]) -> Result<Var> {
        if self.checked {
            value.ensure_finite(op_name(&op))?;
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push_node(Value::Owned(value), op, needs_grad))
    }

    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let out = ops::embedding_lookup(self.value(table), ids)?;
        self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Valid convolution over a ragged batch; returns output rows and lengths.
    pub fn conv1d(
        &mut self,
        input: Var,
        lens: &[usize],
        filters: Var,
        bias: Var,
    ) -> Result<(Var, Vec<usize>)> {
        let x = self.value(input);
        let (out, out_lens) =
            ops::conv1d_segments(x.data(), x.cols(), lens, self.value(filters), self.value(bias))?;
        let c_out = self.value(filters).shape()[0];
        let rows = out_lens.iter().sum();
        let value = NumArray::new(vec![rows, c_out], out)?;
        let var = self.push(
            value,
            Op::Conv {
                input,
                filters,
                lens: lens.to_vec(),
                bias,
            },
            &[input, filters, bias],
        )?;
        Ok((var, out_lens))
    }

    /// Single-sequence convolution.
    pub fn conv1d_valid(&mut self, input: Var, filters: Var, bias: Var) -> Result<Var> {
        let lens = [self.value(input).rows()];
        Ok(self.conv1d(input, &lens, filters, bias)?.0)
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let mut out = self.value(input).clone();
        ops::relu_in_place(out.data_mut());
        self.push(out, Op::Relu { input }, &[input])
    }

    pub fn maxpool(&mut self, input: Var, lens: &[usize]) -> Result<(Var, Vec<usize>)> {
        let x = self.value(input);
        let c = x.cols();
        let pooled = ops::maxpool_segments(x.data(), c, lens)?;
        let rows = pooled.lens.iter().sum();
        let value = NumArray::new(vec![rows, c], pooled.values)?;
        let var = self.push(
            value,
            Op::MaxPool {
                input,
                argmax: pooled.argmax,
            },
            &[input],
        )?;
        Ok((var, pooled.lens))
    }

    pub fn maxpool1d(&mut self, input: Var) -> Result<Var> {
        let lens = [self.value(input).rows()];
        Ok(self.maxpool(input, &lens)?.0)
    }

    /// Per-segment mean over rows, giving one output row per segment.
    pub fn avgpool(&mut self, input: Var, lens: &[usize]) -> Result<Var> {
        let x = self.value(input);
        let c = x.cols();
        let out = ops::avgpool_segments(x.data(), c, lens)?;
        let value = NumArray::new(vec![lens.len(), c], out)?;
        self.push(
            value,
            Op::AvgPool {
                input,
                lens: lens.to_vec(),
            },
            &[input],
        )
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let lens = vec![x.rows()];
        let out = ops::avgpool_segments(x.data(), x.cols(), &lens)?;
        self.push(NumArray::from_vec(out), Op::AvgPool { input, lens }, &[input])
    }

    /// `act(X · Wᵀ + b)`; a rank-1 input is treated as one row.
    pub fn dense(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        activation: ops::Activation,
    ) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let rank1 = x.shape().len() == 1;
        let rows = if rank1 { 1 } else { x.rows() };
        let out = ops::dense_rows(x.data(), rows, w, self.value(bias))?;
        let n = w.shape()[0];
        let shape = if rank1 { vec![n] } else { vec![rows, n] };
        let value = NumArray::new(shape, out)?;
        let var = self.push(
            value,
            Op::Dense {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        )?;
        match activation {
            ops::Activation::None => Ok(var),
            ops::Activation::Relu => self.relu(var),
        }
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let x = self.value(input);
        let keep = ops::dropout_mask(x.len(), rate, mode, rng)?;
        match keep {
            None => Ok(input),
            Some(keep) => {
                let out = ops::apply_mask(x.data(), Some(&keep), rate);
                let value = NumArray::new(x.shape().to_vec(), out)?;
                let scale = T::of(1.0 / (1.0 - rate));
                self.push(value, Op::Dropout { input, keep, scale }, &[input])
            }
        }
    }

    /// Elementwise mean of the listed rows, summed sequentially in list order.
    pub fn mean_rows(&mut self, input: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(input);
        let out = mean_of_rows(x, rows)?;
        self.push(
            NumArray::from_vec(out),
            Op::MeanRows {
                input,
                rows: rows.to_vec(),
            },
            &[input],
        )
    }

    /// Rescale `mean` to the average L2 norm of the listed constituent rows.
    /// Degenerate means pass through unchanged and bump the counter.
    pub fn length_adjust(&mut self, mean: Var, constituents: Var, rows: &[usize]) -> Result<Var> {
        let m = self.value(mean);
        let c = self.value(constituents);
        if rows.is_empty() {
            return Err(Error::Empty("length adjustment constituents"));
        }
        let row_norms: Vec<T> = rows.iter().map(|&r| ops::l2_norm(c.row(r))).collect();
        let (out, scaling) = match adjust_length(m.data(), &row_norms) {
            Some(adj) => {
                let unit = m.data().iter().map(|&v| v / adj.mean_norm).collect();
                (
                    adj.values,
                    Some(Scaling {
                        unit,
                        mean_norm: adj.mean_norm,
                        mean_length: adj.mean_length,
                        row_norms,
                    }),
                )
            }
            None => (m.data().to_vec(), None),
        };
        if scaling.is_none() {
            self.degenerate_norms += 1;
        }
        let record = LengthAdjustRecord {
            mean,
            constituents,
            rows: rows.to_vec(),
            scaling,
        };
        self.push(
            NumArray::from_vec(out),
            Op::LengthAdjust(Box::new(record)),
            &[mean, constituents],
        )
    }

    pub fn row(&mut self, input: Var, row: usize) -> Result<Var> {
        let x = self.value(input);
        if row >= x.rows() {
            return Err(Error::IndexOutOfRange {
                what: "matrix rows",
                index: row,
                size: x.rows(),
            });
        }
        let out = NumArray::from_vec(x.row(row).to_vec());
        self.push(out, Op::RowSelect { input, row }, &[input])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::dot(self.value(a), self.value(b))?;
        self.push(NumArray::scalar(v), Op::Dot { a, b }, &[a, b])
    }

    /// Negative-sampling loss over one target logit and its negatives.
    pub fn ns_loss(&mut self, target: Var, negatives: &[Var], form: LossForm) -> Result<Var> {
        let lt = self.scalar(target).as_f64();
        let negs: Vec<f64> = negatives.iter().map(|&n| self.scalar(n).as_f64()).collect();
        let loss = ns_loss_value(lt, &negs, form);
        let mut parents = vec![target];
        parents.extend_from_slice(negatives);
        self.push(
            NumArray::scalar(T::of(loss)),
            Op::NsLoss {
                target,
                negatives: negatives.to_vec(),
                form,
            },
            &parents,
        )
    }

    pub fn sum(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs.first().ok_or(Error::Empty("sum inputs"))?;
        let mut acc = self.value(*first).clone();
        for &v in &inputs[1..] {
            let x = self.value(v);
            if x.len() != acc.len() {
                return Err(Error::shape("sum", "operand sizes differ"));
            }
            acc.add_assign(x);
        }
        self.push(
            acc,
            Op::Sum {
                inputs: inputs.to_vec(),
            },
            inputs,
        )
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let mut out = self.value(input).clone();
        out.scale(factor);
        self.push(out, Op::Scale { input, factor }, &[input])
    }

    /// Scalar `Σ wᵢ·xᵢ`; reduces any array to a scalar for gradient checks.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<T>) -> Result<Var> {
        let x = self.value(input);
        if x.len() != weights.len() {
            return Err(Error::shape("weighted_sum", "weights length differs"));
        }
        let v = ops::dot_slices(x.data(), &weights);
        self.push(NumArray::scalar(v), Op::WeightedSum { input, weights }, &[input])
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape("backward", "root must be a scalar"));
        }
        let mut grads: Vec<Option<NumArray<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut seed = self.value(root).clone();
        seed.data_mut()[0] = T::one();
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&self.nodes[i].op, self.nodes[i].value.get(), &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &NumArray<T>,
        g: &NumArray<T>,
        grads: &mut [Option<NumArray<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Embedding { table, ids } => {
                if self.needs(*table) {
                    let t = self.value(*table);
                    let d = t.cols();
                    let acc = slot(grads, *table, t.shape());
                    let data = acc.data_mut();
                    for (row, &id) in ids.iter().enumerate() {
                        let dst = &mut data[id as usize * d..(id as usize + 1) * d];
                        for (a, &b) in dst.iter_mut().zip(g.row(row)) {
                            *a += b;
                        }
                    }
                }
            }
            Op::Conv {
                input,
                filters,
                lens,
                bias,
            } => {
                let x = self.value(*input);
                let f = self.value(*filters);
                let cg = ops::conv1d_segments_backward(x.data(), x.cols(), lens, f, g.data());
                if self.needs(*input) {
                    accumulate(grads, *input, x.shape(), &cg.input);
                }
                if self.needs(*filters) {
                    accumulate(grads, *filters, f.shape(), &cg.filters);
                }
                if self.needs(*bias) {
                    accumulate(grads, *bias, self.value(*bias).shape(), &cg.bias);
                }
            }
            Op::Relu { input } => {
                if self.needs(*input) {
                    let x = self.value(*input);
                    let data: Vec<T> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&z, &gv)| if z > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(grads, *input, x.shape(), &data);
                }
            }
            Op::MaxPool { input, argmax } => {
                if self.needs(*input) {
                    let acc = slot(grads, *input, self.value(*input).shape());
                    let data = acc.data_mut();
                    for (&idx, &gv) in argmax.iter().zip(g.data()) {
                        data[idx] += gv;
                    }
                }
            }
            Op::AvgPool { input, lens } => {
                if self.needs(*input) {
                    let x = self.value(*input);
                    let c = x.cols();
                    let acc = slot(grads, *input, x.shape());
                    let data = acc.data_mut();
                    let mut start = 0;
                    for (seg, &t) in lens.iter().enumerate() {
                        let inv = T::one() / T::of(t as f64);
                        let gr = &g.data()[seg * c..(seg + 1) * c];
                        for r in start..start + t {
                            for (a, &b) in data[r * c..(r + 1) * c].iter_mut().zip(gr) {
                                *a += b * inv;
                            }
                        }
                        start += t;
                    }
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, m) = (w.shape()[0], w.shape()[1]);
                let rows = x.len() / m;
                if self.needs(*input) {
                    let mut gx = vec![T::zero(); rows * m];
                    gemm(
                        MatRef::row_major(g.data(), rows, n),
                        MatRef::row_major(w.data(), n, m),
                        T::zero(),
                        &mut gx,
                    );
                    accumulate(grads, *input, x.shape(), &gx);
                }
                if self.needs(*weight) {
                    let acc = slot(grads, *weight, w.shape());
                    gemm(
                        MatRef::transposed(g.data(), n, rows),
                        MatRef::row_major(x.data(), rows, m),
                        T::one(),
                        acc.data_mut(),
                    );
                }
                if self.needs(*bias) {
                    let acc = slot(grads, *bias, self.value(*bias).shape());
                    for row in g.data().chunks_exact(n) {
                        for (a, &b) in acc.data_mut().iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                }
            }
            Op::Dropout { input, keep, scale } => {
                if self.needs(*input) {
                    let data: Vec<T> = g
                        .data()
                        .iter()
                        .zip(keep)
                        .map(|(&gv, &k)| if k { gv * *scale } else { T::zero() })
                        .collect();
                    accumulate(grads, *input, g.shape(), &data);
                }
            }
            Op::MeanRows { input, rows } => {
                if self.needs(*input) {
                    let x = self.value(*input);
                    let c = x.cols();
                    let inv = T::one() / T::of(rows.len() as f64);
                    let acc = slot(grads, *input, x.shape());
                    let data = acc.data_mut();
                    for &r in rows {
                        for (a, &b) in data[r * c..(r + 1) * c].iter_mut().zip(g.data()) {
                            *a += b * inv;
                        }
                    }
                }
            }
            Op::LengthAdjust(rec) => self.length_adjust_backward(rec, g, grads),
            Op::RowSelect { input, row } => {
                if self.needs(*input) {
                    let x = self.value(*input);
                    let c = x.cols();
                    let acc = slot(grads, *input, x.shape());
                    for (a, &b) in acc.data_mut()[row * c..(row + 1) * c].iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
            }
            Op::Dot { a, b } => {
                let gv = g.item();
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d: Vec<T> = vb.data().iter().map(|&v| v * gv).collect();
                    accumulate(grads, *a, va.shape(), &d);
                }
                if self.needs(*b) {
                    let d: Vec<T> = va.data().iter().map(|&v| v * gv).collect();
                    accumulate(grads, *b, vb.shape(), &d);
                }
            }
            Op::NsLoss {
                target,
                negatives,
                form,
            } => {
                let gv = g.item().as_f64();
                let lt = self.scalar(*target).as_f64();
                // d softplus(x)/dx = σ(x)
                let dt = -ops::sigmoid(-lt);
                accumulate(grads, *target, &[1], &[T::of(gv * dt)]);
                for &n in negatives {
                    let ln = self.scalar(n).as_f64();
                    let dn = match form {
                        LossForm::Standard => ops::sigmoid(ln),
                        LossForm::Literal => ops::sigmoid(-ln),
                    };
                    accumulate(grads, n, &[1], &[T::of(gv * dn)]);
                }
            }
            Op::Sum { inputs } => {
                for &v in inputs {
                    if self.needs(v) {
                        accumulate(grads, v, out.shape(), g.data());
                    }
                }
            }
            Op::Scale { input, factor } => {
                if self.needs(*input) {
                    let d: Vec<T> = g.data().iter().map(|&v| v * *factor).collect();
                    accumulate(grads, *input, out.shape(), &d);
                }
            }
            Op::WeightedSum { input, weights } => {
                if self.needs(*input) {
                    let gv = g.item();
                    let d: Vec<T> = weights.iter().map(|&w| w * gv).collect();
                    accumulate(grads, *input, self.value(*input).shape(), &d);
                }
            }
        }
        Ok(())
    }

    fn length_adjust_backward(
        &self,
        rec: &LengthAdjustRecord<T>,
        g: &NumArray<T>,
        grads: &mut [Option<NumArray<T>>],
    ) {
        let Some(s) = &rec.scaling else {
            if self.needs(rec.mean) {
                accumulate(grads, rec.mean, g.shape(), g.data());
            }
            return;
        };
        // out = m · L̄ / ‖m‖ with L̄ = mean of constituent norms.
        let ug = ops::dot_slices(&s.unit, g.data());
        if self.needs(rec.mean) {
            let factor = s.mean_length / s.mean_norm;
            let d: Vec<T> = g
                .data()
                .iter()
                .zip(&s.unit)
                .map(|(&gv, &u)| (gv - u * ug) * factor)
                .collect();
            accumulate(grads, rec.mean, g.shape(), &d);
        }
        if self.needs(rec.constituents) {
            let c = self.value(rec.constituents);
            let cols = c.cols();
            let inv_n = T::one() / T::of(rec.rows.len() as f64);
            let acc = slot(grads, rec.constituents, c.shape());
            let data = acc.data_mut();
            for (&r, &norm) in rec.rows.iter().zip(&s.row_norms) {
                if norm == T::zero() {
                    continue;
                }
                let k = ug * inv_n / norm;
                for (a, &v) in data[r * cols..(r + 1) * cols].iter_mut().zip(c.row(r)) {
                    *a += v * k;
                }
            }
        }
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Embedding { .. } => "embedding",
        Op::Conv { .. } => "conv1d",
        Op::Relu { .. } => "relu",
        Op::MaxPool { .. } => "maxpool",
        Op::AvgPool { .. } => "avgpool",
        Op::Dense { .. } => "dense",
        Op::Dropout { .. } => "dropout",
        Op::MeanRows { .. } => "mean_rows",
        Op::LengthAdjust(_) => "length_adjust",
        Op::RowSelect { .. } => "row",
        Op::Dot { .. } => "dot",
        Op::NsLoss { .. } => "ns_loss",
        Op::Sum { .. } => "sum",
        Op::Scale { .. } => "scale",
        Op::WeightedSum { .. } => "weighted_sum",
    }
}

fn slot<'g, T: Real>(grads: &'g mut [Option<NumArray<T>>], v: Var, shape: &[usize]) -> &'g mut NumArray<T> {
    grads[v.0].get_or_insert_with(|| NumArray::zeros(shape.to_vec()))
}

fn accumulate<T: Real>(grads: &mut [Option<NumArray<T>>], v: Var, shape: &[usize], data: &[T]) {
    let acc = slot(grads, v, shape);
    for (a, &b) in acc.data_mut().iter_mut().zip(data) {
        *a += b;
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<NumArray<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&NumArray<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<NumArray<T>> {
        self.grads[v.0].take()
    }
}

/// Elementwise mean of selected rows, summed in list order then divided.
pub(crate) fn mean_of_rows<T: Real>(x: &NumArray<T>, rows: &[usize]) -> Result<Vec<T>> {
    if rows.is_empty() {
        return Err(Error::Empty("mean over zero vectors"));
    }
    let c = x.cols();
    let mut acc = vec![T::zero(); c];
    for &r in rows {
        if r >= x.rows() {
            return Err(Error::IndexOutOfRange {
                what: "matrix rows",
                index: r,
                size: x.rows(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(x.row(r)) {
            *a += v;
        }
    }
    let n = T::of(rows.len() as f64);
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub(crate) struct Adjusted<T> {
    pub values: Vec<T>,
    pub mean_norm: T,
    pub mean_length: T,
}

/// `mean × average(lengths) / ‖mean‖`, or `None` if `‖mean‖ < ε`.
pub(crate) fn adjust_length<T: Real>(mean: &[T], lengths: &[T]) -> Option<Adjusted<T>> {
    let mean_norm = ops::l2_norm(mean);
    if mean_norm.as_f64() < NORM_EPSILON {
        return None;
    }
    let mut total = T::zero();
    for &l in lengths {
        total += l;
    }
    let mean_length = total / T::of(lengths.len() as f64);
    // a single constituent gives a ratio of exactly 1
    let ratio = mean_length / mean_norm;
    let values = mean.iter().map(|&v| v * ratio).collect();
    Some(Adjusted {
        values,
        mean_norm,
        mean_length,
    })
}

pub(crate) fn ns_loss_value(target: f64, negatives: &[f64], form: LossForm) -> f64 {
    let mut loss = ops::softplus(-target);
    for &n in negatives {
        match form {
            LossForm::Standard => loss += ops::softplus(n),
            // log σ(x) = -softplus(-x)
            LossForm::Literal => loss -= ops::softplus(-n),
        }
    }
    loss
}
