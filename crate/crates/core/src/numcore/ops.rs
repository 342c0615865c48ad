//! Forward kernels.
//!
//! Sequence operations work on a ragged batch: the rows of a `[ΣT × C]`
//! buffer are split into consecutive segments of the given lengths, one
//! segment per sentence. The public single-sequence functions are the
//! one-segment case.

use rand::Rng;

use super::linalg::{gemm, MatRef};
use super::{NumArray, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub const POOL_SIZE: usize = 2;

/// Row `i` of the output is row `ids[i]` of `table`.
pub fn embedding_lookup<T: Real>(table: &NumArray<T>, ids: &[u32]) -> Result<NumArray<T>> {
    let d = table.cols();
    let data = gather_rows(table, ids)?;
    NumArray::new(vec![ids.len(), d], data)
}

pub(crate) fn gather_rows<T: Real>(table: &NumArray<T>, ids: &[u32]) -> Result<Vec<T>> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            return Err(Error::IndexOutOfRange {
                what: "embedding table",
                index: id,
                size: v,
            });
        }
        out.extend_from_slice(table.row(id));
    }
    Ok(out)
}

/// Valid, stride-1 convolution. `filters` is `[C_out × w × C_in]`.
pub fn conv1d_valid<T: Real>(
    input: &NumArray<T>,
    filters: &NumArray<T>,
    bias: &NumArray<T>,
) -> Result<NumArray<T>> {
    let c_out = conv_out_channels(filters, bias)?;
    let (out, lens) = conv1d_segments(input.data(), input.cols(), &[input.rows()], filters, bias)?;
    NumArray::new(vec![lens[0], c_out], out)
}

fn conv_out_channels<T: Real>(filters: &NumArray<T>, bias: &NumArray<T>) -> Result<usize> {
    if filters.shape().len() != 3 {
        return Err(Error::shape(
            "conv1d",
            format!("filters must be [C_out × w × C_in], got {:?}", filters.shape()),
        ));
    }
    let c_out = filters.shape()[0];
    if bias.len() != c_out {
        return Err(Error::shape(
            "conv1d",
            format!("bias has {} values for {} filters", bias.len(), c_out),
        ));
    }
    Ok(c_out)
}

/// Convolves every segment independently; returns the output rows and the
/// per-segment output lengths.
pub(crate) fn conv1d_segments<T: Real>(
    input: &[T],
    c_in: usize,
    lens: &[usize],
    filters: &NumArray<T>,
    bias: &NumArray<T>,
) -> Result<(Vec<T>, Vec<usize>)> {
    let c_out = conv_out_channels(filters, bias)?;
    let (width, filter_in) = (filters.shape()[1], filters.shape()[2]);
    if filter_in != c_in {
        return Err(Error::shape(
            "conv1d",
            format!("input has {c_in} channels, filters expect {filter_in}"),
        ));
    }
    let total: usize = lens.iter().sum();
    debug_assert_eq!(total * c_in, input.len());
    if let Some(&short) = lens.iter().find(|&&t| t < width) {
        return Err(Error::SequenceTooShort {
            op: "conv1d_valid",
            needed: width,
            got: short,
        });
    }
    let out_lens: Vec<usize> = lens.iter().map(|&t| t + 1 - width).collect();
    if lens.is_empty() {
        return Ok((Vec::new(), out_lens));
    }

    // One GEMM over every window of the concatenated input; windows that
    // straddle a segment boundary are computed and then discarded.
    let windows = total + 1 - width;
    let patch = width * c_in;
    let mut full = vec![T::zero(); windows * c_out];
    gemm(
        MatRef {
            data: input,
            rows: windows,
            cols: patch,
            row_stride: c_in,
            col_stride: 1,
        },
        MatRef::transposed(filters.data(), patch, c_out),
        T::zero(),
        &mut full,
    );

    let mut out = Vec::with_capacity(out_lens.iter().sum::<usize>() * c_out);
    let mut start = 0;
    for (&t, &t_out) in lens.iter().zip(&out_lens) {
        for w in start..start + t_out {
            let row = &full[w * c_out..(w + 1) * c_out];
            out.extend(row.iter().zip(bias.data()).map(|(&v, &b)| v + b));
        }
        start += t;
    }
    Ok((out, out_lens))
}

/// Gradients of [`conv1d_segments`] with respect to input, filters and bias.
pub(crate) struct ConvGrads<T> {
    pub input: Vec<T>,
    pub filters: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv1d_segments_backward<T: Real>(
    input: &[T],
    c_in: usize,
    lens: &[usize],
    filters: &NumArray<T>,
    grad_out: &[T],
) -> ConvGrads<T> {
    let (c_out, width) = (filters.shape()[0], filters.shape()[1]);
    let patch = width * c_in;
    let total: usize = lens.iter().sum();
    let mut grads = ConvGrads {
        input: vec![T::zero(); total * c_in],
        filters: vec![T::zero(); c_out * patch],
        bias: vec![T::zero(); c_out],
    };
    if lens.is_empty() {
        return grads;
    }
    let windows = total + 1 - width;

    // Scatter the output gradient into the full window layout; boundary
    // windows keep a zero gradient.
    let mut g_full = vec![T::zero(); windows * c_out];
    let (mut start, mut src) = (0, 0);
    for &t in lens {
        let t_out = t + 1 - width;
        let n = t_out * c_out;
        g_full[start * c_out..start * c_out + n].copy_from_slice(&grad_out[src..src + n]);
        start += t;
        src += n;
    }

    for row in g_full.chunks_exact(c_out) {
        for (b, &g) in grads.bias.iter_mut().zip(row) {
            *b += g;
        }
    }

    // dW = G_fullᵀ · A_full
    gemm(
        MatRef::transposed(&g_full, c_out, windows),
        MatRef {
            data: input,
            rows: windows,
            cols: patch,
            row_stride: c_in,
            col_stride: 1,
        },
        T::zero(),
        &mut grads.filters,
    );

    // dA_full = G_full · W, then fold overlapping windows back onto rows.
    let mut g_patch = vec![T::zero(); windows * patch];
    gemm(
        MatRef::row_major(&g_full, windows, c_out),
        MatRef::row_major(filters.data(), c_out, patch),
        T::zero(),
        &mut g_patch,
    );
    for (w, row) in g_patch.chunks_exact(patch).enumerate() {
        let dst = &mut grads.input[w * c_in..w * c_in + patch];
        for (d, &g) in dst.iter_mut().zip(row) {
            *d += g;
        }
    }
    grads
}

/// Max pooling with window 2, stride 2; a trailing odd row is dropped.
pub fn maxpool1d<T: Real>(input: &NumArray<T>) -> Result<NumArray<T>> {
    let c = input.cols();
    let pooled = maxpool_segments(input.data(), c, &[input.rows()])?;
    NumArray::new(vec![pooled.lens[0], c], pooled.values)
}

pub(crate) struct Pooled<T> {
    pub values: Vec<T>,
    pub lens: Vec<usize>,
    /// Flat input index that supplied each output element.
    pub argmax: Vec<usize>,
}

pub(crate) fn maxpool_segments<T: Real>(input: &[T], c: usize, lens: &[usize]) -> Result<Pooled<T>> {
    if let Some(&short) = lens.iter().find(|&&t| t < POOL_SIZE) {
        return Err(Error::SequenceTooShort {
            op: "maxpool1d",
            needed: POOL_SIZE,
            got: short,
        });
    }
    let out_lens: Vec<usize> = lens.iter().map(|&t| t / POOL_SIZE).collect();
    let n_out: usize = out_lens.iter().sum::<usize>() * c;
    let mut values = Vec::with_capacity(n_out);
    let mut argmax = Vec::with_capacity(n_out);
    let mut start = 0;
    for (&t, &t_out) in lens.iter().zip(&out_lens) {
        for i in 0..t_out {
            let r0 = (start + POOL_SIZE * i) * c;
            let r1 = r0 + c;
            for ch in 0..c {
                // Strict comparison: ties go to the first row.
                let (idx, v) = if input[r1 + ch] > input[r0 + ch] {
                    (r1 + ch, input[r1 + ch])
                } else {
                    (r0 + ch, input[r0 + ch])
                };
                values.push(v);
                argmax.push(idx);
            }
        }
        start += t;
    }
    Ok(Pooled {
        values,
        lens: out_lens,
        argmax,
    })
}

/// Mean over rows, `[T × C] -> [C]`.
pub fn global_avg_pool<T: Real>(input: &NumArray<T>) -> Result<NumArray<T>> {
    let c = input.cols();
    let out = avgpool_segments(input.data(), c, &[input.rows()])?;
    Ok(NumArray::from_vec(out))
}

pub(crate) fn avgpool_segments<T: Real>(input: &[T], c: usize, lens: &[usize]) -> Result<Vec<T>> {
    if lens.contains(&0) {
        return Err(Error::SequenceTooShort {
            op: "global_avg_pool",
            needed: 1,
            got: 0,
        });
    }
    let mut out = Vec::with_capacity(lens.len() * c);
    let mut start = 0;
    for &t in lens {
        let mut acc = vec![T::zero(); c];
        for row in input[start * c..(start + t) * c].chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = T::one() / T::of(t as f64);
        out.extend(acc.into_iter().map(|a| a * inv));
        start += t;
    }
    Ok(out)
}

/// `act(W·x + b)` for a single input vector; `weight` is `[n × m]`.
pub fn dense<T: Real>(
    input: &NumArray<T>,
    weight: &NumArray<T>,
    bias: &NumArray<T>,
    activation: Activation,
) -> Result<NumArray<T>> {
    let mut out = dense_rows(input.data(), 1, weight, bias)?;
    if activation == Activation::Relu {
        relu_in_place(&mut out);
    }
    Ok(NumArray::from_vec(out))
}

/// `X · Wᵀ + b` for `rows` stacked input vectors.
pub(crate) fn dense_rows<T: Real>(
    x: &[T],
    rows: usize,
    weight: &NumArray<T>,
    bias: &NumArray<T>,
) -> Result<Vec<T>> {
    if weight.shape().len() != 2 {
        return Err(Error::shape("dense", format!("weight shape {:?}", weight.shape())));
    }
    let (n, m) = (weight.shape()[0], weight.shape()[1]);
    if x.len() != rows * m || bias.len() != n {
        return Err(Error::shape(
            "dense",
            format!(
                "input of {} values ({} rows), weight [{n} × {m}], bias {}",
                x.len(),
                rows,
                bias.len()
            ),
        ));
    }
    let mut out = vec![T::zero(); rows * n];
    gemm(
        MatRef::row_major(x, rows, m),
        MatRef::transposed(weight.data(), m, n),
        T::zero(),
        &mut out,
    );
    for row in out.chunks_exact_mut(n) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

pub(crate) fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if *x <= T::zero() {
            *x = T::zero();
        }
    }
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &NumArray<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NumArray<T>> {
    let keep = dropout_mask(input.len(), rate, mode, rng)?;
    let data = apply_mask(input.data(), keep.as_deref(), rate);
    NumArray::new(input.shape().to_vec(), data)
}

/// `None` means every element is kept unscaled.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Option<Vec<bool>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} not in [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(None);
    }
    Ok(Some((0..len).map(|_| rng.gen::<f64>() >= rate).collect()))
}

pub(crate) fn apply_mask<T: Real>(x: &[T], keep: Option<&[bool]>, rate: f64) -> Vec<T> {
    match keep {
        None => x.to_vec(),
        Some(keep) => {
            let scale = T::of(1.0 / (1.0 - rate));
            x.iter()
                .zip(keep)
                .map(|(&v, &k)| if k { v * scale } else { T::zero() })
                .collect()
        }
    }
}

pub fn dot<T: Real>(a: &NumArray<T>, b: &NumArray<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::shape("dot", format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(dot_slices(a.data(), b.data()))
}

pub(crate) fn dot_slices<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn l2_norm<T: Real>(v: &[T]) -> T {
    dot_slices(v, v).sqrt()
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
