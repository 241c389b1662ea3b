//! Forward and backward kernels for every primitive recorded on the tape.
//!
//! Forward kernels are pure functions of their inputs, so replaying a record
//! reproduces it bit-exactly.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product attention over `groups` independent blocks.
///
/// Queries are `[groups * q_len, d]`, keys and values `[groups * k_len, d]`.
/// `allowed[i * k_len + j]` gates whether query `i` may attend to key `j`
/// (shared by every group); `None` means full attention.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSpec {
    pub heads: usize,
    pub groups: usize,
    pub allowed: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Param(String),
    Variable,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddRow,
    MulRow,
    Gelu,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    LayerNorm { eps: f64 },
    Reshape(Vec<usize>),
    Transpose,
    SliceCols { start: usize, end: usize },
    ConcatCols,
    GatherRows(Vec<usize>),
    ConcatRows,
    Sum,
    Mean,
    Attention(AttentionSpec),
    Im2Col1d { batch: usize, len: usize, kernel: usize },
    Im2Col2d { batch: usize, h: usize, w: usize, kh: usize, kw: usize },
    AvgPool2d { batch: usize, h: usize, w: usize, ph: usize, pw: usize },
    MeanRowGroups { group: usize },
    WhereRows(Vec<bool>),
    WeightedSqError,
    CrossEntropy(Vec<usize>),
    Chamfer { groups: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Variable => "variable",
            Op::Constant => "constant",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddRow => "add_row",
            Op::MulRow => "mul_row",
            Op::Gelu => "gelu",
            Op::Relu => "relu",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softmax => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Reshape(_) => "reshape",
            Op::Transpose => "transpose",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols => "concat_cols",
            Op::GatherRows(_) => "gather_rows",
            Op::ConcatRows => "concat_rows",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Attention(_) => "attention",
            Op::Im2Col1d { .. } => "im2col1d",
            Op::Im2Col2d { .. } => "im2col2d",
            Op::AvgPool2d { .. } => "avg_pool2d",
            Op::MeanRowGroups { .. } => "mean_row_groups",
            Op::WhereRows(_) => "where_rows",
            Op::WeightedSqError => "weighted_sq_error",
            Op::CrossEntropy(_) => "cross_entropy",
            Op::Chamfer { .. } => "chamfer",
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Op::Param(_) | Op::Variable | Op::Constant)
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Saved<T> {
    pub tensors: Vec<Tensor<T>>,
    pub indices: Vec<usize>,
}

fn err(op: &'static str, detail: String) -> Error {
    Error::shape(op, detail)
}

fn matrix_dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(err(op, format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * du
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn softmax_row<T: Scalar>(row: &mut [T]) {
    let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    if m == T::neg_infinity() {
        row.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    let mut s = T::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x = *x / s;
    }
}

/// Copy columns `[c0, c0 + w)` of rows `[r0, r0 + n)` of a `[*, d]` buffer.
fn block<T: Scalar>(src: &[T], d: usize, r0: usize, n: usize, c0: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * w);
    for r in r0..r0 + n {
        out.extend_from_slice(&src[r * d + c0..r * d + c0 + w]);
    }
    out
}

fn add_block<T: Scalar>(dst: &mut [T], d: usize, r0: usize, n: usize, c0: usize, w: usize, src: &[T]) {
    for (i, r) in (r0..r0 + n).enumerate() {
        for (x, &y) in dst[r * d + c0..r * d + c0 + w].iter_mut().zip(&src[i * w..(i + 1) * w]) {
            *x += y;
        }
    }
}

fn nearest<T: Scalar>(p: &[T], cloud: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, q) in cloud.chunks_exact(3).enumerate() {
        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Evaluate one primitive.
pub fn forward<T: Scalar>(op: &Op, x: &[&Tensor<T>]) -> Result<(Tensor<T>, Saved<T>)> {
    let mut saved = Saved::default();
    let out = match op {
        Op::Param(_) | Op::Variable | Op::Constant => {
            return Err(Error::Contract("leaf nodes have no forward kernel".into()))
        }
        Op::MatMul => {
            let (m, k) = matrix_dims(x[0], "matmul")?;
            let (k2, n) = matrix_dims(x[1], "matmul")?;
            if k != k2 {
                return Err(err("matmul", format!("{:?} x {:?}", x[0].shape(), x[1].shape())));
            }
            let mut out = Tensor::zeros([m, n]);
            T::gemm(m, k, n, T::one(), x[0].data(), false, x[1].data(), false, T::zero(), out.data_mut());
            out
        }
        Op::Add => x[0].zip_map(x[1], |a, b| a + b)?,
        Op::Sub => x[0].zip_map(x[1], |a, b| a - b)?,
        Op::Mul => x[0].zip_map(x[1], |a, b| a * b)?,
        Op::Scale(c) => x[0].scale(T::of(*c)),
        Op::AddRow | Op::MulRow => {
            let (_, c) = x[0].rows_cols();
            if x[1].len() != c {
                return Err(err(op.name(), format!("row {:?} vs {:?}", x[1].shape(), x[0].shape())));
            }
            let mut out = x[0].clone();
            let r = x[1].data();
            let add = matches!(op, Op::AddRow);
            for row in out.data_mut().chunks_exact_mut(c) {
                for (a, &b) in row.iter_mut().zip(r) {
                    if add {
                        *a += b
                    } else {
                        *a *= b
                    }
                }
            }
            out
        }
        Op::Gelu => x[0].map(gelu),
        Op::Relu => x[0].map(|v| v.max(T::zero())),
        Op::Tanh => x[0].map(|v| v.tanh()),
        Op::Sigmoid => x[0].map(sigmoid),
        Op::Softmax => {
            let (_, c) = x[0].rows_cols();
            let mut out = x[0].clone();
            out.data_mut().chunks_exact_mut(c).for_each(softmax_row);
            out
        }
        Op::LayerNorm { eps } => {
            let (r, c) = x[0].rows_cols();
            let mut out = x[0].clone();
            let mut rstd = Vec::with_capacity(r);
            let n = T::of(c as f64);
            for row in out.data_mut().chunks_exact_mut(c) {
                let mean = row.iter().copied().sum::<T>() / n;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                let rs = T::one() / (var + T::of(*eps)).sqrt();
                row.iter_mut().for_each(|v| *v = (*v - mean) * rs);
                rstd.push(rs);
            }
            saved.tensors.push(Tensor::new([r], rstd)?);
            out
        }
        Op::Reshape(shape) => x[0].clone().reshape(shape.clone())?,
        Op::Transpose => {
            matrix_dims(x[0], "transpose")?;
            x[0].transpose()?
        }
        Op::SliceCols { start, end } => {
            let (r, c) = x[0].rows_cols();
            if start >= end || *end > c {
                return Err(err("slice_cols", format!("{start}..{end} of {c} columns")));
            }
            let w = end - start;
            Tensor::new([r, w], block(x[0].data(), c, 0, r, *start, w))?
        }
        Op::ConcatCols => {
            let (r, _) = x[0].rows_cols();
            let mut total = 0;
            for t in x {
                let (ri, ci) = t.rows_cols();
                if ri != r {
                    return Err(err("concat_cols", format!("row count {ri} vs {r}")));
                }
                total += ci;
            }
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for t in x {
                    data.extend_from_slice(t.row(i));
                }
            }
            Tensor::new([r, total], data)?
        }
        Op::GatherRows(idx) => {
            let (r, c) = x[0].rows_cols();
            let mut data = Vec::with_capacity(idx.len() * c);
            for &i in idx {
                if i >= r {
                    return Err(err("gather_rows", format!("row {i} of {r}")));
                }
                data.extend_from_slice(x[0].row(i));
            }
            Tensor::new([idx.len(), c], data)?
        }
        Op::ConcatRows => {
            let (_, c) = x[0].rows_cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for t in x {
                let (ri, ci) = t.rows_cols();
                if ci != c {
                    return Err(err("concat_rows", format!("column count {ci} vs {c}")));
                }
                rows += ri;
                data.extend_from_slice(t.data());
            }
            Tensor::new([rows, c], data)?
        }
        Op::Sum => Tensor::scalar(x[0].sum()),
        Op::Mean => {
            if x[0].is_empty() {
                return Err(err("mean", "empty tensor".into()));
            }
            Tensor::scalar(x[0].sum() / T::of(x[0].len() as f64))
        }
        Op::Attention(spec) => {
            let (out, probs) = attention_forward(spec, x[0], x[1], x[2])?;
            saved.tensors.push(probs);
            out
        }
        Op::Im2Col1d { batch, len, kernel } => {
            let (r, c) = x[0].rows_cols();
            if r != batch * len || kernel % 2 == 0 {
                return Err(err("im2col1d", format!("{r} rows for {batch}x{len}, kernel {kernel}")));
            }
            let half = kernel / 2;
            let mut out = Tensor::zeros([r, kernel * c]);
            let src = x[0].data();
            let dst = out.data_mut();
            for b in 0..*batch {
                for l in 0..*len {
                    let row = b * len + l;
                    for k in 0..*kernel {
                        let p = l as isize + k as isize - half as isize;
                        if p < 0 || p >= *len as isize {
                            continue;
                        }
                        let s = (b * len + p as usize) * c;
                        let d = row * kernel * c + k * c;
                        dst[d..d + c].copy_from_slice(&src[s..s + c]);
                    }
                }
            }
            out
        }
        Op::Im2Col2d { batch, h, w, kh, kw } => {
            let (r, c) = x[0].rows_cols();
            if r != batch * h * w || kh % 2 == 0 || kw % 2 == 0 {
                return Err(err("im2col2d", format!("{r} rows for {batch}x{h}x{w}, kernel {kh}x{kw}")));
            }
            let (hh, hw) = ((kh / 2) as isize, (kw / 2) as isize);
            let width = kh * kw * c;
            let mut out = Tensor::zeros([r, width]);
            let src = x[0].data();
            let dst = out.data_mut();
            for b in 0..*batch {
                for y in 0..*h {
                    for xx in 0..*w {
                        let row = (b * h + y) * w + xx;
                        for dy in 0..*kh {
                            let sy = y as isize + dy as isize - hh;
                            if sy < 0 || sy >= *h as isize {
                                continue;
                            }
                            for dx in 0..*kw {
                                let sx = xx as isize + dx as isize - hw;
                                if sx < 0 || sx >= *w as isize {
                                    continue;
                                }
                                let s = ((b * h + sy as usize) * w + sx as usize) * c;
                                let d = row * width + (dy * kw + dx) * c;
                                dst[d..d + c].copy_from_slice(&src[s..s + c]);
                            }
                        }
                    }
                }
            }
            out
        }
        Op::AvgPool2d { batch, h, w, ph, pw } => {
            let (r, c) = x[0].rows_cols();
            if r != batch * h * w || *ph == 0 || *pw == 0 || h / ph == 0 || w / pw == 0 {
                return Err(err("avg_pool2d", format!("{r} rows for {batch}x{h}x{w}, pool {ph}x{pw}")));
            }
            let (ho, wo) = (h / ph, w / pw);
            let inv = T::one() / T::of((ph * pw) as f64);
            let mut out = Tensor::zeros([batch * ho * wo, c]);
            let src = x[0].data();
            let dst = out.data_mut();
            for b in 0..*batch {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let orow = (b * ho + oy) * wo + ox;
                        for dy in 0..*ph {
                            for dx in 0..*pw {
                                let s = ((b * h + oy * ph + dy) * w + ox * pw + dx) * c;
                                for k in 0..c {
                                    dst[orow * c + k] += src[s + k] * inv;
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        Op::MeanRowGroups { group } => {
            let (r, c) = x[0].rows_cols();
            if *group == 0 || r % group != 0 {
                return Err(err("mean_row_groups", format!("{r} rows in groups of {group}")));
            }
            let inv = T::one() / T::of(*group as f64);
            let mut out = Tensor::zeros([r / group, c]);
            for (i, row) in x[0].data().chunks_exact(c).enumerate() {
                let o = out.row_mut(i / group);
                for (a, &b) in o.iter_mut().zip(row) {
                    *a += b * inv;
                }
            }
            out
        }
        Op::WhereRows(mask) => {
            let (r, c) = x[0].rows_cols();
            if mask.len() != r || x[1].len() != c {
                return Err(err("where_rows", format!("mask {} rows, fill {:?}, input {:?}", mask.len(), x[1].shape(), x[0].shape())));
            }
            let mut out = x[0].clone();
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    out.row_mut(i).copy_from_slice(x[1].data());
                }
            }
            out
        }
        Op::WeightedSqError => {
            x[0].expect_same_shape(x[1], "weighted_sq_error")?;
            x[0].expect_same_shape(x[2], "weighted_sq_error")?;
            let mut s = T::zero();
            for ((&p, &t), &w) in x[0].data().iter().zip(x[1].data()).zip(x[2].data()) {
                if w != T::zero() {
                    s += w * (p - t) * (p - t);
                }
            }
            Tensor::scalar(s)
        }
        Op::CrossEntropy(labels) => {
            let (b, c) = matrix_dims(x[0], "cross_entropy")?;
            if labels.len() != b || labels.iter().any(|&l| l >= c) || b == 0 {
                return Err(err("cross_entropy", format!("{} labels for {b}x{c} logits", labels.len())));
            }
            let mut probs = x[0].clone();
            let mut loss = T::zero();
            for (i, row) in probs.data_mut().chunks_exact_mut(c).enumerate() {
                let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
                loss += lse - row[labels[i]];
                softmax_row(row);
            }
            saved.tensors.push(probs);
            Tensor::scalar(loss / T::of(b as f64))
        }
        Op::Chamfer { groups } => {
            let (rp, cp) = x[0].rows_cols();
            let (rt, ct) = x[1].rows_cols();
            if cp != 3 || ct != 3 || *groups == 0 || rp % groups != 0 || rt % groups != 0 || rp == 0 || rt == 0 {
                return Err(err("chamfer", format!("pred {:?}, target {:?}, {groups} groups", x[0].shape(), x[1].shape())));
            }
            let (np, nt) = (rp / groups, rt / groups);
            let mut total = T::zero();
            for g in 0..*groups {
                let p = &x[0].data()[g * np * 3..(g + 1) * np * 3];
                let t = &x[1].data()[g * nt * 3..(g + 1) * nt * 3];
                let mut a = T::zero();
                for pi in p.chunks_exact(3) {
                    let (j, d) = nearest(pi, t);
                    saved.indices.push(j);
                    a += d;
                }
                let mut b = T::zero();
                for ti in t.chunks_exact(3) {
                    let (j, d) = nearest(ti, p);
                    saved.indices.push(j);
                    b += d;
                }
                total += a / T::of(np as f64) + b / T::of(nt as f64);
            }
            Tensor::scalar(total / T::of(*groups as f64))
        }
    };
    Ok((out, saved))
}

fn attention_forward<T: Scalar>(
    spec: &AttentionSpec,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (rq, d) = matrix_dims(q, "attention")?;
    let (rk, dk) = matrix_dims(k, "attention")?;
    if dk != d || k.shape() != v.shape() || spec.heads == 0 || d % spec.heads != 0 {
        return Err(err("attention", format!("q {:?}, k {:?}, v {:?}, {} heads", q.shape(), k.shape(), v.shape(), spec.heads)));
    }
    let g = spec.groups;
    if g == 0 || rq % g != 0 || rk % g != 0 {
        return Err(err("attention", format!("{rq}/{rk} rows not divisible into {g} groups")));
    }
    let (nq, nk) = (rq / g, rk / g);
    if let Some(a) = &spec.allowed {
        if a.len() != nq * nk {
            return Err(err("attention", format!("mask of {} entries for {nq}x{nk}", a.len())));
        }
    }
    let h = spec.heads;
    let dh = d / h;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut out = Tensor::zeros([rq, d]);
    let mut probs = Tensor::zeros([g, h, nq, nk]);
    let mut scores = vec![T::zero(); nq * nk];
    let mut oh = vec![T::zero(); nq * dh];
    for gi in 0..g {
        for hi in 0..h {
            let qh = block(q.data(), d, gi * nq, nq, hi * dh, dh);
            let kh = block(k.data(), d, gi * nk, nk, hi * dh, dh);
            let vh = block(v.data(), d, gi * nk, nk, hi * dh, dh);
            T::gemm(nq, dh, nk, scale, &qh, false, &kh, true, T::zero(), &mut scores);
            if let Some(a) = &spec.allowed {
                for (s, &ok) in scores.iter_mut().zip(a) {
                    if !ok {
                        *s = T::neg_infinity();
                    }
                }
            }
            scores.chunks_exact_mut(nk).for_each(softmax_row);
            T::gemm(nq, nk, dh, T::one(), &scores, false, &vh, false, T::zero(), &mut oh);
            add_block(out.data_mut(), d, gi * nq, nq, hi * dh, dh, &oh);
            let off = (gi * h + hi) * nq * nk;
            probs.data_mut()[off..off + nq * nk].copy_from_slice(&scores);
        }
    }
    Ok((out, probs))
}

/// Gradients of one node with respect to each of its inputs.
///
/// Entries are `None` for inputs that need no gradient.
pub fn backward<T: Scalar>(
    op: &Op,
    x: &[&Tensor<T>],
    out: &Tensor<T>,
    saved: &Saved<T>,
    gy: &Tensor<T>,
    need: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let mut gx: Vec<Option<Tensor<T>>> = vec![None; x.len()];
    match op {
        Op::Param(_) | Op::Variable | Op::Constant => {}
        Op::MatMul => {
            let (m, k) = (x[0].shape()[0], x[0].shape()[1]);
            let n = x[1].shape()[1];
            if need[0] {
                let mut ga = Tensor::zeros([m, k]);
                T::gemm(m, n, k, T::one(), gy.data(), false, x[1].data(), true, T::zero(), ga.data_mut());
                gx[0] = Some(ga);
            }
            if need[1] {
                let mut gb = Tensor::zeros([k, n]);
                T::gemm(k, m, n, T::one(), x[0].data(), true, gy.data(), false, T::zero(), gb.data_mut());
                gx[1] = Some(gb);
            }
        }
        Op::Add => {
            gx[0] = Some(gy.clone());
            gx[1] = Some(gy.clone());
        }
        Op::Sub => {
            gx[0] = Some(gy.clone());
            gx[1] = Some(gy.scale(-T::one()));
        }
        Op::Mul => {
            if need[0] {
                gx[0] = Some(gy.zip_map(x[1], |a, b| a * b)?);
            }
            if need[1] {
                gx[1] = Some(gy.zip_map(x[0], |a, b| a * b)?);
            }
        }
        Op::Scale(c) => gx[0] = Some(gy.scale(T::of(*c))),
        Op::AddRow => {
            let (_, c) = gy.rows_cols();
            gx[0] = Some(gy.clone());
            if need[1] {
                let mut gb = Tensor::zeros(x[1].shape().to_vec());
                for row in gy.data().chunks_exact(c) {
                    for (a, &b) in gb.data_mut().iter_mut().zip(row) {
                        *a += b;
                    }
                }
                gx[1] = Some(gb);
            }
        }
        Op::MulRow => {
            let (_, c) = gy.rows_cols();
            if need[0] {
                let mut ga = gy.clone();
                for row in ga.data_mut().chunks_exact_mut(c) {
                    for (a, &b) in row.iter_mut().zip(x[1].data()) {
                        *a *= b;
                    }
                }
                gx[0] = Some(ga);
            }
            if need[1] {
                let mut gg = Tensor::zeros(x[1].shape().to_vec());
                for (grow, xrow) in gy.data().chunks_exact(c).zip(x[0].data().chunks_exact(c)) {
                    for ((a, &g), &v) in gg.data_mut().iter_mut().zip(grow).zip(xrow) {
                        *a += g * v;
                    }
                }
                gx[1] = Some(gg);
            }
        }
        Op::Gelu => gx[0] = Some(gy.zip_map(x[0], |g, v| g * gelu_grad(v))?),
        Op::Relu => gx[0] = Some(gy.zip_map(x[0], |g, v| if v > T::zero() { g } else { T::zero() })?),
        Op::Tanh => gx[0] = Some(gy.zip_map(out, |g, y| g * (T::one() - y * y))?),
        Op::Sigmoid => gx[0] = Some(gy.zip_map(out, |g, y| g * y * (T::one() - y))?),
        Op::Softmax => {
            let (_, c) = out.rows_cols();
            let mut g = gy.clone();
            for (grow, yrow) in g.data_mut().chunks_exact_mut(c).zip(out.data().chunks_exact(c)) {
                let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                for (a, &y) in grow.iter_mut().zip(yrow) {
                    *a = y * (*a - dot);
                }
            }
            gx[0] = Some(g);
        }
        Op::LayerNorm { .. } => {
            let (_, c) = out.rows_cols();
            let rstd = saved.tensors[0].data();
            let n = T::of(c as f64);
            let mut g = gy.clone();
            for ((grow, xhat), &rs) in g.data_mut().chunks_exact_mut(c).zip(out.data().chunks_exact(c)).zip(rstd) {
                let mean_g = grow.iter().copied().sum::<T>() / n;
                let mean_gx = grow.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
                for (a, &xh) in grow.iter_mut().zip(xhat) {
                    *a = rs * (*a - mean_g - xh * mean_gx);
                }
            }
            gx[0] = Some(g);
        }
        Op::Reshape(_) => gx[0] = Some(gy.clone().reshape(x[0].shape().to_vec())?),
        Op::Transpose => gx[0] = Some(gy.transpose()?),
        Op::SliceCols { start, end } => {
            let (r, c) = x[0].rows_cols();
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            add_block(g.data_mut(), c, 0, r, *start, end - start, gy.data());
            gx[0] = Some(g);
        }
        Op::ConcatCols => {
            let (r, total) = gy.rows_cols();
            let mut c0 = 0;
            for (i, t) in x.iter().enumerate() {
                let (_, ci) = t.rows_cols();
                if need[i] {
                    gx[i] = Some(Tensor::new(t.shape().to_vec(), block(gy.data(), total, 0, r, c0, ci))?);
                }
                c0 += ci;
            }
        }
        Op::GatherRows(idx) => {
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            for (k, &i) in idx.iter().enumerate() {
                for (a, &b) in g.row_mut(i).iter_mut().zip(gy.row(k)) {
                    *a += b;
                }
            }
            gx[0] = Some(g);
        }
        Op::ConcatRows => {
            let mut off = 0;
            for (i, t) in x.iter().enumerate() {
                if need[i] {
                    let data = gy.data()[off..off + t.len()].to_vec();
                    gx[i] = Some(Tensor::new(t.shape().to_vec(), data)?);
                }
                off += t.len();
            }
        }
        Op::Sum => gx[0] = Some(Tensor::full(x[0].shape().to_vec(), gy.data()[0])),
        Op::Mean => {
            let v = gy.data()[0] / T::of(x[0].len() as f64);
            gx[0] = Some(Tensor::full(x[0].shape().to_vec(), v));
        }
        Op::Attention(spec) => {
            let (dq, dk, dv) = attention_backward(spec, x[0], x[1], x[2], &saved.tensors[0], gy);
            gx[0] = Some(dq);
            gx[1] = Some(dk);
            gx[2] = Some(dv);
        }
        Op::Im2Col1d { batch, len, kernel } => {
            let (_, c) = x[0].rows_cols();
            let half = kernel / 2;
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            let src = gy.data();
            let dst = g.data_mut();
            for b in 0..*batch {
                for l in 0..*len {
                    let row = b * len + l;
                    for k in 0..*kernel {
                        let p = l as isize + k as isize - half as isize;
                        if p < 0 || p >= *len as isize {
                            continue;
                        }
                        let d = (b * len + p as usize) * c;
                        let s = row * kernel * c + k * c;
                        for j in 0..c {
                            dst[d + j] += src[s + j];
                        }
                    }
                }
            }
            gx[0] = Some(g);
        }
        Op::Im2Col2d { batch, h, w, kh, kw } => {
            let (_, c) = x[0].rows_cols();
            let (hh, hw) = ((kh / 2) as isize, (kw / 2) as isize);
            let width = kh * kw * c;
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            let src = gy.data();
            let dst = g.data_mut();
            for b in 0..*batch {
                for y in 0..*h {
                    for xx in 0..*w {
                        let row = (b * h + y) * w + xx;
                        for dy in 0..*kh {
                            let sy = y as isize + dy as isize - hh;
                            if sy < 0 || sy >= *h as isize {
                                continue;
                            }
                            for dx in 0..*kw {
                                let sx = xx as isize + dx as isize - hw;
                                if sx < 0 || sx >= *w as isize {
                                    continue;
                                }
                                let d = ((b * h + sy as usize) * w + sx as usize) * c;
                                let s = row * width + (dy * kw + dx) * c;
                                for j in 0..c {
                                    dst[d + j] += src[s + j];
                                }
                            }
                        }
                    }
                }
            }
            gx[0] = Some(g);
        }
        Op::AvgPool2d { batch, h, w, ph, pw } => {
            let (_, c) = x[0].rows_cols();
            let (ho, wo) = (h / ph, w / pw);
            let inv = T::one() / T::of((ph * pw) as f64);
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            let src = gy.data();
            let dst = g.data_mut();
            for b in 0..*batch {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let orow = (b * ho + oy) * wo + ox;
                        for dy in 0..*ph {
                            for dx in 0..*pw {
                                let d = ((b * h + oy * ph + dy) * w + ox * pw + dx) * c;
                                for k in 0..c {
                                    dst[d + k] += src[orow * c + k] * inv;
                                }
                            }
                        }
                    }
                }
            }
            gx[0] = Some(g);
        }
        Op::MeanRowGroups { group } => {
            let (_, c) = x[0].rows_cols();
            let inv = T::one() / T::of(*group as f64);
            let mut g = Tensor::zeros(x[0].shape().to_vec());
            for (i, row) in g.data_mut().chunks_exact_mut(c).enumerate() {
                for (a, &b) in row.iter_mut().zip(gy.row(i / group)) {
                    *a = b * inv;
                }
            }
            gx[0] = Some(g);
        }
        Op::WhereRows(mask) => {
            let (_, c) = x[0].rows_cols();
            let mut ga = gy.clone();
            let mut gf = Tensor::zeros(x[1].shape().to_vec());
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    for (a, &b) in gf.data_mut().iter_mut().zip(gy.row(i)) {
                        *a += b;
                    }
                    ga.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = T::zero());
                }
            }
            gx[0] = Some(ga);
            gx[1] = Some(gf);
        }
        Op::WeightedSqError => {
            let g0 = gy.data()[0];
            let two = T::of(2.0);
            let mut gp = Tensor::zeros(x[0].shape().to_vec());
            for (((a, &p), &t), &w) in gp.data_mut().iter_mut().zip(x[0].data()).zip(x[1].data()).zip(x[2].data()) {
                *a = g0 * two * w * (p - t);
            }
            if need[1] {
                gx[1] = Some(gp.scale(-T::one()));
            }
            if need[2] {
                gx[2] = Some(x[0].zip_map(x[1], |p, t| g0 * (p - t) * (p - t))?);
            }
            gx[0] = Some(gp);
        }
        Op::CrossEntropy(labels) => {
            let probs = &saved.tensors[0];
            let (b, c) = (probs.shape()[0], probs.shape()[1]);
            let s = gy.data()[0] / T::of(b as f64);
            let mut g = probs.clone();
            for (i, row) in g.data_mut().chunks_exact_mut(c).enumerate() {
                row[labels[i]] -= T::one();
                row.iter_mut().for_each(|v| *v *= s);
            }
            gx[0] = Some(g);
        }
        Op::Chamfer { groups } => {
            let np = x[0].rows_cols().0 / groups;
            let nt = x[1].rows_cols().0 / groups;
            let scale = gy.data()[0] / T::of(*groups as f64);
            let two = T::of(2.0);
            let mut gp = Tensor::zeros(x[0].shape().to_vec());
            let mut gt = Tensor::zeros(x[1].shape().to_vec());
            let mut cursor = 0;
            for g in 0..*groups {
                let (p0, t0) = (g * np, g * nt);
                let wp = scale / T::of(np as f64);
                let wt = scale / T::of(nt as f64);
                for i in 0..np {
                    let j = saved.indices[cursor];
                    cursor += 1;
                    for a in 0..3 {
                        let diff = x[0].data()[(p0 + i) * 3 + a] - x[1].data()[(t0 + j) * 3 + a];
                        gp.data_mut()[(p0 + i) * 3 + a] += wp * two * diff;
                        gt.data_mut()[(t0 + j) * 3 + a] -= wp * two * diff;
                    }
                }
                for j in 0..nt {
                    let i = saved.indices[cursor];
                    cursor += 1;
                    for a in 0..3 {
                        let diff = x[1].data()[(t0 + j) * 3 + a] - x[0].data()[(p0 + i) * 3 + a];
                        gt.data_mut()[(t0 + j) * 3 + a] += wt * two * diff;
                        gp.data_mut()[(p0 + i) * 3 + a] -= wt * two * diff;
                    }
                }
            }
            gx[0] = Some(gp);
            gx[1] = Some(gt);
        }
    }
    Ok(gx)
}

fn attention_backward<T: Scalar>(
    spec: &AttentionSpec,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    probs: &Tensor<T>,
    gy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (rq, d) = (q.shape()[0], q.shape()[1]);
    let rk = k.shape()[0];
    let g = spec.groups;
    let (nq, nk) = (rq / g, rk / g);
    let h = spec.heads;
    let dh = d / h;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dq = Tensor::zeros([rq, d]);
    let mut dk = Tensor::zeros([rk, d]);
    let mut dv = Tensor::zeros([rk, d]);
    let mut dp = vec![T::zero(); nq * nk];
    let mut tmp_k = vec![T::zero(); nk * dh];
    let mut tmp_q = vec![T::zero(); nq * dh];
    for gi in 0..g {
        for hi in 0..h {
            let off = (gi * h + hi) * nq * nk;
            let p = &probs.data()[off..off + nq * nk];
            let qh = block(q.data(), d, gi * nq, nq, hi * dh, dh);
            let kh = block(k.data(), d, gi * nk, nk, hi * dh, dh);
            let vh = block(v.data(), d, gi * nk, nk, hi * dh, dh);
            let go = block(gy.data(), d, gi * nq, nq, hi * dh, dh);
            // dV = P^T dO
            T::gemm(nk, nq, dh, T::one(), p, true, &go, false, T::zero(), &mut tmp_k);
            add_block(dv.data_mut(), d, gi * nk, nk, hi * dh, dh, &tmp_k);
            // dP = dO V^T, then softmax backward
            T::gemm(nq, dh, nk, T::one(), &go, false, &vh, true, T::zero(), &mut dp);
            for (drow, prow) in dp.chunks_exact_mut(nk).zip(p.chunks_exact(nk)) {
                let dot: T = drow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                for (a, &pp) in drow.iter_mut().zip(prow) {
                    *a = pp * (*a - dot);
                }
            }
            T::gemm(nq, nk, dh, scale, &dp, false, &kh, false, T::zero(), &mut tmp_q);
            add_block(dq.data_mut(), d, gi * nq, nq, hi * dh, dh, &tmp_q);
            T::gemm(nk, nq, dh, scale, &dp, true, &qh, false, T::zero(), &mut tmp_k);
            add_block(dk.data_mut(), d, gi * nk, nk, hi * dh, dh, &tmp_k);
        }
    }
    (dq, dk, dv)
}
