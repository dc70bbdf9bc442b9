//! Forward and backward kernels, independent of the tape.
//!
//! All convolutions are stride-1 cross-correlations with zero same-padding,
//! so spatial shape is preserved. Kernel taps are centred: tap `j` of a
//! size-`k` kernel reads offset `j - (k - 1) / 2`.

use super::{Mask, Scalar, Tensor};
use crate::error::{Error, Result};

/// Row-major strided matrix window into a flat buffer.
#[derive(Clone, Copy)]
struct Window {
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl Window {
    fn dense(offset: usize, rows: usize, cols: usize) -> Self {
        Window {
            offset,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    fn t(self) -> Self {
        Window {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn end(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
    }
}

/// `c += a * b` over windows of three buffers.
fn gemm_acc<S: Scalar>(a: &[S], wa: Window, b: &[S], wb: Window, c: &mut [S], wc: Window) {
    assert_eq!(wa.cols, wb.rows);
    assert_eq!(wa.rows, wc.rows);
    assert_eq!(wb.cols, wc.cols);
    assert!(wa.end() <= a.len() && wb.end() <= b.len() && wc.end() <= c.len());
    if wc.rows == 0 || wc.cols == 0 || wa.cols == 0 {
        return;
    }
    // SAFETY: bounds of all three windows were asserted above.
    unsafe {
        S::gemm(
            wa.rows,
            wa.cols,
            wb.cols,
            S::one(),
            a.as_ptr().add(wa.offset),
            wa.rs as isize,
            wa.cs as isize,
            b.as_ptr().add(wb.offset),
            wb.rs as isize,
            wb.cs as isize,
            S::one(),
            c.as_mut_ptr().add(wc.offset),
            wc.rs as isize,
            wc.cs as isize,
        );
    }
}

/// Run of consecutive positions that one kernel tap maps from input to output.
struct Segment {
    tap: usize,
    input_pos: usize,
    output_pos: usize,
    len: usize,
}

fn segments(h: usize, w: usize, kh: usize, kw: usize) -> Vec<Segment> {
    let mut segs = Vec::new();
    let (ch, cw) = ((kh - 1) / 2, (kw - 1) / 2);
    for a in 0..kh {
        let da = a as isize - ch as isize;
        let h0 = (-da).max(0) as usize;
        let h1 = (h as isize - da).min(h as isize).max(0) as usize;
        if h0 >= h1 {
            continue;
        }
        for b in 0..kw {
            let db = b as isize - cw as isize;
            let w0 = (-db).max(0) as usize;
            let w1 = (w as isize - db).min(w as isize).max(0) as usize;
            if w0 >= w1 {
                continue;
            }
            let tap = a * kw + b;
            let src = |row: usize, col: usize| {
                (row as isize + da) as usize * w + (col as isize + db) as usize
            };
            if db == 0 {
                segs.push(Segment {
                    tap,
                    input_pos: src(h0, 0),
                    output_pos: h0 * w,
                    len: (h1 - h0) * w,
                });
            } else {
                for row in h0..h1 {
                    segs.push(Segment {
                        tap,
                        input_pos: src(row, w0),
                        output_pos: row * w + w0,
                        len: w1 - w0,
                    });
                }
            }
        }
    }
    segs
}

struct ConvDims {
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
}

fn conv2d_dims<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<ConvDims> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 3 {
        return Err(Error::shape(format!(
            "conv2d input must be (height, width, channels), got {is:?}"
        )));
    }
    if ks.len() != 4 {
        return Err(Error::shape(format!(
            "conv2d kernel must be (kh, kw, channels_in, channels_out), got {ks:?}"
        )));
    }
    check_odd(ks[0], "kernel height")?;
    check_odd(ks[1], "kernel width")?;
    if ks[2] != is[2] {
        return Err(Error::shape(format!(
            "channels_in: input has {} channels, kernel expects {}",
            is[2], ks[2]
        )));
    }
    if bias.shape() != [ks[3]] {
        return Err(Error::shape(format!(
            "channels_out: kernel produces {} channels, bias shape is {:?}",
            ks[3],
            bias.shape()
        )));
    }
    Ok(ConvDims {
        h: is[0],
        w: is[1],
        kh: ks[0],
        kw: ks[1],
        cin: ks[2],
        cout: ks[3],
    })
}

fn check_odd(k: usize, what: &str) -> Result<()> {
    if k % 2 == 0 {
        return Err(Error::shape(format!("{what} must be odd, got {k}")));
    }
    Ok(())
}

fn conv_forward<S: Scalar>(input: &[S], kernel: &[S], bias: &[S], d: &ConvDims) -> Vec<S> {
    let positions = d.h * d.w;
    let mut out = Vec::with_capacity(positions * d.cout);
    for _ in 0..positions {
        out.extend_from_slice(bias);
    }
    let tap_len = d.cin * d.cout;
    for seg in segments(d.h, d.w, d.kh, d.kw) {
        gemm_acc(
            input,
            Window::dense(seg.input_pos * d.cin, seg.len, d.cin),
            kernel,
            Window::dense(seg.tap * tap_len, d.cin, d.cout),
            &mut out,
            Window::dense(seg.output_pos * d.cout, seg.len, d.cout),
        );
    }
    out
}

/// Gradients of a same-padded convolution: `(input, kernel, bias)`.
pub struct ConvGrads<S> {
    pub input: Tensor<S>,
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
}

fn conv_backward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    grad_out: &[S],
    d: &ConvDims,
) -> ConvGrads<S> {
    let mut gin = vec![S::zero(); input.numel()];
    let mut gk = vec![S::zero(); kernel.numel()];
    let mut gb = vec![S::zero(); d.cout];
    for row in grad_out.chunks_exact(d.cout) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    let tap_len = d.cin * d.cout;
    for seg in segments(d.h, d.w, d.kh, d.kw) {
        let g = Window::dense(seg.output_pos * d.cout, seg.len, d.cout);
        let x = Window::dense(seg.input_pos * d.cin, seg.len, d.cin);
        let k = Window::dense(seg.tap * tap_len, d.cin, d.cout);
        gemm_acc(grad_out, g, kernel.data(), k.t(), &mut gin, x);
        gemm_acc(input.data(), x.t(), grad_out, g, &mut gk, k);
    }
    ConvGrads {
        input: Tensor::new(input.shape(), gin).expect("shape"),
        kernel: Tensor::new(kernel.shape(), gk).expect("shape"),
        bias: Tensor::from_vec(gb),
    }
}

/// Same-padded 2-D cross-correlation.
///
/// `input` is `(h, w, channels_in)`, `kernel` is `(kh, kw, channels_in,
/// channels_out)`, `bias` is `(channels_out)`; the output is `(h, w,
/// channels_out)`.
pub fn conv2d_same<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let d = conv2d_dims(input, kernel, bias)?;
    let out = conv_forward(input.data(), kernel.data(), bias.data(), &d);
    Tensor::new(&[d.h, d.w, d.cout], out)
}

pub fn conv2d_same_backward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> ConvGrads<S> {
    let ks = kernel.shape();
    let bias = Tensor::zeros(&[ks[3]]);
    let d = conv2d_dims(input, kernel, &bias).expect("validated in forward");
    conv_backward(input, kernel, grad_out.data(), &d)
}

fn conv1d_dims<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<ConvDims> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 2 {
        return Err(Error::shape(format!(
            "conv1d input must be (seq, channels), got {is:?}"
        )));
    }
    if ks.len() != 3 {
        return Err(Error::shape(format!(
            "conv1d kernel must be (k, channels_in, channels_out), got {ks:?}"
        )));
    }
    check_odd(ks[0], "kernel size")?;
    if ks[1] != is[1] {
        return Err(Error::shape(format!(
            "channels_in: input has {} channels, kernel expects {}",
            is[1], ks[1]
        )));
    }
    if bias.shape() != [ks[2]] {
        return Err(Error::shape(format!(
            "channels_out: kernel produces {} channels, bias shape is {:?}",
            ks[2],
            bias.shape()
        )));
    }
    Ok(ConvDims {
        h: 1,
        w: is[0],
        kh: 1,
        kw: ks[0],
        cin: ks[1],
        cout: ks[2],
    })
}

/// Same-padded 1-D cross-correlation over `(seq, channels_in)` with a
/// `(k, channels_in, channels_out)` kernel.
pub fn conv1d_same<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let d = conv1d_dims(input, kernel, bias)?;
    let out = conv_forward(input.data(), kernel.data(), bias.data(), &d);
    Tensor::new(&[d.w, d.cout], out)
}

pub fn conv1d_same_backward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> ConvGrads<S> {
    let bias = Tensor::zeros(&[kernel.shape()[2]]);
    let d = conv1d_dims(input, kernel, &bias).expect("validated in forward");
    conv_backward(input, kernel, grad_out.data(), &d)
}

fn std_normal_cdf<S: Scalar>(x: S) -> S {
    let half = S::from_f64(0.5);
    half * (S::one() + (x * S::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu<S: Scalar>(x: S) -> S {
    x * std_normal_cdf(x)
}

/// `d/dx [x * Phi(x)] = Phi(x) + x * phi(x)`.
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let pdf = (-(x * x) * S::from_f64(0.5)).exp() * S::from_f64(0.398_942_280_401_432_7);
    std_normal_cdf(x) + x * pdf
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// What a pooled slice with no valid position produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptySlice {
    Error,
    Zero,
}

/// Sentinel for "no winner" in [`MaxPool::argmax`].
pub const NO_ARGMAX: usize = usize::MAX;

pub struct MaxPool<S> {
    pub output: Tensor<S>,
    /// Flat input index of the winning element per output element.
    pub argmax: Vec<usize>,
}

pub(crate) fn pooled_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Max over `axis`. Masked positions never win; ties go to the lowest index.
pub fn maxpool_with_argmax<S: Scalar>(
    input: &Tensor<S>,
    axis: usize,
    mask: Option<&Mask>,
    empty: EmptySlice,
) -> Result<MaxPool<S>> {
    let shape = input.shape();
    if axis >= shape.len() {
        return Err(Error::shape(format!(
            "pool axis {axis} out of range for shape {shape:?}"
        )));
    }
    let block = mask.map(|m| m.broadcast_block(shape)).transpose()?;
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let data = input.data();
    let mut out = Vec::with_capacity(outer * inner);
    let mut argmax = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let mut best: Option<(usize, S)> = None;
            for j in 0..n {
                let idx = (o * n + j) * inner + i;
                if let (Some(m), Some(block)) = (mask, block) {
                    if !m.data()[idx / block] {
                        continue;
                    }
                }
                let v = data[idx];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((idx, v));
                }
            }
            match best {
                Some((idx, v)) => {
                    out.push(v);
                    argmax.push(idx);
                }
                None if empty == EmptySlice::Zero => {
                    out.push(S::zero());
                    argmax.push(NO_ARGMAX);
                }
                None => return Err(Error::EmptySlice(o * inner + i)),
            }
        }
    }
    Ok(MaxPool {
        output: Tensor::new(&pooled_shape(shape, axis), out)?,
        argmax,
    })
}

/// Max-pooling over one axis, optionally restricted to masked-valid positions.
/// A slice with no valid position is an error.
pub fn maxpool_axis<S: Scalar>(
    input: &Tensor<S>,
    axis: usize,
    mask: Option<&Mask>,
) -> Result<Tensor<S>> {
    maxpool_with_argmax(input, axis, mask, EmptySlice::Error).map(|p| p.output)
}

pub fn transpose2<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let s = input.shape();
    if s.len() != 2 {
        return Err(Error::shape(format!("transpose expects rank 2, got {s:?}")));
    }
    let (r, c) = (s[0], s[1]);
    let d = input.data();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(d[i * c + j]);
        }
    }
    Tensor::new(&[c, r], out)
}

/// Gathers rows of a `(vocab, dim)` table; output shape is `shape + [dim]`.
pub fn embedding_lookup<S: Scalar>(
    table: &Tensor<S>,
    ids: &[usize],
    shape: &[usize],
) -> Result<Tensor<S>> {
    let ts = table.shape();
    if ts.len() != 2 {
        return Err(Error::shape(format!(
            "embedding table must be (vocab, dim), got {ts:?}"
        )));
    }
    let (vocab, dim) = (ts[0], ts[1]);
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= vocab {
            return Err(Error::OutOfVocab { id, vocab });
        }
        out.extend_from_slice(&table.data()[id * dim..(id + 1) * dim]);
    }
    let mut full = shape.to_vec();
    full.push(dim);
    Tensor::new(&full, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor<f32> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = t(&[3, 1], &[1., 2., 3.]);
        let k = t(&[3, 1, 1], &[0., 1., 0.]);
        let y = conv1d_same(&x, &k, &t(&[1], &[0.])).unwrap();
        assert_eq!(y.data(), &[1., 2., 3.]);
    }

    #[test]
    fn conv1d_box_kernel_zero_padded() {
        let x = t(&[3, 1], &[1., 2., 3.]);
        let k = t(&[3, 1, 1], &[1., 1., 1.]);
        let y = conv1d_same(&x, &k, &t(&[1], &[0.])).unwrap();
        assert_eq!(y.data(), &[3., 6., 5.]);
    }

    #[test]
    fn conv1d_zero_input_gives_bias() {
        let x = Tensor::<f32>::zeros(&[4, 2]);
        let k = t(&[3, 2, 3], &[0.7; 18]);
        let b = t(&[3], &[1., -2., 0.5]);
        let y = conv1d_same(&x, &k, &b).unwrap();
        for row in y.data().chunks(3) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn conv2d_all_ones_window() {
        let x = t(&[2, 2, 1], &[1., 2., 3., 4.]);
        let k = t(&[3, 3, 1, 1], &[1.; 9]);
        let y = conv2d_same(&x, &k, &t(&[1], &[0.])).unwrap();
        assert_eq!(y.data(), &[10., 10., 10., 10.]);
    }

    #[test]
    fn conv2d_unit_and_centred_kernels_are_identity() {
        let x = t(&[3, 2, 1], &[1., -2., 3., 4., 0.5, 6.]);
        let one = conv2d_same(&x, &t(&[1, 1, 1, 1], &[1.]), &t(&[1], &[0.])).unwrap();
        assert_eq!(one, x);
        let col = conv2d_same(&x, &t(&[3, 1, 1, 1], &[0., 1., 0.]), &t(&[1], &[0.])).unwrap();
        assert_eq!(col, x);
    }

    #[test]
    fn conv_shape_errors_name_axes() {
        let x = Tensor::<f32>::zeros(&[3, 2]);
        let k = Tensor::<f32>::zeros(&[3, 4, 1]);
        let err = conv1d_same(&x, &k, &Tensor::zeros(&[1])).unwrap_err();
        assert!(err.to_string().contains("channels_in"), "{err}");
        let k = Tensor::<f32>::zeros(&[3, 2, 5]);
        let err = conv1d_same(&x, &k, &Tensor::zeros(&[4])).unwrap_err();
        assert!(err.to_string().contains("channels_out"), "{err}");
        let k = Tensor::<f32>::zeros(&[2, 2, 1]);
        assert!(conv1d_same(&x, &k, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(10.0f64) - 10.0).abs() < 1e-4);
        assert!(gelu(-10.0f64).abs() < 1e-4);
        assert!((gelu_grad(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn maxpool_examples() {
        let x = t(&[2, 2], &[1., 5., 3., 2.]);
        assert_eq!(maxpool_axis(&x, 1, None).unwrap().data(), &[5., 3.]);
        let single = t(&[2, 1, 3], &[1., 2., 3., 4., 5., 6.]);
        let y = maxpool_axis(&single, 1, None).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.data(), single.data());

        let x = t(&[2, 2], &[1., 9., 3., 2.]);
        let m = Mask::new(&[2, 2], vec![true, false, true, true]).unwrap();
        assert_eq!(maxpool_axis(&x, 1, Some(&m)).unwrap().data(), &[1., 3.]);
    }

    #[test]
    fn maxpool_all_masked_slice() {
        let x = t(&[2, 2], &[1., 9., 3., 2.]);
        let m = Mask::new(&[2, 2], vec![false, false, true, true]).unwrap();
        assert!(matches!(
            maxpool_axis(&x, 1, Some(&m)),
            Err(Error::EmptySlice(0))
        ));
        let p = maxpool_with_argmax(&x, 1, Some(&m), EmptySlice::Zero).unwrap();
        assert_eq!(p.output.data(), &[0., 3.]);
        assert_eq!(p.argmax[0], NO_ARGMAX);
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let x = t(&[3], &[2., 2., 1.]);
        let p = maxpool_with_argmax(&x, 0, None, EmptySlice::Error).unwrap();
        assert_eq!(p.argmax, vec![0]);
        assert_eq!(p.output.shape(), &[1]);
    }

    #[test]
    fn broadcast_mask_over_channels() {
        let x = t(&[1, 2, 2], &[1., 9., 3., 2.]);
        let m = Mask::new(&[1, 2], vec![false, true]).unwrap();
        assert_eq!(maxpool_axis(&x, 1, Some(&m)).unwrap().data(), &[3., 2.]);
    }

    #[test]
    fn embedding_out_of_range() {
        let table = Tensor::<f32>::zeros(&[3, 2]);
        assert!(matches!(
            embedding_lookup(&table, &[0, 3], &[2]),
            Err(Error::OutOfVocab { id: 3, vocab: 3 })
        ));
    }
}
