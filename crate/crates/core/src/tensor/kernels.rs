//! Raw compute kernels shared by the tape ops and by non-differentiable
//! callers (metrics). Everything is contiguous row-major; no views.

use crate::scalar::Scalar;

use super::{shape_mismatch, Result, Tensor};

/// `out += a` if `accumulate`, else `out = a`; both length-checked by caller.
#[inline]
fn axpy<T: Scalar>(out: &mut [T], a: &[T]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = *o + x;
    }
}

pub fn add_into<T: Scalar>(out: &mut Tensor<T>, rhs: &Tensor<T>) {
    debug_assert_eq!(out.shape(), rhs.shape());
    axpy(out.data_mut(), rhs.data());
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

/// `out[m,n] = a[m,k] * b[k,n]`, ikj loop order so the inner loop streams
/// rows of `b` and `out`.
pub fn matmul_slices<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aval = a[i * k + kk];
            if aval == T::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + aval * b_row[j];
            }
        }
    }
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
        return Err(shape_mismatch(
            "matmul",
            format!("{:?} x {:?}", ash, bsh),
        ));
    }
    let (m, k, n) = (ash[0], ash[1], bsh[1]);
    let mut out = Tensor::zeros([m, n]);
    matmul_slices(a.data(), b.data(), m, k, n, out.data_mut());
    Ok(out)
}

pub fn transpose2d<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let src = a.data();
    let mut out = Tensor::zeros([n, m]);
    let dst = out.data_mut();
    for i in 0..m {
        for j in 0..n {
            dst[j * m + i] = src[i * n + j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// conv2d and friends
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dMeta {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

pub fn conv2d_out_hw(h: usize, w: usize, kh: usize, kw: usize, m: Conv2dMeta) -> Option<(usize, usize)> {
    let (sh, sw) = m.stride;
    let (ph, pw) = m.pad;
    if h + 2 * ph < kh || w + 2 * pw < kw || sh == 0 || sw == 0 {
        return None;
    }
    Some(((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1))
}

/// One item `[c,h,w]` -> column matrix `[c*kh*kw, oh*ow]` with zero padding.
fn im2col<T: Scalar>(
    item: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    m: Conv2dMeta,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let (sh, sw) = m.stride;
    let (ph, pw) = m.pad;
    let plane = h * w;
    let ocols = oh * ow;
    for ci in 0..c {
        let src = &item[ci * plane..(ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut col[((ci * kh + ki) * kw + kj) * ocols..][..ocols];
                for oi in 0..oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= h as isize {
                        row[oi * ow..(oi + 1) * ow].fill(T::zero());
                        continue;
                    }
                    let src_row = &src[ii as usize * w..(ii as usize + 1) * w];
                    let dst = &mut row[oi * ow..(oi + 1) * ow];
                    for oj in 0..ow {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        dst[oj] = if jj < 0 || jj >= w as isize {
                            T::zero()
                        } else {
                            src_row[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add of a column matrix back into an item buffer (adjoint of im2col).
fn col2im_add<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    m: Conv2dMeta,
    oh: usize,
    ow: usize,
    item: &mut [T],
) {
    let (sh, sw) = m.stride;
    let (ph, pw) = m.pad;
    let plane = h * w;
    let ocols = oh * ow;
    for ci in 0..c {
        let dst = &mut item[ci * plane..(ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &col[((ci * kh + ki) * kw + kj) * ocols..][..ocols];
                for oi in 0..oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[ii as usize * w..(ii as usize + 1) * w];
                    for oj in 0..ow {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        if jj >= 0 && (jj as usize) < w {
                            let j = jj as usize;
                            dst_row[j] = dst_row[j] + row[oi * ow + oj];
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims<'a>(
    op: &'static str,
    x: &'a Tensor<impl Scalar>,
    w: &'a Tensor<impl Scalar>,
) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(shape_mismatch(op, format!("input {:?}, weight {:?}", xs, ws)));
    }
    Ok((xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3]))
}

/// `x:[n,c,h,w] * w:[o,c,kh,kw] (+ bias:[o]) -> [n,o,oh,ow]`
pub fn conv2d_fwd<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    m: Conv2dMeta,
) -> Result<Tensor<T>> {
    let (n, c, h, wd, o, kh, kw) = conv_dims("conv2d", x, w)?;
    if w.shape()[1] != c {
        return Err(shape_mismatch(
            "conv2d",
            format!("input channels {} vs weight {:?}", c, w.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(shape_mismatch(
                "conv2d",
                format!("bias {:?} vs out channels {}", b.shape(), o),
            ));
        }
    }
    let (oh, ow) = conv2d_out_hw(h, wd, kh, kw, m).ok_or_else(|| {
        shape_mismatch("conv2d", format!("kernel {:?} too large for input {:?}", w.shape(), x.shape()))
    })?;
    let ckk = c * kh * kw;
    let ocols = oh * ow;
    let mut out = Tensor::zeros([n, o, oh, ow]);
    let out_data = out.data_mut();
    let mut col = vec![T::zero(); ckk * ocols];
    for ni in 0..n {
        let item = &x.data()[ni * c * h * wd..(ni + 1) * c * h * wd];
        im2col(item, c, h, wd, kh, kw, m, oh, ow, &mut col);
        let out_item = &mut out_data[ni * o * ocols..(ni + 1) * o * ocols];
        matmul_slices(w.data(), &col, o, ckk, ocols, out_item);
        if let Some(b) = bias {
            for oi in 0..o {
                let bv = b.data()[oi];
                for v in &mut out_item[oi * ocols..(oi + 1) * ocols] {
                    *v = *v + bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient w.r.t. the conv input: `dy:[n,o,oh,ow], w:[o,c,kh,kw] -> [n,c,h,w]`.
pub fn conv2d_bwd_input<T: Scalar>(
    dy: &Tensor<T>,
    w: &Tensor<T>,
    in_shape: &[usize],
    m: Conv2dMeta,
) -> Tensor<T> {
    let (n, c, h, wd) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let ckk = c * kh * kw;
    let ocols = oh * ow;
    let wt = transpose2d(&w.reshaped([o, ckk]).expect("weight reshape"));
    let mut dx = Tensor::zeros([n, c, h, wd]);
    let dx_data = dx.data_mut();
    let mut col = vec![T::zero(); ckk * ocols];
    for ni in 0..n {
        let dy_item = &dy.data()[ni * o * ocols..(ni + 1) * o * ocols];
        col.fill(T::zero());
        matmul_slices(wt.data(), dy_item, ckk, o, ocols, &mut col);
        let dst = &mut dx_data[ni * c * h * wd..(ni + 1) * c * h * wd];
        col2im_add(&col, c, h, wd, kh, kw, m, oh, ow, dst);
    }
    dx
}

/// Gradient w.r.t. the conv weight.
pub fn conv2d_bwd_weight<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    w_shape: &[usize],
    m: Conv2dMeta,
) -> Tensor<T> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let ckk = c * kh * kw;
    let ocols = oh * ow;
    let mut dw = Tensor::zeros(w_shape.to_vec());
    let dw_data = dw.data_mut();
    let mut col = vec![T::zero(); ckk * ocols];
    let mut col_t = vec![T::zero(); ckk * ocols];
    for ni in 0..n {
        let item = &x.data()[ni * c * h * wd..(ni + 1) * c * h * wd];
        im2col(item, c, h, wd, kh, kw, m, oh, ow, &mut col);
        // dW += dy_item [o x ocols] * col^T [ocols x ckk]
        for i in 0..ckk {
            for j in 0..ocols {
                col_t[j * ckk + i] = col[i * ocols + j];
            }
        }
        let dy_item = &dy.data()[ni * o * ocols..(ni + 1) * o * ocols];
        matmul_slices(dy_item, &col_t, o, ocols, ckk, dw_data);
    }
    dw
}

/// Per-output-channel bias gradient: sum of `dy` over batch and space.
pub fn conv2d_bwd_bias<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (n, o, oh, ow) = (dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]);
    let ocols = oh * ow;
    let mut db = Tensor::zeros([o]);
    let db_data = db.data_mut();
    for ni in 0..n {
        for oi in 0..o {
            let mut acc = 0.0f64;
            let slice = &dy.data()[(ni * o + oi) * ocols..(ni * o + oi + 1) * ocols];
            for &v in slice {
                acc += v.as_f64();
            }
            db_data[oi] = db_data[oi] + T::cast(acc);
        }
    }
    db
}

/// Transposed convolution: `x:[n,c,h,w] * w:[c,o,kh,kw] -> [n,o,(h-1)sh-2ph+kh, ...]`.
///
/// Realized as the adjoint of a conv with weight `w` read as `[c(out), o(in)]`.
pub fn convt2d_fwd<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    m: Conv2dMeta,
) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 || ws[0] != xs[1] {
        return Err(shape_mismatch(
            "conv2d_transposed",
            format!("input {:?}, weight {:?}", xs, ws),
        ));
    }
    let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, kh, kw) = (ws[1], ws[2], ws[3]);
    let (sh, sw) = m.stride;
    let (ph, pw) = m.pad;
    let oh = (h - 1) * sh + kh;
    let ow = (wd - 1) * sw + kw;
    if oh < 2 * ph || ow < 2 * pw {
        return Err(shape_mismatch(
            "conv2d_transposed",
            format!("padding {:?} exceeds output {}x{}", m.pad, oh, ow),
        ));
    }
    let (oh, ow) = (oh - 2 * ph, ow - 2 * pw);
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(shape_mismatch(
                "conv2d_transposed",
                format!("bias {:?} vs out channels {}", b.shape(), o),
            ));
        }
    }
    // conv2d_bwd_input(dy=x, w'=[c, o, kh, kw]) produces exactly this scatter.
    let mut out = conv2d_bwd_input(x, w, &[n, o, oh, ow], m);
    if let Some(b) = bias {
        let ocols = oh * ow;
        let out_data = out.data_mut();
        for ni in 0..n {
            for oi in 0..o {
                let bv = b.data()[oi];
                for v in &mut out_data[(ni * o + oi) * ocols..(ni * o + oi + 1) * ocols] {
                    *v = *v + bv;
                }
            }
        }
    }
    let _ = c;
    Ok(out)
}

pub fn convt2d_bwd_input<T: Scalar>(dy: &Tensor<T>, w: &Tensor<T>, m: Conv2dMeta) -> Result<Tensor<T>> {
    // Adjoint of the scatter is the plain gather: a forward conv of dy with w.
    conv2d_fwd(dy, w, None, m)
}

pub fn convt2d_bwd_weight<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    w_shape: &[usize],
    m: Conv2dMeta,
) -> Tensor<T> {
    // Same contraction as conv weight grad with the roles of x and dy swapped.
    conv2d_bwd_weight(x, dy, w_shape, m)
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

/// Max pooling; returns output and the flat input index of each maximum
/// (first-seen wins on ties) for the backward scatter.
pub fn maxpool2d_fwd<T: Scalar>(
    x: &Tensor<T>,
    k: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let xs = x.shape();
    if xs.len() != 4 {
        return Err(shape_mismatch("maxpool2d", format!("input {:?}", xs)));
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (kh, kw) = k;
    let (sh, sw) = stride;
    if h < kh || w < kw || sh == 0 || sw == 0 {
        return Err(shape_mismatch(
            "maxpool2d",
            format!("kernel {:?}/stride {:?} vs input {:?}", k, stride, xs),
        ));
    }
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let out_data = out.data_mut();
    let src = x.data();
    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        let obase = plane_idx * oh * ow;
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_idx = base + oi * sh * w + oj * sw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let idx = base + (oi * sh + ki) * w + (oj * sw + kj);
                        if src[idx] > best {
                            best = src[idx];
                            best_idx = idx;
                        }
                    }
                }
                out_data[obase + oi * ow + oj] = best;
                argmax[obase + oi * ow + oj] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_bwd<T: Scalar>(dy: &Tensor<T>, argmax: &[usize], in_shape: &[usize]) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape.to_vec());
    let dx_data = dx.data_mut();
    for (g, &idx) in dy.data().iter().zip(argmax) {
        dx_data[idx] = dx_data[idx] + *g;
    }
    dx
}

pub fn upsample2d_fwd<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let xs = x.shape();
    if xs.len() != 4 || factor == 0 {
        return Err(shape_mismatch(
            "upsample_nearest2d",
            format!("input {:?}, factor {}", xs, factor),
        ));
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let dst = out.data_mut();
    let src = x.data();
    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        let obase = plane_idx * oh * ow;
        for oi in 0..oh {
            let si = oi / factor;
            for oj in 0..ow {
                dst[obase + oi * ow + oj] = src[base + si * w + oj / factor];
            }
        }
    }
    Ok(out)
}

pub fn upsample2d_bwd<T: Scalar>(dy: &Tensor<T>, factor: usize, in_shape: &[usize]) -> Tensor<T> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = Tensor::zeros(in_shape.to_vec());
    let dst = dx.data_mut();
    let src = dy.data();
    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        let obase = plane_idx * oh * ow;
        for oi in 0..oh {
            let si = oi / factor;
            for oj in 0..ow {
                let d = base + si * w + oj / factor;
                dst[d] = dst[d] + src[obase + oi * ow + oj];
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

pub fn concat<T: Scalar>(parts: &[&Tensor<T>], dim: usize) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| shape_mismatch("concat", "no inputs".into()))?;
    let rank = first.shape().len();
    if dim >= rank {
        return Err(shape_mismatch(
            "concat",
            format!("dim {} out of range for rank {}", dim, rank),
        ));
    }
    let mut out_shape = first.shape().to_vec();
    for p in &parts[1..] {
        if p.shape().len() != rank {
            return Err(shape_mismatch(
                "concat",
                format!("{:?} vs {:?}", first.shape(), p.shape()),
            ));
        }
        for d in 0..rank {
            if d != dim && p.shape()[d] != out_shape[d] {
                return Err(shape_mismatch(
                    "concat",
                    format!("{:?} vs {:?} at dim {}", first.shape(), p.shape(), d),
                ));
            }
        }
        out_shape[dim] += p.shape()[dim];
    }
    let outer: usize = out_shape[..dim].iter().product();
    let inner: usize = out_shape[dim + 1..].iter().product();
    let total_mid = out_shape[dim];
    let mut out = Tensor::zeros(out_shape.clone());
    let dst = out.data_mut();
    let mut mid_off = 0;
    for p in parts {
        let mid = p.shape()[dim];
        let src = p.data();
        for ou in 0..outer {
            let src_start = ou * mid * inner;
            let dst_start = (ou * total_mid + mid_off) * inner;
            dst[dst_start..dst_start + mid * inner]
                .copy_from_slice(&src[src_start..src_start + mid * inner]);
        }
        mid_off += mid;
    }
    Ok(out)
}

pub fn slice<T: Scalar>(x: &Tensor<T>, dim: usize, start: usize, len: usize) -> Result<Tensor<T>> {
    let xs = x.shape();
    if dim >= xs.len() || start + len > xs[dim] {
        return Err(shape_mismatch(
            "slice",
            format!("dim {} [{}..{}] of {:?}", dim, start, start + len, xs),
        ));
    }
    let outer: usize = xs[..dim].iter().product();
    let inner: usize = xs[dim + 1..].iter().product();
    let mid = xs[dim];
    let mut out_shape = xs.to_vec();
    out_shape[dim] = len;
    let mut out = Tensor::zeros(out_shape);
    let dst = out.data_mut();
    let src = x.data();
    for ou in 0..outer {
        let src_start = (ou * mid + start) * inner;
        let dst_start = ou * len * inner;
        dst[dst_start..dst_start + len * inner].copy_from_slice(&src[src_start..src_start + len * inner]);
    }
    Ok(out)
}

/// Adjoint of `slice`: place `dy` into a zero tensor of the input shape.
pub fn slice_bwd<T: Scalar>(dy: &Tensor<T>, in_shape: &[usize], dim: usize, start: usize) -> Tensor<T> {
    let outer: usize = in_shape[..dim].iter().product();
    let inner: usize = in_shape[dim + 1..].iter().product();
    let mid = in_shape[dim];
    let len = dy.shape()[dim];
    let mut dx = Tensor::zeros(in_shape.to_vec());
    let dst = dx.data_mut();
    let src = dy.data();
    for ou in 0..outer {
        let dst_start = (ou * mid + start) * inner;
        let src_start = ou * len * inner;
        dst[dst_start..dst_start + len * inner].copy_from_slice(&src[src_start..src_start + len * inner]);
    }
    dx
}

pub fn permute<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let xs = x.shape();
    let rank = xs.len();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
        return Err(shape_mismatch(
            "permute",
            format!("axes {:?} for rank {}", axes, rank),
        ));
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| xs[a]).collect();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * xs[d + 1];
    }
    let perm_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Tensor::zeros(out_shape.clone());
    let dst = out.data_mut();
    let src = x.data();
    let numel = src.len();
    let mut idx = vec![0usize; rank];
    let mut src_off = 0usize;
    for flat in 0..numel {
        dst[flat] = src[src_off];
        // odometer increment over the output index space
        for d in (0..rank).rev() {
            idx[d] += 1;
            src_off += perm_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src_off -= perm_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Ok(out)
}

pub fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Broadcast `x` to `target`: leading axes may be added; existing axes must
/// match or be 1.
pub fn broadcast_to<T: Scalar>(x: &Tensor<T>, target: &[usize]) -> Result<Tensor<T>> {
    let xs = x.shape();
    if target.len() < xs.len() {
        return Err(shape_mismatch(
            "broadcast",
            format!("{:?} -> {:?}", xs, target),
        ));
    }
    let offset = target.len() - xs.len();
    let mut padded = vec![1usize; offset];
    padded.extend_from_slice(xs);
    for (d, (&src, &dst)) in padded.iter().zip(target).enumerate() {
        if src != dst && src != 1 {
            return Err(shape_mismatch(
                "broadcast",
                format!("{:?} -> {:?} at dim {}", xs, target, d),
            ));
        }
    }
    let rank = target.len();
    let mut src_strides = vec![0usize; rank];
    let mut acc = 1usize;
    for d in (0..rank).rev() {
        src_strides[d] = if padded[d] == 1 { 0 } else { acc };
        acc *= padded[d];
    }
    let mut out = Tensor::zeros(target.to_vec());
    let dst = out.data_mut();
    let src = x.data();
    let mut idx = vec![0usize; rank];
    let mut src_off = 0usize;
    for flat in 0..dst.len() {
        dst[flat] = src[src_off];
        for d in (0..rank).rev() {
            idx[d] += 1;
            src_off += src_strides[d];
            if idx[d] < target[d] {
                break;
            }
            src_off -= src_strides[d] * target[d];
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// Adjoint of `broadcast_to`: sum `dy` back down to `in_shape`.
pub fn reduce_to<T: Scalar>(dy: &Tensor<T>, in_shape: &[usize]) -> Tensor<T> {
    let rank = dy.shape().len();
    let offset = rank - in_shape.len();
    let mut padded = vec![1usize; offset];
    padded.extend_from_slice(in_shape);
    let target = dy.shape().to_vec();
    let mut dst_strides = vec![0usize; rank];
    let mut acc = 1usize;
    for d in (0..rank).rev() {
        dst_strides[d] = if padded[d] == 1 { 0 } else { acc };
        acc *= padded[d];
    }
    let mut dx = Tensor::zeros(in_shape.to_vec());
    let dst = dx.data_mut();
    let src = dy.data();
    let mut idx = vec![0usize; rank];
    let mut dst_off = 0usize;
    for flat in 0..src.len() {
        dst[dst_off] = dst[dst_off] + src[flat];
        for d in (0..rank).rev() {
            idx[d] += 1;
            dst_off += dst_strides[d];
            if idx[d] < target[d] {
                break;
            }
            dst_off -= dst_strides[d] * target[d];
            idx[d] = 0;
        }
    }
    dx
}
