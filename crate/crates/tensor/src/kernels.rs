//! Dense compute kernels behind the tape ops.
//!
//! Convolution is unfolded into a matrix product (im2col) so that everything
//! funnels through one GEMM; the unfolded patch buffer is kept on the tape and
//! reused by the backward pass.

use ndarray::{Array2, Array4, ArrayD, ArrayView2, ArrayView4, Ix2, Ix4};

use crate::Scalar;

const GROUP_NORM_EPS: f64 = 1e-5;

pub fn matmul<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Array2<T> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    ndarray::linalg::general_mat_mul(T::one(), a, b, T::zero(), &mut out);
    out
}

fn view4<'a, T: Scalar>(x: &'a ArrayD<T>, what: &str) -> ArrayView4<'a, T> {
    x.view()
        .into_dimensionality::<Ix4>()
        .unwrap_or_else(|_| panic!("{} must be rank 4 (NCHW), got {:?}", what, x.shape()))
}

fn conv_out_len(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= k, "kernel {} too large for padded input {}", k, input + 2 * pad);
    (input + 2 * pad - k) / stride + 1
}

/// Unfolds padded `k x k` patches of one sample into a `[C*k*k, Ho*Wo]` matrix.
fn im2col<T: Scalar>(
    x: &ArrayView4<T>,
    b: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    col: &mut Array2<T>,
) {
    let (_, c_in, h, w) = x.dim();
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    col.fill(T::zero());
    for c in 0..c_in {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        col[(row, oy * wo + ox)] = x[(b, c, iy as usize, ix as usize)];
                    }
                }
            }
        }
    }
}

/// Scatter-adds a `[C*k*k, Ho*Wo]` gradient matrix back onto one input sample.
fn col2im_add<T: Scalar>(
    dcol: &Array2<T>,
    dx: &mut Array4<T>,
    b: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let (_, c_in, h, w) = dx.dim();
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    for c in 0..c_in {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dx[(b, c, iy as usize, ix as usize)] =
                            dx[(b, c, iy as usize, ix as usize)] + dcol[(row, oy * wo + ox)];
                    }
                }
            }
        }
    }
}

/// Convolution forward pass. Returns the output and the stacked patch buffer
/// `[B, C*k*k, Ho*Wo]` needed by [`conv2d_backward`].
pub fn conv2d_forward<T: Scalar>(
    x: &ArrayD<T>,
    w: &ArrayD<T>,
    stride: usize,
    pad: usize,
) -> (ArrayD<T>, ArrayD<T>) {
    let xv = view4(x, "conv input");
    let wv = view4(w, "conv weight");
    let (bsz, c_in, h, w_in) = xv.dim();
    let (c_out, wc_in, kh, kw) = wv.dim();
    assert!(c_in == wc_in, "conv input has {} channels, weight expects {}", c_in, wc_in);
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w_in, kw, stride, pad);

    let w_mat = wv
        .to_shape((c_out, c_in * kh * kw))
        .expect("weight is contiguous")
        .to_owned();
    let mut out = Array4::<T>::zeros((bsz, c_out, ho, wo));
    let mut cols = ndarray::Array3::<T>::zeros((bsz, c_in * kh * kw, ho * wo));
    let mut col = Array2::<T>::zeros((c_in * kh * kw, ho * wo));
    for b in 0..bsz {
        im2col(&xv, b, kh, kw, stride, pad, &mut col);
        let out_mat = matmul(&w_mat.view(), &col.view());
        out.index_axis_mut(ndarray::Axis(0), b)
            .into_shape_with_order((c_out, ho * wo))
            .expect("output is contiguous")
            .assign(&out_mat);
        cols.index_axis_mut(ndarray::Axis(0), b).assign(&col);
    }
    (out.into_dyn(), cols.into_dyn())
}

/// Convolution backward pass: gradients for the input and the weight.
pub fn conv2d_backward<T: Scalar>(
    x: &ArrayD<T>,
    w: &ArrayD<T>,
    col: &ArrayD<T>,
    dout: &ArrayD<T>,
    stride: usize,
    pad: usize,
) -> (ArrayD<T>, ArrayD<T>) {
    let xv = view4(x, "conv input");
    let wv = view4(w, "conv weight");
    let dv = view4(dout, "conv output grad");
    let (bsz, c_in, h, w_in) = xv.dim();
    let (c_out, _, kh, kw) = wv.dim();
    let (_, _, ho, wo) = dv.dim();
    let cols = col
        .view()
        .into_dimensionality::<ndarray::Ix3>()
        .expect("patch buffer is rank 3");

    let w_mat = wv
        .to_shape((c_out, c_in * kh * kw))
        .expect("weight is contiguous")
        .to_owned();
    let mut dw_mat = Array2::<T>::zeros((c_out, c_in * kh * kw));
    let mut dx = Array4::<T>::zeros((bsz, c_in, h, w_in));
    for b in 0..bsz {
        let dout_mat = dv
            .index_axis(ndarray::Axis(0), b)
            .to_shape((c_out, ho * wo))
            .expect("output grad is contiguous")
            .to_owned();
        let col_b = cols.index_axis(ndarray::Axis(0), b);
        ndarray::linalg::general_mat_mul(T::one(), &dout_mat.view(), &col_b.t(), T::one(), &mut dw_mat);
        let dcol = matmul(&w_mat.t(), &dout_mat.view());
        col2im_add(&dcol, &mut dx, b, kh, kw, stride, pad);
    }
    let dw = dw_mat
        .into_shape_with_order((c_out, c_in, kh, kw))
        .expect("weight grad reshape")
        .into_dyn();
    (dx.into_dyn(), dw)
}

pub fn upsample_nearest_2x<T: Scalar>(x: &ArrayD<T>) -> ArrayD<T> {
    let xv = view4(x, "upsample input");
    let (b, c, h, w) = xv.dim();
    let mut out = Array4::<T>::zeros((b, c, 2 * h, 2 * w));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..2 * h {
                for xo in 0..2 * w {
                    out[(bi, ci, y, xo)] = xv[(bi, ci, y / 2, xo / 2)];
                }
            }
        }
    }
    out.into_dyn()
}

pub fn upsample_nearest_2x_backward<T: Scalar>(dout: &ArrayD<T>) -> ArrayD<T> {
    let dv = view4(dout, "upsample grad");
    let (b, c, h2, w2) = dv.dim();
    let mut dx = Array4::<T>::zeros((b, c, h2 / 2, w2 / 2));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h2 {
                for xo in 0..w2 {
                    dx[(bi, ci, y / 2, xo / 2)] = dx[(bi, ci, y / 2, xo / 2)] + dv[(bi, ci, y, xo)];
                }
            }
        }
    }
    dx.into_dyn()
}

/// Group norm forward. Returns `(y, mean, rstd)` with `mean`/`rstd` of shape
/// `[B, groups]`.
pub fn group_norm_forward<T: Scalar>(
    x: &ArrayD<T>,
    gamma: &ArrayD<T>,
    beta: &ArrayD<T>,
    groups: usize,
) -> (ArrayD<T>, ArrayD<T>, ArrayD<T>) {
    let xv = view4(x, "group norm input");
    let (b, c, h, w) = xv.dim();
    assert!(groups > 0 && c % groups == 0, "{} channels not divisible into {} groups", c, groups);
    assert!(gamma.len() == c && beta.len() == c, "group norm affine params must have length C");
    let cg = c / groups;
    let n = T::of_f64((cg * h * w) as f64);
    let eps = T::of_f64(GROUP_NORM_EPS);

    let mut mean = Array2::<T>::zeros((b, groups));
    let mut rstd = Array2::<T>::zeros((b, groups));
    let mut out = Array4::<T>::zeros((b, c, h, w));
    let gamma_v = gamma.view().into_dimensionality::<ndarray::Ix1>().expect("gamma rank 1");
    let beta_v = beta.view().into_dimensionality::<ndarray::Ix1>().expect("beta rank 1");

    for bi in 0..b {
        for g in 0..groups {
            let mut s = T::zero();
            for ci in g * cg..(g + 1) * cg {
                for y in 0..h {
                    for xo in 0..w {
                        s = s + xv[(bi, ci, y, xo)];
                    }
                }
            }
            let m = s / n;
            let mut var = T::zero();
            for ci in g * cg..(g + 1) * cg {
                for y in 0..h {
                    for xo in 0..w {
                        let d = xv[(bi, ci, y, xo)] - m;
                        var = var + d * d;
                    }
                }
            }
            let r = T::one() / (var / n + eps).sqrt();
            mean[(bi, g)] = m;
            rstd[(bi, g)] = r;
            for ci in g * cg..(g + 1) * cg {
                let (ga, be) = (gamma_v[ci], beta_v[ci]);
                for y in 0..h {
                    for xo in 0..w {
                        out[(bi, ci, y, xo)] = (xv[(bi, ci, y, xo)] - m) * r * ga + be;
                    }
                }
            }
        }
    }
    (out.into_dyn(), mean.into_dyn(), rstd.into_dyn())
}

/// Group norm backward. Returns `(dx, dgamma, dbeta)`.
pub fn group_norm_backward<T: Scalar>(
    x: &ArrayD<T>,
    gamma: &ArrayD<T>,
    mean: &ArrayD<T>,
    rstd: &ArrayD<T>,
    dout: &ArrayD<T>,
    groups: usize,
) -> (ArrayD<T>, ArrayD<T>, ArrayD<T>) {
    let xv = view4(x, "group norm input");
    let dv = view4(dout, "group norm grad");
    let (b, c, h, w) = xv.dim();
    let cg = c / groups;
    let n = T::of_f64((cg * h * w) as f64);
    let gamma_v = gamma.view().into_dimensionality::<ndarray::Ix1>().expect("gamma rank 1");
    let mean_v = mean.view().into_dimensionality::<Ix2>().expect("mean rank 2");
    let rstd_v = rstd.view().into_dimensionality::<Ix2>().expect("rstd rank 2");

    let mut dx = Array4::<T>::zeros((b, c, h, w));
    let mut dgamma = ndarray::Array1::<T>::zeros(c);
    let mut dbeta = ndarray::Array1::<T>::zeros(c);

    for bi in 0..b {
        for g in 0..groups {
            let (m, r) = (mean_v[(bi, g)], rstd_v[(bi, g)]);
            // First pass: group sums of dxhat and dxhat * xhat, plus the
            // per-channel affine gradients.
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for ci in g * cg..(g + 1) * cg {
                let ga = gamma_v[ci];
                for y in 0..h {
                    for xo in 0..w {
                        let xhat = (xv[(bi, ci, y, xo)] - m) * r;
                        let go = dv[(bi, ci, y, xo)];
                        let dxhat = go * ga;
                        s1 = s1 + dxhat;
                        s2 = s2 + dxhat * xhat;
                        dgamma[ci] = dgamma[ci] + go * xhat;
                        dbeta[ci] = dbeta[ci] + go;
                    }
                }
            }
            let (c1, c2) = (s1 / n, s2 / n);
            for ci in g * cg..(g + 1) * cg {
                let ga = gamma_v[ci];
                for y in 0..h {
                    for xo in 0..w {
                        let xhat = (xv[(bi, ci, y, xo)] - m) * r;
                        let dxhat = dv[(bi, ci, y, xo)] * ga;
                        dx[(bi, ci, y, xo)] = r * (dxhat - c1 - xhat * c2);
                    }
                }
            }
        }
    }
    (dx.into_dyn(), dgamma.into_dyn(), dbeta.into_dyn())
}
