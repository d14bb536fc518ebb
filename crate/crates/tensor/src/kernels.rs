//! Raw slice kernels shared by the differentiable operators.
//!
//! Everything here accumulates in `f64`; callers convert to `f32` storage.

/// Row-major `c (m×n) = a (m×k) · b (k×n) (+ c if accumulate)`, with optional
/// transposition of either operand (`a_t`: `a` is stored as k×m).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the three slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Sliding-window geometry of one image plane stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Range of output columns whose input column `ox*stride + kx - pad` is in bounds.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let lo = if kx >= self.pad { 0 } else { (self.pad - kx).div_ceil(self.stride) };
        // ox*s + kx - p <= w - 1  =>  ox <= (w - 1 + p - kx) / s
        let hi = if self.w + self.pad > kx { ((self.w - 1 + self.pad - kx) / self.stride + 1).min(self.ow) } else { 0 };
        (lo.min(hi), hi)
    }
}

/// Unfold `img` (channels×h×w) into columns (`rows()` × `cols()`), zero padded.
pub(crate) fn im2col(img: &[f32], g: &Window, cols: &mut [f64]) {
    debug_assert_eq!(img.len(), g.channels * g.h * g.w);
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let p = g.cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (x0, x1) = g.valid_ox(kx);
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..x0].fill(0.0);
                    out[x1..].fill(0.0);
                    if g.stride == 1 {
                        let off = x0 + kx - g.pad;
                        for (o, s) in out[x0..x1].iter_mut().zip(&src[off..off + (x1 - x0)]) {
                            *o = *s as f64;
                        }
                    } else {
                        for (ox, o) in out.iter_mut().enumerate().take(x1).skip(x0) {
                            *o = src[ox * g.stride + kx - g.pad] as f64;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto `img`.
pub(crate) fn col2im(cols: &[f64], g: &Window, img: &mut [f64]) {
    debug_assert_eq!(img.len(), g.channels * g.h * g.w);
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let p = g.cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                let (x0, x1) = g.valid_ox(kx);
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let s = &src[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let off = x0 + kx - g.pad;
                        for (d, v) in dst[off..off + (x1 - x0)].iter_mut().zip(&s[x0..x1]) {
                            *d += v;
                        }
                    } else {
                        for ox in x0..x1 {
                            dst[ox * g.stride + kx - g.pad] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded `f64` copy of one plane.
pub(crate) fn pad_plane(src: &[f32], h: usize, w: usize, pad: usize) -> Vec<f64> {
    let pw = w + 2 * pad;
    let mut out = vec![0.0; (h + 2 * pad) * pw];
    for y in 0..h {
        let dst = &mut out[(y + pad) * pw + pad..(y + pad) * pw + pad + w];
        for (d, s) in dst.iter_mut().zip(&src[y * w..(y + 1) * w]) {
            *d = *s as f64;
        }
    }
    out
}

/// Stride-1 single-plane correlation with a k×k kernel and symmetric padding
/// `(k-1)/2`, spatial size preserved. `padded` comes from [`pad_plane`].
pub(crate) fn depthwise_plane(padded: &[f64], h: usize, w: usize, k: usize, kernel: &[f64], out: &mut [f64]) {
    let pw = w + k - 1;
    debug_assert_eq!(padded.len(), (h + k - 1) * pw);
    debug_assert_eq!(out.len(), h * w);
    out.fill(0.0);
    for ky in 0..k {
        for kx in 0..k {
            let wt = kernel[ky * k + kx];
            if wt == 0.0 {
                continue;
            }
            for y in 0..h {
                let src = &padded[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                let dst = &mut out[y * w..(y + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
    }
}

/// Backward of [`depthwise_plane`]: accumulates into the padded input
/// gradient and the kernel gradient.
pub(crate) fn depthwise_plane_backward(
    padded: &[f64],
    grad_out: &[f32],
    h: usize,
    w: usize,
    k: usize,
    kernel: &[f64],
    grad_padded: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
) {
    let pw = w + k - 1;
    let go: Vec<f64> = grad_out.iter().map(|&v| v as f64).collect();
    if let Some(gp) = grad_padded {
        for ky in 0..k {
            for kx in 0..k {
                let wt = kernel[ky * k + kx];
                if wt == 0.0 {
                    continue;
                }
                for y in 0..h {
                    let dst = &mut gp[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                    for (d, g) in dst.iter_mut().zip(&go[y * w..(y + 1) * w]) {
                        *d += wt * g;
                    }
                }
            }
        }
    }
    if let Some(gk) = grad_kernel {
        // Per-column partial sums keep the inner loop free of a serial reduction.
        let mut lanes = vec![0.0f64; w];
        for ky in 0..k {
            for kx in 0..k {
                lanes.fill(0.0);
                for y in 0..h {
                    let src = &padded[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                    for ((l, s), g) in lanes.iter_mut().zip(src).zip(&go[y * w..(y + 1) * w]) {
                        *l += s * g;
                    }
                }
                gk[ky * k + kx] += lanes.iter().sum::<f64>();
            }
        }
    }
}

/// Crop the interior of a padded gradient plane and add it into `dst`.
pub(crate) fn unpad_add(padded: &[f64], h: usize, w: usize, pad: usize, dst: &mut [f32]) {
    let pw = w + 2 * pad;
    for y in 0..h {
        let src = &padded[(y + pad) * pw + pad..(y + pad) * pw + pad + w];
        for (d, s) in dst[y * w..(y + 1) * w].iter_mut().zip(src) {
            *d += *s as f32;
        }
    }
}

pub(crate) fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
