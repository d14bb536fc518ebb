use crate::error::{invalid, shape_err, Result};
use crate::kernels::{
    col2im, depthwise_plane, depthwise_plane_backward, gemm, im2col, pad_plane, to_f64, unpad_add, Window,
};
use crate::tensor::{numel, Tensor};

/// Geometry and channel layout of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Square `k×k` kernel, stride 1, size-preserving padding `(k-1)/2`, with bias.
    pub fn new(in_channels: usize, out_channels: usize, k: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: 1,
            padding: (k.saturating_sub(1)) / 2,
            groups: 1,
            bias: true,
        }
    }

    /// Per-channel `k×k` convolution (groups = channels).
    pub fn depthwise(channels: usize, k: usize) -> Self {
        Self::new(channels, channels, k).groups(channels)
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn taps(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Weight extents for a forward convolution: (out, in/groups, kh, kw).
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels / self.groups.max(1), self.kernel.0, self.kernel.1]
    }

    /// Weight extents for a transposed convolution: (in, out/groups, kh, kw).
    pub fn transposed_weight_shape(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels / self.groups.max(1), self.kernel.0, self.kernel.1]
    }

    /// Number of learnable values (weights plus optional bias).
    pub fn param_count(&self) -> usize {
        numel(&self.weight_shape()) + if self.bias { self.out_channels } else { 0 }
    }

    pub fn validate(&self, op: &'static str) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return invalid(op, "channel counts must be positive");
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 || self.groups == 0 {
            return invalid(op, format!("kernel, stride and groups must be positive: {self:?}"));
        }
        if self.in_channels % self.groups != 0 {
            return invalid(op, format!("in_channels {} not divisible by groups {}", self.in_channels, self.groups));
        }
        if self.out_channels % self.groups != 0 {
            return invalid(op, format!("out_channels {} not divisible by groups {}", self.out_channels, self.groups));
        }
        Ok(())
    }

    pub fn output_extent(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh || pw < kw {
            return None;
        }
        Some(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    /// `(h-1)·stride − 2·padding + k + output_padding`, or `None` if non-positive.
    pub fn transposed_output_extent(&self, h: usize, w: usize, output_padding: usize) -> Option<(usize, usize)> {
        let f = |x: usize, k: usize| {
            let v = (x as isize - 1) * self.stride as isize - 2 * self.padding as isize
                + k as isize
                + output_padding as isize;
            (v > 0).then_some(v as usize)
        };
        Some((f(h, self.kernel.0)?, f(w, self.kernel.1)?))
    }
}

fn check_bias(op: &'static str, spec: &ConvSpec, bias: Option<&Tensor>) -> Result<()> {
    match (spec.bias, bias) {
        (true, Some(b)) if b.numel() == spec.out_channels => Ok(()),
        (true, Some(b)) => {
            shape_err(op, format!("bias has {} elements, expected out_channels = {}", b.numel(), spec.out_channels))
        }
        (true, None) => invalid(op, "spec declares a bias but none was supplied"),
        (false, Some(_)) => invalid(op, "bias supplied but spec has bias = false"),
        (false, None) => Ok(()),
    }
}

fn check_input(op: &'static str, spec: &ConvSpec, input: &Tensor) -> Result<()> {
    let c = input.shape()[1];
    if c != spec.in_channels {
        return shape_err(
            op,
            format!("input channel dimension is {c}, spec expects in_channels = {}", spec.in_channels),
        );
    }
    Ok(())
}

fn check_weight(op: &'static str, expected: [usize; 4], weight: &Tensor) -> Result<()> {
    let got = weight.shape();
    for (i, name) in ["out", "in/groups", "kernel height", "kernel width"].iter().enumerate() {
        if got[i] != expected[i] {
            return shape_err(
                op,
                format!(
                    "weight {name} dimension is {}, expected {} (weight shape {got:?}, expected {expected:?})",
                    got[i], expected[i]
                ),
            );
        }
    }
    Ok(())
}

fn bias_grad(grad_out: &[f32], n: usize, c: usize, plane: usize) -> Vec<f32> {
    let mut gb = vec![0.0f64; c];
    for b in 0..n {
        for (ch, acc) in gb.iter_mut().enumerate() {
            let s = &grad_out[(b * c + ch) * plane..(b * c + ch + 1) * plane];
            *acc += s.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    gb.into_iter().map(|v| v as f32).collect()
}

fn is_direct_depthwise(spec: &ConvSpec) -> bool {
    let (kh, kw) = spec.kernel;
    spec.groups == spec.in_channels
        && spec.groups == spec.out_channels
        && spec.stride == 1
        && kh == kw
        && kh % 2 == 1
        && spec.padding == (kh - 1) / 2
}

/// Cross-correlation (`torch.nn.functional.conv2d` semantics), differentiable
/// with respect to input, weight and bias.
pub fn conv2d(input: &Tensor, spec: &ConvSpec, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    const OP: &str = "conv2d";
    spec.validate(OP)?;
    check_input(OP, spec, input)?;
    check_weight(OP, spec.weight_shape(), weight)?;
    check_bias(OP, spec, bias)?;
    let [n, _, h, w] = input.shape();
    let Some((oh, ow)) = spec.output_extent(h, w) else {
        return shape_err(OP, format!("kernel {:?} larger than padded input {h}x{w}", spec.kernel));
    };
    if is_direct_depthwise(spec) {
        return depthwise_direct(input, spec, weight, bias);
    }

    let spec = *spec;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let win = Window {
        channels: cin_g,
        h,
        w,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        stride: spec.stride,
        pad: spec.padding,
        oh,
        ow,
    };
    let rows = win.rows();
    let p = win.cols();
    let wdata = to_f64(weight.data());
    let x = input.data();
    let mut out = vec![0.0f32; n * spec.out_channels * p];
    let mut cols = vec![0.0f64; rows * p];
    let mut acc = vec![0.0f64; cout_g * p];
    for b in 0..n {
        for g in 0..spec.groups {
            let xs = &x[(b * spec.in_channels + g * cin_g) * h * w..(b * spec.in_channels + (g + 1) * cin_g) * h * w];
            im2col(xs, &win, &mut cols);
            let wg = &wdata[g * cout_g * rows..(g + 1) * cout_g * rows];
            gemm(cout_g, rows, p, wg, false, &cols, false, &mut acc, false);
            for oc in 0..cout_g {
                let ch = g * cout_g + oc;
                let bv = bias.map_or(0.0, |t| t.data()[ch] as f64);
                let dst = &mut out[(b * spec.out_channels + ch) * p..(b * spec.out_channels + ch + 1) * p];
                for (d, a) in dst.iter_mut().zip(&acc[oc * p..(oc + 1) * p]) {
                    *d = (a + bv) as f32;
                }
            }
        }
    }

    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (xi, wt, has_bias) = (input.clone(), weight.clone(), bias.is_some());
    Ok(Tensor::from_op(
        OP,
        [n, spec.out_channels, oh, ow],
        out,
        parents,
        Box::new(move |gout| {
            let x = xi.data();
            let wdata = to_f64(wt.data());
            let need_x = xi.requires_grad();
            let mut gx = vec![0.0f32; if need_x { x.len() } else { 0 }];
            let mut gw = vec![0.0f64; wdata.len()];
            let mut cols = vec![0.0f64; rows * p];
            let mut gcols = vec![0.0f64; rows * p];
            let mut gimg = vec![0.0f64; cin_g * h * w];
            let mut go = vec![0.0f64; cout_g * p];
            for b in 0..n {
                for g in 0..spec.groups {
                    let base = (b * spec.out_channels + g * cout_g) * p;
                    for (d, s) in go.iter_mut().zip(&gout[base..base + cout_g * p]) {
                        *d = *s as f64;
                    }
                    let xs = &x
                        [(b * spec.in_channels + g * cin_g) * h * w..(b * spec.in_channels + (g + 1) * cin_g) * h * w];
                    im2col(xs, &win, &mut cols);
                    gemm(
                        cout_g,
                        p,
                        rows,
                        &go,
                        false,
                        &cols,
                        true,
                        &mut gw[g * cout_g * rows..(g + 1) * cout_g * rows],
                        true,
                    );
                    if need_x {
                        let wg = &wdata[g * cout_g * rows..(g + 1) * cout_g * rows];
                        gemm(rows, cout_g, p, wg, true, &go, false, &mut gcols, false);
                        gimg.fill(0.0);
                        col2im(&gcols, &win, &mut gimg);
                        let dst = &mut gx[(b * spec.in_channels + g * cin_g) * h * w
                            ..(b * spec.in_channels + (g + 1) * cin_g) * h * w];
                        for (d, s) in dst.iter_mut().zip(&gimg) {
                            *d = *s as f32;
                        }
                    }
                }
            }
            let mut grads = vec![need_x.then_some(gx), Some(gw.into_iter().map(|v| v as f32).collect())];
            if has_bias {
                grads.push(Some(bias_grad(gout, n, spec.out_channels, p)));
            }
            grads
        }),
    ))
}

fn depthwise_direct(input: &Tensor, spec: &ConvSpec, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let k = spec.kernel.0;
    let pad = spec.padding;
    let wdata = to_f64(weight.data());
    let x = input.data();
    let mut out = vec![0.0f32; n * c * h * w];
    let mut acc = vec![0.0f64; h * w];
    for b in 0..n {
        for ch in 0..c {
            let plane = &x[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
            let padded = pad_plane(plane, h, w, pad);
            depthwise_plane(&padded, h, w, k, &wdata[ch * k * k..(ch + 1) * k * k], &mut acc);
            let bv = bias.map_or(0.0, |t| t.data()[ch] as f64);
            for (d, a) in out[(b * c + ch) * h * w..(b * c + ch + 1) * h * w].iter_mut().zip(&acc) {
                *d = (a + bv) as f32;
            }
        }
    }
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (xi, wt, has_bias) = (input.clone(), weight.clone(), bias.is_some());
    Ok(Tensor::from_op(
        "depthwise_conv2d",
        [n, c, h, w],
        out,
        parents,
        Box::new(move |gout| {
            let x = xi.data();
            let wdata = to_f64(wt.data());
            let need_x = xi.requires_grad();
            let mut gx = vec![0.0f32; if need_x { x.len() } else { 0 }];
            let mut gw = vec![0.0f64; wdata.len()];
            let pw = (h + 2 * pad) * (w + 2 * pad);
            let mut gpad = vec![0.0f64; pw];
            for b in 0..n {
                for ch in 0..c {
                    let idx = (b * c + ch) * h * w;
                    let padded = pad_plane(&x[idx..idx + h * w], h, w, pad);
                    gpad.fill(0.0);
                    depthwise_plane_backward(
                        &padded,
                        &gout[idx..idx + h * w],
                        h,
                        w,
                        k,
                        &wdata[ch * k * k..(ch + 1) * k * k],
                        need_x.then_some(gpad.as_mut_slice()),
                        Some(&mut gw[ch * k * k..(ch + 1) * k * k]),
                    );
                    if need_x {
                        unpad_add(&gpad, h, w, pad, &mut gx[idx..idx + h * w]);
                    }
                }
            }
            let mut grads = vec![need_x.then_some(gx), Some(gw.into_iter().map(|v| v as f32).collect())];
            if has_bias {
                grads.push(Some(bias_grad(gout, n, c, h * w)));
            }
            grads
        }),
    ))
}

/// Per-channel `k×k` convolution with padding `(k-1)/2`; `k` must be odd.
/// `weight` has shape (C, 1, k, k).
pub fn depthwise_conv2d(input: &Tensor, k: usize, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    if k % 2 == 0 {
        return invalid("depthwise_conv2d", format!("kernel size {k} is even; symmetric padding needs an odd size"));
    }
    let c = input.shape()[1];
    let spec = ConvSpec::depthwise(c, k).bias(bias.is_some());
    conv2d(input, &spec, weight, bias)
}

/// Transposed convolution (gradient of [`conv2d`] with respect to its input).
///
/// `weight` has shape (in, out/groups, kh, kw). Output extents are
/// `(h-1)·stride − 2·padding + k + output_padding`; `output_padding` must be
/// smaller than the stride.
pub fn transposed_conv2d(
    input: &Tensor,
    spec: &ConvSpec,
    weight: &Tensor,
    bias: Option<&Tensor>,
    output_padding: usize,
) -> Result<Tensor> {
    const OP: &str = "transposed_conv2d";
    spec.validate(OP)?;
    check_input(OP, spec, input)?;
    check_weight(OP, spec.transposed_weight_shape(), weight)?;
    check_bias(OP, spec, bias)?;
    if output_padding >= spec.stride {
        return invalid(OP, format!("output_padding {output_padding} must be smaller than stride {}", spec.stride));
    }
    let [n, _, h, w] = input.shape();
    let Some((oh, ow)) = spec.transposed_output_extent(h, w, output_padding) else {
        return shape_err(OP, format!("non-positive output extent for input {h}x{w} and {spec:?}"));
    };
    let spec = *spec;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    // Geometry of the *output* image seen through the forward-conv window.
    let win = Window {
        channels: cout_g,
        h: oh,
        w: ow,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        stride: spec.stride,
        pad: spec.padding,
        oh: h,
        ow: w,
    };
    let rows = win.rows();
    let p = h * w;
    let wdata = to_f64(weight.data());
    let x = input.data();
    let mut out = vec![0.0f32; n * spec.out_channels * oh * ow];
    let mut xg = vec![0.0f64; cin_g * p];
    let mut cols = vec![0.0f64; rows * p];
    let mut img = vec![0.0f64; cout_g * oh * ow];
    for b in 0..n {
        for g in 0..spec.groups {
            let base = (b * spec.in_channels + g * cin_g) * p;
            for (d, s) in xg.iter_mut().zip(&x[base..base + cin_g * p]) {
                *d = *s as f64;
            }
            let wg = &wdata[g * cin_g * rows..(g + 1) * cin_g * rows];
            gemm(rows, cin_g, p, wg, true, &xg, false, &mut cols, false);
            img.fill(0.0);
            col2im(&cols, &win, &mut img);
            for oc in 0..cout_g {
                let ch = g * cout_g + oc;
                let bv = bias.map_or(0.0, |t| t.data()[ch] as f64);
                let dst = &mut out[(b * spec.out_channels + ch) * oh * ow..(b * spec.out_channels + ch + 1) * oh * ow];
                for (d, s) in dst.iter_mut().zip(&img[oc * oh * ow..(oc + 1) * oh * ow]) {
                    *d = (s + bv) as f32;
                }
            }
        }
    }

    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (xi, wt, has_bias) = (input.clone(), weight.clone(), bias.is_some());
    Ok(Tensor::from_op(
        OP,
        [n, spec.out_channels, oh, ow],
        out,
        parents,
        Box::new(move |gout| {
            let x = xi.data();
            let wdata = to_f64(wt.data());
            let need_x = xi.requires_grad();
            let mut gx = vec![0.0f32; if need_x { x.len() } else { 0 }];
            let mut gw = vec![0.0f64; wdata.len()];
            let mut gcols = vec![0.0f64; rows * p];
            let mut xg = vec![0.0f64; cin_g * p];
            let mut gxg = vec![0.0f64; cin_g * p];
            for b in 0..n {
                for g in 0..spec.groups {
                    let obase = (b * spec.out_channels + g * cout_g) * oh * ow;
                    im2col(&gout[obase..obase + cout_g * oh * ow], &win, &mut gcols);
                    let base = (b * spec.in_channels + g * cin_g) * p;
                    for (d, s) in xg.iter_mut().zip(&x[base..base + cin_g * p]) {
                        *d = *s as f64;
                    }
                    gemm(
                        cin_g,
                        p,
                        rows,
                        &xg,
                        false,
                        &gcols,
                        true,
                        &mut gw[g * cin_g * rows..(g + 1) * cin_g * rows],
                        true,
                    );
                    if need_x {
                        let wg = &wdata[g * cin_g * rows..(g + 1) * cin_g * rows];
                        gemm(cin_g, rows, p, wg, false, &gcols, false, &mut gxg, false);
                        for (d, s) in gx[base..base + cin_g * p].iter_mut().zip(&gxg) {
                            *d = *s as f32;
                        }
                    }
                }
            }
            let mut grads = vec![need_x.then_some(gx), Some(gw.into_iter().map(|v| v as f32).collect())];
            if has_bias {
                grads.push(Some(bias_grad(gout, n, spec.out_channels, oh * ow)));
            }
            grads
        }),
    ))
}
