//! Deformable convolution with bilinear sampling.
//!
//! Offsets follow the common (torchvision/mmcv) layout: for deformable group
//! `g` and kernel tap `t`, channel `2·(g·kh·kw + t)` holds the vertical
//! displacement and the next channel the horizontal one, in pixels.
//! Samples read zero outside the input; corners are zero-filled individually,
//! so the sampled value is continuous across the border.

use crate::error::{invalid, shape_err, Result};
use crate::kernels::{gemm, to_f64};
use crate::ops::conv::ConvSpec;
use crate::tensor::Tensor;

/// Displacement field for a deformable convolution: (N, 2·kh·kw·groups, OH, OW).
#[derive(Debug, Clone)]
pub struct OffsetField {
    tensor: Tensor,
    deform_groups: usize,
    kernel: (usize, usize),
}

impl OffsetField {
    pub fn new(tensor: Tensor, kernel: (usize, usize), deform_groups: usize) -> Result<Self> {
        let expected = offset_channels(kernel, deform_groups);
        let got = tensor.shape()[1];
        if got != expected {
            return shape_err(
                "OffsetField",
                format!(
                    "offset channel dimension is {got}, expected 2*{}*{}*{deform_groups} = {expected}",
                    kernel.0, kernel.1
                ),
            );
        }
        Ok(Self { tensor, deform_groups, kernel })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn deform_groups(&self) -> usize {
        self.deform_groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.kernel
    }
}

/// Offset channel count law: `2·kh·kw·deform_groups`.
pub fn offset_channels(kernel: (usize, usize), deform_groups: usize) -> usize {
    2 * kernel.0 * kernel.1 * deform_groups
}

#[derive(Clone, Copy)]
struct Sample {
    // corner indices into the plane, -1 when outside
    idx: [isize; 4],
    wts: [f64; 4],
    ly: f64,
    lx: f64,
    inside: bool,
}

#[inline]
fn bilinear(py: f64, px: f64, h: usize, w: usize) -> Sample {
    let (hf, wf) = (h as f64, w as f64);
    if !(py > -1.0 && py < hf && px > -1.0 && px < wf) {
        return Sample { idx: [-1; 4], wts: [0.0; 4], ly: 0.0, lx: 0.0, inside: false };
    }
    let y0 = py.floor();
    let x0 = px.floor();
    let ly = py - y0;
    let lx = px - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |y: isize, x: isize| -> isize {
        if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
            y * w as isize + x
        } else {
            -1
        }
    };
    Sample {
        idx: [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)],
        wts: [(1.0 - ly) * (1.0 - lx), (1.0 - ly) * lx, ly * (1.0 - lx), ly * lx],
        ly,
        lx,
        inside: true,
    }
}

#[inline]
fn corner_values(plane: &[f32], s: &Sample) -> [f64; 4] {
    let mut v = [0.0; 4];
    for (vi, &i) in v.iter_mut().zip(&s.idx) {
        if i >= 0 {
            *vi = plane[i as usize] as f64;
        }
    }
    v
}

struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dg: usize,
}

impl Geometry {
    fn sample(&self, off: &[f32], b: usize, g: usize, tap: usize, oy: usize, ox: usize) -> Sample {
        let kk = self.kh * self.kw;
        let p = self.oh * self.ow;
        let ch = 2 * (g * kk + tap);
        let base = (b * 2 * kk * self.dg + ch) * p + oy * self.ow + ox;
        let dy = off[base] as f64;
        let dx = off[base + p] as f64;
        let (ky, kx) = (tap / self.kw, tap % self.kw);
        let py = (oy * self.stride + ky) as f64 - self.pad as f64 + dy;
        let px = (ox * self.stride + kx) as f64 - self.pad as f64 + dx;
        bilinear(py, px, self.h, self.w)
    }

    /// Sampled columns (cin·kh·kw × oh·ow) for batch item `b`.
    fn columns(&self, x: &[f32], off: &[f32], b: usize, cols: &mut [f64]) {
        let kk = self.kh * self.kw;
        let p = self.oh * self.ow;
        let cpg = self.cin / self.dg;
        for g in 0..self.dg {
            for tap in 0..kk {
                for oy in 0..self.oh {
                    for ox in 0..self.ow {
                        let s = self.sample(off, b, g, tap, oy, ox);
                        let pos = oy * self.ow + ox;
                        for c in g * cpg..(g + 1) * cpg {
                            let v = if s.inside {
                                let plane =
                                    &x[(b * self.cin + c) * self.h * self.w..(b * self.cin + c + 1) * self.h * self.w];
                                let cv = corner_values(plane, &s);
                                cv.iter().zip(&s.wts).map(|(a, b)| a * b).sum()
                            } else {
                                0.0
                            };
                            cols[(c * kk + tap) * p + pos] = v;
                        }
                    }
                }
            }
        }
    }
}

/// Deformable convolution: each kernel tap samples the input at the regular
/// grid position plus its learned offset. `spec.groups` must be 1; the
/// offset field's deformable groups must divide the input channels.
/// Differentiable with respect to input, weight, bias and offsets.
pub fn deformable_conv2d(
    input: &Tensor,
    offsets: &OffsetField,
    spec: &ConvSpec,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    const OP: &str = "deformable_conv2d";
    spec.validate(OP)?;
    if spec.groups != 1 {
        return invalid(OP, "grouped deformable convolution is not supported");
    }
    let [n, cin, h, w] = input.shape();
    if cin != spec.in_channels {
        return shape_err(
            OP,
            format!("input channel dimension is {cin}, spec expects in_channels = {}", spec.in_channels),
        );
    }
    if weight.shape() != spec.weight_shape() {
        return shape_err(OP, format!("weight shape {:?}, expected {:?}", weight.shape(), spec.weight_shape()));
    }
    match (spec.bias, bias) {
        (true, Some(b)) if b.numel() == spec.out_channels => {}
        (false, None) => {}
        _ => return shape_err(OP, "bias presence or size does not match the spec"),
    }
    if offsets.kernel() != spec.kernel {
        return shape_err(
            OP,
            format!("offset field built for kernel {:?}, spec kernel is {:?}", offsets.kernel(), spec.kernel),
        );
    }
    let dg = offsets.deform_groups();
    if dg == 0 || cin % dg != 0 {
        return invalid(OP, format!("deform_groups {dg} must divide in_channels {cin}"));
    }
    let Some((oh, ow)) = spec.output_extent(h, w) else {
        return shape_err(OP, "kernel larger than padded input");
    };
    let os = offsets.tensor().shape();
    if os[0] != n || os[2] != oh || os[3] != ow {
        return shape_err(
            OP,
            format!("offset field shape {os:?} does not match batch {n} and output extents {oh}x{ow}"),
        );
    }

    let geo = Geometry {
        n,
        cin,
        h,
        w,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        stride: spec.stride,
        pad: spec.padding,
        oh,
        ow,
        dg,
    };
    let cout = spec.out_channels;
    let rows = cin * geo.kh * geo.kw;
    let p = oh * ow;
    let wdata = to_f64(weight.data());
    let mut cols = vec![0.0f64; rows * p];
    let mut acc = vec![0.0f64; cout * p];
    let mut out = vec![0.0f32; n * cout * p];
    for b in 0..n {
        geo.columns(input.data(), offsets.tensor().data(), b, &mut cols);
        gemm(cout, rows, p, &wdata, false, &cols, false, &mut acc, false);
        for oc in 0..cout {
            let bv = bias.map_or(0.0, |t| t.data()[oc] as f64);
            for (d, a) in out[(b * cout + oc) * p..(b * cout + oc + 1) * p].iter_mut().zip(&acc[oc * p..(oc + 1) * p]) {
                *d = (a + bv) as f32;
            }
        }
    }

    let mut parents = vec![input.clone(), offsets.tensor().clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (xi, oi, wt, has_bias) = (input.clone(), offsets.tensor().clone(), weight.clone(), bias.is_some());
    Ok(Tensor::from_op(
        OP,
        [n, cout, oh, ow],
        out,
        parents,
        Box::new(move |gout| {
            let x = xi.data();
            let off = oi.data();
            let wdata = to_f64(wt.data());
            let (need_x, need_off) = (xi.requires_grad(), oi.requires_grad());
            let kk = geo.kh * geo.kw;
            let cpg = geo.cin / geo.dg;
            let mut gx = vec![0.0f64; if need_x { x.len() } else { 0 }];
            let mut goff = vec![0.0f64; if need_off { off.len() } else { 0 }];
            let mut gw = vec![0.0f64; wdata.len()];
            let mut cols = vec![0.0f64; rows * p];
            let mut gcols = vec![0.0f64; rows * p];
            let mut go = vec![0.0f64; cout * p];
            for b in 0..geo.n {
                for (d, s) in go.iter_mut().zip(&gout[b * cout * p..(b + 1) * cout * p]) {
                    *d = *s as f64;
                }
                geo.columns(x, off, b, &mut cols);
                gemm(cout, p, rows, &go, false, &cols, true, &mut gw, true);
                if !(need_x || need_off) {
                    continue;
                }
                gemm(rows, cout, p, &wdata, true, &go, false, &mut gcols, false);
                for g in 0..geo.dg {
                    for tap in 0..kk {
                        for oy in 0..geo.oh {
                            for ox in 0..geo.ow {
                                let s = geo.sample(off, b, g, tap, oy, ox);
                                if !s.inside {
                                    continue;
                                }
                                let pos = oy * geo.ow + ox;
                                let (mut gy, mut gxo) = (0.0, 0.0);
                                for c in g * cpg..(g + 1) * cpg {
                                    let gc = gcols[(c * kk + tap) * p + pos];
                                    if gc == 0.0 {
                                        continue;
                                    }
                                    let pbase = (b * geo.cin + c) * geo.h * geo.w;
                                    if need_x {
                                        for (&i, &wt) in s.idx.iter().zip(&s.wts) {
                                            if i >= 0 {
                                                gx[pbase + i as usize] += gc * wt;
                                            }
                                        }
                                    }
                                    if need_off {
                                        let v = corner_values(&x[pbase..pbase + geo.h * geo.w], &s);
                                        gy += gc * ((1.0 - s.lx) * (v[2] - v[0]) + s.lx * (v[3] - v[1]));
                                        gxo += gc * ((1.0 - s.ly) * (v[1] - v[0]) + s.ly * (v[3] - v[2]));
                                    }
                                }
                                if need_off {
                                    let ch = 2 * (g * kk + tap);
                                    let base = (b * 2 * kk * geo.dg + ch) * p + pos;
                                    goff[base] += gy;
                                    goff[base + p] += gxo;
                                }
                            }
                        }
                    }
                }
            }
            let f = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
            let mut grads = vec![need_x.then(|| f(gx)), need_off.then(|| f(goff)), Some(f(gw))];
            if has_bias {
                let mut gb = vec![0.0f32; cout];
                for b in 0..geo.n {
                    for (oc, acc) in gb.iter_mut().enumerate() {
                        *acc +=
                            gout[(b * cout + oc) * p..(b * cout + oc + 1) * p].iter().map(|&v| v as f64).sum::<f64>()
                                as f32;
                    }
                }
                grads.push(Some(gb));
            }
            grads
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_shift_translates_with_zero_fill() {
        let data: Vec<f32> = (0..16).map(|i| i as f32 + 1.0).collect();
        let x = Tensor::from_vec([1, 1, 4, 4], data).unwrap();
        let mut off = vec![0.0f32; 18 * 16];
        for tap in 0..9 {
            off[2 * tap * 16..(2 * tap + 1) * 16].fill(1.0); // dy = +1
        }
        let field = OffsetField::new(Tensor::from_vec([1, 18, 4, 4], off).unwrap(), (3, 3), 1).unwrap();
        let mut wv = vec![0.0; 9];
        wv[4] = 1.0;
        let w = Tensor::from_vec([1, 1, 3, 3], wv).unwrap();
        let y = deformable_conv2d(&x, &field, &ConvSpec::new(1, 1, 3).bias(false), &w, None).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r < 3 { x.get(0, 0, r + 1, c) } else { 0.0 };
                assert_eq!(y.get(0, 0, r, c), expect, "({r},{c})");
            }
        }
    }

    #[test]
    fn offset_channel_mismatch_is_rejected() {
        let t = Tensor::zeros([1, 17, 4, 4]);
        assert!(OffsetField::new(t, (3, 3), 1).is_err());
        assert_eq!(offset_channels((3, 3), 2), 36);
    }
}
