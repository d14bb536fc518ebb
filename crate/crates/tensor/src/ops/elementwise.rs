use crate::error::{invalid, shape_err, Result};
use crate::tensor::{numel, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let out = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let out = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let out = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let (ai, bi) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        "mul",
        a.shape(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            vec![
                Some(g.iter().zip(bi.data()).map(|(g, y)| g * y).collect()),
                Some(g.iter().zip(ai.data()).map(|(g, x)| g * x).collect()),
            ]
        }),
    ))
}

pub fn scale(a: &Tensor, factor: f32) -> Tensor {
    let out = a.data().iter().map(|x| x * factor).collect();
    Tensor::from_op(
        "scale",
        a.shape(),
        out,
        vec![a.clone()],
        Box::new(move |g| vec![Some(g.iter().map(|v| v * factor).collect())]),
    )
}

pub fn add_scalar(a: &Tensor, value: f32) -> Tensor {
    let out = a.data().iter().map(|x| x + value).collect();
    Tensor::from_op("add_scalar", a.shape(), out, vec![a.clone()], Box::new(|g| vec![Some(g.to_vec())]))
}

/// Affine feature modulation `f · scale + shift`.
///
/// `scale` and `shift` share one shape, either (N, C, 1, 1) (one value per
/// channel) or the full shape of `f` (one value per position).
pub fn modulate(f: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    const OP: &str = "modulate";
    let [n, c, h, w] = f.shape();
    if scale.shape() != shift.shape() {
        return shape_err(OP, format!("scale {:?} and shift {:?} differ", scale.shape(), shift.shape()));
    }
    let per_channel = match scale.shape() {
        s if s == [n, c, 1, 1] => true,
        s if s == [n, c, h, w] => false,
        s => {
            return shape_err(
                OP,
                format!("modulation extents {s:?} are neither [{n}, {c}, 1, 1] nor the feature shape {:?}", f.shape()),
            )
        }
    };
    let hw = h * w;
    let idx = move |i: usize| if per_channel { i / hw } else { i };
    let (fd, sd, td) = (f.data(), scale.data(), shift.data());
    let out = (0..fd.len()).map(|i| fd[i] * sd[idx(i)] + td[idx(i)]).collect();
    let (fi, si) = (f.clone(), scale.clone());
    Ok(Tensor::from_op(
        OP,
        f.shape(),
        out,
        vec![f.clone(), scale.clone(), shift.clone()],
        Box::new(move |g| {
            let (fd, sd) = (fi.data(), si.data());
            let gf = (0..g.len()).map(|i| g[i] * sd[idx(i)]).collect();
            let mut gs = vec![0.0f64; sd.len()];
            let mut gt = vec![0.0f64; sd.len()];
            for i in 0..g.len() {
                gs[idx(i)] += g[i] as f64 * fd[i] as f64;
                gt[idx(i)] += g[i] as f64;
            }
            let f32v = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
            vec![Some(gf), Some(f32v(gs)), Some(f32v(gt))]
        }),
    ))
}

/// Concatenate along the channel axis.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    const OP: &str = "concat_channels";
    let Some(first) = parts.first() else {
        return invalid(OP, "nothing to concatenate");
    };
    let [n, _, h, w] = first.shape();
    for p in parts {
        let [pn, _, ph, pw] = p.shape();
        if (pn, ph, pw) != (n, h, w) {
            return shape_err(OP, format!("{:?} incompatible with {:?}", p.shape(), first.shape()));
        }
    }
    let chans: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
    let total: usize = chans.iter().sum();
    let hw = h * w;
    let mut out = Vec::with_capacity(n * total * hw);
    for b in 0..n {
        for (p, &c) in parts.iter().zip(&chans) {
            out.extend_from_slice(&p.data()[b * c * hw..(b + 1) * c * hw]);
        }
    }
    Ok(Tensor::from_op(
        OP,
        [n, total, h, w],
        out,
        parts.to_vec(),
        Box::new(move |g| {
            let mut grads: Vec<Vec<f32>> = chans.iter().map(|&c| Vec::with_capacity(n * c * hw)).collect();
            for b in 0..n {
                let mut off = b * total * hw;
                for (gp, &c) in grads.iter_mut().zip(&chans) {
                    gp.extend_from_slice(&g[off..off + c * hw]);
                    off += c * hw;
                }
            }
            grads.into_iter().map(Some).collect()
        }),
    ))
}

/// Channels `[start, start + len)`.
pub fn narrow_channels(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape();
    if len == 0 || start + len > c {
        return shape_err("narrow_channels", format!("range {start}..{} outside {c} channels", start + len));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n * len * hw);
    for b in 0..n {
        out.extend_from_slice(&t.data()[(b * c + start) * hw..(b * c + start + len) * hw]);
    }
    Ok(Tensor::from_op(
        "narrow_channels",
        [n, len, h, w],
        out,
        vec![t.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0f32; n * c * hw];
            for b in 0..n {
                gx[(b * c + start) * hw..(b * c + start + len) * hw]
                    .copy_from_slice(&g[b * len * hw..(b + 1) * len * hw]);
            }
            vec![Some(gx)]
        }),
    ))
}

/// Concatenate along the batch axis.
pub fn concat_batch(parts: &[Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return invalid("concat_batch", "nothing to concatenate");
    };
    let [_, c, h, w] = first.shape();
    if parts.iter().any(|p| p.shape()[1..] != [c, h, w]) {
        return shape_err("concat_batch", "all parts must share channel and spatial extents");
    }
    let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
    let n: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let out = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    Ok(Tensor::from_op(
        "concat_batch",
        [n, c, h, w],
        out,
        parts.to_vec(),
        Box::new(move |g| {
            let mut off = 0;
            sizes
                .iter()
                .map(|&s| {
                    let v = g[off..off + s].to_vec();
                    off += s;
                    Some(v)
                })
                .collect()
        }),
    ))
}

pub fn sum(a: &Tensor) -> Tensor {
    let s = a.data().iter().map(|&v| v as f64).sum::<f64>() as f32;
    let len = a.numel();
    Tensor::from_op("sum", [1, 1, 1, 1], vec![s], vec![a.clone()], Box::new(move |g| vec![Some(vec![g[0]; len])]))
}

pub fn mean(a: &Tensor) -> Tensor {
    let len = a.numel();
    let s = (a.data().iter().map(|&v| v as f64).sum::<f64>() / len as f64) as f32;
    Tensor::from_op(
        "mean",
        [1, 1, 1, 1],
        vec![s],
        vec![a.clone()],
        Box::new(move |g| vec![Some(vec![g[0] / len as f32; len])]),
    )
}

/// `Σ a ⊙ weights` for a constant weight array; handy for projecting a tensor
/// to a scalar in gradient checks.
pub fn weighted_sum(a: &Tensor, weights: &[f32]) -> Result<Tensor> {
    if weights.len() != a.numel() {
        return shape_err("weighted_sum", format!("{} weights for {} elements", weights.len(), a.numel()));
    }
    let s = a.data().iter().zip(weights).map(|(&x, &w)| x as f64 * w as f64).sum::<f64>() as f32;
    let wv = weights.to_vec();
    Ok(Tensor::from_op(
        "weighted_sum",
        [1, 1, 1, 1],
        vec![s],
        vec![a.clone()],
        Box::new(move |g| vec![Some(wv.iter().map(|w| w * g[0]).collect())]),
    ))
}

/// Elementwise clamp; not differentiable (used at inference only).
pub fn clamp(a: &Tensor, lo: f32, hi: f32) -> Tensor {
    let out = a.data().iter().map(|v| v.clamp(lo, hi)).collect();
    Tensor::from_vec(a.shape(), out).expect("same shape")
}

/// Reinterpret the extents without moving data.
pub fn reshape(a: &Tensor, shape: [usize; 4]) -> Result<Tensor> {
    if numel(&shape) != a.numel() {
        return shape_err("reshape", format!("{:?} -> {shape:?} changes the element count", a.shape()));
    }
    Ok(Tensor::from_op("reshape", shape, a.to_vec(), vec![a.clone()], Box::new(|g| vec![Some(g.to_vec())])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modulation_affine_cases() {
        let f = Tensor::full([1, 2, 2, 2], 0.5);
        let one = Tensor::full([1, 2, 1, 1], 1.0);
        let zero = Tensor::full([1, 2, 1, 1], 0.0);
        assert_eq!(modulate(&f, &one, &zero).unwrap().data(), f.data());
        let c = Tensor::full([1, 2, 1, 1], 3.0);
        assert!(modulate(&f, &zero, &c).unwrap().data().iter().all(|&v| v == 3.0));
        let two = Tensor::full([1, 2, 2, 2], 2.0);
        let m1 = Tensor::full([1, 2, 2, 2], -1.0);
        assert!(modulate(&f, &two, &m1).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn modulation_rejects_bad_extents() {
        let f = Tensor::full([1, 2, 4, 4], 0.5);
        let s = Tensor::full([1, 2, 2, 2], 1.0);
        assert!(modulate(&f, &s, &s).is_err());
    }

    #[test]
    fn concat_then_narrow_roundtrip() {
        let a = Tensor::from_vec([2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec([2, 2, 1, 2], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), [2, 3, 1, 2]);
        assert_eq!(narrow_channels(&c, 0, 1).unwrap().data(), a.data());
        assert_eq!(narrow_channels(&c, 1, 2).unwrap().data(), b.data());
    }
}
